"""Dataset generation, evaluation, and benchmark orchestration.

One scene job = sample -> settle -> render -> annotate. Scene jobs are
independent (per-scene derived seeds), so a worker pool parallelizes them
without changing any output byte. Scenes that fail to settle are retried
on the next derived seed up to 3 times, then the run aborts.

Outputs in the dataset directory:

    scene_<id>.json     metadata (settled positions, sampled sizes)
    scene_<id>.png      rendered top-down image
    run_config.json     the resolved run configuration
    manifest.jsonl      one record per scene, written last (atomically)

Manifest records carry the ground-truth targets, the derived seed, the
convergence flag, and a deterministic 80/10/10 train/val/test split column
(a toolkit convenience, assigned by scene index).
"""
from __future__ import annotations

import dataclasses
import json
import logging
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path

from .baseline import GranulometryEstimator
from .errors import ConfigError, DataError, MalformedDocument, UnknownImageId
from .evaluation import (
    BenchReport,
    EvalReport,
    PredictionSet,
    benchmark_inference,
    compute_metrics,
    scatter_export,
    write_bench_report,
    write_eval_report,
)
from .physics import SimConfig, settle
from .psd import (
    ParticleRecord,
    PsdTargets,
    QuantileConvention,
    SceneMetadata,
    compute_psd,
    serialize_metadata,
)
from .render import RenderConfig, read_png, render, write_png
from .sampling import GenerationConfig, sample_scene_spec

logger = logging.getLogger(__name__)

MANIFEST_NAME = "manifest.jsonl"
RUN_CONFIG_NAME = "run_config.json"
MAX_SETTLE_ATTEMPTS = 3
SPLIT_FRACTIONS = (0.8, 0.1)  # train, val; remainder is test


@dataclass(frozen=True)
class RunConfig:
    generation: GenerationConfig = GenerationConfig()
    sim: SimConfig = SimConfig()
    render: RenderConfig = RenderConfig()
    convention: QuantileConvention = QuantileConvention()
    n_scenes: int = 50
    master_seed: int = 0
    output_dir: str | None = None

    def __post_init__(self):
        if self.n_scenes < 1:
            raise ConfigError(f"n_scenes must be >= 1, got {self.n_scenes}")
        if self.render.viewport < self.generation.table_size:
            raise ConfigError(
                f"render viewport {self.render.viewport} mm smaller than "
                f"table {self.generation.table_size} mm"
            )


def desk_preset(**overrides) -> RunConfig:
    """Desk-scale preset: 50 scenes, 100..300 particles, 256x256 images."""
    base = dict(
        generation=GenerationConfig(count_range=(100, 300)),
        render=RenderConfig(width=256, height=256),
        n_scenes=50,
    )
    base.update(overrides)
    return RunConfig(**base)


def paper_preset(**overrides) -> RunConfig:
    """Reference-scale preset: 700..1000 particles, 512x512 images."""
    base = dict(
        generation=GenerationConfig(),
        render=RenderConfig(),
        n_scenes=50,
    )
    base.update(overrides)
    return RunConfig(**base)


PRESETS = {"desk": desk_preset, "paper": paper_preset}


# ---------------------------------------------------------------------------
# Run-config file (structured text mirroring RunConfig fields)
# ---------------------------------------------------------------------------

def run_config_to_dict(cfg: RunConfig) -> dict:
    d = dataclasses.asdict(cfg)
    d["convention"] = cfg.convention.weighting
    return d


def run_config_from_dict(doc: dict, base: RunConfig | None = None) -> RunConfig:
    """Build a RunConfig from a (possibly partial) dict over a base config."""
    base = base if base is not None else RunConfig()
    known = {"generation", "sim", "render", "convention", "n_scenes", "master_seed", "output_dir"}
    unknown = set(doc) - known
    if unknown:
        raise ConfigError(f"unknown run-config fields: {', '.join(sorted(unknown))}")

    def sub(cls, current, key):
        if key not in doc:
            return current
        body = dict(doc[key])
        merged = dataclasses.asdict(current)
        merged.update(body)
        # tuple-typed fields arrive as lists from JSON
        for f in dataclasses.fields(cls):
            if f.name in merged and isinstance(merged[f.name], list):
                merged[f.name] = tuple(merged[f.name])
        try:
            return cls(**merged)
        except TypeError as e:
            raise ConfigError(f"bad {key} section: {e}") from e

    convention = base.convention
    if "convention" in doc:
        convention = QuantileConvention(doc["convention"])

    return RunConfig(
        generation=sub(GenerationConfig, base.generation, "generation"),
        sim=sub(SimConfig, base.sim, "sim"),
        render=sub(RenderConfig, base.render, "render"),
        convention=convention,
        n_scenes=doc.get("n_scenes", base.n_scenes),
        master_seed=doc.get("master_seed", base.master_seed),
        output_dir=doc.get("output_dir", base.output_dir),
    )


def load_run_config(path, base: RunConfig | None = None) -> RunConfig:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            doc = json.load(fh)
    except json.JSONDecodeError as e:
        raise ConfigError(f"run config {path} is not valid JSON: {e}") from e
    if not isinstance(doc, dict):
        raise ConfigError("run config must be a JSON object")
    return run_config_from_dict(doc, base)


# ---------------------------------------------------------------------------
# Generation
# ---------------------------------------------------------------------------

def _scene_job(args) -> dict:
    """Generate one scene end to end; returns its manifest record."""
    cfg_dict, scene_id, out_dir = args
    cfg = run_config_from_dict(cfg_dict)
    out = Path(out_dir)

    spec = None
    result = None
    for attempt in range(MAX_SETTLE_ATTEMPTS):
        spec = sample_scene_spec(cfg.generation, scene_id, cfg.master_seed, attempt)
        result = settle(spec, cfg.generation.table_size, cfg.sim)
        if result.converged:
            if attempt > 0:
                logger.warning("scene %d converged on retry attempt %d", scene_id, attempt)
            break
        logger.warning(
            "scene %d failed to settle with seed %d (attempt %d)",
            scene_id, spec.seed, attempt,
        )
    if result is None or not result.converged:
        raise DataError(
            f"scene {scene_id} failed to settle after {MAX_SETTLE_ATTEMPTS} derived seeds"
        )

    particles = tuple(
        ParticleRecord(size=float(spec.sizes[i]), x=body.center[0], y=body.center[1])
        for i, body in enumerate(result.bodies)
    )
    meta = SceneMetadata(
        shape_type=spec.shape_type,
        size_mean=spec.params.mu,
        size_sigma=spec.params.sigma,
        table_size=cfg.generation.table_size,
        samplesize=spec.count,
        particles=particles,
    )
    targets = compute_psd(spec.sizes, cfg.convention)

    meta_name = f"scene_{scene_id}.json"
    image_name = f"scene_{scene_id}.png"
    (out / meta_name).write_bytes(serialize_metadata(meta))
    img = render(result, meta, cfg.render, spec.seed)
    write_png(img, out / image_name)

    return {
        "scene_id": scene_id,
        "image_id": f"scene_{scene_id}",
        "metadata_path": meta_name,
        "image_path": image_name,
        "d10": targets.d10,
        "d50": targets.d50,
        "d90": targets.d90,
        "seed": spec.seed,
        "converged": True,
    }


def _split_for_index(i: int, n: int) -> str:
    if i < int(SPLIT_FRACTIONS[0] * n):
        return "train"
    if i < int((SPLIT_FRACTIONS[0] + SPLIT_FRACTIONS[1]) * n):
        return "val"
    return "test"


def generate_dataset(cfg: RunConfig, out_dir, workers: int = 1) -> Path:
    """Run the full generation loop; returns the manifest path.

    Output bytes are independent of `workers` (per-scene derived seeds,
    per-scene files, manifest assembled in scene order at the end).
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)

    cfg_dict = run_config_to_dict(dataclasses.replace(cfg, output_dir=str(out)))
    with open(out / RUN_CONFIG_NAME, "w", encoding="utf-8") as fh:
        json.dump(cfg_dict, fh, indent=2)
        fh.write("\n")

    jobs = [(cfg_dict, scene_id, str(out)) for scene_id in range(cfg.n_scenes)]
    if workers <= 1:
        records = [_scene_job(job) for job in jobs]
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            records = list(pool.map(_scene_job, jobs))

    records.sort(key=lambda r: r["scene_id"])
    for i, rec in enumerate(records):
        rec["split"] = _split_for_index(i, len(records))

    manifest_path = out / MANIFEST_NAME
    tmp_path = out / (MANIFEST_NAME + ".tmp")
    with open(tmp_path, "w", encoding="utf-8", newline="") as fh:
        for rec in records:
            fh.write(json.dumps(rec) + "\n")
    os.replace(tmp_path, manifest_path)
    logger.info("wrote %d scenes to %s", len(records), out)
    return manifest_path


def load_manifest(path) -> list[dict]:
    path = Path(path)
    records = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                rec = json.loads(line)
            except json.JSONDecodeError as e:
                raise MalformedDocument(f"{path}:{lineno}: {e}") from e
            records.append(rec)
    if not records:
        raise MalformedDocument(f"{path}: empty manifest")
    return records


def manifest_truths(records: list[dict]) -> dict[str, PsdTargets]:
    return {
        rec["image_id"]: PsdTargets(rec["d10"], rec["d50"], rec["d90"]) for rec in records
    }


# ---------------------------------------------------------------------------
# Evaluation / benchmarking entry points
# ---------------------------------------------------------------------------

def evaluate_predictions(
    manifest_path, predictions: PredictionSet, report_path,
    scatter_csv=None, scatter_svg=None,
) -> EvalReport:
    """Score a prediction set against manifest ground truth and write reports."""
    records = load_manifest(manifest_path)
    truths = manifest_truths(records)

    unknown = [i for i in predictions.ids() if i not in truths]
    if unknown:
        raise UnknownImageId(unknown)

    truth_list = [truths[i] for i in predictions.ids()]
    pred_list = [t for _, t in predictions.records]
    report = compute_metrics(truth_list, pred_list)

    report_path = Path(report_path)
    if scatter_csv is None:
        scatter_csv = report_path.with_name(report_path.stem + "_scatter.csv")
    if scatter_svg is None:
        scatter_svg = report_path.with_name(report_path.stem + "_scatter.svg")
    write_eval_report(report, report_path, predictions.source_label)
    scatter_export(truth_list, pred_list, scatter_csv,
                   image_ids=predictions.ids(), svg_path=scatter_svg)
    return report


def baseline_estimator_for(manifest_path) -> GranulometryEstimator:
    """Build the granulometry baseline calibrated from the dataset's run config."""
    cfg_path = Path(manifest_path).parent / RUN_CONFIG_NAME
    if cfg_path.exists():
        cfg = load_run_config(cfg_path)
        mm_per_pixel = cfg.render.viewport / cfg.render.width
        max_size_mm = cfg.generation.trunc_bounds[1]
        weighting = cfg.convention.weighting
    else:
        logger.warning("no %s next to manifest; using default calibration", RUN_CONFIG_NAME)
        cfg = RunConfig()
        mm_per_pixel = cfg.render.viewport / cfg.render.width
        max_size_mm = cfg.generation.trunc_bounds[1]
        weighting = cfg.convention.weighting
    return GranulometryEstimator(
        mm_per_pixel=mm_per_pixel, weighting=weighting, max_size_mm=max_size_mm
    )


def predict_with_baseline(manifest_path, out_path) -> PredictionSet:
    """Run the baseline over a dataset, writing the shared prediction CSV."""
    from .evaluation import write_predictions

    records = load_manifest(manifest_path)
    est = baseline_estimator_for(manifest_path)
    base_dir = Path(manifest_path).parent
    preds = []
    for rec in records:
        img = read_png(base_dir / rec["image_path"])
        preds.append((rec["image_id"], est.predict_targets(img)))
    write_predictions(out_path, preds)
    return PredictionSet(records=preds, source_label="granulometry-baseline")


def bench_dataset(
    manifest_path, estimator_name: str, warmup: int, reps: int,
    device_label: str, report_path=None,
) -> BenchReport:
    """Benchmark an estimator over every image in a dataset manifest."""
    if estimator_name != "baseline":
        raise ConfigError(f"unknown estimator {estimator_name!r}; available: baseline")
    records = load_manifest(manifest_path)
    base_dir = Path(manifest_path).parent
    images = [read_png(base_dir / rec["image_path"]) for rec in records]
    est = baseline_estimator_for(manifest_path)
    report = benchmark_inference(est, images, warmup=warmup, reps=reps,
                                 device_label=device_label)
    if report_path is not None:
        write_bench_report(report, report_path, label=est.descriptor["name"])
    return report
