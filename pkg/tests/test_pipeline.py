"""dataset-pipeline: generation loop, manifest, CLI wiring."""
import json
import os
from pathlib import Path

import numpy as np
import pytest

from granulab import cli
from granulab.errors import ConfigError, UnknownImageId
from granulab.evaluation import PredictionSet, read_predictions, write_predictions
from granulab.pipeline import (
    RunConfig,
    bench_dataset,
    desk_preset,
    evaluate_predictions,
    generate_dataset,
    load_manifest,
    load_run_config,
    manifest_truths,
    paper_preset,
    predict_with_baseline,
    run_config_from_dict,
    run_config_to_dict,
)
from granulab.psd import PsdTargets, QuantileConvention, compute_psd, parse_metadata, validate_metadata
from granulab.render import RenderConfig
from granulab.sampling import GenerationConfig


def _tiny_config(n_scenes=3, seed=5):
    return RunConfig(
        generation=GenerationConfig(count_range=(30, 60)),
        render=RenderConfig(width=128, height=128, viewport=320.0),
        n_scenes=n_scenes,
        master_seed=seed,
    )


@pytest.fixture(scope="module")
def tiny_dataset(tmp_path_factory):
    out = tmp_path_factory.mktemp("tiny")
    cfg = _tiny_config()
    manifest = generate_dataset(cfg, out)
    return cfg, out, manifest


def _dir_bytes(root):
    out = {}
    for p in sorted(Path(root).rglob("*")):
        if p.is_file():
            out[p.relative_to(root)] = p.read_bytes()
    return out


# --- generation -----------------------------------------------------------------

def test_generate_writes_expected_files(tiny_dataset):
    cfg, out, manifest = tiny_dataset
    records = load_manifest(manifest)
    assert len(records) == 3
    for rec in records:
        assert (out / rec["metadata_path"]).exists()
        assert (out / rec["image_path"]).exists()
        assert rec["converged"] is True
        assert rec["split"] in {"train", "val", "test"}
    assert (out / "run_config.json").exists()
    assert not (out / "manifest.jsonl.tmp").exists()


def test_metadata_validates_and_targets_recompute(tiny_dataset):
    cfg, out, manifest = tiny_dataset
    for rec in load_manifest(manifest):
        meta = parse_metadata((out / rec["metadata_path"]).read_bytes())
        report = validate_metadata(meta, cfg.generation)
        assert report.valid, [v.message for v in report]
        targets = compute_psd(meta.sizes(), cfg.convention)
        assert targets.d10 == pytest.approx(rec["d10"], abs=1e-12)
        assert targets.d50 == pytest.approx(rec["d50"], abs=1e-12)
        assert targets.d90 == pytest.approx(rec["d90"], abs=1e-12)


def test_generation_is_deterministic(tmp_path):
    cfg = _tiny_config(n_scenes=2, seed=9)
    a = tmp_path / "a"
    b = tmp_path / "b"
    generate_dataset(cfg, a)
    generate_dataset(cfg, b)
    fa, fb = _dir_bytes(a), _dir_bytes(b)
    assert set(fa) == set(fb)
    for name in fa:
        if name.name == "run_config.json":
            continue  # embeds the output dir path
        assert fa[name] == fb[name], f"{name} differs between runs"


def test_worker_count_does_not_change_outputs(tmp_path):
    cfg = _tiny_config(n_scenes=4, seed=11)
    serial = tmp_path / "serial"
    parallel = tmp_path / "parallel"
    generate_dataset(cfg, serial, workers=1)
    generate_dataset(cfg, parallel, workers=2)
    fa, fb = _dir_bytes(serial), _dir_bytes(parallel)
    assert set(fa) == set(fb)
    for name in fa:
        if name.name == "run_config.json":
            continue
        assert fa[name] == fb[name], f"{name} differs between worker counts"


def test_split_column_fractions(tmp_path):
    cfg = _tiny_config(n_scenes=10, seed=3)
    manifest = generate_dataset(cfg, tmp_path / "d")
    splits = [r["split"] for r in load_manifest(manifest)]
    assert splits == ["train"] * 8 + ["val"] + ["test"]


# --- run config file ---------------------------------------------------------------

def test_run_config_roundtrip():
    cfg = desk_preset(master_seed=17)
    doc = run_config_to_dict(cfg)
    back = run_config_from_dict(doc)
    assert back == cfg


def test_run_config_partial_override(tmp_path):
    path = tmp_path / "cfg.json"
    path.write_text(json.dumps({
        "n_scenes": 7,
        "generation": {"count_range": [10, 20]},
        "convention": "mass_weighted",
    }))
    cfg = load_run_config(path, base=desk_preset())
    assert cfg.n_scenes == 7
    assert cfg.generation.count_range == (10, 20)
    assert cfg.generation.table_size == 300.0  # untouched base field
    assert cfg.convention == QuantileConvention("mass_weighted")


def test_run_config_rejects_unknown_fields():
    with pytest.raises(ConfigError):
        run_config_from_dict({"scenes": 3})


def test_presets():
    desk = desk_preset()
    assert desk.generation.count_range == (100, 300)
    assert (desk.render.width, desk.render.height) == (256, 256)
    assert desk.n_scenes == 50
    paper = paper_preset()
    assert paper.generation.count_range == (700, 1000)
    assert (paper.render.width, paper.render.height) == (512, 512)


# --- evaluate / bench ------------------------------------------------------------

def test_evaluate_perfect_predictions(tiny_dataset, tmp_path):
    cfg, out, manifest = tiny_dataset
    truths = manifest_truths(load_manifest(manifest))
    preds = PredictionSet(records=list(truths.items()), source_label="copy-of-truth")
    report = evaluate_predictions(manifest, preds, tmp_path / "report.txt")
    for m in report.per_target.values():
        assert m.r2 == 1.0 and m.mse == 0.0
    assert (tmp_path / "report.txt").exists()
    assert (tmp_path / "report_scatter.csv").exists()
    assert (tmp_path / "report_scatter.svg").exists()


def test_evaluate_unknown_id_listed(tiny_dataset, tmp_path):
    cfg, out, manifest = tiny_dataset
    truths = manifest_truths(load_manifest(manifest))
    records = list(truths.items()) + [("scene_999", PsdTargets(1, 2, 3))]
    preds = PredictionSet(records=records, source_label="bad")
    with pytest.raises(UnknownImageId) as exc:
        evaluate_predictions(manifest, preds, tmp_path / "report.txt")
    assert "scene_999" in str(exc.value)


def test_baseline_predictions_roundtrip(tiny_dataset, tmp_path):
    cfg, out, manifest = tiny_dataset
    pred_path = tmp_path / "preds.csv"
    preds = predict_with_baseline(manifest, pred_path)
    assert len(preds.records) == 3
    again = read_predictions(pred_path)
    assert again.records == preds.records
    report = evaluate_predictions(manifest, again, tmp_path / "report.txt")
    assert report.n == 3


def test_bench_smoke(tiny_dataset, tmp_path):
    cfg, out, manifest = tiny_dataset
    report = bench_dataset(manifest, "baseline", warmup=0, reps=1,
                           device_label="test-cpu", report_path=tmp_path / "bench.txt")
    assert report.fps > 0 and report.seconds_per_image > 0
    assert (tmp_path / "bench.txt").exists()
    with pytest.raises(ConfigError):
        bench_dataset(manifest, "resnet50", warmup=0, reps=1, device_label="x")


# --- CLI ------------------------------------------------------------------------

def test_cli_generate_and_evaluate(tmp_path):
    out = tmp_path / "ds"
    cfg_file = tmp_path / "cfg.json"
    cfg_file.write_text(json.dumps({
        "generation": {"count_range": [20, 40]},
        "render": {"width": 128, "height": 128},
    }))
    rc = cli.main([
        "generate", "--config", str(cfg_file), "--scenes", "2",
        "--seed", "21", "--out", str(out),
    ])
    assert rc == 0
    manifest = out / "manifest.jsonl"
    assert manifest.exists()

    truths = manifest_truths(load_manifest(manifest))
    pred_path = tmp_path / "preds.csv"
    write_predictions(pred_path, list(truths.items()))
    report_path = tmp_path / "report.txt"
    rc = cli.main([
        "evaluate", "--manifest", str(manifest),
        "--predictions", str(pred_path), "--report", str(report_path),
    ])
    assert rc == 0
    text = report_path.read_text()
    assert "R2" in text and "overall" in text

    rc = cli.main([
        "bench", "--manifest", str(manifest), "--estimator", "baseline",
        "--warmup", "0", "--reps", "1", "--device-label", "ci",
    ])
    assert rc == 0
    assert (out / "bench_baseline.txt").exists()


def test_cli_exit_codes(tmp_path):
    # usage error: reps < 1 -> config error -> 2
    out = tmp_path / "ds"
    rc = cli.main(["generate", "--scenes", "1", "--out", str(out), "--workers", "0"])
    assert rc == 2

    # missing output dir -> 2
    rc = cli.main(["generate", "--scenes", "1"])
    assert rc == 2

    # data error: malformed predictions -> 3
    cfg = _tiny_config(n_scenes=2, seed=5)
    manifest = generate_dataset(cfg, out)
    bad = tmp_path / "bad.csv"
    bad.write_text("nope\n")
    rc = cli.main(["evaluate", "--manifest", str(manifest),
                   "--predictions", str(bad), "--report", str(tmp_path / "r.txt")])
    assert rc == 3

    # unknown prediction id -> 3
    pred = tmp_path / "preds.csv"
    write_predictions(pred, [("scene_999", PsdTargets(1, 2, 3)), ("scene_998", PsdTargets(1, 2, 3))])
    rc = cli.main(["evaluate", "--manifest", str(manifest),
                   "--predictions", str(pred), "--report", str(tmp_path / "r.txt")])
    assert rc == 3

    # I/O error: unreadable manifest -> 4
    rc = cli.main(["evaluate", "--manifest", str(tmp_path / "missing.jsonl"),
                   "--predictions", str(pred), "--report", str(tmp_path / "r.txt")])
    assert rc == 4

    # bench reps=0 -> 2 before any timing
    rc = cli.main(["bench", "--manifest", str(manifest), "--reps", "0"])
    assert rc == 2


def test_cli_predict_baseline(tmp_path):
    cfg = _tiny_config(n_scenes=2, seed=6)
    manifest = generate_dataset(cfg, tmp_path / "ds")
    rc = cli.main(["predict-baseline", "--manifest", str(manifest),
                   "--out", str(tmp_path / "p.csv")])
    assert rc == 0
    assert len(read_predictions(tmp_path / "p.csv").records) == 2
