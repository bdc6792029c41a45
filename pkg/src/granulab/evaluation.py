"""Accuracy reporting (R2/MSE/MAE per target and overall) and throughput benchmarks.

"Overall" metrics pool the flattened 3N (truth, prediction) pairs across
d10/d50/d90; with equal counts per target, overall MSE is exactly the mean
of the three per-target MSEs. R2 always uses the truth mean of the set
being evaluated. All errors are reported in raw mm (mm^2 for MSE), stated
in the report header.

The shared prediction-file format is CSV with header
`image_id,d10,d50,d90`, sizes in mm, UTF-8, LF line endings.
"""
from __future__ import annotations

import csv
import io
import time
from dataclasses import dataclass

import numpy as np

from .errors import (
    ConfigError,
    EmptyImageSet,
    IoFailure,
    LengthMismatch,
    MalformedPredictions,
)
from .psd import PsdTargets

TARGET_NAMES = ("d10", "d50", "d90")
PREDICTIONS_HEADER = "image_id,d10,d50,d90"


@dataclass(frozen=True)
class MetricSet:
    """One row of metrics; r2 is None when the truth has zero variance."""

    r2: float | None
    mse: float
    mae: float


@dataclass(frozen=True)
class EvalReport:
    per_target: dict[str, MetricSet]
    overall: MetricSet
    n: int


@dataclass
class PredictionSet:
    """Predicted targets per image id, labeled with the producing model."""

    records: list[tuple[str, PsdTargets]]
    source_label: str = "unknown"

    def __post_init__(self):
        ids = [r[0] for r in self.records]
        if len(set(ids)) != len(ids):
            dupes = sorted({i for i in ids if ids.count(i) > 1})
            raise MalformedPredictions(f"duplicate image ids: {', '.join(dupes)}")

    def ids(self) -> list[str]:
        return [r[0] for r in self.records]


@dataclass(frozen=True)
class BenchReport:
    """Throughput measurement mirroring the inference-speed table columns."""

    seconds_per_image: float
    std_seconds: float
    warmup: int
    reps: int
    device_label: str
    parameter_count: int | None = None

    @property
    def fps(self) -> float:
        return 1.0 / self.seconds_per_image


def _metric_set(truth: np.ndarray, pred: np.ndarray) -> MetricSet:
    err = truth - pred
    mse = float(np.mean(err**2))
    mae = float(np.mean(np.abs(err)))
    sst = float(np.sum((truth - truth.mean()) ** 2))
    if sst == 0.0:
        return MetricSet(r2=None, mse=mse, mae=mae)
    r2 = 1.0 - float(np.sum(err**2)) / sst
    return MetricSet(r2=r2, mse=mse, mae=mae)


def compute_metrics(truth: list[PsdTargets], preds: list[PsdTargets]) -> EvalReport:
    """Per-target and overall metrics over aligned (truth, prediction) pairs.

    Raises LengthMismatch unless both lists have the same length >= 2.
    """
    if len(truth) != len(preds):
        raise LengthMismatch(f"{len(truth)} truths vs {len(preds)} predictions")
    if len(truth) < 2:
        raise LengthMismatch("need at least 2 aligned pairs")

    t = np.array([x.as_array() for x in truth])
    p = np.array([x.as_array() for x in preds])
    per_target = {
        name: _metric_set(t[:, k], p[:, k]) for k, name in enumerate(TARGET_NAMES)
    }
    overall = _metric_set(t.ravel(), p.ravel())
    return EvalReport(per_target=per_target, overall=overall, n=len(truth))


# ---------------------------------------------------------------------------
# Exports
# ---------------------------------------------------------------------------

def scatter_export(
    truth: list[PsdTargets],
    preds: list[PsdTargets],
    path,
    image_ids: list[str] | None = None,
    svg_path=None,
) -> None:
    """Write the predicted-vs-truth CSV (one row per scene and target).

    When `svg_path` is given, also writes a single-file vector scatter
    with one panel per target and the identity line drawn.
    """
    if len(truth) != len(preds):
        raise LengthMismatch(f"{len(truth)} truths vs {len(preds)} predictions")
    if image_ids is None:
        image_ids = [str(i) for i in range(len(truth))]
    try:
        with open(path, "w", encoding="utf-8", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(["image_id", "target", "truth_mm", "pred_mm"])
            for img_id, t, p in zip(image_ids, truth, preds):
                for name, tv, pv in zip(TARGET_NAMES, t.as_array(), p.as_array()):
                    writer.writerow([img_id, name, repr(float(tv)), repr(float(pv))])
    except OSError as e:
        raise IoFailure(f"cannot write scatter CSV to {path}: {e}") from e

    if svg_path is not None:
        _scatter_svg(truth, preds, svg_path)


def _scatter_svg(truth, preds, svg_path) -> None:
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    t = np.array([x.as_array() for x in truth])
    p = np.array([x.as_array() for x in preds])
    fig, axes = plt.subplots(1, 3, figsize=(12, 4))
    for k, (ax, name) in enumerate(zip(axes, TARGET_NAMES)):
        ax.scatter(t[:, k], p[:, k], s=12, alpha=0.7)
        lo = min(t[:, k].min(), p[:, k].min())
        hi = max(t[:, k].max(), p[:, k].max())
        pad = 0.05 * (hi - lo) if hi > lo else 1.0
        ax.plot([lo - pad, hi + pad], [lo - pad, hi + pad], "k--", linewidth=1)
        ax.set_title(name)
        ax.set_xlabel("ground truth (mm)")
        if k == 0:
            ax.set_ylabel("predicted (mm)")
    fig.tight_layout()
    try:
        fig.savefig(svg_path, format="svg")
    except OSError as e:
        raise IoFailure(f"cannot write scatter SVG to {svg_path}: {e}") from e
    finally:
        plt.close(fig)


def _fmt(v: float | None) -> str:
    return "undef" if v is None else f"{v:.6f}"


def format_eval_report(report: EvalReport, source_label: str = "unknown") -> str:
    """Text document mirroring the accuracy-table columns, raw mm units."""
    lines = [
        "# PSD evaluation report",
        f"# source: {source_label}",
        f"# n_scenes: {report.n}",
        "# units: raw mm (MSE in mm^2); overall pools the flattened 3N pairs",
        "",
        f"{'set':<8} {'R2':>12} {'MSE':>12} {'MAE':>12}",
    ]
    rows = [("overall", report.overall)] + [(k, report.per_target[k]) for k in TARGET_NAMES]
    for name, m in rows:
        lines.append(f"{name:<8} {_fmt(m.r2):>12} {m.mse:>12.6f} {m.mae:>12.6f}")
    return "\n".join(lines) + "\n"


def write_eval_report(report: EvalReport, path, source_label: str = "unknown") -> None:
    try:
        with open(path, "w", encoding="utf-8", newline="") as fh:
            fh.write(format_eval_report(report, source_label))
    except OSError as e:
        raise IoFailure(f"cannot write report to {path}: {e}") from e


def format_bench_report(report: BenchReport, label: str = "estimator") -> str:
    params = "-" if report.parameter_count is None else f"{report.parameter_count / 1e6:.1f}"
    lines = [
        "# Inference speed report",
        f"# device: {report.device_label}",
        f"# warmup: {report.warmup}  reps: {report.reps}",
        "",
        f"{'model':<24} {'FPS':>10} {'time/image (s)':>16} {'std (s)':>10} {'params (M)':>11}",
        f"{label:<24} {report.fps:>10.2f} {report.seconds_per_image:>16.6f} "
        f"{report.std_seconds:>10.6f} {params:>11}",
    ]
    return "\n".join(lines) + "\n"


def write_bench_report(report: BenchReport, path, label: str = "estimator") -> None:
    try:
        with open(path, "w", encoding="utf-8", newline="") as fh:
            fh.write(format_bench_report(report, label))
    except OSError as e:
        raise IoFailure(f"cannot write report to {path}: {e}") from e


# ---------------------------------------------------------------------------
# Prediction-file I/O (shared with trainers)
# ---------------------------------------------------------------------------

def write_predictions(path, records: list[tuple[str, PsdTargets]]) -> None:
    """Write the shared prediction CSV: image_id,d10,d50,d90 in mm, LF endings."""
    try:
        with open(path, "w", encoding="utf-8", newline="") as fh:
            fh.write(PREDICTIONS_HEADER + "\n")
            for img_id, t in records:
                fh.write(f"{img_id},{t.d10!r},{t.d50!r},{t.d90!r}\n")
    except OSError as e:
        raise IoFailure(f"cannot write predictions to {path}: {e}") from e


def read_predictions(path, source_label: str = "file") -> PredictionSet:
    try:
        with open(path, "r", encoding="utf-8", newline="") as fh:
            text = fh.read()
    except OSError as e:
        raise IoFailure(f"cannot read predictions from {path}: {e}") from e

    reader = csv.reader(io.StringIO(text))
    try:
        header = next(reader)
    except StopIteration:
        raise MalformedPredictions("empty predictions file") from None
    if [h.strip() for h in header] != PREDICTIONS_HEADER.split(","):
        raise MalformedPredictions(
            f"bad header {','.join(header)!r}; expected {PREDICTIONS_HEADER!r}"
        )
    records: list[tuple[str, PsdTargets]] = []
    for lineno, row in enumerate(reader, start=2):
        if not row:
            continue
        if len(row) != 4:
            raise MalformedPredictions(f"line {lineno}: expected 4 fields, got {len(row)}")
        img_id = row[0].strip()
        try:
            vals = [float(v) for v in row[1:]]
        except ValueError as e:
            raise MalformedPredictions(f"line {lineno}: non-numeric value ({e})") from None
        records.append((img_id, PsdTargets(*vals)))
    return PredictionSet(records=records, source_label=source_label)


# ---------------------------------------------------------------------------
# Throughput benchmark
# ---------------------------------------------------------------------------

def benchmark_inference(estimator, images, warmup: int, reps: int,
                        device_label: str = "cpu") -> BenchReport:
    """Time `estimator` over `images`: warmup passes untimed, then `reps`
    timed full passes with one monotonic-clock sample per image.

    `estimator` is either a callable image -> PsdTargets or an object with
    a `predict` method; a `descriptor` attribute with a `parameter_count`
    entry, when present, is copied into the report.
    """
    if reps < 1:
        raise ConfigError(f"reps must be >= 1, got {reps}")
    if warmup < 0:
        raise ConfigError(f"warmup must be >= 0, got {warmup}")
    images = list(images)
    if not images:
        raise EmptyImageSet("no images to benchmark")

    if callable(estimator):
        run = estimator
    elif hasattr(estimator, "predict_targets"):
        run = estimator.predict_targets
    elif hasattr(estimator, "predict"):
        run = lambda img: estimator.predict([img])[0]
    else:
        raise ConfigError("estimator must be callable or expose predict()")

    param_count = None
    desc = getattr(estimator, "descriptor", None)
    if isinstance(desc, dict):
        param_count = desc.get("parameter_count")

    for _ in range(warmup):
        for img in images:
            run(img)

    times = np.empty(reps * len(images), dtype=np.float64)
    k = 0
    for _ in range(reps):
        for img in images:
            t0 = time.perf_counter()
            run(img)
            times[k] = time.perf_counter() - t0
            k += 1

    return BenchReport(
        seconds_per_image=float(times.mean()),
        std_seconds=float(times.std()),
        warmup=warmup,
        reps=reps,
        device_label=device_label,
        parameter_count=param_count,
    )
