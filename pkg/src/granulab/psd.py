"""Particle-size domain types, ground-truth quantiles, and scene metadata I/O.

The metadata document is a JSON object with exactly these fields::

    {
      "shape_type": "crushed_rock",
      "size_mean": 10.5,
      "size_sigma": 7.2,
      "table_size": 300,
      "samplesize": 920,
      "particles": [{"size": 11.8, "x": -11.12, "y": -2.31}, ...]
    }

Sizes are particle diameters in mm; x/y are planar positions in mm with the
origin at the table center, so valid coordinates lie in
[-table_size/2, +table_size/2].

Quantile conventions
--------------------
``number_weighted`` treats each particle as one count and interpolates
linearly between order statistics at fractional rank ``h = p * (n - 1)``
(zero-based). ``mass_weighted`` weights each particle by ``size**3`` and
reads the step cumulative-mass curve: the smallest size whose cumulative
mass fraction reaches ``p``, with no interpolation.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import TYPE_CHECKING, Iterable, Sequence

import numpy as np

from .errors import (
    EmptyInput,
    MalformedDocument,
    MissingField,
    NonPositiveSize,
    TypeMismatch,
)

if TYPE_CHECKING:
    from .sampling import GenerationConfig

NUMBER_WEIGHTED = "number_weighted"
MASS_WEIGHTED = "mass_weighted"
_WEIGHTINGS = (NUMBER_WEIGHTED, MASS_WEIGHTED)

METADATA_FIELDS = ("shape_type", "size_mean", "size_sigma", "table_size", "samplesize", "particles")
PARTICLE_FIELDS = ("size", "x", "y")


@dataclass(frozen=True)
class QuantileConvention:
    """Which weighting the d10/d50/d90 quantiles use."""

    weighting: str = NUMBER_WEIGHTED

    def __post_init__(self):
        if self.weighting not in _WEIGHTINGS:
            raise ValueError(f"weighting must be one of {_WEIGHTINGS}, got {self.weighting!r}")


@dataclass(frozen=True)
class ParticleRecord:
    """One particle: diameter in mm and planar position in mm."""

    size: float
    x: float
    y: float


@dataclass(frozen=True)
class PsdTargets:
    """The (d10, d50, d90) regression label triple, in mm."""

    d10: float
    d50: float
    d90: float

    def as_array(self) -> np.ndarray:
        return np.array([self.d10, self.d50, self.d90], dtype=float)


@dataclass(frozen=True)
class SceneMetadata:
    """Full per-scene annotation document."""

    shape_type: str
    size_mean: float
    size_sigma: float
    table_size: float
    samplesize: int
    particles: tuple[ParticleRecord, ...]

    def sizes(self) -> np.ndarray:
        return np.array([p.size for p in self.particles], dtype=float)


def _weighted_step_quantiles(sizes: np.ndarray, weights: np.ndarray, ps: Sequence[float]) -> list[float]:
    """Smallest size whose cumulative weight reaches p * total (step curve)."""
    order = np.argsort(sizes, kind="stable")
    s = sizes[order]
    cum = np.cumsum(weights[order])
    total = cum[-1]
    out = []
    for p in ps:
        idx = int(np.searchsorted(cum, p * total, side="left"))
        out.append(float(s[min(idx, len(s) - 1)]))
    return out


def _rank_interp_quantiles(sizes: np.ndarray, ps: Sequence[float]) -> list[float]:
    """Linear interpolation between order statistics at rank h = p * (n - 1)."""
    s = np.sort(sizes)
    n = len(s)
    out = []
    for p in ps:
        h = p * (n - 1)
        lo = int(np.floor(h))
        hi = min(lo + 1, n - 1)
        out.append(float(s[lo] + (h - lo) * (s[hi] - s[lo])))
    return out


def compute_psd(sizes: Iterable[float], convention: QuantileConvention = QuantileConvention()) -> PsdTargets:
    """Ground-truth d10/d50/d90 of a size list under the given convention.

    Raises
    ------
    EmptyInput
        If `sizes` is empty.
    NonPositiveSize
        If any size is <= 0 (sizes are diameters, strictly positive).
    """
    arr = np.asarray(list(sizes) if not isinstance(sizes, np.ndarray) else sizes, dtype=float)
    if arr.size == 0:
        raise EmptyInput("compute_psd needs at least one size")
    if np.any(arr <= 0.0) or not np.all(np.isfinite(arr)):
        raise NonPositiveSize("all sizes must be finite and > 0")

    ps = (0.10, 0.50, 0.90)
    if convention.weighting == NUMBER_WEIGHTED:
        d10, d50, d90 = _rank_interp_quantiles(arr, ps)
    else:
        d10, d50, d90 = _weighted_step_quantiles(arr, arr**3, ps)
    return PsdTargets(d10, d50, d90)


# ---------------------------------------------------------------------------
# Metadata document (de)serialization
# ---------------------------------------------------------------------------

def serialize_metadata(meta: SceneMetadata) -> bytes:
    """Encode a scene as the UTF-8 JSON document, Listing-order fields.

    Floats use Python's shortest round-trip repr, so parse(serialize(m))
    reproduces every value bit-exactly.
    """
    doc = {
        "shape_type": meta.shape_type,
        "size_mean": meta.size_mean,
        "size_sigma": meta.size_sigma,
        "table_size": meta.table_size,
        "samplesize": meta.samplesize,
        "particles": [{"size": p.size, "x": p.x, "y": p.y} for p in meta.particles],
    }
    return json.dumps(doc, indent=2).encode("utf-8")


def _require_number(obj: dict, name: str) -> float:
    if name not in obj:
        raise MissingField(name)
    v = obj[name]
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise TypeMismatch(name, "number", v)
    return float(v)


def parse_metadata(document: bytes | str) -> SceneMetadata:
    """Parse a metadata document; strict about field names and types.

    Consistency problems (count mismatch, out-of-range values) are *not*
    rejected here; run `validate_metadata` for those.
    """
    if isinstance(document, bytes):
        document = document.decode("utf-8")
    try:
        doc = json.loads(document)
    except json.JSONDecodeError as e:
        raise MalformedDocument(f"not valid JSON: {e}") from e
    if not isinstance(doc, dict):
        raise MalformedDocument("top-level value must be an object")
    unknown = set(doc) - set(METADATA_FIELDS)
    if unknown:
        raise MalformedDocument(f"unknown fields: {', '.join(sorted(unknown))}")

    if "shape_type" not in doc:
        raise MissingField("shape_type")
    shape_type = doc["shape_type"]
    if not isinstance(shape_type, str):
        raise TypeMismatch("shape_type", "string", shape_type)

    size_mean = _require_number(doc, "size_mean")
    size_sigma = _require_number(doc, "size_sigma")
    table_size = _require_number(doc, "table_size")

    if "samplesize" not in doc:
        raise MissingField("samplesize")
    samplesize = doc["samplesize"]
    if isinstance(samplesize, bool) or not isinstance(samplesize, int):
        raise TypeMismatch("samplesize", "integer", samplesize)

    if "particles" not in doc:
        raise MissingField("particles")
    raw_particles = doc["particles"]
    if not isinstance(raw_particles, list):
        raise TypeMismatch("particles", "list", raw_particles)

    particles = []
    for i, entry in enumerate(raw_particles):
        if not isinstance(entry, dict):
            raise TypeMismatch(f"particles[{i}]", "object", entry)
        unknown = set(entry) - set(PARTICLE_FIELDS)
        if unknown:
            raise MalformedDocument(f"particles[{i}]: unknown fields: {', '.join(sorted(unknown))}")
        particles.append(
            ParticleRecord(
                size=_require_number(entry, "size"),
                x=_require_number(entry, "x"),
                y=_require_number(entry, "y"),
            )
        )

    return SceneMetadata(
        shape_type=shape_type,
        size_mean=size_mean,
        size_sigma=size_sigma,
        table_size=table_size,
        samplesize=samplesize,
        particles=tuple(particles),
    )


# ---------------------------------------------------------------------------
# Validation
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Violation:
    kind: str
    index: int | None
    message: str


@dataclass
class ValidationReport:
    """List of violations; empty means the scene is valid."""

    violations: list[Violation] = field(default_factory=list)

    @property
    def valid(self) -> bool:
        return not self.violations

    def kinds(self) -> set[str]:
        return {v.kind for v in self.violations}

    def __iter__(self):
        return iter(self.violations)

    def __len__(self):
        return len(self.violations)


def validate_metadata(meta: SceneMetadata, config: "GenerationConfig") -> ValidationReport:
    """Check a scene against its generation config; violations are data, not errors."""
    out: list[Violation] = []

    if meta.samplesize != len(meta.particles):
        out.append(Violation(
            "CountMismatch", None,
            f"samplesize {meta.samplesize} != {len(meta.particles)} particle entries",
        ))

    mu_lo, mu_hi = config.mu_range
    if not (mu_lo <= meta.size_mean <= mu_hi):
        out.append(Violation(
            "MeanOutOfConfigRange", None,
            f"size_mean {meta.size_mean} outside [{mu_lo}, {mu_hi}]",
        ))
    sg_lo, sg_hi = config.sigma_range
    if not (sg_lo <= meta.size_sigma <= sg_hi):
        out.append(Violation(
            "SigmaOutOfConfigRange", None,
            f"size_sigma {meta.size_sigma} outside [{sg_lo}, {sg_hi}]",
        ))

    half = meta.table_size / 2.0
    a, b = config.trunc_bounds
    for i, p in enumerate(meta.particles):
        if abs(p.x) > half or abs(p.y) > half:
            out.append(Violation(
                "OutOfTableBounds", i,
                f"particle {i} at ({p.x}, {p.y}) outside half-width {half}",
            ))
        if not (a <= p.size <= b):
            out.append(Violation(
                "SizeOutOfTruncationBounds", i,
                f"particle {i} size {p.size} outside [{a}, {b}]",
            ))

    return ValidationReport(out)
