"""psd-core: quantiles, metadata round trips, validation."""
import json
import math

import numpy as np
import pytest

from granulab.errors import (
    EmptyInput,
    MalformedDocument,
    MissingField,
    NonPositiveSize,
    TypeMismatch,
)
from granulab.psd import (
    MASS_WEIGHTED,
    NUMBER_WEIGHTED,
    ParticleRecord,
    PsdTargets,
    QuantileConvention,
    SceneMetadata,
    compute_psd,
    parse_metadata,
    serialize_metadata,
    validate_metadata,
)
from granulab.sampling import GenerationConfig

NUMBER = QuantileConvention(NUMBER_WEIGHTED)
MASS = QuantileConvention(MASS_WEIGHTED)


# --- independent oracles -----------------------------------------------------

def brute_number_quantile(sizes, p):
    """Full sort + rank interpolation at h = p*(n-1), written from scratch."""
    s = sorted(float(v) for v in sizes)
    h = p * (len(s) - 1)
    lo = math.floor(h)
    hi = min(lo + 1, len(s) - 1)
    return s[lo] + (h - lo) * (s[hi] - s[lo])


def brute_mass_quantile(sizes, p):
    """Step cumulative mass curve: smallest size with cum fraction >= p."""
    pairs = sorted((float(v), float(v) ** 3) for v in sizes)
    total = sum(w for _, w in pairs)
    acc = 0.0
    for size, w in pairs:
        acc += w
        if acc >= p * total:
            return size
    return pairs[-1][0]


# --- compute_psd -------------------------------------------------------------

def test_degenerate_distribution():
    t = compute_psd([5.0] * 100, NUMBER)
    assert (t.d10, t.d50, t.d90) == (5.0, 5.0, 5.0)
    t = compute_psd([5.0] * 100, MASS)
    assert (t.d10, t.d50, t.d90) == (5.0, 5.0, 5.0)


def test_one_through_ten_number_weighted():
    t = compute_psd(range(1, 11), NUMBER)
    assert t.d10 == pytest.approx(1.9, abs=1e-12)
    assert t.d50 == pytest.approx(5.5, abs=1e-12)
    assert t.d90 == pytest.approx(9.1, abs=1e-12)


def test_two_sizes_mass_weighted():
    # weights 1:8 -> fractions 1/9, 8/9, so the median sits on the larger size
    t = compute_psd([1.0, 2.0], MASS)
    assert t.d50 == 2.0
    assert t.d50 == brute_mass_quantile([1.0, 2.0], 0.5)


def test_errors():
    with pytest.raises(EmptyInput):
        compute_psd([], NUMBER)
    with pytest.raises(NonPositiveSize):
        compute_psd([1.0, 0.0], NUMBER)
    with pytest.raises(NonPositiveSize):
        compute_psd([1.0, -3.0], MASS)


def test_permutation_invariance():
    rng = np.random.default_rng(7)
    for _ in range(20):
        sizes = rng.uniform(0.1, 20.0, size=rng.integers(1, 50))
        shuffled = rng.permutation(sizes)
        for conv in (NUMBER, MASS):
            assert compute_psd(sizes, conv) == compute_psd(shuffled, conv)


def test_uniform_scaling():
    rng = np.random.default_rng(8)
    for _ in range(20):
        sizes = rng.uniform(0.1, 20.0, size=rng.integers(1, 60))
        k = float(rng.uniform(0.01, 100.0))
        for conv in (NUMBER, MASS):
            base = compute_psd(sizes, conv).as_array()
            scaled = compute_psd(k * sizes, conv).as_array()
            np.testing.assert_allclose(scaled, k * base, rtol=1e-12)


def test_number_weighted_within_range_and_ordered():
    rng = np.random.default_rng(9)
    for _ in range(50):
        sizes = rng.uniform(0.1, 20.0, size=rng.integers(1, 200))
        for conv in (NUMBER, MASS):
            t = compute_psd(sizes, conv)
            assert 0 < t.d10 <= t.d50 <= t.d90
        t = compute_psd(sizes, NUMBER)
        assert sizes.min() <= t.d10 and t.d90 <= sizes.max()


def test_against_brute_force_oracle():
    rng = np.random.default_rng(10)
    for _ in range(200):
        sizes = rng.uniform(0.05, 25.0, size=rng.integers(1, 400))
        got = compute_psd(sizes, NUMBER)
        for p, v in zip((0.1, 0.5, 0.9), (got.d10, got.d50, got.d90)):
            assert v == pytest.approx(brute_number_quantile(sizes, p), abs=1e-9)
        got = compute_psd(sizes, MASS)
        for p, v in zip((0.1, 0.5, 0.9), (got.d10, got.d50, got.d90)):
            assert v == pytest.approx(brute_mass_quantile(sizes, p), abs=1e-9)


def test_invalid_convention_rejected():
    with pytest.raises(ValueError):
        QuantileConvention("volume_weighted")


# --- metadata schema ---------------------------------------------------------

def _scene(particles, samplesize=None, **kw):
    fields = dict(
        shape_type="crushed_rock",
        size_mean=10.5,
        size_sigma=7.2,
        table_size=300.0,
        samplesize=len(particles) if samplesize is None else samplesize,
        particles=tuple(particles),
    )
    fields.update(kw)
    return SceneMetadata(**fields)


def test_roundtrip_single_particle():
    meta = _scene([ParticleRecord(size=11.8, x=-11.12, y=-2.31)])
    assert parse_metadata(serialize_metadata(meta)) == meta


def test_roundtrip_preserves_awkward_floats():
    meta = _scene(
        [ParticleRecord(size=1 / 3, x=-1e-17, y=math.pi)],
        size_mean=0.1 + 0.2,
    )
    assert parse_metadata(serialize_metadata(meta)) == meta


def test_field_names_match_document_format():
    meta = _scene([ParticleRecord(size=11.8, x=-11.12, y=-2.31)])
    doc = json.loads(serialize_metadata(meta).decode("utf-8"))
    assert list(doc) == ["shape_type", "size_mean", "size_sigma", "table_size", "samplesize", "particles"]
    assert list(doc["particles"][0]) == ["size", "x", "y"]


def test_parse_listing_style_document():
    # 920-particle document with the documented header fields
    rng = np.random.default_rng(1)
    entries = [
        {"size": float(s), "x": float(x), "y": float(y)}
        for s, x, y in zip(
            rng.uniform(0.1, 20, 920), rng.uniform(-150, 150, 920), rng.uniform(-150, 150, 920)
        )
    ]
    doc = json.dumps({
        "shape_type": "crushed_rock",
        "size_mean": 10.5,
        "size_sigma": 7.2,
        "table_size": 300,
        "samplesize": 920,
        "particles": entries,
    })
    meta = parse_metadata(doc)
    assert meta.shape_type == "crushed_rock"
    assert meta.size_mean == 10.5 and meta.size_sigma == 7.2
    assert meta.table_size == 300.0
    assert meta.samplesize == 920 and len(meta.particles) == 920


def test_count_mismatch_parses_then_flags():
    doc = json.dumps({
        "shape_type": "crushed_rock",
        "size_mean": 10.5,
        "size_sigma": 7.2,
        "table_size": 300,
        "samplesize": 5,
        "particles": [{"size": 1.0, "x": 0.0, "y": 0.0}] * 4,
    })
    meta = parse_metadata(doc)  # parses fine
    report = validate_metadata(meta, GenerationConfig())
    assert "CountMismatch" in report.kinds()


def test_parse_errors():
    with pytest.raises(MalformedDocument):
        parse_metadata(b"{not json")
    with pytest.raises(MalformedDocument):
        parse_metadata(b"[1, 2]")
    good = {
        "shape_type": "x", "size_mean": 1.0, "size_sigma": 1.0,
        "table_size": 300, "samplesize": 0, "particles": [],
    }
    for missing in good:
        doc = {k: v for k, v in good.items() if k != missing}
        with pytest.raises(MissingField):
            parse_metadata(json.dumps(doc))
    with pytest.raises(TypeMismatch):
        parse_metadata(json.dumps({**good, "size_mean": "ten"}))
    with pytest.raises(TypeMismatch):
        parse_metadata(json.dumps({**good, "samplesize": 1.5}))
    with pytest.raises(TypeMismatch):
        parse_metadata(json.dumps({**good, "particles": {}}))
    with pytest.raises(MalformedDocument):
        parse_metadata(json.dumps({**good, "extra_field": 1}))
    with pytest.raises(MissingField):
        parse_metadata(json.dumps({**good, "particles": [{"size": 1.0, "x": 0.0}]}))


# --- validation --------------------------------------------------------------

def test_validation_table_ranges_ok():
    meta = _scene([ParticleRecord(size=5.0, x=0.0, y=0.0)])
    report = validate_metadata(meta, GenerationConfig())
    assert report.valid and len(report) == 0


def test_validation_out_of_table_bounds():
    meta = _scene([ParticleRecord(size=5.0, x=200.0, y=0.0)])
    report = validate_metadata(meta, GenerationConfig())
    assert "OutOfTableBounds" in report.kinds()
    assert any(v.index == 0 for v in report)


def test_validation_size_out_of_truncation_bounds():
    meta = _scene([ParticleRecord(size=25.0, x=0.0, y=0.0)])
    report = validate_metadata(meta, GenerationConfig())
    assert "SizeOutOfTruncationBounds" in report.kinds()


def test_validation_mean_sigma_ranges():
    meta = _scene([ParticleRecord(size=5.0, x=0.0, y=0.0)], size_mean=20.0, size_sigma=1.0)
    report = validate_metadata(meta, GenerationConfig())
    assert {"MeanOutOfConfigRange", "SigmaOutOfConfigRange"} <= report.kinds()


def test_targets_as_array():
    t = PsdTargets(1.0, 2.0, 3.0)
    np.testing.assert_array_equal(t.as_array(), [1.0, 2.0, 3.0])
