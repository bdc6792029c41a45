"""Deterministic 64-bit seed derivation and integer-to-float hashing.

Every random draw in the toolkit traces back to a master seed through the
SplitMix64 finalizer (Steele, Lea & Flood 2014), so datasets regenerate
bit-identically on any machine. Per-scene seeds are derived by folding
indices into the master seed one at a time; two scenes (or two retry
attempts of one scene) therefore use unrelated streams.
"""
from __future__ import annotations

import numpy as np

_MASK = 0xFFFFFFFFFFFFFFFF
_GAMMA = 0x9E3779B97F4A7C15  # golden-ratio increment used by SplitMix64


def splitmix64(x: int) -> int:
    """SplitMix64 finalizer: a bijective 64-bit mix with full avalanche."""
    x = (x + _GAMMA) & _MASK
    x = ((x ^ (x >> 30)) * 0xBF58476D1CE4E5B9) & _MASK
    x = ((x ^ (x >> 27)) * 0x94D049BB133111EB) & _MASK
    return (x ^ (x >> 31)) & _MASK


def derive_seed(master_seed: int, *indices: int) -> int:
    """Fold integer indices into a master seed, one SplitMix64 round each."""
    s = splitmix64(master_seed & _MASK)
    for idx in indices:
        s = splitmix64((s ^ (idx & _MASK)) & _MASK)
    return s


def hash_unit(seed: int, *indices: int) -> float:
    """Deterministic value in [-1, 1) keyed by (seed, indices)."""
    h = derive_seed(seed, *indices)
    return (h >> 11) * (2.0 ** -52) - 1.0


def hash_unit_grid(seed: int, ix: np.ndarray, iy: np.ndarray) -> np.ndarray:
    """Vectorized `hash_unit(seed, ix, iy)` over integer lattice coordinates.

    Uses the same SplitMix64 rounds as the scalar path, evaluated with
    uint64 numpy arithmetic; results are bit-identical to the scalar form.
    """
    with np.errstate(over="ignore"):
        s0 = np.uint64(splitmix64(seed & _MASK))

        def mix(x):
            x = x + np.uint64(_GAMMA)
            x = (x ^ (x >> np.uint64(30))) * np.uint64(0xBF58476D1CE4E5B9)
            x = (x ^ (x >> np.uint64(27))) * np.uint64(0x94D049BB133111EB)
            return x ^ (x >> np.uint64(31))

        h = mix(s0 ^ ix.astype(np.uint64))
        h = mix(h ^ iy.astype(np.uint64))
    return (h >> np.uint64(11)).astype(np.float64) * (2.0 ** -52) - 1.0
