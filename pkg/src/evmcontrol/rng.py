"""Counter-based pseudo-random streams.

Every stochastic quantity in the toolkit is derived from a 64-bit key by
folding integer indices into a seed with splitmix64-style finalizers
(Steele, Lea & Flood 2014).  Keys are pure functions of
``(seed, index, index, ...)``, so results never depend on sampling order,
worker count or scheduling: the ensemble produced for a given seed is
byte-identical no matter how it is executed.

``fold`` is the single mixing primitive; ``mix_seed`` is its scalar
reduction over several indices.  ``unit_uniform`` maps keys to doubles in
the open interval (0, 1) using the top 53 bits.
"""

from __future__ import annotations

import numpy as np

_U64 = np.uint64
_MASK = (1 << 64) - 1
_GOLDEN = 0x9E3779B97F4A7C15
_MIX1 = 0xBF58476D1CE4E5B9
_MIX2 = 0x94D049BB133111EB


def _finalize(z: np.ndarray) -> np.ndarray:
    # uint64 wraparound is the point; silence numpy's scalar overflow warning
    with np.errstate(over="ignore"):
        z = (z ^ (z >> _U64(30))) * _U64(_MIX1)
        z = (z ^ (z >> _U64(27))) * _U64(_MIX2)
        return z ^ (z >> _U64(31))


def fold(key, index) -> np.ndarray:
    """Mix an integer index (array or scalar) into a key (array or scalar).

    Broadcasts like any numpy binary op; returns uint64.
    """
    k = np.asarray(key, dtype=_U64)
    ix = np.asarray(index, dtype=_U64)
    with np.errstate(over="ignore"):
        return _finalize(k ^ ((ix + _U64(1)) * _U64(_GOLDEN)))


def mix_seed(seed: int, *indices: int) -> int:
    """Scalar chain of ``fold`` calls; handy for deriving sub-stream seeds."""
    key = np.asarray(seed & _MASK, dtype=_U64)
    for ix in indices:
        key = fold(key, ix & _MASK)
    return int(key)


def unit_uniform(key) -> np.ndarray:
    """Map 64-bit keys to doubles strictly inside (0, 1)."""
    bits = np.asarray(key, dtype=_U64) >> _U64(11)
    return (bits.astype(np.float64) + 0.5) * 2.0**-53


def generator(seed: int, *indices: int) -> np.random.Generator:
    """A numpy Generator seeded from the mixed key (for bootstrap etc.)."""
    return np.random.default_rng(mix_seed(seed, *indices))
