"""Counter-based uniform streams keyed by (seed, stream id, counter).

Every uniform is a pure function of its key, so any subset of draws can be
regenerated in any order and on any number of workers with identical results.
A draw is the SplitMix64 finalizer applied to mix(seed) + (stream + 1) * A +
(counter + 1) * B for two odd constants: along either index this is a SplitMix64
sequence started at a seed-dependent point.
"""

import math

import numpy as np

_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_STREAM_SALT = np.uint64(0xD1B54A32D192ED03)
_TRIAL_SALT = np.uint64(0x8CB92BA72F3D8DD7)
_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)
_S30 = np.uint64(30)
_S27 = np.uint64(27)
_S31 = np.uint64(31)
_S11 = np.uint64(11)
_ONE = np.uint64(1)
_INV53 = 2.0**-53

SEED_MAX = 2**64 - 1


def _as_u64(x) -> np.ndarray:
    a = np.asarray(x)
    if a.dtype != np.uint64:
        if np.any(a < 0):
            raise ValueError("seeds, streams and counters must be non-negative")
        a = a.astype(np.uint64)
    return np.atleast_1d(a)


def mix64(z: np.ndarray) -> np.ndarray:
    """SplitMix64 output function on a uint64 array (wrapping arithmetic)."""
    z = np.array(z, dtype=np.uint64, copy=True, ndmin=1)
    return _mix_inplace(z)


def _mix_inplace(z: np.ndarray) -> np.ndarray:
    t = z >> _S30
    z ^= t
    z *= _M1
    np.right_shift(z, _S27, out=t)
    z ^= t
    z *= _M2
    np.right_shift(z, _S31, out=t)
    z ^= t
    return z


def check_seed(seed: int) -> int:
    seed = int(seed)
    if not 0 <= seed <= SEED_MAX:
        raise ValueError(f"seed must lie in [0, 2**64), got {seed}")
    return seed


def derive_seeds(seed, stream_ids) -> np.ndarray:
    """Child seeds for independent sub-experiments, e.g. one per Monte Carlo trial."""
    s = _as_u64(seed)
    ids = _as_u64(stream_ids)
    return _mix_inplace(s ^ mix64((ids + _ONE) * _TRIAL_SALT))


def raw_bits(seed, stream_ids, counters) -> np.ndarray:
    """64 random bits per (seed, stream, counter) triple; arguments broadcast."""
    key = mix64(_as_u64(seed))
    offset = (_as_u64(stream_ids) + _ONE) * _STREAM_SALT + (_as_u64(counters) + _ONE) * _GOLDEN
    return _mix_inplace(key + offset)


def uniforms(seed, stream_ids, counters) -> np.ndarray:
    """Doubles in [0, 1) with 53 random bits; arguments broadcast."""
    return (raw_bits(seed, stream_ids, counters) >> _S11).astype(np.float64) * _INV53


def bernoulli(seed, stream_ids, counters, p: float) -> np.ndarray:
    """Exactly ``uniforms(...) < p``, compared on the integer mantissas."""
    if not 0.0 <= p <= 1.0:
        raise ValueError(f"p must lie in [0, 1], got {p}")
    cut = np.uint64(math.ceil(p * 2.0**53))
    return (raw_bits(seed, stream_ids, counters) >> _S11) < cut
