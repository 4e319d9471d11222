"""Counter-based pseudorandom primitives shared by the pure-python and
vectorized numpy paths.

Every random quantity in the package is a pure function of a 64-bit seed and
integer counters (site coordinates, step index, replica index).  The mixing
function is the splitmix64 finalizer; statistical quality is covered by the
frequency tests in the environment test module.  The numba mirrors live in
``_fast`` and must produce bit-identical streams (cross-checked in tests).
"""

from __future__ import annotations

import numpy as np

_MASK = (1 << 64) - 1
GOLD = 0x9E3779B97F4A7C15
_M1 = 0xBF58476D1CE4E5B9
_M2 = 0x94D049BB133111EB
_M3 = 0xD6E8FEB86659FD93

_U_GOLD = np.uint64(GOLD)
_U_M1 = np.uint64(_M1)
_U_M2 = np.uint64(_M2)
_U_M3 = np.uint64(_M3)

#: multiplier turning the top 53 bits of a uint64 into a float in [0, 1)
_INV53 = 2.0 ** -53


def mix64(z: int) -> int:
    """splitmix64 finalizer on python ints (reference implementation)."""
    z &= _MASK
    z = ((z ^ (z >> 30)) * _M1) & _MASK
    z = ((z ^ (z >> 27)) * _M2) & _MASK
    return (z ^ (z >> 31)) & _MASK


def counter_hash(seed: int, *counters: int) -> int:
    """Hash a seed and integer counters (site coords, step index) to uint64.

    Negative counters enter via their two's complement, matching the numba
    and numpy vector paths.
    """
    h = mix64((seed + GOLD) & _MASK)
    for c in counters:
        h = mix64(h ^ ((c * _M3 + GOLD) & _MASK))
    return h


def counter_u01(seed: int, *counters: int) -> float:
    """Uniform in [0, 1) from a hashed counter tuple."""
    return (counter_hash(seed, *counters) >> 11) * _INV53


def site_u01_array(seed: int, coords: np.ndarray) -> np.ndarray:
    """Vectorized ``counter_u01`` over an (..., d) int array of coordinates."""
    coords = np.asarray(coords, dtype=np.int64)
    h = np.uint64(mix64((seed + GOLD) & _MASK))
    out = np.broadcast_to(h, coords.shape[:-1]).copy()
    for i in range(coords.shape[-1]):
        c = np.ascontiguousarray(coords[..., i]).view(np.uint64)
        z = out ^ (c * _U_M3 + _U_GOLD)
        z = (z ^ (z >> np.uint64(30))) * _U_M1
        z = (z ^ (z >> np.uint64(27))) * _U_M2
        out = z ^ (z >> np.uint64(31))
    return (out >> np.uint64(11)).astype(np.float64) * _INV53


def spawn_seeds(root: int, n: int, salt: int = 0) -> np.ndarray:
    """Derive ``n`` decorrelated 63-bit seeds from a root seed.

    Used to key independent environment replicas and walk streams; replica
    ``i`` of salt ``s`` always receives the same seed for a fixed root.
    """
    return np.array(
        [counter_hash(root, salt, i) >> 1 for i in range(n)], dtype=np.int64
    )
