"""Seeded 64-bit hashing used by every sketch in this package.

All bit placement in the sketches (bitmap cells, segment decisions,
bucket columns) flows through one keyed avalanche hash so that a run is
fully determined by its seeds. The mixer is the splitmix64 finalizer,
which gives good avalanche behaviour at a couple of multiplies per call
and, unlike Python's builtin ``hash``, is stable across processes.

The same function exists in three forms that must agree bit for bit:
``hash64`` (scalar Python ints), ``hash64_np`` (vectorised over numpy
uint64 arrays), and the ``@njit`` kernels in ``_kernels`` which inline
the identical constants.
"""

from __future__ import annotations

import numpy as np

MASK64 = (1 << 64) - 1

_GOLDEN = 0x9E3779B97F4A7C15
_MIX1 = 0xBF58476D1CE4E5B9
_MIX2 = 0x94D049BB133111EB


def splitmix64(state: int) -> int:
    """Advance a splitmix64 state by one step and return the output."""
    z = (state + _GOLDEN) & MASK64
    z = ((z ^ (z >> 30)) * _MIX1) & MASK64
    z = ((z ^ (z >> 27)) * _MIX2) & MASK64
    return z ^ (z >> 31)


def hash64(value: int, seed: int) -> int:
    """Hash a non-negative integer under a seed to a uniform 64-bit value.

    Each seed selects an independent stream: the value is offset by
    ``seed * golden`` before the splitmix64 finalizer, which is exactly
    the output function of splitmix64 evaluated at state ``value`` in
    the stream whose increment multiple is ``seed``.
    """
    z = (value + seed * _GOLDEN) & MASK64
    z = ((z ^ (z >> 30)) * _MIX1) & MASK64
    z = ((z ^ (z >> 27)) * _MIX2) & MASK64
    return z ^ (z >> 31)


def hash64_bytes(data: bytes, seed: int) -> int:
    """Hash a byte string by folding it into 64-bit words, then mixing."""
    acc = seed
    for off in range(0, len(data), 8):
        word = int.from_bytes(data[off : off + 8], "big")
        acc = hash64(word ^ len(data), acc)
    return hash64(acc, seed)


def key_to_int(key: int | bytes) -> int:
    """Canonical integer form of an insertable key."""
    if isinstance(key, bytes):
        return int.from_bytes(key, "big")
    if key < 0:
        raise ValueError("hash keys must be non-negative")
    return key


def hash64_np(values: np.ndarray, seed: int | np.ndarray) -> np.ndarray:
    """Vectorised ``hash64`` over a uint64 array. Matches the scalar form.

    ``seed`` may be a scalar or an array broadcastable against
    ``values`` (one seed per row, for example).
    """
    if isinstance(seed, np.ndarray):
        offset = seed.astype(np.uint64) * np.uint64(_GOLDEN)
    else:
        offset = np.uint64((seed * _GOLDEN) & MASK64)
    z = values.astype(np.uint64) + offset
    z = (z ^ (z >> np.uint64(30))) * np.uint64(_MIX1)
    z = (z ^ (z >> np.uint64(27))) * np.uint64(_MIX2)
    return z ^ (z >> np.uint64(31))


def leading_zeros64(value: int) -> int:
    """Number of leading zero bits in a 64-bit value (64 for zero)."""
    return 64 - int(value).bit_length()


def derive_seed(master: int, label: str) -> int:
    """Derive an independent named sub-seed from a master seed."""
    return hash64_bytes(label.encode("utf-8"), master & MASK64)


class SeededUniform:
    """Tiny splitmix64-based uniform generator for replacement draws.

    The sketch kernels need a PRNG whose state is a single uint64 so the
    pure-Python and numba update paths can share it. numpy's Generator
    cannot be advanced from inside an njit kernel, hence this.
    """

    __slots__ = ("state",)

    def __init__(self, seed: int) -> None:
        self.state = seed & MASK64

    def next_float(self) -> float:
        """Uniform draw in [0, 1) with 53 random bits."""
        self.state = (self.state + _GOLDEN) & MASK64
        z = self.state
        z = ((z ^ (z >> 30)) * _MIX1) & MASK64
        z = ((z ^ (z >> 27)) * _MIX2) & MASK64
        z = z ^ (z >> 31)
        return (z >> 11) * 2.0**-53
