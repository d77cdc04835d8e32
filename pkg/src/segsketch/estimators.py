"""Single-host cardinality estimators.

``Bitmap`` is the Linear Counting substrate used everywhere in this
package: keys are hashed to one cell each, and the distinct-key count is
recovered from the number of still-zero cells as ``b * ln(b / z)``.

``MultiScaleBitmap`` stacks several equally sized bitmaps sampled with
geometrically decreasing probability, extending the counting range past
what a single bitmap can hold before saturating. It is a simplified
multi-resolution bitmap and exists only to give the SpreadSketch-style
baseline a comparable estimator; it makes no attempt to be bit-faithful
to the original.
"""

from __future__ import annotations

import math

from .hashing import derive_seed, hash64, key_to_int, leading_zeros64


class Bitmap:
    """Fixed-size bit array with cached set-bit count for Linear Counting.

    Cells only ever flip 0 -> 1 between resets, so ``estimate`` is
    non-decreasing over an insert sequence. The set count is maintained
    incrementally because the sketch replacement path needs an O(1)
    estimate per packet.
    """

    __slots__ = ("size_bits", "seed", "set_count", "_bits")

    def __init__(self, size_bits: int, seed: int = 0) -> None:
        if size_bits < 8 or size_bits % 8 != 0:
            raise ValueError(f"bitmap size must be a multiple of 8 and >= 8, got {size_bits}")
        self.size_bits = size_bits
        self.seed = seed
        self.set_count = 0
        self._bits = 0

    def insert(self, key: int | bytes) -> None:
        """Set the single cell ``H(key, seed) mod size_bits``. Idempotent."""
        idx = hash64(key_to_int(key), self.seed) % self.size_bits
        mask = 1 << idx
        if not self._bits & mask:
            self._bits |= mask
            self.set_count += 1

    def estimate(self) -> float:
        """Linear Counting estimate ``b * ln(b / z)`` of distinct inserts.

        A fully saturated bitmap (z = 0) is clamped to z = 1 so sweeps
        always see a finite value; a saturated estimator has exceeded
        its usable range and the clamp keeps it above any sane
        threshold.
        """
        zeros = self.size_bits - self.set_count
        if zeros <= 0:
            zeros = 1
        return self.size_bits * math.log(self.size_bits / zeros)

    @property
    def zero_count(self) -> int:
        return self.size_bits - self.set_count

    def test(self, index: int) -> bool:
        return bool((self._bits >> index) & 1)

    def cells(self) -> list[int]:
        """Materialise the cell array (for tests and inspection)."""
        return [(self._bits >> i) & 1 for i in range(self.size_bits)]

    def as_int(self) -> int:
        """The raw bit field, cell i at bit position i."""
        return self._bits

    def load_int(self, bits: int) -> None:
        """Restore raw cell state (deserialisation helper)."""
        if bits < 0 or bits >> self.size_bits:
            raise ValueError("bit field does not fit this bitmap")
        self._bits = bits
        self.set_count = bin(bits).count("1")

    def reset(self) -> None:
        self._bits = 0
        self.set_count = 0


class MultiScaleBitmap:
    """Stack of equal-size bitmaps with geometric level sampling.

    An insert picks level ``n`` with probability ``2^-(n+1)`` (from the
    leading zeros of a first hash) and sets one bit there via a second
    hash. Each level therefore sees roughly a ``2^-(n+1)`` sample of the
    distinct keys, and scaling the level's Linear Counting estimate by
    ``2^(n+1)`` recovers the total.

    The estimate is read from the shallowest level that is still
    reliable, meaning more than a quarter of its cells are unset;
    saturated levels have lost too much resolution to contribute.
    """

    def __init__(self, level_count: int = 8, level_bits: int = 512, seed: int = 0) -> None:
        if level_count < 1:
            raise ValueError("need at least one level")
        self.level_count = level_count
        self.level_bits = level_bits
        self.seed = seed
        self._select_seed = derive_seed(seed, "msb-select")
        self.levels = [
            Bitmap(level_bits, derive_seed(seed, f"msb-level-{n}")) for n in range(level_count)
        ]

    def level_for(self, key: int | bytes) -> int:
        """Level index chosen for a key: leading zeros of the select hash."""
        lz = leading_zeros64(hash64(key_to_int(key), self._select_seed))
        return min(lz, self.level_count - 1)

    def insert(self, key: int | bytes) -> None:
        self.levels[self.level_for(key)].insert(key)

    def estimate(self) -> float:
        """Scaled Linear Counting estimate from the first usable level."""
        for n, level in enumerate(self.levels):
            if level.zero_count * 4 > level.size_bits:
                return level.estimate() * float(2 ** (n + 1))
        # Every level saturated: report the deepest level's clamped value.
        n = self.level_count - 1
        return self.levels[n].estimate() * float(2 ** (n + 1))

    @property
    def set_count(self) -> int:
        return sum(level.set_count for level in self.levels)

    def reset(self) -> None:
        for level in self.levels:
            level.reset()

    @property
    def size_bits(self) -> int:
        return self.level_count * self.level_bits
