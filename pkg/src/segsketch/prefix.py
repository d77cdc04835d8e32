"""Common-prefix inference over a compact subnet bitmap.

The subnet bitmap encodes a binary search over the cells driven by
per-segment 2-value hashes of a peer address. Each address walks from
the root region (all cells) toward a leaf, halving the region at every
step according to the hash bit of its next address segment. Addresses
that share leading segments share hash bits and therefore walk the same
halves; the first segment where two addresses differ sends them to
sibling halves, and that divergence is what the structure records.

An insert that reaches a depth where the sibling half is already
occupied marks a cell in its own half and stops: both children of that
tree node are now non-empty, which a later query reads as "the common
prefix ends above this depth". A query is then a pure walk down the
bitmap: descend while exactly one half is occupied, and report
``(d - 1) * segment_bits`` at the first depth ``d`` where both halves
hold cells. The reported length is the lower edge of the true range, so
the derived host suffix always covers the real one.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .hashing import hash64

ADDRESS_BITS = 32

_ALLOWED_SEGMENT_BITS = (2, 4, 6, 8)


class EmptyBitmapError(ValueError):
    """Raised when a prefix is requested from an all-zero subnet bitmap."""


@dataclass(frozen=True)
class SegmentConfig:
    """Segmentation geometry for prefix inference.

    ``segment_bits`` is the hash granularity: inferred prefix lengths
    are multiples of it. ``depth`` is the number of halvings the bitmap
    supports, so the bitmap holds ``2**depth`` cells and the inferred
    length is capped at ``depth * segment_bits``. The default depth cap
    of 7 keeps the per-bucket bitmap at 16 bytes or less; standalone
    experiments may raise ``max_depth`` (up to 15) for full resolution
    at narrow segment widths.

    With ``level_salt`` off (the default), a segment value hashes the
    same way at every depth. The salt folds the depth into the hash
    input, decorrelating repeated values along an address at the cost
    of no longer hashing raw segment values.
    """

    segment_bits: int = 4
    depth: int | None = None
    max_depth: int = 7
    level_salt: bool = False

    def __post_init__(self) -> None:
        if self.segment_bits not in _ALLOWED_SEGMENT_BITS:
            raise ValueError(f"segment width must be one of {_ALLOWED_SEGMENT_BITS}")
        if not 1 <= self.max_depth <= 15:
            raise ValueError("max_depth must be in [1, 15]")
        if self.depth is None:
            object.__setattr__(self, "depth", min(self.segment_count - 1, self.max_depth))
        if not 1 <= self.depth <= min(self.segment_count - 1, 15):
            raise ValueError(f"depth {self.depth} invalid for segment width {self.segment_bits}")

    @property
    def segment_count(self) -> int:
        return -(-ADDRESS_BITS // self.segment_bits)

    @property
    def cell_count(self) -> int:
        return 1 << self.depth

    @property
    def max_prefix(self) -> int:
        return self.depth * self.segment_bits

    def segment(self, addr: int, index: int) -> int:
        """Value of 1-based segment ``index``, most significant first.

        Only the last segment can be narrower than ``segment_bits``
        (when the width does not divide 32); the walk never consumes it
        because depth never exceeds ``segment_count - 1``.
        """
        hi = ADDRESS_BITS - (index - 1) * self.segment_bits
        lo = max(hi - self.segment_bits, 0)
        return (addr >> lo) & ((1 << (hi - lo)) - 1)

    def hash_bit(self, addr: int, depth: int, seed: int) -> int:
        """2-value hash of the depth-th segment of ``addr``."""
        value = self.segment(addr, depth)
        if self.level_salt:
            value |= depth << ADDRESS_BITS
        return hash64(value, seed) & 1


def segment_address(addr: int, cfg: SegmentConfig) -> list[int]:
    """Split an address into its ordered segment values, MSB first."""
    if not 0 <= addr < (1 << ADDRESS_BITS):
        raise ValueError("address out of 32-bit range")
    return [cfg.segment(addr, i) for i in range(1, cfg.segment_count + 1)]


def host_suffix(addr: int, prefix_bits: int) -> int:
    """The low ``32 - prefix_bits`` bits of an address.

    ``prefix_bits == 0`` returns the whole address and 32 returns 0
    (empty suffix).
    """
    if not 0 <= prefix_bits <= ADDRESS_BITS:
        raise ValueError("prefix length out of range")
    if prefix_bits == 0:
        return addr
    return addr & ((1 << (ADDRESS_BITS - prefix_bits)) - 1)


@dataclass
class SubnetBitmap:
    """The ``2**depth``-cell bit array holding the segment-hash search tree.

    Cells only transition 0 -> 1 between resets, so the derived prefix
    length can only tighten (decrease) as addresses are inserted.
    """

    config: SegmentConfig
    seed: int = 0
    _bits: int = field(default=0, repr=False)
    set_count: int = 0

    def _any_set(self, lo: int, hi: int) -> bool:
        mask = ((1 << (hi - lo)) - 1) << lo
        return bool(self._bits & mask)

    def _set_cell(self, idx: int) -> None:
        mask = 1 << idx
        if not self._bits & mask:
            self._bits |= mask
            self.set_count += 1

    def insert(self, addr: int) -> int:
        """Walk the address into the bitmap; return the stop depth.

        Returns ``d`` in ``[1, depth]`` when the address diverged from
        previously seen addresses at segment ``d`` (the sibling half at
        that depth was already occupied), or ``depth + 1`` when the walk
        reached a leaf without meeting any occupied sibling. In both
        cases exactly one cell along the walked path is set.
        """
        cfg = self.config
        lo, hi = 0, cfg.cell_count
        for d in range(1, cfg.depth + 1):
            mid = (lo + hi) // 2
            if cfg.hash_bit(addr, d, self.seed):
                own_lo, own_hi, sib_lo, sib_hi = mid, hi, lo, mid
            else:
                own_lo, own_hi, sib_lo, sib_hi = lo, mid, mid, hi
            if self._any_set(sib_lo, sib_hi):
                self._set_cell(own_lo)
                return d
            lo, hi = own_lo, own_hi
        self._set_cell(lo)
        return cfg.depth + 1

    def derive_prefix(self) -> int:
        """Lower bound of the peers' common prefix length, in bits.

        Walks the occupied path from the root: the first depth where
        both halves contain set cells ends the shared path, and a clean
        single-cell leaf means no divergence was ever observed, giving
        the maximum representable length ``depth * segment_bits``.
        """
        if self._bits == 0:
            raise EmptyBitmapError("subnet bitmap has no set cells")
        cfg = self.config
        lo, hi = 0, cfg.cell_count
        for d in range(1, cfg.depth + 1):
            mid = (lo + hi) // 2
            left = self._any_set(lo, mid)
            right = self._any_set(mid, hi)
            if left and right:
                return (d - 1) * cfg.segment_bits
            # Cells are only placed on walked paths, so a region with a
            # set cell always has at least one occupied half.
            assert left or right, "set cell vanished below an occupied region"
            lo, hi = (lo, mid) if left else (mid, hi)
        return cfg.max_prefix

    def cells(self) -> list[int]:
        return [(self._bits >> i) & 1 for i in range(self.config.cell_count)]

    def as_int(self) -> int:
        return self._bits

    def load_int(self, bits: int) -> None:
        if bits < 0 or bits >> self.config.cell_count:
            raise ValueError("bit field does not fit this bitmap")
        self._bits = bits
        self.set_count = bin(bits).count("1")

    def reset(self) -> None:
        self._bits = 0
        self.set_count = 0
