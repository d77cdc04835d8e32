"""The bucketed subnet-cardinality sketch.

State is an ``rows x columns`` grid of buckets, each holding a host
key, a subnet bitmap for prefix inference, and a host bitmap for Linear
Counting over peer suffixes. A packet's host hashes to one bucket per
row; updates fall into three cases:

1. The host already owns one of its hashed buckets: walk the peer into
   the subnet bitmap, derive the current prefix lower bound, and hash
   the peer's suffix under that bound into the host bitmap.
2. The host is absent and a hashed bucket is empty: claim the lowest
   empty row. The first peer is hashed in full, since no prefix can be
   inferred from one address.
3. All hashed buckets are taken: the bucket with the smallest estimate
   is replaced with probability ``1 / (estimate + 1)``, so entrenched
   high-cardinality residents are nearly immovable while fresh hosts
   that keep sending eventually win a slot. Replacement clears both
   bitmaps by default: the old host's prefix walk would poison
   inference for the new one, and inherited host-bitmap cells combined
   with a freshly restarted (hence deep) prefix turn small hosts into
   false positives. ``clear_host_on_replace=False`` preserves the host
   bitmap across replacements instead.

At epoch end, every occupied bucket is reported whose estimate exceeds
``theta * 2**(32 - p)`` for its inferred prefix length ``p``, a
threshold that scales with the address capacity of the inferred subnet.

Bucket state lives in flat numpy arrays rather than per-bucket objects
so the batch update path can run as a compiled kernel (see
``_kernels``); the methods here are the plain-Python reference that the
kernel must match bit for bit.
"""

from __future__ import annotations

import io
import json
import math
from dataclasses import dataclass, field
from enum import IntEnum
from typing import NamedTuple

import numpy as np

from .estimators import Bitmap
from .hashing import MASK64, SeededUniform, derive_seed, hash64
from .prefix import ADDRESS_BITS, SegmentConfig, SubnetBitmap, host_suffix

SPREADER = "spreader"
RECEIVER = "receiver"

HOST_KEY_BYTES = 4


class UpdateOutcome(IntEnum):
    """Result of feeding one packet to a sketch."""

    EXISTING = 0
    INSERTED_EMPTY = 1
    REPLACED = 2
    DROPPED = 3


class QueryResult(NamedTuple):
    estimate: float
    prefix_bits: int


@dataclass(frozen=True)
class DetectionEntry:
    """One reported super host: estimate exceeded its scaled threshold."""

    host: int
    prefix_bits: int
    estimate: float
    threshold: float
    row: int
    col: int


def replacement_probability(estimate: float) -> float:
    """Probability that a new host evicts a resident with this estimate."""
    if estimate < 0:
        raise ValueError("estimate cannot be negative")
    return 1.0 / (estimate + 1.0)


def detection_threshold(prefix_bits: int, theta: float) -> float:
    """Report threshold ``theta * 2**(32 - p)`` for inferred prefix ``p``.

    The quantity ``2**(32 - p)`` is the address capacity of the
    inferred subnet, so a host must contact a ``theta`` fraction of its
    subnet to be reported, however long the prefix turned out to be.
    """
    if not 0 <= prefix_bits <= ADDRESS_BITS:
        raise ValueError("prefix length out of range")
    if not 0.0 < theta <= 1.0:
        raise ValueError("theta must be in (0, 1]")
    return theta * float(1 << (ADDRESS_BITS - prefix_bits))


def _lc_from_count(size_bits: int, set_count: int) -> float:
    zeros = size_bits - set_count
    if zeros <= 0:
        zeros = 1
    return size_bits * math.log(size_bits / zeros)


@dataclass(frozen=True)
class SketchConfig:
    """Geometry, thresholds, and seeding for one sketch instance.

    The column count is derived from the memory budget: each bucket
    costs 4 key bytes plus the two bitmaps, and columns is the largest
    count whose total allocation fits. Budgets too small for a single
    column are rejected.
    """

    memory_budget_bytes: int
    rows: int = 3
    host_bitmap_bits: int = 4096
    segments: SegmentConfig = field(default_factory=SegmentConfig)
    theta: float = 0.5
    direction: str = SPREADER
    clear_host_on_replace: bool = True
    seed: int = 0

    def __post_init__(self) -> None:
        if self.rows < 1:
            raise ValueError("need at least one row")
        if self.host_bitmap_bits < 64 or self.host_bitmap_bits % 64 != 0:
            raise ValueError("host bitmap bits must be a positive multiple of 64")
        if not 0.0 < self.theta <= 1.0:
            raise ValueError("theta must be in (0, 1]")
        if self.direction not in (SPREADER, RECEIVER):
            raise ValueError(f"direction must be {SPREADER!r} or {RECEIVER!r}")
        if self.columns < 1:
            raise ValueError(
                f"budget of {self.memory_budget_bytes} bytes cannot fit one bucket "
                f"({self.bucket_bits / 8:.0f} bytes) per row"
            )

    @property
    def bucket_bits(self) -> int:
        return 8 * HOST_KEY_BYTES + self.segments.cell_count + self.host_bitmap_bits

    @property
    def columns(self) -> int:
        return (self.memory_budget_bytes * 8) // (self.rows * self.bucket_bits)

    @property
    def allocated_bytes(self) -> float:
        return self.rows * self.columns * self.bucket_bits / 8

    def row_seed(self, row: int) -> int:
        return derive_seed(self.seed, f"row-{row}")

    @property
    def subnet_seed(self) -> int:
        return derive_seed(self.seed, "subnet")

    @property
    def host_seed(self) -> int:
        return derive_seed(self.seed, "host")

    @property
    def replace_seed(self) -> int:
        return derive_seed(self.seed, "replace")


class SegSketch:
    """Streaming super-host detector over source/destination pairs."""

    def __init__(self, config: SketchConfig) -> None:
        self.config = config
        cfg = config
        r, c = cfg.rows, cfg.columns
        self._subnet_words = max(1, (cfg.segments.cell_count + 63) // 64)
        self._host_words = cfg.host_bitmap_bits // 64
        self.keys = np.zeros((r, c), dtype=np.uint32)
        self.occupied = np.zeros((r, c), dtype=np.uint8)
        self.subnet_bits = np.zeros((r, c, self._subnet_words), dtype=np.uint64)
        self.host_bits = np.zeros((r, c, self._host_words), dtype=np.uint64)
        self.host_set_count = np.zeros((r, c), dtype=np.int64)
        self.rng_state = np.array([cfg.replace_seed & MASK64], dtype=np.uint64)
        self._row_seeds = np.array([cfg.row_seed(i) for i in range(r)], dtype=np.uint64)

    # -- word-array bitmap helpers (reference semantics for the kernel) --

    def _subnet_any(self, row: int, col: int, lo: int, hi: int) -> bool:
        words = self.subnet_bits[row, col]
        for w in range(lo >> 6, ((hi - 1) >> 6) + 1):
            w_lo = max(lo - (w << 6), 0)
            w_hi = min(hi - (w << 6), 64)
            mask = ((1 << (w_hi - w_lo)) - 1) << w_lo
            if int(words[w]) & mask:
                return True
        return False

    def _subnet_set(self, row: int, col: int, idx: int) -> None:
        self.subnet_bits[row, col, idx >> 6] |= np.uint64(1 << (idx & 63))

    def _subnet_insert(self, row: int, col: int, peer: int) -> int:
        seg = self.config.segments
        lo, hi = 0, seg.cell_count
        for d in range(1, seg.depth + 1):
            mid = (lo + hi) // 2
            if seg.hash_bit(peer, d, self.config.subnet_seed):
                own_lo, own_hi, sib_lo, sib_hi = mid, hi, lo, mid
            else:
                own_lo, own_hi, sib_lo, sib_hi = lo, mid, mid, hi
            if self._subnet_any(row, col, sib_lo, sib_hi):
                self._subnet_set(row, col, own_lo)
                return d
            lo, hi = own_lo, own_hi
        self._subnet_set(row, col, lo)
        return seg.depth + 1

    def _derive_prefix(self, row: int, col: int) -> int:
        seg = self.config.segments
        lo, hi = 0, seg.cell_count
        for d in range(1, seg.depth + 1):
            mid = (lo + hi) // 2
            left = self._subnet_any(row, col, lo, mid)
            right = self._subnet_any(row, col, mid, hi)
            if left and right:
                return (d - 1) * seg.segment_bits
            lo, hi = (lo, mid) if left else (mid, hi)
        return seg.max_prefix

    def _host_insert(self, row: int, col: int, value: int) -> None:
        idx = hash64(value, self.config.host_seed) % self.config.host_bitmap_bits
        word, bit = idx >> 6, np.uint64(1 << (idx & 63))
        if not self.host_bits[row, col, word] & bit:
            self.host_bits[row, col, word] |= bit
            self.host_set_count[row, col] += 1

    def _host_estimate(self, row: int, col: int) -> float:
        return _lc_from_count(self.config.host_bitmap_bits, int(self.host_set_count[row, col]))

    def _next_uniform(self) -> float:
        gen = SeededUniform(int(self.rng_state[0]))
        u = gen.next_float()
        self.rng_state[0] = gen.state
        return u

    # -- public API --

    @property
    def allocated_bytes(self) -> float:
        return self.config.allocated_bytes

    def host_peer(self, src: int, dst: int) -> tuple[int, int]:
        """Map a packet to its (host key, peer) under the configured direction."""
        return (src, dst) if self.config.direction == SPREADER else (dst, src)

    def _hashed_cols(self, host: int) -> list[int]:
        c = self.config.columns
        return [hash64(host, int(s)) % c for s in self._row_seeds]

    def update(self, src: int, dst: int) -> UpdateOutcome:
        """Feed one packet through the three-case update procedure."""
        host, peer = self.host_peer(src, dst)
        cols = self._hashed_cols(host)

        for row, col in enumerate(cols):
            if self.occupied[row, col] and int(self.keys[row, col]) == host:
                self._subnet_insert(row, col, peer)
                prefix = self._derive_prefix(row, col)
                self._host_insert(row, col, host_suffix(peer, prefix))
                return UpdateOutcome.EXISTING

        for row, col in enumerate(cols):
            if not self.occupied[row, col]:
                self.occupied[row, col] = 1
                self.keys[row, col] = host
                self._subnet_insert(row, col, peer)
                self._host_insert(row, col, peer)
                return UpdateOutcome.INSERTED_EMPTY

        best_row, best_est = 0, math.inf
        for row, col in enumerate(cols):
            est = self._host_estimate(row, col)
            if est < best_est:
                best_row, best_est = row, est
        if self._next_uniform() < replacement_probability(best_est):
            col = cols[best_row]
            self.keys[best_row, col] = host
            self.subnet_bits[best_row, col, :] = 0
            if self.config.clear_host_on_replace:
                self.host_bits[best_row, col, :] = 0
                self.host_set_count[best_row, col] = 0
            self._subnet_insert(best_row, col, peer)
            self._host_insert(best_row, col, peer)
            return UpdateOutcome.REPLACED
        return UpdateOutcome.DROPPED

    def update_batch(self, srcs: np.ndarray, dsts: np.ndarray) -> np.ndarray:
        """Feed a whole trace through the compiled update kernel.

        Produces exactly the same end state and outcome sequence as
        calling :meth:`update` per record.
        """
        from . import _kernels

        srcs = np.ascontiguousarray(srcs, dtype=np.uint32)
        dsts = np.ascontiguousarray(dsts, dtype=np.uint32)
        if srcs.shape != dsts.shape:
            raise ValueError("source and destination arrays differ in length")
        outcomes = np.empty(srcs.size, dtype=np.uint8)
        seg = self.config.segments
        _kernels.update_batch(
            srcs,
            dsts,
            self.keys,
            self.occupied,
            self.subnet_bits,
            self.host_bits,
            self.host_set_count,
            self.rng_state,
            self._row_seeds,
            np.uint64(self.config.subnet_seed),
            np.uint64(self.config.host_seed),
            seg.depth,
            seg.segment_bits,
            1 if seg.level_salt else 0,
            seg.cell_count,
            self.config.host_bitmap_bits,
            1 if self.config.direction == RECEIVER else 0,
            1 if self.config.clear_host_on_replace else 0,
            outcomes,
        )
        return outcomes

    def query(self, host: int) -> QueryResult | None:
        """Estimate and inferred prefix for a tracked host, else ``None``."""
        for row, col in enumerate(self._hashed_cols(host)):
            if self.occupied[row, col] and int(self.keys[row, col]) == host:
                return QueryResult(
                    estimate=self._host_estimate(row, col),
                    prefix_bits=self._derive_prefix(row, col),
                )
        return None

    def detect(self, theta: float | None = None) -> list[DetectionEntry]:
        """Sweep all buckets and report hosts above their scaled threshold.

        Read-only; the sweep does not modify sketch state, so it can be
        repeated with different ``theta`` values on the same epoch.
        """
        theta = self.config.theta if theta is None else theta
        report: list[DetectionEntry] = []
        for row in range(self.config.rows):
            for col in range(self.config.columns):
                if not self.occupied[row, col]:
                    continue
                prefix = self._derive_prefix(row, col)
                estimate = self._host_estimate(row, col)
                threshold = detection_threshold(prefix, theta)
                if estimate > threshold:
                    report.append(
                        DetectionEntry(
                            host=int(self.keys[row, col]),
                            prefix_bits=prefix,
                            estimate=estimate,
                            threshold=threshold,
                            row=row,
                            col=col,
                        )
                    )
        return report

    def reset_epoch(self) -> None:
        """Clear all buckets; configuration and seed streams are preserved."""
        self.keys[:] = 0
        self.occupied[:] = 0
        self.subnet_bits[:] = 0
        self.host_bits[:] = 0
        self.host_set_count[:] = 0
        self.rng_state[0] = np.uint64(self.config.replace_seed & MASK64)

    # Detector-interface spelling of the epoch reset.
    reset = reset_epoch

    # -- inspection and serialisation --

    def bucket_view(self, row: int, col: int) -> tuple[int | None, SubnetBitmap, Bitmap]:
        """Materialise one bucket as value objects (for tests/inspection)."""
        subnet = SubnetBitmap(self.config.segments, self.config.subnet_seed)
        subnet.load_int(int.from_bytes(self.subnet_bits[row, col].tobytes(), "little"))
        host_bm = Bitmap(self.config.host_bitmap_bits, self.config.host_seed)
        host_bm.load_int(int.from_bytes(self.host_bits[row, col].tobytes(), "little"))
        key = int(self.keys[row, col]) if self.occupied[row, col] else None
        return key, subnet, host_bm

    def save(self, path: str) -> None:
        """Snapshot config and raw bucket state to an ``.npz`` container."""
        seg = self.config.segments
        config = {
            "memory_budget_bytes": self.config.memory_budget_bytes,
            "rows": self.config.rows,
            "host_bitmap_bits": self.config.host_bitmap_bits,
            "theta": self.config.theta,
            "direction": self.config.direction,
            "clear_host_on_replace": self.config.clear_host_on_replace,
            "seed": self.config.seed,
            "segment_bits": seg.segment_bits,
            "depth": seg.depth,
            "max_depth": seg.max_depth,
            "level_salt": seg.level_salt,
        }
        with open(path, "wb") as fh:
            np.savez(
                fh,
                config=np.frombuffer(json.dumps(config).encode("utf-8"), dtype=np.uint8),
                keys=self.keys,
                occupied=self.occupied,
                subnet_bits=self.subnet_bits,
                host_bits=self.host_bits,
                host_set_count=self.host_set_count,
                rng_state=self.rng_state,
            )

    @classmethod
    def load(cls, path: str) -> "SegSketch":
        with open(path, "rb") as fh:
            data = np.load(io.BytesIO(fh.read()))
        raw = json.loads(bytes(data["config"]).decode("utf-8"))
        segments = SegmentConfig(
            segment_bits=raw.pop("segment_bits"),
            depth=raw.pop("depth"),
            max_depth=raw.pop("max_depth"),
            level_salt=raw.pop("level_salt"),
        )
        sketch = cls(SketchConfig(segments=segments, **raw))
        sketch.keys[:] = data["keys"]
        sketch.occupied[:] = data["occupied"]
        sketch.subnet_bits[:] = data["subnet_bits"]
        sketch.host_bits[:] = data["host_bits"]
        sketch.host_set_count[:] = data["host_set_count"]
        sketch.rng_state[:] = data["rng_state"]
        return sketch
