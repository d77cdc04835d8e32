"""Comparison detectors for the evaluation harness.

Three deliberately weaker designs that the subnet-aware sketch is
measured against:

* ``FullAddressSketch``: the same bucket grid minus the subnet bitmap.
  It estimates plain flow cardinality over full peer addresses and
  reports against a flat cutoff, so a host scanning one subnet and a
  benign host talking to the whole network are indistinguishable. That
  failure mode is the point of keeping it around.
* ``SpreadSketchLite``: buckets hold a candidate key, a multi-scale
  bitmap updated by every packet, and the running maximum leading-zero
  count of the packet hash, which decides candidate replacement.
* ``HierarchicalLC``: one associative Linear Counting table per prefix
  length in {8, 16, 24, 32}; catches subnet structure in principle but
  splits its memory four ways and drowns in per-entry overhead.

All detectors share the sketch's memory accounting convention (bucket
cost = key bytes + payload bits / 8 against a byte budget) so budget
sweeps compare like with like, and all expose the same
``update / detect / reset`` surface the harness consumes. Update paths
here are plain Python; none of them is the measured artifact.
"""

from __future__ import annotations

import heapq
from typing import NamedTuple

from .estimators import Bitmap, MultiScaleBitmap
from .hashing import SeededUniform, derive_seed, hash64, leading_zeros64
from .prefix import host_suffix
from .sketch import RECEIVER, SPREADER, UpdateOutcome, detection_threshold, replacement_probability


class Report(NamedTuple):
    """One reported host. ``prefix_bits`` is 0 for flat-cardinality
    detectors (the implied subnet is the whole address space)."""

    host: int
    estimate: float
    prefix_bits: int


def _grid_columns(budget_bytes: int, rows: int, bucket_bits: int) -> int:
    cols = (budget_bytes * 8) // (rows * bucket_bits)
    if cols < 1:
        raise ValueError(
            f"budget of {budget_bytes} bytes cannot fit one {bucket_bits / 8:.0f}-byte "
            f"bucket per row"
        )
    return cols


class FullAddressSketch:
    """Flow-cardinality ablation: key + host bitmap per bucket, flat cutoff."""

    def __init__(
        self,
        memory_budget_bytes: int,
        cutoff: float,
        rows: int = 3,
        host_bitmap_bits: int = 4096,
        direction: str = SPREADER,
        clear_host_on_replace: bool = True,
        seed: int = 0,
    ) -> None:
        if direction not in (SPREADER, RECEIVER):
            raise ValueError(f"direction must be {SPREADER!r} or {RECEIVER!r}")
        self.memory_budget_bytes = memory_budget_bytes
        self.cutoff = cutoff
        self.rows = rows
        self.host_bitmap_bits = host_bitmap_bits
        self.direction = direction
        self.clear_host_on_replace = clear_host_on_replace
        self.seed = seed
        self.bucket_bits = 32 + host_bitmap_bits
        self.columns = _grid_columns(memory_budget_bytes, rows, self.bucket_bits)
        self._row_seeds = [derive_seed(seed, f"fa-row-{i}") for i in range(rows)]
        self._bitmap_seed = derive_seed(seed, "fa-bitmap")
        self._rng = SeededUniform(derive_seed(seed, "fa-replace"))
        self._init_buckets()

    def _init_buckets(self) -> None:
        self.keys = [[0] * self.columns for _ in range(self.rows)]
        self.occupied = [[False] * self.columns for _ in range(self.rows)]
        self.bitmaps = [
            [Bitmap(self.host_bitmap_bits, self._bitmap_seed) for _ in range(self.columns)]
            for _ in range(self.rows)
        ]

    @property
    def allocated_bytes(self) -> float:
        return self.rows * self.columns * self.bucket_bits / 8

    def _host_peer(self, src: int, dst: int) -> tuple[int, int]:
        return (src, dst) if self.direction == SPREADER else (dst, src)

    def _cols(self, host: int) -> list[int]:
        return [hash64(host, s) % self.columns for s in self._row_seeds]

    def update(self, src: int, dst: int) -> UpdateOutcome:
        host, peer = self._host_peer(src, dst)
        cols = self._cols(host)
        for row, col in enumerate(cols):
            if self.occupied[row][col] and self.keys[row][col] == host:
                self.bitmaps[row][col].insert(peer)
                return UpdateOutcome.EXISTING
        for row, col in enumerate(cols):
            if not self.occupied[row][col]:
                self.occupied[row][col] = True
                self.keys[row][col] = host
                self.bitmaps[row][col].insert(peer)
                return UpdateOutcome.INSERTED_EMPTY
        best_row, best_est = 0, float("inf")
        for row, col in enumerate(cols):
            est = self.bitmaps[row][col].estimate()
            if est < best_est:
                best_row, best_est = row, est
        if self._rng.next_float() < replacement_probability(best_est):
            col = cols[best_row]
            self.keys[best_row][col] = host
            if self.clear_host_on_replace:
                self.bitmaps[best_row][col].reset()
            self.bitmaps[best_row][col].insert(peer)
            return UpdateOutcome.REPLACED
        return UpdateOutcome.DROPPED

    def query(self, host: int) -> float | None:
        for row, col in enumerate(self._cols(host)):
            if self.occupied[row][col] and self.keys[row][col] == host:
                return self.bitmaps[row][col].estimate()
        return None

    def detect(self, cutoff: float | None = None) -> list[Report]:
        cutoff = self.cutoff if cutoff is None else cutoff
        report = []
        for row in range(self.rows):
            for col in range(self.columns):
                if not self.occupied[row][col]:
                    continue
                est = self.bitmaps[row][col].estimate()
                if est > cutoff:
                    report.append(Report(host=self.keys[row][col], estimate=est, prefix_bits=0))
        return report

    def reset(self) -> None:
        self._init_buckets()
        self._rng = SeededUniform(derive_seed(self.seed, "fa-replace"))


class SpreadSketchLite:
    """Leading-zero candidate replacement over multi-scale bitmaps.

    Every packet updates the multi-scale bitmap of each hashed bucket;
    the stored candidate is replaced whenever the packet hash's
    leading-zero count reaches the bucket's running maximum. Rare long
    runs of zeros are produced by hosts with many distinct pairs, so
    buckets drift toward high-cardinality candidates.
    """

    def __init__(
        self,
        memory_budget_bytes: int,
        cutoff: float,
        rows: int = 3,
        level_count: int = 8,
        level_bits: int = 512,
        direction: str = SPREADER,
        seed: int = 0,
    ) -> None:
        if direction not in (SPREADER, RECEIVER):
            raise ValueError(f"direction must be {SPREADER!r} or {RECEIVER!r}")
        self.memory_budget_bytes = memory_budget_bytes
        self.cutoff = cutoff
        self.rows = rows
        self.level_count = level_count
        self.level_bits = level_bits
        self.direction = direction
        self.seed = seed
        # key + levels + one byte for the stored leading-zero maximum
        self.bucket_bits = 32 + level_count * level_bits + 8
        self.columns = _grid_columns(memory_budget_bytes, rows, self.bucket_bits)
        self._row_seeds = [derive_seed(seed, f"ss-row-{i}") for i in range(rows)]
        self._lz_seed = derive_seed(seed, "ss-lz")
        self._msb_seed = derive_seed(seed, "ss-msb")
        self._init_buckets()

    def _init_buckets(self) -> None:
        self.keys = [[0] * self.columns for _ in range(self.rows)]
        self.max_lz = [[-1] * self.columns for _ in range(self.rows)]
        self.bitmaps = [
            [
                MultiScaleBitmap(self.level_count, self.level_bits, self._msb_seed)
                for _ in range(self.columns)
            ]
            for _ in range(self.rows)
        ]

    @property
    def allocated_bytes(self) -> float:
        return self.rows * self.columns * self.bucket_bits / 8

    def _host_peer(self, src: int, dst: int) -> tuple[int, int]:
        return (src, dst) if self.direction == SPREADER else (dst, src)

    def update(self, src: int, dst: int) -> None:
        host, peer = self._host_peer(src, dst)
        pair = (host << 32) | peer
        lz = leading_zeros64(hash64(pair, self._lz_seed))
        for row, seed in enumerate(self._row_seeds):
            col = hash64(host, seed) % self.columns
            self.bitmaps[row][col].insert(pair)
            if lz >= self.max_lz[row][col]:
                self.max_lz[row][col] = lz
                self.keys[row][col] = host

    def query(self, host: int) -> float:
        """Min-query over the host's hashed buckets' estimates."""
        return min(
            self.bitmaps[row][hash64(host, seed) % self.columns].estimate()
            for row, seed in enumerate(self._row_seeds)
        )

    def detect(self, cutoff: float | None = None) -> list[Report]:
        cutoff = self.cutoff if cutoff is None else cutoff
        candidates = {
            self.keys[row][col]
            for row in range(self.rows)
            for col in range(self.columns)
            if self.max_lz[row][col] >= 0
        }
        report = []
        for host in sorted(candidates):
            est = self.query(host)
            if est > cutoff:
                report.append(Report(host=host, estimate=est, prefix_bits=0))
        return report

    def reset(self) -> None:
        self._init_buckets()


class _LayerTable:
    """One prefix layer: bounded (host, subnet) -> Bitmap map.

    Capacity overflow evicts the minimum-estimate entry. Set counts
    only grow, so a lazy min-heap of (count-at-push, entry) stays
    consistent: stale heap items are re-pushed with their current count
    when popped.
    """

    def __init__(self, prefix_len: int, capacity: int, bitmap_bits: int, seed: int) -> None:
        self.prefix_len = prefix_len
        self.capacity = capacity
        self.bitmap_bits = bitmap_bits
        self.seed = seed
        self.entries: dict[tuple[int, int], Bitmap] = {}
        self._heap: list[tuple[int, int, tuple[int, int]]] = []
        self._age = 0
        self.evictions = 0

    def _evict_min(self) -> None:
        while True:
            count, _, key = heapq.heappop(self._heap)
            bm = self.entries.get(key)
            if bm is None:
                continue  # already evicted
            if bm.set_count != count:
                self._age += 1
                heapq.heappush(self._heap, (bm.set_count, self._age, key))
                continue
            del self.entries[key]
            self.evictions += 1
            return

    def insert(self, host: int, subnet: int, suffix: int) -> None:
        key = (host, subnet)
        bm = self.entries.get(key)
        if bm is None:
            if len(self.entries) >= self.capacity:
                self._evict_min()
            bm = Bitmap(self.bitmap_bits, self.seed)
            self.entries[key] = bm
            self._age += 1
            heapq.heappush(self._heap, (0, self._age, key))
        bm.insert(suffix)

    def reset(self) -> None:
        self.entries.clear()
        self._heap.clear()
        self._age = 0
        self.evictions = 0


class HierarchicalLC:
    """Per-prefix-length Linear Counting tables in the hierarchical style.

    The memory budget is split evenly over the layers; each layer keys
    entries by (host, peer subnet of its prefix length) and counts
    distinct peer suffixes inside that subnet. Detection reports hosts
    whose entry estimate exceeds the scaled threshold of its layer,
    keeping only the longest qualifying prefix per host.
    """

    LAYERS = (8, 16, 24, 32)

    def __init__(
        self,
        memory_budget_bytes: int,
        theta: float = 0.5,
        entry_bitmap_bits: int = 256,
        direction: str = SPREADER,
        seed: int = 0,
    ) -> None:
        if direction not in (SPREADER, RECEIVER):
            raise ValueError(f"direction must be {SPREADER!r} or {RECEIVER!r}")
        if not 0.0 < theta <= 1.0:
            raise ValueError("theta must be in (0, 1]")
        self.memory_budget_bytes = memory_budget_bytes
        self.theta = theta
        self.entry_bitmap_bits = entry_bitmap_bits
        self.direction = direction
        self.seed = seed
        layer_budget = memory_budget_bytes // len(self.LAYERS)
        self.layers: dict[int, _LayerTable] = {}
        for p in self.LAYERS:
            entry_bits = 32 + p + entry_bitmap_bits
            capacity = (layer_budget * 8) // entry_bits
            if capacity < 1:
                raise ValueError(f"budget too small for layer /{p}")
            self.layers[p] = _LayerTable(
                p, capacity, entry_bitmap_bits, derive_seed(seed, f"hl-{p}")
            )

    @property
    def allocated_bytes(self) -> float:
        return sum(
            t.capacity * (32 + p + self.entry_bitmap_bits) / 8 for p, t in self.layers.items()
        )

    def _host_peer(self, src: int, dst: int) -> tuple[int, int]:
        return (src, dst) if self.direction == SPREADER else (dst, src)

    def update(self, src: int, dst: int) -> None:
        host, peer = self._host_peer(src, dst)
        for p, table in self.layers.items():
            subnet = peer >> (32 - p) if p < 32 else peer
            table.insert(host, subnet, host_suffix(peer, p))

    def detect(self, theta: float | None = None) -> list[Report]:
        theta = self.theta if theta is None else theta
        best: dict[int, Report] = {}
        for p in sorted(self.LAYERS):  # longest qualifying layer wins
            threshold = detection_threshold(p, theta)
            strongest: dict[int, float] = {}
            for (host, _), bm in self.layers[p].entries.items():
                est = bm.estimate()
                if est > threshold and est > strongest.get(host, -1.0):
                    strongest[host] = est
            for host, est in strongest.items():
                best[host] = Report(host=host, estimate=est, prefix_bits=p)
        return sorted(best.values())

    def reset(self) -> None:
        for table in self.layers.values():
            table.reset()
