"""Synthetic trace generation and trace file IO.

The generator builds an address-pair stream from three host
populations: ordinary benign hosts with a handful of peers, "diverse
benign" hosts that legitimately talk to many peers scattered across
the whole address space (the false-positive bait), and attackers whose
peers are confined to one subnet of a chosen prefix length. Ground
truth (role, true prefix length, subnet cardinality, total cardinality)
is recorded per host at generation time, and every distinct pair is
repeated ``duplication`` times before a seeded shuffle, so detectors
must be duplicate-insensitive.

Trace files are two-column CSV (``src,dst``), dotted quads or unsigned
32-bit decimals, optional header. The ground-truth sidecar is a CSV
with one row per labeled host:
``address,role,prefix_len,subnet_cardinality,total_cardinality``.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field, replace
from typing import Iterable, Iterator, NamedTuple

import numpy as np

BENIGN = "benign"
SPREADER_ROLE = "spreader"
RECEIVER_ROLE = "receiver"


class InvalidSpecError(ValueError):
    pass


class TraceParseError(ValueError):
    def __init__(self, line_number: int, message: str) -> None:
        super().__init__(f"line {line_number}: {message}")
        self.line_number = line_number


class PacketRecord(NamedTuple):
    src: int
    dst: int


@dataclass(frozen=True)
class HostTruth:
    address: int
    role: str
    prefix_len: int
    subnet_cardinality: int
    total_cardinality: int


@dataclass
class GroundTruth:
    hosts: dict[int, HostTruth] = field(default_factory=dict)

    def add(self, rec: HostTruth) -> None:
        if rec.address in self.hosts:
            raise InvalidSpecError(f"host {rec.address:#010x} labeled twice")
        self.hosts[rec.address] = rec

    def positives(self, role: str) -> set[int]:
        return {a for a, rec in self.hosts.items() if rec.role == role}

    def __len__(self) -> int:
        return len(self.hosts)


@dataclass
class Trace:
    """A packet stream as parallel src/dst arrays."""

    srcs: np.ndarray
    dsts: np.ndarray

    def __post_init__(self) -> None:
        self.srcs = np.ascontiguousarray(self.srcs, dtype=np.uint32)
        self.dsts = np.ascontiguousarray(self.dsts, dtype=np.uint32)
        if self.srcs.shape != self.dsts.shape:
            raise ValueError("src and dst arrays differ in length")

    def __len__(self) -> int:
        return int(self.srcs.size)

    def records(self) -> Iterator[PacketRecord]:
        for s, d in zip(self.srcs.tolist(), self.dsts.tolist()):
            yield PacketRecord(s, d)

    def swapped(self) -> "Trace":
        """The same stream with source and destination exchanged."""
        return Trace(srcs=self.dsts.copy(), dsts=self.srcs.copy())


@dataclass(frozen=True)
class GeneratorSpec:
    """Parameters of one synthetic workload.

    ``attacker_prefix_lengths`` assigns a subnet prefix length to each
    attacker (cycled if shorter than ``attacker_count``); subnet
    cardinalities are drawn uniformly from the inclusive range.
    """

    benign_host_count: int = 1650
    benign_peer_range: tuple[int, int] = (1, 30)
    diverse_benign_count: int = 20
    diverse_benign_peers: int = 1000
    attacker_count: int = 50
    attacker_prefix_lengths: tuple[int, ...] = (24,)
    attacker_subnet_cardinality: tuple[int, int] = (200, 250)
    duplication: int = 4
    seed: int = 0

    def __post_init__(self) -> None:
        if min(self.benign_host_count, self.diverse_benign_count, self.attacker_count) < 0:
            raise InvalidSpecError("host counts cannot be negative")
        if self.benign_host_count and not (
            1 <= self.benign_peer_range[0] <= self.benign_peer_range[1]
        ):
            raise InvalidSpecError("benign peer range must satisfy 1 <= lo <= hi")
        if self.diverse_benign_count and self.diverse_benign_peers < 1:
            raise InvalidSpecError("diverse benign hosts need at least one peer")
        if self.duplication < 1:
            raise InvalidSpecError("duplication factor must be >= 1")
        if self.attacker_count:
            if not self.attacker_prefix_lengths:
                raise InvalidSpecError("attackers need at least one prefix length")
            lo, hi = self.attacker_subnet_cardinality
            if not 1 <= lo <= hi:
                raise InvalidSpecError("attacker cardinality range must satisfy 1 <= lo <= hi")
            for p in self.attacker_prefix_lengths:
                if p not in (8, 16, 24):
                    raise InvalidSpecError(f"attacker prefix length {p} not in (8, 16, 24)")
                if hi > 1 << (32 - p):
                    raise InvalidSpecError(
                        f"cardinality {hi} exceeds a /{p} subnet's {1 << (32 - p)} addresses"
                    )

    @property
    def host_count(self) -> int:
        return self.benign_host_count + self.diverse_benign_count + self.attacker_count


def standard_spec(seed: int = 0, super_ratio: int = 33) -> GeneratorSpec:
    """The default evaluation workload at a given benign:attacker ratio.

    50 attackers each scanning most of one /24 (200-250 distinct
    in-subnet peers, comfortably above the theta=0.5 threshold of 128),
    ``super_ratio`` plain benign hosts per attacker, plus 20 diverse
    benign hosts with 1000 network-wide peers each. Four packets per
    distinct pair give evicted hosts a realistic chance to re-enter.
    """
    return GeneratorSpec(benign_host_count=50 * super_ratio, seed=seed)


def _sample_distinct(rng: np.random.Generator, space: int, count: int) -> np.ndarray:
    """``count`` distinct uniform values from ``range(space)``."""
    if count > space:
        raise InvalidSpecError("more distinct values requested than the space holds")
    if space <= (1 << 18) or count * 4 >= space:
        return rng.permutation(space)[:count].astype(np.uint64)
    out = np.empty(0, dtype=np.uint64)
    while out.size < count:
        cand = rng.integers(0, space, size=2 * count, dtype=np.uint64)
        out = np.unique(np.concatenate([out, cand]))
    rng.shuffle(out)
    return out[:count]


def generate(spec: GeneratorSpec) -> tuple[Trace, GroundTruth]:
    """Build a spreader-oriented trace and its exact ground truth.

    Deterministic in ``spec`` (including the seed): identical specs
    produce byte-identical traces and truth tables.
    """
    rng = np.random.default_rng(spec.seed)
    hosts = _sample_distinct(rng, 1 << 32, spec.host_count)
    attacker_hosts = hosts[: spec.attacker_count]
    diverse_hosts = hosts[spec.attacker_count : spec.attacker_count + spec.diverse_benign_count]
    benign_hosts = hosts[spec.attacker_count + spec.diverse_benign_count :]

    truth = GroundTruth()
    src_parts: list[np.ndarray] = []
    dst_parts: list[np.ndarray] = []

    def contact(host: int, peers: np.ndarray) -> None:
        src_parts.append(np.full(peers.size, host, dtype=np.uint32))
        dst_parts.append(peers.astype(np.uint32))

    for i, host in enumerate(attacker_hosts.tolist()):
        prefix_len = spec.attacker_prefix_lengths[i % len(spec.attacker_prefix_lengths)]
        lo, hi = spec.attacker_subnet_cardinality
        cardinality = int(rng.integers(lo, hi + 1))
        base = int(rng.integers(0, 1 << prefix_len))
        suffixes = _sample_distinct(rng, 1 << (32 - prefix_len), cardinality)
        peers = (np.uint64(base << (32 - prefix_len)) | suffixes).astype(np.uint32)
        contact(host, peers)
        truth.add(
            HostTruth(
                address=host,
                role=SPREADER_ROLE,
                prefix_len=prefix_len,
                subnet_cardinality=cardinality,
                total_cardinality=cardinality,
            )
        )

    for host in diverse_hosts.tolist():
        peers = _sample_distinct(rng, 1 << 32, spec.diverse_benign_peers)
        contact(host, peers)
        truth.add(
            HostTruth(
                address=host,
                role=BENIGN,
                prefix_len=0,
                subnet_cardinality=spec.diverse_benign_peers,
                total_cardinality=spec.diverse_benign_peers,
            )
        )

    lo, hi = spec.benign_peer_range
    for host in benign_hosts.tolist():
        n = int(rng.integers(lo, hi + 1))
        peers = _sample_distinct(rng, 1 << 32, n)
        contact(host, peers)
        truth.add(
            HostTruth(
                address=host,
                role=BENIGN,
                prefix_len=0,
                subnet_cardinality=n,
                total_cardinality=n,
            )
        )

    if src_parts:
        srcs = np.tile(np.concatenate(src_parts), spec.duplication)
        dsts = np.tile(np.concatenate(dst_parts), spec.duplication)
    else:
        srcs = np.empty(0, dtype=np.uint32)
        dsts = np.empty(0, dtype=np.uint32)
    order = rng.permutation(srcs.size)
    return Trace(srcs=srcs[order], dsts=dsts[order]), truth


def receiver_view(trace: Trace, truth: GroundTruth) -> tuple[Trace, GroundTruth]:
    """The receiver-mode version of a spreader workload: src/dst swapped
    and spreader labels turned into receiver labels."""
    swapped_truth = GroundTruth()
    for rec in truth.hosts.values():
        role = RECEIVER_ROLE if rec.role == SPREADER_ROLE else rec.role
        swapped_truth.add(replace(rec, role=role))
    return trace.swapped(), swapped_truth


# -- address and file formats --


def parse_address(text: str) -> int:
    """Dotted quad or unsigned 32-bit decimal to an integer address."""
    text = text.strip()
    if "." in text:
        parts = text.split(".")
        if len(parts) != 4:
            raise ValueError(f"bad dotted quad {text!r}")
        value = 0
        for part in parts:
            octet = int(part)
            if not 0 <= octet <= 255:
                raise ValueError(f"octet {part} out of range in {text!r}")
            value = (value << 8) | octet
        return value
    value = int(text)
    if not 0 <= value < 1 << 32:
        raise ValueError(f"address {text!r} out of 32-bit range")
    return value


def format_address(addr: int) -> str:
    return ".".join(str((addr >> s) & 0xFF) for s in (24, 16, 8, 0))


def read_trace(path: str) -> Iterator[PacketRecord]:
    """Stream records from a trace CSV, tolerating an optional header."""
    with open(path, "r", encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            if line_no == 1 and line.lower().replace(" ", "") in ("src,dst", "source,destination"):
                continue
            parts = line.split(",")
            if len(parts) != 2:
                raise TraceParseError(line_no, f"expected 'src,dst', got {line!r}")
            try:
                yield PacketRecord(parse_address(parts[0]), parse_address(parts[1]))
            except ValueError as exc:
                raise TraceParseError(line_no, str(exc)) from exc


def load_trace(path: str) -> Trace:
    """Read a whole trace file into arrays (chunked, bounded overhead)."""
    chunks_s: list[np.ndarray] = []
    chunks_d: list[np.ndarray] = []
    buf_s: list[int] = []
    buf_d: list[int] = []
    for rec in read_trace(path):
        buf_s.append(rec.src)
        buf_d.append(rec.dst)
        if len(buf_s) >= 1 << 16:
            chunks_s.append(np.array(buf_s, dtype=np.uint32))
            chunks_d.append(np.array(buf_d, dtype=np.uint32))
            buf_s.clear()
            buf_d.clear()
    chunks_s.append(np.array(buf_s, dtype=np.uint32))
    chunks_d.append(np.array(buf_d, dtype=np.uint32))
    return Trace(srcs=np.concatenate(chunks_s), dsts=np.concatenate(chunks_d))


def write_trace(path: str, records: Trace | Iterable[PacketRecord]) -> int:
    """Write a trace CSV (dotted quads, no header); returns record count."""
    if isinstance(records, Trace):
        records = records.records()
    count = 0
    with open(path, "w", encoding="utf-8") as fh:
        for rec in records:
            fh.write(f"{format_address(rec.src)},{format_address(rec.dst)}\n")
            count += 1
    return count


TRUTH_FIELDS = ("address", "role", "prefix_len", "subnet_cardinality", "total_cardinality")


def write_truth(path: str, truth: GroundTruth) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(TRUTH_FIELDS)
        for rec in truth.hosts.values():
            writer.writerow(
                [
                    format_address(rec.address),
                    rec.role,
                    rec.prefix_len,
                    rec.subnet_cardinality,
                    rec.total_cardinality,
                ]
            )


def read_truth(path: str) -> GroundTruth:
    truth = GroundTruth()
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or tuple(reader.fieldnames) != TRUTH_FIELDS:
            raise ValueError(f"unexpected truth header {reader.fieldnames} in {path}")
        for row in reader:
            truth.add(
                HostTruth(
                    address=parse_address(row["address"]),
                    role=row["role"],
                    prefix_len=int(row["prefix_len"]),
                    subnet_cardinality=int(row["subnet_cardinality"]),
                    total_cardinality=int(row["total_cardinality"]),
                )
            )
    return truth


def recompute_truth(trace: Trace, labeled: GroundTruth, host_role: str = SPREADER_ROLE) -> GroundTruth:
    """Brute-force (prefix_len, C, N) from a trace for every labeled host.

    Independent of the generator: peers are collected per host with a
    plain set pass; C is recomputed as the largest peer group sharing
    the labeled prefix length. Used to verify that generated sidecars
    are exact.
    """
    host_key = "src" if host_role == SPREADER_ROLE else "dst"
    peers: dict[int, set[int]] = {a: set() for a in labeled.hosts}
    for rec in trace.records():
        host = getattr(rec, host_key)
        peer = rec.dst if host_key == "src" else rec.src
        if host in peers:
            peers[host].add(peer)
    out = GroundTruth()
    for addr, rec in labeled.hosts.items():
        n = len(peers[addr])
        if rec.prefix_len == 0:
            c = n
        else:
            groups: dict[int, int] = {}
            for p in peers[addr]:
                key = p >> (32 - rec.prefix_len)
                groups[key] = groups.get(key, 0) + 1
            c = max(groups.values(), default=0)
        out.add(replace(rec, subnet_cardinality=c, total_cardinality=n))
    return out
