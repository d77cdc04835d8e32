"""Closed-form error model for subnet cardinality estimation.

Quantifies how much worse it is to hash entire peer addresses into a
cardinality bitmap than to hash only the host part that remains after
stripping the inferred subnet prefix. The model compares the two
hashing strategies through three quantities: the effective hash space
``M``, the expected number of out-of-subnet flows ``U`` that pollute
the estimate, and the expected Linear Counting error ``epsilon`` that
follows. A Markov bound on the deviation probability and the exact
expected-error gap between the strategies are derived from the same
``M[1 - (1 - 1/M)^R]`` occupancy expectation.

``simulate_are`` is the Monte-Carlo counterpart: it builds synthetic
peer populations, replays the segment-hash prefix matching for real,
and measures the resulting relative estimation error, which lets every
closed form above be checked against simulation.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .hashing import hash64_np
from .prefix import ADDRESS_BITS, SegmentConfig

FULL_ADDRESS = "full"
HOST_ADDRESS = "host"
_STRATEGIES = (FULL_ADDRESS, HOST_ADDRESS)


class NonPositiveEpsilonError(ValueError):
    """The expected-error denominator degenerated (needs >= 2 flows)."""


@dataclass(frozen=True)
class BoundInputs:
    """Ground-truth population description for the error model.

    ``total_peers`` distinct peers of the host, of which ``subnet_peers``
    lie inside one subnet whose true prefix length is ``prefix_len``
    bits. ``matched_segments`` is the number of whole hash segments the
    prefix spans; inference resolution is limited to that granularity.
    """

    total_peers: int
    subnet_peers: int
    prefix_len: int
    segment_bits: int = 4

    def __post_init__(self) -> None:
        if not 0 < self.subnet_peers <= self.total_peers:
            raise ValueError("need 0 < subnet_peers <= total_peers")
        if not 0 < self.prefix_len < ADDRESS_BITS:
            raise ValueError("prefix length must be in (0, 32)")
        if self.segment_bits not in (2, 4, 6, 8):
            raise ValueError("segment width must be one of (2, 4, 6, 8)")

    @property
    def matched_segments(self) -> int:
        return self.prefix_len // self.segment_bits

    @property
    def outside_peers(self) -> int:
        return self.total_peers - self.subnet_peers


@dataclass(frozen=True)
class StrategyVariables:
    """Hash-strategy-dependent quantities feeding the deviation bound."""

    epsilon: float
    hash_space: float
    misclassified: float


@dataclass(frozen=True)
class ErrorGap:
    """Expected-error difference, full-address minus host-address hashing.

    ``exact`` evaluates the occupancy expectations directly; ``taylor``
    is the second-order polynomial form obtained by truncating them,
    kept separate so the truncation quality is itself measurable. The
    truncation assumes ``misclassified / hash_space`` is small and
    degrades when it is not.
    """

    exact: float
    taylor: float


def expected_set_bits(cells: int, keys: float) -> float:
    """Expected occupied cells after hashing ``keys`` distinct keys.

    ``M[1 - (1 - 1/M)^R]``, evaluated as ``-M * expm1(R * log1p(-1/M))``
    because direct powering loses every significant digit at M = 2^32.
    Fractional ``keys`` are meaningful (expected counts).
    """
    if cells < 1:
        raise ValueError("need at least one cell")
    if keys < 0:
        raise ValueError("key count cannot be negative")
    return -cells * math.expm1(keys * math.log1p(-1.0 / cells))


def strategy_variables(strategy: str, inputs: BoundInputs) -> StrategyVariables:
    """Instantiate (epsilon, M, U) for one hashing strategy."""
    if strategy not in _STRATEGIES:
        raise ValueError(f"unknown strategy {strategy!r}")
    if strategy == FULL_ADDRESS:
        space = float(1 << ADDRESS_BITS)
        misclassified = float(inputs.outside_peers)
        epsilon = inputs.total_peers - expected_set_bits(int(space), inputs.total_peers)
    else:
        space = float(1 << (ADDRESS_BITS - inputs.matched_segments * inputs.segment_bits))
        misclassified = inputs.outside_peers * 0.5**inputs.matched_segments
        loaded = inputs.subnet_peers + misclassified
        epsilon = loaded - expected_set_bits(int(space), loaded)
    return StrategyVariables(epsilon=epsilon, hash_space=space, misclassified=misclassified)


def deviation_probability_bound(strategy: str, inputs: BoundInputs, clamp: bool = True) -> float:
    """Markov bound on P(|estimate - true subnet cardinality| >= epsilon).

    The raw expression ``E[error] / epsilon`` can exceed 1, in which
    case the bound is vacuous; ``clamp`` caps it there. A non-positive
    epsilon means the inputs are too degenerate to bound (fewer than
    two flows in play) and is reported as an error rather than clamped.
    """
    varset = strategy_variables(strategy, inputs)
    expected_error = expected_set_bits(int(varset.hash_space), varset.misclassified)
    if varset.misclassified == 0:
        return 0.0
    if varset.epsilon <= 0:
        raise NonPositiveEpsilonError(f"epsilon={varset.epsilon} for strategy {strategy!r}")
    bound = expected_error / varset.epsilon
    return min(bound, 1.0) if clamp else bound


def misclassification_prob(prefix_len: int, segment_bits: int) -> float:
    """Chance an outside flow matches every in-prefix segment hash.

    Each of the ``floor(prefix_len / segment_bits)`` whole segments
    inside the true prefix is a fair 2-value hash, so an address from
    outside the subnet (differing in those segments) matches the
    subnet's walk with probability ``2^-matched_segments``.
    """
    if not 0 < prefix_len < ADDRESS_BITS:
        raise ValueError("prefix length must be in (0, 32)")
    if segment_bits not in (2, 4, 6, 8):
        raise ValueError("segment width must be one of (2, 4, 6, 8)")
    return 0.5 ** (prefix_len // segment_bits)


def expected_error_gap(inputs: BoundInputs) -> ErrorGap:
    """Expected estimation error of full-address minus host-address hashing.

    Positive everywhere on the valid input domain: restricting the hash
    to host bits can only shed misclassified flows.
    """
    if inputs.outside_peers == 0:
        return ErrorGap(exact=0.0, taylor=0.0)
    full = strategy_variables(FULL_ADDRESS, inputs)
    host = strategy_variables(HOST_ADDRESS, inputs)
    exact = expected_set_bits(int(full.hash_space), full.misclassified) - expected_set_bits(
        int(host.hash_space), host.misclassified
    )

    q = float(inputs.outside_peers)
    r = inputs.matched_segments
    rg = r * inputs.segment_bits
    taylor = q * q * 2.0**-33 * (2.0 ** (rg - 2 * r) - 1.0) + q * (
        1.0 - 2.0**-r - 2.0 ** (rg - r - 33) + 2.0**-33
    )
    return ErrorGap(exact=exact, taylor=taylor)


def _distinct_uniform(rng: np.random.Generator, space: int, count: int) -> np.ndarray:
    """``count`` distinct uniform draws from ``range(space)``.

    Dense requests use a permutation; sparse ones sample with
    replacement and deduplicate, which stays O(count) when the space is
    much larger than the request.
    """
    if count > space:
        raise ValueError("cannot draw more distinct values than the space holds")
    if space <= (1 << 18) or count * 4 >= space:
        return rng.permutation(space)[:count].astype(np.uint64)
    out = np.empty(0, dtype=np.uint64)
    while out.size < count:
        cand = rng.integers(0, space, size=2 * count, dtype=np.uint64)
        out = np.unique(np.concatenate([out, cand]))
    rng.shuffle(out)
    return out[:count]


def _draw_outside(
    rng: np.random.Generator, count: int, subnet_base: int, prefix_len: int
) -> np.ndarray:
    """Distinct uniform addresses outside the given subnet."""
    out = np.empty(0, dtype=np.uint64)
    while out.size < count:
        cand = rng.integers(0, 1 << ADDRESS_BITS, size=2 * count, dtype=np.uint64)
        cand = cand[(cand >> np.uint64(ADDRESS_BITS - prefix_len)) != subnet_base]
        out = np.unique(np.concatenate([out, cand]))
    rng.shuffle(out)
    return out[:count]


def _draw_outside_all_segments_differ(
    rng: np.random.Generator,
    count: int,
    subnet_member: int,
    matched: int,
    segment_bits: int,
) -> np.ndarray:
    """Distinct addresses differing from the subnet in every in-prefix
    segment, the population the misclassification model is stated for.

    Uniformly drawn addresses can share segment values with the subnet
    (with probability 2^-G per segment), which matches the walk
    automatically and inflates the admission rate above 2^-matched,
    most visibly at narrow segments.
    """
    mask = (1 << segment_bits) - 1
    out = np.empty(0, dtype=np.uint64)
    while out.size < count:
        n = 2 * count
        addr = rng.integers(0, 1 << ADDRESS_BITS, n, dtype=np.uint64)
        for d in range(1, matched + 1):
            lo = ADDRESS_BITS - d * segment_bits
            subnet_val = (subnet_member >> lo) & mask
            offsets = rng.integers(1, mask + 1, n, dtype=np.uint64)
            vals = (np.uint64(subnet_val) + offsets) & np.uint64(mask)
            clear = np.uint64(((1 << 64) - 1) ^ (mask << lo))
            addr = (addr & clear) | (vals << np.uint64(lo))
        out = np.unique(np.concatenate([out, addr]))
    rng.shuffle(out)
    return out[:count]


def _segment_bits_np(addrs: np.ndarray, depth: int, cfg: SegmentConfig, seed: int) -> np.ndarray:
    """Vectorised 2-value segment hash (matches SegmentConfig.hash_bit)."""
    hi = ADDRESS_BITS - (depth - 1) * cfg.segment_bits
    lo = hi - cfg.segment_bits
    vals = (addrs >> np.uint64(lo)) & np.uint64((1 << cfg.segment_bits) - 1)
    if cfg.level_salt:
        vals = vals | np.uint64(depth << ADDRESS_BITS)
    return hash64_np(vals, seed) & np.uint64(1)


def simulate_are(
    strategy: str,
    inputs: BoundInputs,
    bitmap_bits: int = 16384,
    trials: int = 500,
    seed: int = 0,
    level_salt: bool = True,
    model_outside: bool = True,
) -> float:
    """Monte-Carlo mean relative error of subnet cardinality estimation.

    Each trial draws a fresh subnet, ``subnet_peers`` distinct peers
    inside it, and ``outside_peers`` distinct peers elsewhere. The full
    strategy hashes every peer address into a Linear Counting bitmap;
    the host strategy first filters peers through the segment-hash walk
    of the subnet (keeping in-subnet peers plus whichever outside peers
    collide with the walk) and hashes only their host suffixes. Segment
    seeds are redrawn per trial so the match rate averages over the
    hash family rather than one fixed bit pattern.

    The two mode flags default to the error model's premises:
    ``level_salt`` makes per-level hashing independent (without it all
    levels share one value table per seed, which at 2-bit segments is
    constant on 1/8 of seeds and admits every outside flow), and
    ``model_outside`` draws outside peers differing from the subnet in
    every in-prefix segment (uniform outside peers share segment
    values with probability 2^-G per level and are then admitted for
    free). Turning both off simulates the raw unsalted structure under
    uniform traffic.
    """
    if strategy not in _STRATEGIES:
        raise ValueError(f"unknown strategy {strategy!r}")
    if trials < 1:
        raise ValueError("need at least one trial")
    cfg = SegmentConfig(segment_bits=inputs.segment_bits, max_depth=15, level_salt=level_salt)
    rng = np.random.default_rng(seed)
    suffix_bits = ADDRESS_BITS - inputs.prefix_len
    matched = inputs.matched_segments
    kept_suffix_bits = ADDRESS_BITS - matched * inputs.segment_bits

    total_rel_err = 0.0
    for _ in range(trials):
        subnet_base = int(rng.integers(0, 1 << inputs.prefix_len))
        inside_sfx = _distinct_uniform(rng, 1 << suffix_bits, inputs.subnet_peers)
        inside = np.uint64(subnet_base << suffix_bits) | inside_sfx
        if model_outside and matched > 0:
            outside = _draw_outside_all_segments_differ(
                rng,
                inputs.outside_peers,
                subnet_base << suffix_bits,
                matched,
                inputs.segment_bits,
            )
        else:
            outside = _draw_outside(rng, inputs.outside_peers, subnet_base, inputs.prefix_len)

        if strategy == FULL_ADDRESS:
            loaded = np.concatenate([inside, outside])
        else:
            seg_seed = int(rng.integers(0, 1 << 62))
            keep = np.ones(outside.size, dtype=bool)
            for d in range(1, matched + 1):
                want = _segment_bits_np(inside[:1], d, cfg, seg_seed)[0]
                keep &= _segment_bits_np(outside, d, cfg, seg_seed) == want
            loaded = np.concatenate([inside, outside[keep]])
            loaded = loaded & np.uint64((1 << kept_suffix_bits) - 1)

        bm_seed = int(rng.integers(0, 1 << 62))
        occupied = np.unique(hash64_np(loaded, bm_seed) % np.uint64(bitmap_bits)).size
        zeros = max(bitmap_bits - occupied, 1)
        estimate = bitmap_bits * math.log(bitmap_bits / zeros)
        total_rel_err += abs(estimate - inputs.subnet_peers) / inputs.subnet_peers
    return total_rel_err / trials
