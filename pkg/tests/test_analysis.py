import math

import numpy as np
import pytest

from segsketch.analysis import (
    FULL_ADDRESS,
    HOST_ADDRESS,
    BoundInputs,
    deviation_probability_bound,
    expected_error_gap,
    expected_set_bits,
    misclassification_prob,
    simulate_are,
    strategy_variables,
)
from segsketch.hashing import hash64_np

STANDARD = BoundInputs(total_peers=10_000, subnet_peers=1_000, prefix_len=16, segment_bits=4)


def test_expected_set_bits_trivials():
    assert expected_set_bits(1024, 0) == 0.0
    # Frozen from a 50-digit mpmath evaluation of M[1-(1-1/M)^R].
    assert expected_set_bits(1024, 1024) == pytest.approx(647.4754668428583, rel=1e-12)
    assert expected_set_bits(4096, 1000) == pytest.approx(887.3815484804892, rel=1e-12)


def test_expected_set_bits_monotone_and_bounded():
    last = 0.0
    for keys in range(0, 20000, 250):
        val = expected_set_bits(1024, keys)
        assert val <= 1024
        if keys:
            assert val > last
        last = val


def test_expected_set_bits_no_cancellation_at_huge_cell_counts():
    # At M = 2^32 and small R the expectation is just under R; naive
    # powering would return zero significant digits here.
    val = expected_set_bits(1 << 32, 9000)
    assert 8999.0 < val < 9000.0
    assert val == pytest.approx(9000 - 9.429569e-3, abs=1e-5)


def test_expected_set_bits_monte_carlo_oracle():
    # Occupancy simulation with ideal uniform cell choice.
    cells, keys, seeds = 1024, 1024, 2000
    rng = np.random.default_rng(42)
    occ = np.empty(seeds)
    for t in range(seeds):
        occ[t] = np.unique(rng.integers(0, cells, keys)).size
    expect = expected_set_bits(cells, keys)
    p = expect / cells
    sigma = math.sqrt(cells * p * (1 - p)) / math.sqrt(seeds)
    assert abs(occ.mean() - expect) < 3 * sigma


def test_strategy_variables_substitution():
    full = strategy_variables(FULL_ADDRESS, STANDARD)
    assert full.hash_space == 2.0**32
    assert full.misclassified == 9000
    host = strategy_variables(HOST_ADDRESS, STANDARD)
    assert host.hash_space == 2.0**16  # 32 - floor(16/4)*4
    assert host.misclassified == pytest.approx(9000 / 16)


def test_strategy_variables_frozen_epsilons():
    # mpmath cross-check at N=1e4, C=1e3, l=16, G=4.
    full = strategy_variables(FULL_ADDRESS, STANDARD)
    host = strategy_variables(HOST_ADDRESS, STANDARD)
    assert full.epsilon == pytest.approx(0.011640358997172689, rel=1e-9)
    assert host.epsilon == pytest.approx(18.467659700505348, rel=1e-9)


def test_bound_zero_when_no_outside_flows():
    inputs = BoundInputs(total_peers=500, subnet_peers=500, prefix_len=16)
    assert deviation_probability_bound(FULL_ADDRESS, inputs) == 0.0
    assert deviation_probability_bound(HOST_ADDRESS, inputs) == 0.0


def test_bound_host_below_full_and_clamping():
    raw_full = deviation_probability_bound(FULL_ADDRESS, STANDARD, clamp=False)
    raw_host = deviation_probability_bound(HOST_ADDRESS, STANDARD, clamp=False)
    # Frozen mpmath values; both bounds are vacuous here but ordered.
    assert raw_full == pytest.approx(773171.2203720908, rel=1e-9)
    assert raw_host == pytest.approx(30.328540137277616, rel=1e-9)
    assert raw_host < raw_full
    assert deviation_probability_bound(FULL_ADDRESS, STANDARD) == 1.0
    assert deviation_probability_bound(HOST_ADDRESS, STANDARD) == 1.0


def test_bound_shrinks_with_matched_depth():
    # Deeper matched prefixes shed more outside flows.
    shallow = BoundInputs(total_peers=10_000, subnet_peers=1_000, prefix_len=8, segment_bits=4)
    deep = BoundInputs(total_peers=10_000, subnet_peers=1_000, prefix_len=24, segment_bits=4)
    assert deviation_probability_bound(
        HOST_ADDRESS, deep, clamp=False
    ) < deviation_probability_bound(HOST_ADDRESS, shallow, clamp=False)


def test_misclassification_prob_values():
    assert misclassification_prob(16, 4) == pytest.approx(1 / 16)
    assert misclassification_prob(16, 8) == pytest.approx(1 / 4)
    assert misclassification_prob(24, 2) == pytest.approx(2.0**-12)
    with pytest.raises(ValueError):
        misclassification_prob(0, 4)
    with pytest.raises(ValueError):
        misclassification_prob(16, 5)


def test_misclassification_prob_empirical():
    # 1e5 outside addresses against a fixed /16 subnet under the real
    # segment hash. Outside addresses differ in every in-prefix segment
    # and hash randomness is redrawn per sample and per level, matching
    # the model's premise that each segment is an independent fair
    # coin. (Under a single shared seed the per-level match events are
    # positively correlated over a 2^G-value space, and the product
    # rule alpha = 2^-matched no longer holds exactly.)
    prefix_len, width = 16, 4
    matched = prefix_len // width
    samples = 100_000
    rng = np.random.default_rng(7)
    subnet_segs = rng.integers(0, 1 << width, matched, dtype=np.uint64)
    seeds = rng.integers(0, 2**62, (samples, matched), dtype=np.uint64)
    # Per-sample outside segment values, forced to differ from the subnet's.
    outside = (
        subnet_segs + rng.integers(1, 1 << width, (samples, matched), dtype=np.uint64)
    ) & np.uint64((1 << width) - 1)
    want = hash64_np(np.broadcast_to(subnet_segs, (samples, matched)), seeds) & np.uint64(1)
    got = hash64_np(outside, seeds) & np.uint64(1)
    match_rate = (want == got).all(axis=1).mean()
    alpha = misclassification_prob(prefix_len, width)
    sigma = math.sqrt(alpha * (1 - alpha) / samples)
    assert abs(match_rate - alpha) < 3 * sigma


def test_gap_zero_without_outside_flows():
    inputs = BoundInputs(total_peers=100, subnet_peers=100, prefix_len=16)
    gap = expected_error_gap(inputs)
    assert gap.exact == 0.0
    assert gap.taylor == 0.0


def test_gap_positive_on_grid():
    for q in (10, 100, 1_000, 10_000, 100_000):
        for prefix_len in (8, 16, 24):
            for width in (2, 4, 8):
                inputs = BoundInputs(
                    total_peers=q + 100,
                    subnet_peers=100,
                    prefix_len=prefix_len,
                    segment_bits=width,
                )
                assert expected_error_gap(inputs).exact > 0.0


def test_gap_exact_matches_taylor_in_valid_regime():
    inputs = BoundInputs(total_peers=1_100, subnet_peers=100, prefix_len=16, segment_bits=4)
    gap = expected_error_gap(inputs)
    assert gap.taylor == pytest.approx(gap.exact, rel=0.01)


def test_gap_taylor_breaks_down_when_truncation_premise_fails():
    # At Q=1e4, l=24, G=8 the host strategy loads U=1250 flows into a
    # 256-cell space; the second-order truncation is invalid there and
    # overshoots the exact gap by a frozen 21.07%.
    inputs = BoundInputs(total_peers=10_100, subnet_peers=100, prefix_len=24, segment_bits=8)
    gap = expected_error_gap(inputs)
    assert gap.exact == pytest.approx(9745.909, rel=1e-4)
    assert gap.taylor == pytest.approx(11799.305, rel=1e-4)
    rel_dev = abs(gap.taylor - gap.exact) / gap.exact
    assert rel_dev == pytest.approx(0.2107, abs=0.001)


def test_bound_inputs_validation():
    with pytest.raises(ValueError):
        BoundInputs(total_peers=10, subnet_peers=0, prefix_len=16)
    with pytest.raises(ValueError):
        BoundInputs(total_peers=10, subnet_peers=20, prefix_len=16)
    with pytest.raises(ValueError):
        BoundInputs(total_peers=10, subnet_peers=5, prefix_len=32)
    with pytest.raises(ValueError):
        BoundInputs(total_peers=10, subnet_peers=5, prefix_len=16, segment_bits=5)
    # prefix_len < 32 always leaves host bits at segment granularity.
    assert BoundInputs(total_peers=10, subnet_peers=5, prefix_len=31, segment_bits=8).matched_segments == 3


def test_simulate_are_no_outside_traffic_is_lc_noise_only():
    inputs = BoundInputs(total_peers=1_000, subnet_peers=1_000, prefix_len=16)
    are = simulate_are(HOST_ADDRESS, inputs, bitmap_bits=16384, trials=40, seed=3)
    assert are < 0.05


def test_simulate_are_host_below_full():
    for width in (2, 4, 6, 8):
        inputs = BoundInputs(
            total_peers=10_000, subnet_peers=1_000, prefix_len=16, segment_bits=width
        )
        host = simulate_are(HOST_ADDRESS, inputs, trials=40, seed=11)
        full = simulate_are(FULL_ADDRESS, inputs, trials=40, seed=11)
        assert host < full


def test_simulate_are_reproducible():
    inputs = BoundInputs(total_peers=2_000, subnet_peers=500, prefix_len=16)
    a = simulate_are(HOST_ADDRESS, inputs, trials=20, seed=9)
    b = simulate_are(HOST_ADDRESS, inputs, trials=20, seed=9)
    assert a == b
