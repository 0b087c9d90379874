"""Sampling schedules: interval formulas, stable accumulation, Zeno guards."""

from __future__ import annotations

import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from spectime.schedule import (
    SamplingSchedule,
    ZenoUnboundedError,
    instant,
    interval,
    iter_instants,
    steps_before,
)

DISPATCH_SCHEDULE = SamplingSchedule.truncated(2.0, 80, 0.01)


# ---------------------------------------------------------------------------
# Interval formulas
# ---------------------------------------------------------------------------


def test_basel_first_interval():
    s = SamplingSchedule.basel(2.0)
    assert interval(s, 1) == pytest.approx(12.0 / math.pi**2, rel=1e-15)


def test_power_interval_is_geometric():
    s = SamplingSchedule.power(1.0, 0.5)
    assert interval(s, 3) == pytest.approx(0.125, rel=1e-15)


def test_truncated_interval_switches_to_constant_after_the_cut():
    assert interval(DISPATCH_SCHEDULE, 80) == pytest.approx(
        12.0 / (math.pi * 80) ** 2, rel=1e-15
    )
    assert interval(DISPATCH_SCHEDULE, 81) == 0.01
    assert interval(DISPATCH_SCHEDULE, 5000) == 0.01


def test_interval_rejects_nonpositive_index():
    with pytest.raises(ValueError):
        interval(DISPATCH_SCHEDULE, 0)


# ---------------------------------------------------------------------------
# Instants
# ---------------------------------------------------------------------------


@pytest.mark.parametrize(
    "schedule",
    [
        SamplingSchedule.basel(2.0),
        DISPATCH_SCHEDULE,
        SamplingSchedule.power(1.0, 0.5),
    ],
    ids=["basel", "truncated", "power"],
)
def test_time_zero_is_the_zeroth_instant(schedule):
    assert instant(schedule, 0) == 0.0


def test_basel_partial_sums_match_extended_precision_reference():
    # Independent oracle: the same series accumulated in 80-bit floats.
    t_c = 2.0
    k_max = 100_000
    ks = np.arange(1, k_max + 1, dtype=np.longdouble)
    reference = np.cumsum(6.0 * t_c / (np.pi * ks) ** 2)
    stream = np.empty(k_max)
    for k, t, _ in itertools.islice(iter_instants(SamplingSchedule.basel(t_c)), 1, k_max + 1):
        stream[k - 1] = t
    assert np.max(np.abs(stream - reference.astype(float))) <= 1e-12 * t_c
    assert np.all(stream < t_c)
    assert np.all(np.diff(stream) > 0.0)


def test_basel_checkpoints_match_exact_summation():
    t_c = 2.0
    s = SamplingSchedule.basel(t_c)
    for k in (1, 10, 1000, 100_000):
        exact = math.fsum(6.0 * t_c / (math.pi * j) ** 2 for j in range(1, k + 1))
        assert instant(s, k) == pytest.approx(exact, abs=1e-12 * t_c)


def test_basel_approaches_the_settling_time_from_below():
    s = SamplingSchedule.basel(2.0)
    t = instant(s, 1_000_000)
    assert 2.0 - 2e-5 * 2.0 <= t < 2.0


def test_power_instants_match_the_closed_form():
    for t_c, b in ((1.0, 0.5), (2.0, 0.9), (0.7, 0.2)):
        s = SamplingSchedule.power(t_c, b)
        for k in range(0, 200):
            assert instant(s, k) == pytest.approx(t_c * (1.0 - b**k), abs=1e-12 * t_c)


def test_power_partial_sum_example():
    assert instant(SamplingSchedule.power(1.0, 0.5), 4) == pytest.approx(
        15.0 / 16.0, abs=1e-15
    )


def test_iterated_instants_equal_direct_instants_bitwise():
    for s in (SamplingSchedule.basel(2.0), DISPATCH_SCHEDULE, SamplingSchedule.power(1.0, 0.9)):
        for k, t, t_k in itertools.islice(iter_instants(s), 0, 500):
            assert t == instant(s, k)
            if k >= 1:
                assert t_k == interval(s, k)


@settings(max_examples=40, deadline=None)
@given(
    st.sampled_from(["basel", "truncated", "power"]),
    st.floats(min_value=0.1, max_value=50.0, allow_nan=False),
    st.integers(min_value=0, max_value=300),
)
def test_instants_increase_strictly(kind, t_c, k):
    # Strictness needs the next interval to be representable next to t_k;
    # the power tail shrinks below one ulp of t_c after ~100 terms.
    if kind == "basel":
        s = SamplingSchedule.basel(t_c)
    elif kind == "truncated":
        s = SamplingSchedule.truncated(t_c, 20, t_c / 100.0)
    else:
        s = SamplingSchedule.power(t_c, 0.7)
        k = min(k, 80)
    assert instant(s, k + 1) > instant(s, k)


# ---------------------------------------------------------------------------
# Horizon counting
# ---------------------------------------------------------------------------


def test_dispatch_schedule_step_count_follows_the_tail_formula():
    t80 = instant(DISPATCH_SCHEDULE, 80)
    expected = 80 + math.ceil((5.0 - t80) / 0.01)
    assert steps_before(DISPATCH_SCHEDULE, 5.0) == expected == 382


def test_truncated_counts_match_brute_force_on_other_parameters():
    s = SamplingSchedule.truncated(1.0, 30, 0.05)
    for horizon in (0.5, 1.0, 1.5, 3.0):
        brute = sum(
            1 for _, t, _ in itertools.takewhile(
                lambda rec: rec[1] < horizon, iter_instants(s)
            )
        )
        assert steps_before(s, horizon) == brute


def test_basel_count_matches_brute_force_below_the_settling_time():
    s = SamplingSchedule.basel(2.0)
    brute = sum(
        1 for _ in itertools.takewhile(lambda rec: rec[1] < 1.0, iter_instants(s))
    )
    assert steps_before(s, 1.0) == brute


def test_basel_horizon_at_settling_time_is_zeno_unbounded():
    with pytest.raises(ZenoUnboundedError, match="unbounded"):
        steps_before(SamplingSchedule.basel(2.0), 2.0)


def test_power_horizon_past_settling_time_is_zeno_unbounded():
    with pytest.raises(ZenoUnboundedError, match="unbounded"):
        steps_before(SamplingSchedule.power(1.0, 0.5), 1.5)


def test_truncated_horizon_far_past_settling_time_stays_finite():
    count = steps_before(DISPATCH_SCHEDULE, 100.0)
    t80 = instant(DISPATCH_SCHEDULE, 80)
    assert count == 80 + math.ceil((100.0 - t80) / 0.01)


def test_zeroth_instant_counts_when_below_the_horizon():
    assert steps_before(DISPATCH_SCHEDULE, 1e-9) == 1
    assert steps_before(DISPATCH_SCHEDULE, 0.0) == 0


# ---------------------------------------------------------------------------
# Validation
# ---------------------------------------------------------------------------


def test_unknown_kind_is_rejected():
    with pytest.raises(ValueError, match="kind"):
        SamplingSchedule(kind="fibonacci", t_c=1.0)


@pytest.mark.parametrize("t_c", [0.0, -1.0, math.inf, math.nan])
def test_nonpositive_settling_time_is_rejected(t_c):
    with pytest.raises(ValueError, match="settling time"):
        SamplingSchedule.basel(t_c)


def test_truncated_requires_positive_cut_and_tail():
    with pytest.raises(ValueError, match="k_eps"):
        SamplingSchedule.truncated(1.0, 0, 0.1)
    with pytest.raises(ValueError, match="eps"):
        SamplingSchedule.truncated(1.0, 10, 0.0)


def test_power_ratio_must_lie_inside_the_unit_interval():
    with pytest.raises(ValueError, match="ratio"):
        SamplingSchedule.power(1.0, 1.0)
    with pytest.raises(ValueError, match="ratio"):
        SamplingSchedule.power(1.0, 0.0)


def test_cross_kind_fields_are_rejected():
    with pytest.raises(ValueError, match="truncated"):
        SamplingSchedule(kind="basel", t_c=1.0, k_eps=5, eps=0.1)
    with pytest.raises(ValueError, match="power"):
        SamplingSchedule(kind="basel", t_c=1.0, b=0.5)
