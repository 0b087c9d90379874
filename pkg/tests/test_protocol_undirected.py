"""Reduced-order undirected protocol and its rate certificate.

The two-agent pair f1 = x^2, f2 = (x-4)^2 from rest is the closed-form
oracle: the optimum is (-2, 2) with total cost 8, the certified gain is
exactly 1/8, and a single step at that gain lands on the optimum.
"""

from __future__ import annotations

import numpy as np
import pytest

from spectime.graph import from_edges, laplacian_in
from spectime.objective import ObjectiveSpec, gradient, kkt_oracle, value
from spectime.protocol_undirected import (
    allocation,
    beta_max_undirected,
    initial_state,
    rate_bound_undirected,
    step_undirected,
)
from spectime.schedule import SamplingSchedule
from spectime.simulator import Scenario, run

TWO_NODE = from_edges(2, [(1, 2), (2, 1)])
CYCLE3 = from_edges(3, [(1, 2), (2, 3), (3, 1)])
PAIR = ObjectiveSpec.quadratic([(1.0, 0.0, 0.0), (1.0, -8.0, 16.0)])


# ---------------------------------------------------------------------------
# Gain bound
# ---------------------------------------------------------------------------


def test_two_node_bound_is_one_quarter():
    assert beta_max_undirected(1.0, TWO_NODE) == pytest.approx(0.25, rel=1e-12)


def test_doubling_curvature_halves_the_bound():
    assert beta_max_undirected(2.0, TWO_NODE) == pytest.approx(
        beta_max_undirected(1.0, TWO_NODE) / 2.0, rel=1e-12
    )


def test_directed_cycle_is_rejected():
    with pytest.raises(ValueError, match="not symmetric"):
        beta_max_undirected(1.0, CYCLE3)


# ---------------------------------------------------------------------------
# Iteration
# ---------------------------------------------------------------------------


def test_identical_agents_never_move():
    spec = ObjectiveSpec.quadratic([(1.0, 2.0, 0.0)] * 2)
    lap = laplacian_in(TWO_NODE)
    state = initial_state(np.array([3.0, 3.0]))
    for _ in range(5):
        state = step_undirected(state, spec, lap, beta=0.25)
    assert np.array_equal(allocation(state, lap), np.array([3.0, 3.0]))
    assert np.array_equal(state.xi, np.zeros(2))


def test_update_vanishes_at_the_optimum():
    lap = laplacian_in(TWO_NODE)
    kkt = kkt_oracle(PAIR, 0.0)
    state = initial_state(kkt.x_star)
    stepped = step_undirected(state, PAIR, lap, beta=0.125)
    assert np.max(np.abs(stepped.xi)) <= 1e-12
    assert np.max(np.abs(allocation(stepped, lap) - kkt.x_star)) <= 1e-12


def test_pair_lands_on_the_optimum_in_one_certified_step():
    lap = laplacian_in(TWO_NODE)
    state = step_undirected(initial_state(np.zeros(2)), PAIR, lap, beta=0.125)
    assert np.array_equal(allocation(state, lap), np.array([-2.0, 2.0]))


def test_pair_iteration_reaches_the_oracle_with_conserved_total():
    lap = laplacian_in(TWO_NODE)
    beta = beta_max_undirected(2.0, TWO_NODE)
    kkt = kkt_oracle(PAIR, 0.0)
    state = initial_state(np.zeros(2))
    for _ in range(40):
        x = allocation(state, lap)
        assert abs(float(np.sum(x))) <= 1e-9
        if value(PAIR, x) - kkt.f_star < 1e-10:
            break
        state = step_undirected(state, PAIR, lap, beta)
    assert value(PAIR, allocation(state, lap)) - kkt.f_star < 1e-10


def test_step_rejects_nonpositive_gain():
    lap = laplacian_in(TWO_NODE)
    with pytest.raises(ValueError, match="positive"):
        step_undirected(initial_state(np.zeros(2)), PAIR, lap, beta=-0.1)


# ---------------------------------------------------------------------------
# Rate certificate
# ---------------------------------------------------------------------------


def test_two_node_rate_factor_is_three_quarters():
    lap = laplacian_in(TWO_NODE)
    assert rate_bound_undirected(0.125, 2.0, lap) == pytest.approx(0.75, rel=1e-12)


def test_rate_factor_approaches_one_for_vanishing_gain():
    lap = laplacian_in(TWO_NODE)
    factor = rate_bound_undirected(1e-9, 2.0, lap)
    assert 0.999999 < factor < 1.0


def test_oversized_gain_makes_the_factor_meaningless():
    lap = laplacian_in(TWO_NODE)
    with pytest.raises(ValueError, match="inconsistent"):
        rate_bound_undirected(10.0, 2.0, lap)


def test_measured_decay_never_beats_the_certificate():
    # Half the certified gain gives a real multi-step decay to compare.
    lap = laplacian_in(TWO_NODE)
    beta = 0.5 * beta_max_undirected(2.0, TWO_NODE)
    factor = rate_bound_undirected(beta, 2.0, lap)
    kkt = kkt_oracle(PAIR, 0.0)
    state = initial_state(np.zeros(2))
    gap = value(PAIR, np.zeros(2)) - kkt.f_star
    for _ in range(30):
        state = step_undirected(state, PAIR, lap, beta)
        next_gap = value(PAIR, allocation(state, lap)) - kkt.f_star
        if gap <= 1e-13:
            break
        assert next_gap / gap <= factor + 1e-9
        gap = next_gap


def test_cost_is_monotone_on_randomized_runs(undirected_battery):
    for sc, tr in undirected_battery:
        costs = np.array([r.f for r in tr.records])
        assert np.all(np.diff(costs) <= 1e-9 * max(1.0, costs[0]))


def test_directed_and_undirected_protocols_share_the_optimum():
    # Same triangle, same costs; trajectories differ, the target must not.
    tri = from_edges(3, [(1, 2), (2, 1), (2, 3), (3, 2), (1, 3), (3, 1)])
    spec = ObjectiveSpec.quadratic([(0.5, 1.0, 0.0), (1.0, -2.0, 0.5), (1.5, 0.5, 1.0)])
    x0 = np.array([1.0, 2.0, 3.0])
    schedule = SamplingSchedule.truncated(1.0, 30, 0.02)
    base = dict(topology=tri, objective=spec, x0=x0, c=6.0, schedule=schedule)
    undirected = run(Scenario(protocol="undirected", horizon=6.0, **base))
    directed = run(
        Scenario(protocol="directed", horizon=6.0, beta=0.005, unsafe_beta=True, **base)
    )
    x_und = undirected.records[-1].x
    x_dir = directed.records[-1].x
    assert np.max(np.abs(x_dir - x_und)) <= 1e-6
    kkt = kkt_oracle(spec, 6.0)
    assert np.max(np.abs(x_und - kkt.x_star)) <= 1e-6
