"""Shared fixtures: the dispatch builtin run and randomized scenario batteries.

The batteries are deliberately seeded so every session exercises the
same graphs and costs; failures stay reproducible.
"""

from __future__ import annotations

import numpy as np
import pytest

from spectime.fileio import builtin_scenario
from spectime.graph import DirectedTopology
from spectime.objective import ObjectiveSpec, kkt_oracle, value
from spectime.schedule import SamplingSchedule
from spectime.simulator import Scenario, SimulationTrace, run


def random_directed_scenario(rng: np.random.Generator, n: int) -> Scenario:
    """Strongly connected digraph with random strongly convex quadratics.

    A permutation cycle guarantees strong connectivity (and an
    in-neighbor for every agent); extra edges are sprinkled on top. The
    gain is left unset, so the run uses the certified bound. Resamples
    until the start is far enough from the optimum for decay checks to
    measure something real.
    """
    while True:
        weights = np.zeros((n, n))
        order = rng.permutation(n)
        for a, b in zip(order, np.roll(order, -1)):
            weights[b, a] = 1.0
        extra = rng.random((n, n)) < 0.3
        np.fill_diagonal(extra, False)
        weights = np.maximum(weights, extra.astype(float))
        coeffs = [
            (rng.uniform(0.05, 1.0), rng.uniform(-5.0, 5.0), rng.uniform(-1.0, 1.0))
            for _ in range(n)
        ]
        x0 = rng.uniform(-10.0, 10.0, size=n)
        spec = ObjectiveSpec.quadratic(coeffs)
        c = float(np.sum(x0))
        kkt = kkt_oracle(spec, c)
        grad0 = np.array([cost.derivative(float(v)) for cost, v in zip(spec.costs, x0)])
        if value(spec, x0) - kkt.f_star < 1e-3 or float(np.linalg.norm(grad0)) < 0.1:
            continue
        return Scenario(
            topology=DirectedTopology(n=n, weights=weights),
            objective=spec,
            x0=x0,
            c=c,
            schedule=SamplingSchedule.truncated(1.0, 30, 0.05),
            protocol="directed",
            horizon=1.5,
        )


def random_undirected_scenario(rng: np.random.Generator, n: int) -> Scenario:
    """Connected undirected graph (random spanning tree plus extras)."""
    while True:
        weights = np.zeros((n, n))
        for child in range(1, n):
            parent = int(rng.integers(0, child))
            weights[child, parent] = weights[parent, child] = 1.0
        extra = rng.random((n, n)) < 0.3
        extra = np.triu(extra, k=1)
        weights = np.maximum(weights, (extra | extra.T).astype(float))
        coeffs = [
            (rng.uniform(0.05, 1.0), rng.uniform(-5.0, 5.0), rng.uniform(-1.0, 1.0))
            for _ in range(n)
        ]
        x0 = rng.uniform(-10.0, 10.0, size=n)
        spec = ObjectiveSpec.quadratic(coeffs)
        c = float(np.sum(x0))
        if value(spec, x0) - kkt_oracle(spec, c).f_star < 0.1:
            continue
        return Scenario(
            topology=DirectedTopology(n=n, weights=weights),
            objective=spec,
            x0=x0,
            c=c,
            schedule=SamplingSchedule.truncated(1.0, 30, 0.05),
            protocol="undirected",
            horizon=1.5,
        )


@pytest.fixture(scope="session")
def dispatch_scenario() -> Scenario:
    return builtin_scenario("dispatch3-directed")


@pytest.fixture(scope="session")
def dispatch_trace(dispatch_scenario: Scenario) -> SimulationTrace:
    return run(dispatch_scenario, record_psi=True)


@pytest.fixture(scope="session")
def directed_battery() -> list[tuple[Scenario, SimulationTrace]]:
    """Fifty randomized directed scenarios run at the certified gain."""
    rng = np.random.default_rng(20260819)
    pairs = []
    for i in range(50):
        sc = random_directed_scenario(rng, n=2 + i % 4)
        pairs.append((sc, run(sc)))
    return pairs


@pytest.fixture(scope="session")
def undirected_battery() -> list[tuple[Scenario, SimulationTrace]]:
    """Twenty randomized undirected scenarios run at the certified gain."""
    rng = np.random.default_rng(8192026)
    pairs = []
    for i in range(20):
        sc = random_undirected_scenario(rng, n=2 + i % 5)
        pairs.append((sc, run(sc)))
    return pairs
