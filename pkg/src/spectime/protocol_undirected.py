"""Reduced-order specified-time iteration for undirected graphs.

On a symmetric topology every agent can read its neighbors' gradients
directly, so the observer stack is unnecessary: the state is just the
auxiliary vector xi with x_k = x0 - L @ xi_k and the update

    xi_{k+1} = xi_k + beta * L @ grad f(x_k).

Memory is O(n) per network instead of O(n^2). The cost gap contracts
geometrically with factor 1 - beta*l0*lambda2(L)^2/4 whenever
beta <= 1/(l*||L||^2).
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .graph import (
    DirectedTopology,
    is_symmetric,
    lambda2_min_nonzero,
    laplacian_in,
    spectral_norm,
)
from .objective import ObjectiveSpec, gradient

__all__ = [
    "UndirectedProtocolState",
    "initial_state",
    "allocation",
    "beta_max_undirected",
    "step_undirected",
    "rate_bound_undirected",
]


@dataclass(frozen=True, eq=False)
class UndirectedProtocolState:
    """Iteration state at one sampling instant: fixed x0, auxiliary xi."""

    x0: np.ndarray
    xi: np.ndarray
    k: int


def initial_state(x0: np.ndarray) -> UndirectedProtocolState:
    """State at t_0: allocation x0, zero auxiliary vector."""
    x0 = np.asarray(x0, dtype=float).copy()
    if x0.ndim != 1 or x0.size < 1:
        raise ValueError(f"x0 must be a vector, got shape {x0.shape}")
    x0.setflags(write=False)
    return UndirectedProtocolState(x0=x0, xi=np.zeros(x0.size), k=0)


def allocation(state: UndirectedProtocolState, lap: np.ndarray) -> np.ndarray:
    """Current allocation ``x0 - L @ xi``."""
    return state.x0 - lap @ state.xi


def beta_max_undirected(l: float, t: DirectedTopology) -> float:
    """Largest certified step gain ``1/(l * ||L||^2)`` on a symmetric topology.

    Args:
        l: Upper curvature (gradient Lipschitz) constant, positive.
        t: Topology; must be symmetric.

    Raises:
        ValueError: asymmetric topology or nonpositive l.
    """
    if l <= 0.0:
        raise ValueError(f"Lipschitz constant must be positive, got {l}")
    if not is_symmetric(t):
        raise ValueError("topology is not symmetric; the reduced-order "
                         "iteration needs an undirected graph")
    return 1.0 / (l * spectral_norm(laplacian_in(t)) ** 2)


def step_undirected(
    state: UndirectedProtocolState,
    spec: ObjectiveSpec,
    lap: np.ndarray,
    beta: float,
) -> UndirectedProtocolState:
    """Advance one sampling instant: ``xi += beta * L @ grad f(x_k)``.

    At a point where all marginal costs agree the gradient is a
    multiple of the ones vector, which L annihilates, so KKT points are
    fixed points.
    """
    if beta <= 0.0:
        raise ValueError(f"step gain must be positive, got {beta}")
    g = gradient(spec, allocation(state, lap))
    return replace(state, xi=state.xi + beta * (lap @ g), k=state.k + 1)


def rate_bound_undirected(beta: float, l0: float, lap: np.ndarray) -> float:
    """Certified per-step cost-gap factor ``1 - beta*l0*lambda2(L)^2/4``.

    For a symmetric positive semidefinite L the smallest nonzero
    eigenvalue of L squared equals lambda2(L)^2, so only the latter is
    computed. The factor must land in (0, 1); anything else means the
    constants fed in are inconsistent.
    """
    if beta <= 0.0 or l0 <= 0.0:
        raise ValueError("step gain and curvature bound must be positive")
    lam2 = lambda2_min_nonzero(np.asarray(lap, dtype=float))
    factor = 1.0 - beta * l0 * lam2**2 / 4.0
    if not 0.0 < factor < 1.0:
        raise ValueError(f"decay factor {factor} outside (0,1); "
                         "inconsistent constants")
    return factor
