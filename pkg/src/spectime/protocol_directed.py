"""Observer-based specified-time iteration for directed graphs.

Each agent i keeps, besides its decision variable, an auxiliary scalar
xi_i and an observer vector psi_i estimating the full network gradient.
The stacked update reads, with x_k = x0 - L_O xi_k and g_k the gradient
at x_k:

    xi_{k+1}  = xi_k  + beta * L_hat0 @ psi_k
    psi_{k+1} = psi_k - Gamma (L kron I + A_d) (psi_k - 1_n kron g_k)

This is the exact flow of the sampled continuous-time dynamics over one
interval, so no ODE integration is involved; wall-clock time enters
only through the sampling schedule.

The module also builds the analytical certificates: the discrete
Lyapunov weight W, the step bound beta_max, the per-step contraction
rate, and the accuracy bound at the settling time.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from .graph import (
    DirectedTopology,
    LiftedOperators,
    lambda2_min_nonzero,
    laplacian_out,
    lifted_operators,
    spectral_norm,
)
from .objective import ObjectiveSpec, global_constants, gradient, value

__all__ = [
    "DirectedProtocolState",
    "DirectedCertificate",
    "ObserverError",
    "initial_state",
    "allocation",
    "step",
    "observer_error",
    "lyapunov_weight",
    "beta_max",
    "lyapunov_value",
    "contraction_rate",
    "accuracy_bound",
    "certify",
]

# Truncation threshold for the Lyapunov series terms (Frobenius norm).
_SERIES_TOL = 1e-14
_SERIES_MAX_TERMS = 200_000

# Kronecker systems beyond this state size would need gigabytes.
_MAX_LIFTED_DIM = 70


# ---------------------------------------------------------------------------
# State
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class DirectedProtocolState:
    """Iteration state at one sampling instant.

    ``x0`` is fixed; the current allocation is derived as
    ``x0 - L_O @ xi`` and never stored, which is what keeps the demand
    constraint conserved exactly. ``psi`` stacks the n per-agent
    observer vectors row-major by (owner, tracked agent).
    """

    x0: np.ndarray
    xi: np.ndarray
    psi: np.ndarray
    k: int


@dataclass(frozen=True, eq=False)
class ObserverError:
    """Deviation of the stacked observers from the true stacked gradient."""

    e_psi: np.ndarray

    @property
    def norm(self) -> float:
        return float(np.linalg.norm(self.e_psi))


@dataclass(frozen=True, eq=False)
class DirectedCertificate:
    """Analytical guarantees for a chosen step gain.

    ``beta_max`` is the largest certified gain; ``beta`` is the gain the
    run will actually use. ``w`` solves the discrete Lyapunov equation
    for the observer iteration matrix, ``b_const`` is the intermediate
    constant (2*||M^T W||^2 + ||W||)*n of the step bound, and
    ``epsilon`` is the per-step contraction rate of the Lyapunov value.
    """

    beta_max: float
    beta: float
    w: np.ndarray
    b_const: float
    epsilon: float

    def accuracy_factor(self, k_eps: int) -> float:
        """Residual factor (1 - epsilon)^k_eps left after k_eps steps."""
        if k_eps < 0 or int(k_eps) != k_eps:
            raise ValueError(f"step count must be a nonnegative integer, got {k_eps}")
        return (1.0 - self.epsilon) ** int(k_eps)


def initial_state(x0: np.ndarray) -> DirectedProtocolState:
    """State at t_0: allocation x0, zero auxiliary variables, zero observers."""
    x0 = np.asarray(x0, dtype=float).copy()
    if x0.ndim != 1 or x0.size < 1:
        raise ValueError(f"x0 must be a vector, got shape {x0.shape}")
    x0.setflags(write=False)
    n = x0.size
    return DirectedProtocolState(x0=x0, xi=np.zeros(n), psi=np.zeros(n * n), k=0)


def allocation(state: DirectedProtocolState, ops: LiftedOperators) -> np.ndarray:
    """Current allocation ``x0 - L_O @ xi``."""
    return state.x0 - ops.l_out @ state.xi


def step(
    state: DirectedProtocolState,
    spec: ObjectiveSpec,
    ops: LiftedOperators,
    beta: float,
) -> DirectedProtocolState:
    """Advance one sampling instant.

    Both updates read only step-k values, so the order of the two
    assignments is immaterial. The observer update is applied in the
    algebraically equivalent form
    ``psi' = (1 kron g) + M (psi - 1 kron g)``, one matrix-vector
    product per step.

    Args:
        state: State at instant k.
        spec: Per-agent costs (supplies the gradient).
        ops: Lifted operators of the communication topology.
        beta: Step gain, positive.

    Returns:
        State at instant k + 1.
    """
    if beta <= 0.0:
        raise ValueError(f"step gain must be positive, got {beta}")
    g = gradient(spec, allocation(state, ops))
    stacked = np.tile(g, ops.n)
    xi_next = state.xi + beta * (ops.l_hat0 @ state.psi)
    psi_next = stacked + ops.m @ (state.psi - stacked)
    return replace(state, xi=xi_next, psi=psi_next, k=state.k + 1)


def observer_error(
    state: DirectedProtocolState, spec: ObjectiveSpec, ops: LiftedOperators
) -> ObserverError:
    """Observer deviation e_psi = psi - 1_n kron grad f(x) at the state."""
    g = gradient(spec, allocation(state, ops))
    return ObserverError(e_psi=state.psi - np.tile(g, ops.n))


# ---------------------------------------------------------------------------
# Certificates
# ---------------------------------------------------------------------------


def lyapunov_weight(m: np.ndarray) -> np.ndarray:
    """Solve ``M^T W M - W = -I`` for the unique symmetric positive definite W.

    Two independent routes are computed on every call and must agree:
    the convergent series ``sum_j (M^T)^j M^j`` truncated when a term's
    norm drops below 1e-14, and the vectorized dense solve
    ``(I - M^T kron M^T) vec(W) = vec(I)``. The agreement check guards
    both routes against implementation drift; the series result,
    symmetrized, is returned after a residual check.

    Args:
        m: Square iteration matrix with spectral radius < 1.

    Returns:
        W, symmetric positive definite.

    Raises:
        ValueError: spectral radius >= 1, disagreement between the two
            routes, a residual above 1e-8 * ||W||, or a state dimension
            too large for the dense vectorized route.
    """
    m = np.asarray(m, dtype=float)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {m.shape}")
    dim = m.shape[0]
    if dim > _MAX_LIFTED_DIM:
        raise ValueError(
            f"state dimension {dim} exceeds the dense-certificate limit "
            f"{_MAX_LIFTED_DIM}"
        )
    rho = float(np.max(np.abs(np.linalg.eigvals(m))))
    if rho >= 1.0:
        raise ValueError(
            f"iteration matrix has spectral radius {rho:.6f} >= 1; "
            "no Lyapunov weight exists"
        )
    w_series = _weight_by_series(m)
    w_kron = _weight_by_kron_solve(m)
    scale = max(1.0, float(np.max(np.abs(w_series))))
    gap = float(np.max(np.abs(w_series - w_kron)))
    if gap > 1e-8 * scale:
        raise ValueError(
            f"series and vectorized Lyapunov solutions disagree by {gap:.3e}"
        )
    w = 0.5 * (w_series + w_series.T)
    residual = float(np.max(np.abs(m.T @ w @ m - w + np.eye(dim))))
    if residual > 1e-8 * spectral_norm(w):
        raise ValueError(f"Lyapunov residual {residual:.3e} out of tolerance")
    w.setflags(write=False)
    return w


def _weight_by_series(m: np.ndarray) -> np.ndarray:
    """Accumulate sum_j (M^T)^j M^j until the terms fall below tolerance."""
    dim = m.shape[0]
    w = np.eye(dim)
    power = m.copy()
    for _ in range(_SERIES_MAX_TERMS):
        term = power.T @ power
        w += term
        if float(np.linalg.norm(term)) < _SERIES_TOL:
            return w
        power = power @ m
    raise ValueError("Lyapunov series did not converge; spectral radius too close to 1")


def _weight_by_kron_solve(m: np.ndarray) -> np.ndarray:
    """Solve (I - M^T kron M^T) vec(W) = vec(I) densely."""
    dim = m.shape[0]
    system = np.eye(dim * dim) - np.kron(m.T, m.T)
    vec_w = np.linalg.solve(system, np.eye(dim).reshape(-1))
    return vec_w.reshape(dim, dim)


def beta_max(t: DirectedTopology, l: float, w: np.ndarray) -> float:
    """Largest certified step gain for the directed iteration.

    The bound is the minimum of three terms built from the operator
    norms of the topology, the gradient Lipschitz constant l, and the
    Lyapunov weight:

        1 / (2*||L_hat0||^2 * (1 + 4*l^2*b*||L_O||^2 + 2*l*||L_O||^2))
        1 / (4 * (2*l^2*b*||L_O||^2 + l*||L_O||^2))
        1

    with b = (2*||M^T W||^2 + ||W||) * n.
    """
    if l <= 0.0 or not math.isfinite(l):
        raise ValueError(f"Lipschitz constant must be positive, got {l}")
    bound, _ = _step_bound(t, l, w)
    return bound


def _step_bound(t: DirectedTopology, l: float, w: np.ndarray) -> tuple[float, float]:
    """(beta_max, b_const) for the topology, Lipschitz constant, and weight."""
    ops = lifted_operators(t)
    lo_sq = spectral_norm(ops.l_out) ** 2
    lhat_sq = spectral_norm(ops.l_hat0) ** 2
    w_norm = spectral_norm(w)
    mtw_norm = spectral_norm(ops.m.T @ w)
    b_const = (2.0 * mtw_norm**2 + w_norm) * t.n
    first = 1.0 / (2.0 * lhat_sq * (1.0 + 4.0 * l**2 * b_const * lo_sq + 2.0 * l * lo_sq))
    second = 1.0 / (4.0 * (2.0 * l**2 * b_const * lo_sq + l * lo_sq))
    return min(first, second, 1.0), b_const


def lyapunov_value(
    state: DirectedProtocolState,
    spec: ObjectiveSpec,
    ops: LiftedOperators,
    w: np.ndarray,
    f_star: float,
) -> float:
    """Lyapunov value ``e_psi^T W e_psi + f(x) - f_star`` at the state.

    Nonnegative along compliant runs up to roundoff of order -1e-9; no
    clamping is applied.
    """
    e = observer_error(state, spec, ops).e_psi
    return float(e @ w @ e + value(spec, allocation(state, ops)) - f_star)


def contraction_rate(
    beta: float, w: np.ndarray, l0: float, t: DirectedTopology
) -> float:
    """Certified per-step decay rate of the Lyapunov value.

    Returns ``min(1/(4*||W||), beta*l0*lambda2(L_O^T L_O)/8)``, the rate
    epsilon for which compliant runs satisfy V_k <= (1-epsilon)^k * V_0.
    """
    if beta <= 0.0 or l0 <= 0.0:
        raise ValueError("step gain and curvature bound must be positive")
    lo = laplacian_out(t)
    lam2 = lambda2_min_nonzero(lo.T @ lo)
    epsilon = min(1.0 / (4.0 * spectral_norm(w)), beta * l0 * lam2 / 8.0)
    if not 0.0 < epsilon < 1.0:
        raise ValueError(f"contraction rate {epsilon} outside (0,1); "
                         "inconsistent constants")
    return epsilon


def accuracy_bound(v0: float, epsilon: float, k_eps: int) -> float:
    """Certified gap ``f(x(T_c)) - f_star <= (1-epsilon)^k_eps * V0``.

    This is the residual Lyapunov value after the k_eps compressed
    sampling steps that precede the settling time.
    """
    if not 0.0 < epsilon <= 1.0:
        raise ValueError(f"contraction rate must lie in (0,1], got {epsilon}")
    if k_eps < 0 or int(k_eps) != k_eps:
        raise ValueError(f"step count must be a nonnegative integer, got {k_eps}")
    if v0 < 0.0:
        raise ValueError(f"initial Lyapunov value must be nonnegative, got {v0}")
    return (1.0 - epsilon) ** int(k_eps) * v0


def certify(
    t: DirectedTopology,
    spec: ObjectiveSpec,
    beta: float | None = None,
    domain: tuple[float, float] | None = None,
    ops: LiftedOperators | None = None,
) -> DirectedCertificate:
    """Build the full certificate bundle for a topology and cost spec.

    Args:
        t: Strongly connected topology.
        spec: Per-agent costs.
        beta: Step gain to certify; defaults to the computed beta_max.
            Gains above beta_max are accepted here (the certificate
            records them); enforcing the bound is the caller's policy.
        domain: Working domain for the curvature constants.
        ops: Precomputed lifted operators, if the caller already has
            them.

    Returns:
        DirectedCertificate with beta_max, the chosen beta, W, b_const,
        and the contraction rate for the chosen beta.
    """
    if ops is None:
        ops = lifted_operators(t)
    l0, l = global_constants(spec, domain)
    w = lyapunov_weight(ops.m)
    bound, b_const = _step_bound(t, l, w)
    chosen = bound if beta is None else float(beta)
    epsilon = contraction_rate(chosen, w, l0, t)
    return DirectedCertificate(
        beta_max=bound, beta=chosen, w=w, b_const=b_const, epsilon=epsilon
    )
