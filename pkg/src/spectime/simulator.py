"""Scenario execution over sampling schedules.

run() drives one protocol from t = 0 to a wall-clock horizon, recording
every sampling instant strictly below the horizon plus one lookahead
state at the first instant past it. Between instants the trajectory is
fully determined: the allocation is piecewise-constant on left-closed
intervals and the auxiliary variables flow linearly, so sample_at() can
reconstruct the state at any time without re-simulation. verify_trace()
re-checks every certified guarantee on a finished trace and reports
failures instead of raising, which is what makes deliberately unsafe
runs inspectable.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import protocol_directed as directed
from . import protocol_undirected as undirected
from .graph import (
    DirectedTopology,
    is_strongly_connected,
    is_symmetric,
    laplacian_in,
    lifted_operators,
)
from .objective import ObjectiveSpec, global_constants, gradient, kkt_oracle, value
from .schedule import SamplingSchedule, iter_instants, steps_before

__all__ = [
    "Scenario",
    "TraceRecord",
    "CertificateBlock",
    "LookaheadState",
    "SimulationTrace",
    "SamplePoint",
    "CheckResult",
    "VerificationReport",
    "ScenarioError",
    "DivergedError",
    "InvariantBreachError",
    "run",
    "sample_at",
    "verify_trace",
]

_PROTOCOLS = ("directed", "undirected")

# Conserved-total drift allowed at any record, relative to max(1, |C|).
_RESIDUAL_TOL = 1e-9
# Declared demand must match sum(x0) this tightly (relative).
_DEMAND_TOL = 1e-12
# Multiplicative slack on the geometric envelope.
_ENVELOPE_SLACK = 1e-6
# Absolute noise floor for cost-gap comparisons, relative to max(1, |f*|).
_GAP_FLOOR = 1e-12
# A run counts as converged when the final cost gap is below this
# (relative to max(1, |f*|)); only then is observer consensus testable.
_CONVERGED_GAP = 1e-8
# Observer deviation allowed at convergence, relative to max(1, |nu*|).
_CONSENSUS_TOL = 1e-3


class ScenarioError(ValueError):
    """The scenario violates a precondition and was rejected."""


class DivergedError(RuntimeError):
    """The state left the finite range, typically under an unsafe step gain."""


class InvariantBreachError(RuntimeError):
    """A conserved quantity drifted beyond tolerance; indicates a bug."""


# ---------------------------------------------------------------------------
# Scenario
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class Scenario:
    """Everything one run needs.

    ``c`` is the total demand. It must equal ``sum(x0)`` to within
    1e-12 relative: the iteration conserves the total exactly, so it
    can only meet the demand it starts on. The directed protocol needs
    a strongly connected topology; the undirected protocol needs a
    connected symmetric one. ``beta`` defaults to the certified bound
    when omitted; a larger value is rejected unless ``unsafe_beta`` is
    set.
    """

    topology: DirectedTopology
    objective: ObjectiveSpec
    x0: np.ndarray
    c: float
    schedule: SamplingSchedule
    protocol: str
    horizon: float
    beta: float | None = None
    unsafe_beta: bool = False
    name: str | None = None

    def __post_init__(self) -> None:
        if self.protocol not in _PROTOCOLS:
            raise ScenarioError(
                f"unknown protocol {self.protocol!r}; choose one of {_PROTOCOLS}"
            )
        x0 = np.asarray(self.x0, dtype=float).copy()
        if x0.ndim != 1:
            raise ScenarioError(f"x0 must be a vector, got shape {x0.shape}")
        if x0.size != self.topology.n:
            raise ScenarioError(
                f"x0 has {x0.size} entries for {self.topology.n} agents"
            )
        if not np.all(np.isfinite(x0)):
            raise ScenarioError("x0 must be finite")
        x0.setflags(write=False)
        object.__setattr__(self, "x0", x0)
        if self.objective.n != self.topology.n:
            raise ScenarioError(
                f"{self.objective.n} cost functions for {self.topology.n} agents"
            )
        c = float(self.c)
        total = float(np.sum(x0))
        if not math.isfinite(c) or abs(c - total) > _DEMAND_TOL * max(1.0, abs(c)):
            raise ScenarioError(
                f"declared demand C = {c!r} does not equal sum(x0) = {total!r}"
            )
        object.__setattr__(self, "c", c)
        horizon = float(self.horizon)
        if not math.isfinite(horizon) or horizon <= 0.0:
            raise ScenarioError(
                f"horizon must be a positive duration, got {self.horizon}"
            )
        object.__setattr__(self, "horizon", horizon)
        if self.beta is not None:
            beta = float(self.beta)
            if not math.isfinite(beta) or beta <= 0.0:
                raise ScenarioError(
                    f"step gain must be positive and finite, got {self.beta}"
                )
            object.__setattr__(self, "beta", beta)
        object.__setattr__(self, "unsafe_beta", bool(self.unsafe_beta))
        if self.protocol == "undirected" and not is_symmetric(self.topology):
            raise ScenarioError(
                "undirected protocol on an asymmetric topology; every edge "
                "needs an equal-weight reverse edge"
            )
        if not is_strongly_connected(self.topology):
            if self.protocol == "directed":
                raise ScenarioError(
                    "graph is not strongly connected; the directed protocol "
                    "requires it"
                )
            raise ScenarioError(
                "graph is not connected; the undirected protocol requires it"
            )

    @property
    def n(self) -> int:
        return self.topology.n


# ---------------------------------------------------------------------------
# Trace types
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class TraceRecord:
    """Snapshot at one sampling instant.

    ``interval`` is the sampling gap that ended at ``t`` (zero at
    k = 0). ``v`` is the Lyapunov value on directed runs and the cost
    gap on undirected ones; ``e_psi_norm`` is NaN when there is no
    observer stack. ``xi`` and ``psi`` are None on traces reconstructed
    from files (``psi`` also when not requested at run time).
    """

    k: int
    t: float
    interval: float
    x: np.ndarray
    f: float
    constraint_residual: float
    v: float
    e_psi_norm: float
    xi: np.ndarray | None = None
    psi: np.ndarray | None = None


@dataclass(frozen=True, eq=False)
class CertificateBlock:
    """Analytical guarantees attached to a trace.

    NaN marks fields that do not apply: ``rate_factor`` on directed
    runs, ``epsilon`` on undirected runs, ``accuracy_bound`` outside
    truncated schedules, and every bound on single-agent networks.
    """

    protocol: str
    beta: float
    beta_max: float
    epsilon: float
    rate_factor: float
    accuracy_bound: float
    f_star: float
    nu_star: float
    x_star: np.ndarray
    v0: float
    gap0: float
    l0: float
    l: float

    @property
    def envelope_base(self) -> float:
        """Per-step factor of the certified geometric envelope."""
        if self.protocol == "directed":
            return 1.0 - self.epsilon
        return self.rate_factor


@dataclass(frozen=True, eq=False)
class LookaheadState:
    """First state at or past the horizon, kept for interpolation."""

    k: int
    t: float
    x: np.ndarray
    xi: np.ndarray
    psi: np.ndarray | None


@dataclass(frozen=True, eq=False)
class SimulationTrace:
    """Records below the horizon, certificates, and the lookahead state."""

    records: tuple[TraceRecord, ...]
    certificate: CertificateBlock
    lookahead: LookaheadState | None


@dataclass(frozen=True, eq=False)
class SamplePoint:
    """Trajectory values at one wall-clock time."""

    t: float
    x: np.ndarray
    xi: np.ndarray
    psi: np.ndarray | None


# ---------------------------------------------------------------------------
# Execution
# ---------------------------------------------------------------------------


def run(sc: Scenario, record_psi: bool = False) -> SimulationTrace:
    """Execute a scenario and return its full diagnostic trace.

    Certificates are computed once up front. The protocol is stepped at
    every sampling instant strictly below the horizon; one extra step
    produces the lookahead state so the final partial interval can be
    interpolated. Sampling times come from the schedule's compensated
    partial sums, never from repeated addition here.

    Args:
        sc: Validated scenario.
        record_psi: Store the full observer stack at every record
            (directed runs only). The scalar deviation norm is always
            recorded.

    Returns:
        SimulationTrace. Running the same scenario twice gives
        bit-identical traces.

    Raises:
        ZenoUnboundedError: basel or power schedule whose horizon
            reaches the accumulation time.
        ScenarioError: step gain above the certified bound without the
            unsafe flag.
        DivergedError: non-finite state, typically from an unsafe gain.
        InvariantBreachError: conserved total drifted on a compliant
            run (internal error).
    """
    total = steps_before(sc.schedule, sc.horizon)
    # Divergence shows up as a non-finite state at the next instant; the
    # matmul that overflows on the way there should not also warn.
    with np.errstate(over="ignore", invalid="ignore"):
        if sc.n == 1:
            return _run_single_agent(sc, record_psi, total)
        if sc.protocol == "directed":
            return _run_directed(sc, record_psi, total)
        return _run_undirected(sc, total)


def _run_directed(sc: Scenario, record_psi: bool, total: int) -> SimulationTrace:
    ops = lifted_operators(sc.topology)
    core = directed.certify(sc.topology, sc.objective, beta=sc.beta, ops=ops)
    _enforce_gain(sc, core.beta, core.beta_max)
    kkt = kkt_oracle(sc.objective, sc.c)
    l0, l = global_constants(sc.objective)
    state = directed.initial_state(sc.x0)
    v0 = directed.lyapunov_value(state, sc.objective, ops, core.w, kkt.f_star)
    gap0 = float(value(sc.objective, sc.x0) - kkt.f_star)
    if sc.schedule.kind == "truncated":
        acc = directed.accuracy_bound(max(v0, 0.0), core.epsilon, sc.schedule.k_eps)
    else:
        acc = math.nan
    cert = CertificateBlock(
        protocol="directed",
        beta=core.beta,
        beta_max=core.beta_max,
        epsilon=core.epsilon,
        rate_factor=math.nan,
        accuracy_bound=acc,
        f_star=kkt.f_star,
        nu_star=kkt.nu_star,
        x_star=kkt.x_star,
        v0=v0,
        gap0=gap0,
        l0=l0,
        l=l,
    )
    records: list[TraceRecord] = []
    lookahead = None
    hard_check = not sc.unsafe_beta
    tol = _RESIDUAL_TOL * max(1.0, abs(sc.c))
    for k, t, interval in iter_instants(sc.schedule):
        x = directed.allocation(state, ops)
        f = value(sc.objective, x)
        _guard_finite(k, t, x, f, state.xi, state.psi)
        e = state.psi - np.tile(gradient(sc.objective, x), sc.n)
        v = float(e @ core.w @ e + f - kkt.f_star)
        resid = _residual(x, sc.c)
        if k >= total:
            lookahead = LookaheadState(k=k, t=t, x=x, xi=state.xi, psi=state.psi)
            break
        if hard_check and abs(resid) > tol:
            raise InvariantBreachError(
                f"constraint residual {resid:.3e} at step {k} exceeds "
                f"{tol:.3e}; internal error"
            )
        records.append(
            TraceRecord(
                k=k,
                t=t,
                interval=interval,
                x=x,
                f=f,
                constraint_residual=resid,
                v=v,
                e_psi_norm=float(np.linalg.norm(e)),
                xi=state.xi,
                psi=state.psi if record_psi else None,
            )
        )
        state = directed.step(state, sc.objective, ops, core.beta)
    return SimulationTrace(records=tuple(records), certificate=cert, lookahead=lookahead)


def _run_undirected(sc: Scenario, total: int) -> SimulationTrace:
    lap = laplacian_in(sc.topology)
    l0, l = global_constants(sc.objective)
    bound = undirected.beta_max_undirected(l, sc.topology)
    beta = bound if sc.beta is None else sc.beta
    _enforce_gain(sc, beta, bound)
    try:
        factor = undirected.rate_bound_undirected(beta, l0, lap)
    except ValueError:
        factor = math.nan  # reachable only under the unsafe flag
    kkt = kkt_oracle(sc.objective, sc.c)
    gap0 = float(value(sc.objective, sc.x0) - kkt.f_star)
    if sc.schedule.kind == "truncated":
        acc = factor ** sc.schedule.k_eps * max(gap0, 0.0)
    else:
        acc = math.nan
    cert = CertificateBlock(
        protocol="undirected",
        beta=beta,
        beta_max=bound,
        epsilon=math.nan,
        rate_factor=factor,
        accuracy_bound=acc,
        f_star=kkt.f_star,
        nu_star=kkt.nu_star,
        x_star=kkt.x_star,
        v0=gap0,
        gap0=gap0,
        l0=l0,
        l=l,
    )
    records: list[TraceRecord] = []
    lookahead = None
    hard_check = not sc.unsafe_beta
    tol = _RESIDUAL_TOL * max(1.0, abs(sc.c))
    state = undirected.initial_state(sc.x0)
    for k, t, interval in iter_instants(sc.schedule):
        x = undirected.allocation(state, lap)
        f = value(sc.objective, x)
        _guard_finite(k, t, x, f, state.xi)
        v = float(f - kkt.f_star)
        resid = _residual(x, sc.c)
        if k >= total:
            lookahead = LookaheadState(k=k, t=t, x=x, xi=state.xi, psi=None)
            break
        if hard_check and abs(resid) > tol:
            raise InvariantBreachError(
                f"constraint residual {resid:.3e} at step {k} exceeds "
                f"{tol:.3e}; internal error"
            )
        records.append(
            TraceRecord(
                k=k,
                t=t,
                interval=interval,
                x=x,
                f=f,
                constraint_residual=resid,
                v=v,
                e_psi_norm=math.nan,
                xi=state.xi,
            )
        )
        state = undirected.step_undirected(state, sc.objective, lap, beta)
    return SimulationTrace(records=tuple(records), certificate=cert, lookahead=lookahead)


def _run_single_agent(sc: Scenario, record_psi: bool, total: int) -> SimulationTrace:
    """Degenerate n = 1 path: the constraint pins the only variable.

    Nothing is stepped and no bounds exist, so every certificate field
    that needs the network is NaN and v degenerates to the cost gap,
    which is zero up to the optimum solver's roundoff.
    """
    kkt = kkt_oracle(sc.objective, sc.c)
    l0, l = global_constants(sc.objective)
    f0 = value(sc.objective, sc.x0)
    gap = float(f0 - kkt.f_star)
    on_directed = sc.protocol == "directed"
    e_norm = float(np.abs(gradient(sc.objective, sc.x0)[0])) if on_directed else math.nan
    cert = CertificateBlock(
        protocol=sc.protocol,
        beta=math.nan if sc.beta is None else sc.beta,
        beta_max=math.nan,
        epsilon=math.nan,
        rate_factor=math.nan,
        accuracy_bound=math.nan,
        f_star=kkt.f_star,
        nu_star=kkt.nu_star,
        x_star=kkt.x_star,
        v0=gap,
        gap0=gap,
        l0=l0,
        l=l,
    )
    xi = np.zeros(1)
    psi = np.zeros(1) if on_directed else None
    resid = _residual(sc.x0, sc.c)
    records: list[TraceRecord] = []
    lookahead = None
    for k, t, interval in iter_instants(sc.schedule):
        if k >= total:
            lookahead = LookaheadState(k=k, t=t, x=sc.x0, xi=xi, psi=psi)
            break
        records.append(
            TraceRecord(
                k=k,
                t=t,
                interval=interval,
                x=sc.x0,
                f=f0,
                constraint_residual=resid,
                v=gap,
                e_psi_norm=e_norm,
                xi=xi,
                psi=psi if record_psi else None,
            )
        )
    return SimulationTrace(records=tuple(records), certificate=cert, lookahead=lookahead)


def _enforce_gain(sc: Scenario, beta: float, bound: float) -> None:
    """Reject step gains above the certified bound unless flagged unsafe."""
    if sc.beta is None or sc.unsafe_beta:
        return
    if beta > bound:
        raise ScenarioError(
            f"step gain {beta!r} exceeds the certified bound {bound!r}; "
            "set unsafe_beta to run it anyway"
        )


def _guard_finite(k: int, t: float, *values: np.ndarray | float) -> None:
    """Abort the run the moment any state value stops being finite."""
    for val in values:
        if not np.all(np.isfinite(val)):
            raise DivergedError(
                f"non-finite state at step {k} (t = {t:.6g}); the run diverged"
            )


def _residual(x: np.ndarray, c: float) -> float:
    """Signed drift of the conserved total from the demand."""
    return float(np.sum(x) - c)


# ---------------------------------------------------------------------------
# Trajectory reconstruction
# ---------------------------------------------------------------------------


def sample_at(tr: SimulationTrace, sc: Scenario, t: float) -> SamplePoint:
    """Trajectory values at wall-clock time ``t``.

    The allocation holds its latest sampled value on each left-closed
    interval; the auxiliary variables move linearly between consecutive
    instants, which is the exact flow of the inter-sample dynamics.
    Needs a trace produced by run() in this process (reconstructed
    traces lack the auxiliary state).

    Args:
        tr: Trace from run().
        sc: The scenario it came from.
        t: Time in [0, horizon].

    Returns:
        SamplePoint; ``psi`` is None unless the run recorded observers.

    Raises:
        ValueError: t outside [0, horizon], or the trace lacks
            auxiliary state.
    """
    t = float(t)
    if not 0.0 <= t <= sc.horizon:
        raise ValueError(f"sample time {t} outside [0, {sc.horizon}]")
    if tr.lookahead is None or not tr.records or tr.records[0].xi is None:
        raise ValueError(
            "trace lacks auxiliary state; sample_at needs a trace from run()"
        )
    look = tr.lookahead
    with_psi = tr.records[0].psi is not None
    if t >= look.t:
        # Only reachable when the horizon lands exactly on an instant.
        return SamplePoint(t=t, x=look.x, xi=look.xi, psi=look.psi if with_psi else None)
    times = np.array([r.t for r in tr.records])
    idx = int(np.searchsorted(times, t, side="right")) - 1
    rec = tr.records[idx]
    if t == rec.t:
        return SamplePoint(t=t, x=rec.x, xi=rec.xi, psi=rec.psi)
    if idx + 1 < len(tr.records):
        nxt = tr.records[idx + 1]
        nxt_t, nxt_xi, nxt_psi = nxt.t, nxt.xi, nxt.psi
    else:
        nxt_t, nxt_xi, nxt_psi = look.t, look.xi, look.psi if with_psi else None
    lam = (t - rec.t) / (nxt_t - rec.t)
    xi = rec.xi + lam * (nxt_xi - rec.xi)
    psi = None
    if rec.psi is not None and nxt_psi is not None:
        psi = rec.psi + lam * (nxt_psi - rec.psi)
    return SamplePoint(t=t, x=rec.x, xi=xi, psi=psi)


# ---------------------------------------------------------------------------
# Verification
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class CheckResult:
    """One verification verdict; ``passed`` is None when not applicable."""

    name: str
    passed: bool | None
    detail: str


@dataclass(frozen=True, eq=False)
class VerificationReport:
    """Bundle of check verdicts for one trace."""

    checks: tuple[CheckResult, ...]

    @property
    def passed(self) -> bool:
        """True when no check failed (skipped checks do not count)."""
        return all(c.passed is not False for c in self.checks)


def verify_trace(tr: SimulationTrace, sc: Scenario) -> VerificationReport:
    """Re-check every certified guarantee on a finished trace.

    Failures are reported, never raised. Checks that do not apply to
    the run at hand (a rate envelope without a finite factor, accuracy
    at the settling time on a non-truncated schedule, observer
    consensus without observers) come back as skipped. The recomputed
    consistency checks repeat the exact arithmetic of run(), so they
    must match bitwise on an untampered trace, whether it lives in
    memory or was round-tripped through files.
    """
    cert = tr.certificate
    recs = tr.records
    f_arr = np.array([r.f for r in recs])
    v_arr = np.array([r.v for r in recs])
    k_arr = np.array([r.k for r in recs])
    t_arr = np.array([r.t for r in recs])
    resid_arr = np.array([r.constraint_residual for r in recs])
    e_arr = np.array([r.e_psi_norm for r in recs])
    n = recs[0].x.size
    checks: list[CheckResult] = []

    tol = _RESIDUAL_TOL * max(1.0, abs(sc.c))
    worst = float(np.max(np.abs(resid_arr)))
    checks.append(
        CheckResult(
            "constraint-conservation",
            worst <= tol,
            f"max |sum(x) - C| = {worst:.3e}, tolerance {tol:.3e}",
        )
    )

    gap = float(np.max(np.abs(np.array([_residual(r.x, sc.c) for r in recs]) - resid_arr)))
    checks.append(
        CheckResult(
            "residual-recompute",
            gap == 0.0,
            f"recomputed residuals differ from recorded by {gap:.3e}",
        )
    )

    gap = float(np.max(np.abs(np.array([value(sc.objective, r.x) for r in recs]) - f_arr)))
    checks.append(
        CheckResult(
            "cost-recompute",
            gap == 0.0,
            f"recomputed costs differ from recorded by {gap:.3e}",
        )
    )

    mono_name = "lyapunov-monotone" if cert.protocol == "directed" else "cost-monotone"
    allowed = 1e-9 * max(cert.v0, 0.0)
    rise = float(np.max(np.diff(v_arr))) if len(recs) > 1 else 0.0
    checks.append(
        CheckResult(
            mono_name,
            rise <= allowed,
            f"max per-step increase {rise:.3e}, allowed {allowed:.3e}",
        )
    )

    base = cert.envelope_base
    floor = _GAP_FLOOR * max(1.0, abs(cert.f_star))
    if math.isnan(base):
        checks.append(
            CheckResult(
                "geometric-envelope", None, "no finite contraction factor for this run"
            )
        )
    else:
        envelope = base ** k_arr.astype(float) * cert.v0 * (1.0 + _ENVELOPE_SLACK) + floor
        excess = float(np.max(v_arr - envelope))
        checks.append(
            CheckResult(
                "geometric-envelope",
                bool(np.all(v_arr <= envelope)),
                f"worst value minus envelope = {excess:.3e}",
            )
        )

    if sc.schedule.kind != "truncated" or sc.horizon < sc.schedule.t_c:
        checks.append(
            CheckResult(
                "accuracy-at-settling",
                None,
                "needs a truncated schedule with the horizon past the settling time",
            )
        )
    elif math.isnan(cert.accuracy_bound):
        checks.append(
            CheckResult("accuracy-at-settling", None, "no accuracy bound for this run")
        )
    else:
        idx = int(np.searchsorted(t_arr, sc.schedule.t_c, side="right")) - 1
        settled_gap = float(f_arr[idx] - cert.f_star)
        bound = cert.accuracy_bound + floor
        checks.append(
            CheckResult(
                "accuracy-at-settling",
                settled_gap <= bound,
                f"cost gap {settled_gap:.3e} at t = {t_arr[idx]:.6g}, "
                f"certified {cert.accuracy_bound:.3e}",
            )
        )

    if cert.protocol != "directed" or n == 1:
        checks.append(
            CheckResult("observer-consensus", None, "no observer stack in this run")
        )
    else:
        final_gap = float(f_arr[-1] - cert.f_star)
        converged = final_gap <= _CONVERGED_GAP * max(1.0, abs(cert.f_star))
        if not converged:
            checks.append(
                CheckResult(
                    "observer-consensus",
                    None,
                    f"final cost gap {final_gap:.3e}; consensus untested",
                )
            )
        else:
            limit = _CONSENSUS_TOL * max(1.0, abs(cert.nu_star))
            checks.append(
                CheckResult(
                    "observer-consensus",
                    float(e_arr[-1]) <= limit,
                    f"final observer deviation {float(e_arr[-1]):.3e}, "
                    f"allowed {limit:.3e}",
                )
            )

    return VerificationReport(checks=tuple(checks))
