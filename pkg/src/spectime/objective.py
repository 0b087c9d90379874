"""Per-agent convex costs, curvature constants, and the optimum oracle.

Each agent i holds a scalar cost f_i. The network minimizes
``sum_i f_i(x_i)`` subject to ``sum_i x_i = C``. Under strong convexity
the optimum is the unique point where all marginal costs f_i'(x_i)
share one value nu; that equal-marginal-cost characterization is what
``kkt_oracle`` solves, and every convergence check in the package is
grounded in its output.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Iterable, Sequence

import numpy as np

__all__ = [
    "DEFAULT_DOMAIN",
    "QuadraticCost",
    "CallableCost",
    "ObjectiveSpec",
    "OptimumCertificate",
    "value",
    "gradient",
    "global_constants",
    "kkt_oracle",
]

# Interval on which curvature bounds are certified when none is given.
DEFAULT_DOMAIN = (-1e6, 1e6)

# Grid size for spot-checking declared curvature bounds of generic costs.
_CURVATURE_SAMPLES = 129

# Residual tolerance for the equal-marginal-cost root find, scaled by
# max(1, |C|).
_BALANCE_TOL = 1e-10


@dataclass(frozen=True)
class QuadraticCost:
    """Cost ``a*x**2 + b*x + c`` with constant curvature ``2a``."""

    a: float
    b: float
    c: float

    def value(self, x: float) -> float:
        return (self.a * x + self.b) * x + self.c

    def derivative(self, x: float) -> float:
        return 2.0 * self.a * x + self.b

    def curvature(self, x: float) -> float:
        return 2.0 * self.a


@dataclass(frozen=True)
class CallableCost:
    """Cost given by callables for the value and its first two derivatives."""

    value_fn: Callable[[float], float]
    derivative_fn: Callable[[float], float]
    curvature_fn: Callable[[float], float]

    def value(self, x: float) -> float:
        return float(self.value_fn(x))

    def derivative(self, x: float) -> float:
        return float(self.derivative_fn(x))

    def curvature(self, x: float) -> float:
        return float(self.curvature_fn(x))


@dataclass(frozen=True)
class ObjectiveSpec:
    """Immutable bundle of n per-agent costs.

    ``form`` is "quadratic" when every cost is a QuadraticCost (closed
    forms available) and "generic" otherwise. Generic specs must declare
    the curvature bounds (l0, l) they promise to satisfy on the working
    domain; ``global_constants`` spot-checks the promise.
    """

    costs: tuple
    form: str
    declared_l0: float | None = None
    declared_l: float | None = None

    @property
    def n(self) -> int:
        return len(self.costs)

    @staticmethod
    def quadratic(coefficients: Iterable[Sequence[float]]) -> "ObjectiveSpec":
        """Build a quadratic spec from ``(a, b, c)`` triples.

        Raises:
            ValueError: if any leading coefficient is not strictly
                positive (the costs would not be strongly convex).
        """
        costs = []
        for i, coeff in enumerate(coefficients):
            a, b, c = (float(v) for v in coeff)
            if not np.isfinite([a, b, c]).all():
                raise ValueError(f"cost {i + 1} has non-finite coefficients")
            if a <= 0.0:
                raise ValueError(
                    f"cost {i + 1} has a = {a}; strong convexity needs a > 0"
                )
            costs.append(QuadraticCost(a, b, c))
        if not costs:
            raise ValueError("at least one cost is required")
        return ObjectiveSpec(costs=tuple(costs), form="quadratic")

    @staticmethod
    def generic(
        costs: Iterable[CallableCost], l0: float, l: float
    ) -> "ObjectiveSpec":
        """Build a generic spec with declared curvature bounds ``l0 <= f'' <= l``."""
        costs = tuple(costs)
        if not costs:
            raise ValueError("at least one cost is required")
        l0 = float(l0)
        l = float(l)
        if not (0.0 < l0 <= l) or not np.isfinite(l):
            raise ValueError(f"curvature bounds must satisfy 0 < l0 <= l, got ({l0}, {l})")
        return ObjectiveSpec(
            costs=costs, form="generic", declared_l0=l0, declared_l=l
        )


@dataclass(frozen=True, eq=False)
class OptimumCertificate:
    """Constrained optimum: minimizer, common marginal cost, optimal value.

    ``nu_star`` is the shared gradient value f_i'(x*_i); it equals the
    negated Lagrange multiplier of the equality constraint, stored as
    the gradient value to avoid a sign-convention trap.
    """

    x_star: np.ndarray
    nu_star: float
    f_star: float


# ---------------------------------------------------------------------------
# Evaluation
# ---------------------------------------------------------------------------


def value(spec: ObjectiveSpec, x: np.ndarray) -> float:
    """Total cost ``sum_i f_i(x_i)``."""
    xv = _check_point(spec, x)
    return float(sum(cost.value(float(xi)) for cost, xi in zip(spec.costs, xv)))


def gradient(spec: ObjectiveSpec, x: np.ndarray) -> np.ndarray:
    """Stacked marginal costs: component i is f_i'(x_i)."""
    xv = _check_point(spec, x)
    return np.array(
        [cost.derivative(float(xi)) for cost, xi in zip(spec.costs, xv)]
    )


def _check_point(spec: ObjectiveSpec, x: np.ndarray) -> np.ndarray:
    """One float per agent, as an array."""
    xv = np.asarray(x, dtype=float)
    if xv.shape != (spec.n,):
        raise ValueError(f"expected shape ({spec.n},), got {xv.shape}")
    return xv


def global_constants(
    spec: ObjectiveSpec, domain: tuple[float, float] | None = None
) -> tuple[float, float]:
    """Curvature bounds (l0, l) valid on the working domain.

    Quadratic specs return exact bounds ``(2 min a_i, 2 max a_i)``.
    Generic specs return their declared bounds after sampling every
    cost's second derivative on a grid over the domain; a sample outside
    the declared range fails loudly rather than producing certificates
    that the data contradicts.

    Args:
        spec: Cost bundle.
        domain: Closed interval on which the bounds must hold; defaults
            to DEFAULT_DOMAIN.

    Returns:
        Tuple (l0, l) with 0 < l0 <= l.

    Raises:
        ValueError: nonconvexity (sampled curvature below l0) or a
            curvature sample above l.
    """
    lo, hi = _check_domain(domain)
    if spec.form == "quadratic":
        curvatures = [2.0 * cost.a for cost in spec.costs]
        l0 = min(curvatures)
        if l0 <= 0.0:
            raise ValueError("nonconvex cost: smallest curvature is not positive")
        return l0, max(curvatures)
    if spec.declared_l0 is None or spec.declared_l is None:
        raise ValueError("generic costs need declared curvature bounds")
    grid = np.linspace(lo, hi, _CURVATURE_SAMPLES)
    slack = 1e-9 * max(1.0, spec.declared_l)
    for i, cost in enumerate(spec.costs):
        samples = np.array([cost.curvature(float(g)) for g in grid])
        low = float(samples.min())
        high = float(samples.max())
        if low < spec.declared_l0 - slack:
            raise ValueError(
                f"cost {i + 1} curvature {low:.6g} falls below the declared "
                f"lower bound {spec.declared_l0:.6g}; nonconvexity on the domain"
            )
        if high > spec.declared_l + slack:
            raise ValueError(
                f"cost {i + 1} curvature {high:.6g} exceeds the declared "
                f"upper bound {spec.declared_l:.6g}"
            )
    return spec.declared_l0, spec.declared_l


def _check_domain(domain: tuple[float, float] | None) -> tuple[float, float]:
    """Validated (lo, hi) with lo < hi."""
    if domain is None:
        return DEFAULT_DOMAIN
    lo, hi = float(domain[0]), float(domain[1])
    if not np.isfinite([lo, hi]).all() or lo >= hi:
        raise ValueError(f"domain must be a finite interval, got ({lo}, {hi})")
    return lo, hi


# ---------------------------------------------------------------------------
# Constrained optimum
# ---------------------------------------------------------------------------


def kkt_oracle(
    spec: ObjectiveSpec,
    c: float,
    domain: tuple[float, float] | None = None,
    method: str = "auto",
) -> OptimumCertificate:
    """Solve ``min sum f_i(x_i)`` subject to ``sum x_i = C``.

    At the optimum every marginal cost equals one value nu. Quadratic
    specs admit the closed form

        nu = (C + sum b_i/(2 a_i)) / (sum 1/(2 a_i)),   x_i = (nu - b_i)/(2 a_i).

    Otherwise nu is found by bisection on the strictly increasing
    supply balance g(nu) = sum_i (f_i')^{-1}(nu) - C, each inverse
    itself a monotone bisection over the working domain, iterated until
    |g| <= 1e-10 * max(1, |C|).

    Args:
        spec: Cost bundle.
        c: Demand to be met exactly.
        domain: Working interval for the derivative inverses; defaults
            to DEFAULT_DOMAIN.
        method: "auto" (closed form when quadratic), "closed-form", or
            "bisection".

    Returns:
        OptimumCertificate whose residuals are verified before return.

    Raises:
        ValueError: unknown method, closed form requested for generic
            costs, no sign-changing bracket within the expansion budget,
            or certificate residuals out of tolerance (which signals a
            violated convexity assumption).
    """
    c = float(c)
    if not np.isfinite(c):
        raise ValueError("demand must be finite")
    if method not in ("auto", "closed-form", "bisection"):
        raise ValueError(f"unknown method {method!r}")
    if method == "closed-form" and spec.form != "quadratic":
        raise ValueError("closed form requires quadratic costs")
    if method in ("auto", "closed-form") and spec.form == "quadratic":
        x_star, nu = _solve_closed_form(spec, c)
    else:
        x_star, nu = _solve_bisection(spec, c, _check_domain(domain))
    certificate = OptimumCertificate(
        x_star=x_star, nu_star=nu, f_star=value(spec, x_star)
    )
    _check_certificate(spec, certificate, c)
    return certificate


def _solve_closed_form(spec: ObjectiveSpec, c: float) -> tuple[np.ndarray, float]:
    """Equal marginal cost in closed form for quadratics."""
    a = np.array([cost.a for cost in spec.costs])
    b = np.array([cost.b for cost in spec.costs])
    inv2a = 1.0 / (2.0 * a)
    nu = (c + float(b @ inv2a)) / float(inv2a.sum())
    return (nu - b) * inv2a, float(nu)


def _solve_bisection(
    spec: ObjectiveSpec, c: float, domain: tuple[float, float]
) -> tuple[np.ndarray, float]:
    """Bisection on the supply balance g(nu) = sum (f_i')^{-1}(nu) - C."""
    lo, hi = domain
    derivs_lo = [cost.derivative(lo) for cost in spec.costs]
    derivs_hi = [cost.derivative(hi) for cost in spec.costs]
    for i, (dlo, dhi) in enumerate(zip(derivs_lo, derivs_hi)):
        if dlo >= dhi:
            raise ValueError(
                f"cost {i + 1} has a non-increasing derivative on the domain; "
                "the balance equation is not monotone"
            )

    tol = _BALANCE_TOL * max(1.0, abs(c))

    def balance(nu: float) -> float:
        supply = sum(
            _inverse_derivative(cost, nu, lo, hi) for cost in spec.costs
        )
        return supply - c

    nu_lo = min(derivs_lo)
    nu_hi = max(derivs_hi)
    span = max(nu_hi - nu_lo, 1.0)
    for _ in range(60):
        if balance(nu_lo) <= 0.0:
            break
        nu_lo -= span
        span *= 2.0
    else:
        raise ValueError("no bracket found: demand below reachable supply")
    span = max(nu_hi - nu_lo, 1.0)
    for _ in range(60):
        if balance(nu_hi) >= 0.0:
            break
        nu_hi += span
        span *= 2.0
    else:
        raise ValueError("no bracket found: demand above reachable supply")

    g_mid = balance(0.5 * (nu_lo + nu_hi))
    for _ in range(2000):
        mid = 0.5 * (nu_lo + nu_hi)
        g_mid = balance(mid)
        if g_mid >= 0.0:
            nu_hi = mid
        else:
            nu_lo = mid
        # Keep halving past the residual target until nu is resolved to
        # roundoff, so downstream x components inherit full precision.
        if abs(g_mid) <= tol and (nu_hi - nu_lo) <= 1e-14 * max(1.0, abs(mid)):
            break
    nu = 0.5 * (nu_lo + nu_hi)
    if abs(balance(nu)) > tol:
        raise ValueError("balance equation did not converge; check convexity bounds")
    x = np.array([_inverse_derivative(cost, nu, lo, hi) for cost in spec.costs])
    return x, float(nu)


def _inverse_derivative(cost, nu: float, lo: float, hi: float) -> float:
    """The x in [lo, hi] with f'(x) = nu, clamped at the interval ends."""
    if nu <= cost.derivative(lo):
        return lo
    if nu >= cost.derivative(hi):
        return hi
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if cost.derivative(mid) < nu:
            lo = mid
        else:
            hi = mid
        if (hi - lo) <= 1e-16 * max(1.0, abs(mid)):
            break
    return 0.5 * (lo + hi)


def _check_certificate(
    spec: ObjectiveSpec, certificate: OptimumCertificate, c: float
) -> None:
    """Reject solutions whose residuals contradict the convexity assumptions."""
    residual = abs(float(certificate.x_star.sum()) - c)
    if residual > 1e-9 * max(1.0, abs(c)):
        raise ValueError(
            f"optimum violates the demand constraint by {residual:.3e}"
        )
    marginals = gradient(spec, certificate.x_star)
    spread = float(np.max(np.abs(marginals - certificate.nu_star)))
    if spread > 1e-8 * max(1.0, abs(certificate.nu_star)):
        raise ValueError(
            f"marginal costs differ from the common value by {spread:.3e}; "
            "the costs may violate the convexity assumptions"
        )
