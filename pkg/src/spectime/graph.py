"""Directed communication graphs and the operators derived from them.

Conventions, used consistently across the package:

* Nodes are numbered 1..n in user-facing edge lists and 0..n-1
  internally.
* ``weights[i, j] = a_ij > 0`` means the edge (j, i) is present, i.e.
  agent i receives values from agent j.
* In-degree of agent i is the row sum ``sum_j a_ij``; out-degree is the
  column sum ``sum_j a_ji``.
* The lifted observer coordinates pair an owner agent i with a tracked
  agent m, flattened row-major: (i, m) maps to index (i-1)*n + m in
  1-based terms, i*n + m in 0-based terms.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

__all__ = [
    "DirectedTopology",
    "LiftedOperators",
    "from_edges",
    "laplacian_in",
    "laplacian_out",
    "is_strongly_connected",
    "is_symmetric",
    "lifted_operators",
    "lambda2_min_nonzero",
    "spectral_norm",
]

# Eigenvalues with |lam| <= _ZERO_REL * max(1, ||s||) count as zero.
_ZERO_REL = 1e-9


# ---------------------------------------------------------------------------
# Topology
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class DirectedTopology:
    """Weighted directed graph on ``n`` agents.

    ``weights[i, j]`` holds a_ij, the weight of edge (j, i): positive
    when agent i receives from agent j, zero otherwise. The diagonal is
    zero (no self-loops). Instances are immutable value objects; the
    array is never mutated after construction.
    """

    n: int
    weights: np.ndarray

    def __post_init__(self) -> None:
        if self.n < 1:
            raise ValueError(f"agent count must be >= 1, got {self.n}")
        w = np.asarray(self.weights, dtype=float)
        if w.shape != (self.n, self.n):
            raise ValueError(
                f"weight matrix shape {w.shape} does not match n = {self.n}"
            )
        if not np.all(np.isfinite(w)):
            raise ValueError("weights must be finite")
        if np.any(w < 0.0):
            raise ValueError("weights must be nonnegative")
        if np.any(np.diagonal(w) != 0.0):
            raise ValueError("diagonal must be exactly zero (no self-loops)")
        w.setflags(write=False)
        object.__setattr__(self, "weights", w)

    @property
    def in_degrees(self) -> np.ndarray:
        """Row sums: total weight each agent receives."""
        return self.weights.sum(axis=1)

    @property
    def out_degrees(self) -> np.ndarray:
        """Column sums: total weight each agent sends."""
        return self.weights.sum(axis=0)


def from_edges(
    n: int,
    edges: Iterable[Sequence[float]],
    default_weight: float = 1.0,
) -> DirectedTopology:
    """Build a topology from 1-based ``(from, to)`` or ``(from, to, weight)`` edges.

    Args:
        n: Number of agents, >= 1.
        edges: Iterable of edge tuples. ``(j, i)`` adds the edge along
            which agent ``i`` receives from agent ``j``; an optional
            third element overrides ``default_weight``.
        default_weight: Weight for 2-tuples, must be positive.

    Returns:
        The assembled DirectedTopology with weights[i-1, j-1] set for
        every edge (j, i).

    Raises:
        ValueError: on out-of-range node indices, self-loops,
            non-positive weights, duplicate edges, or malformed tuples.
    """
    if n < 1:
        raise ValueError(f"agent count must be >= 1, got {n}")
    weights = np.zeros((n, n))
    for edge in edges:
        if len(edge) == 2:
            src, dst = edge
            w = default_weight
        elif len(edge) == 3:
            src, dst, w = edge
        else:
            raise ValueError(f"edge {edge!r} must have 2 or 3 elements")
        src = _node_index(src, n)
        dst = _node_index(dst, n)
        if src == dst:
            raise ValueError(f"self-loop on node {src + 1} is not allowed")
        w = float(w)
        if not np.isfinite(w) or w <= 0.0:
            raise ValueError(f"edge ({src + 1},{dst + 1}) has non-positive weight {w}")
        if weights[dst, src] != 0.0:
            raise ValueError(f"duplicate edge ({src + 1},{dst + 1})")
        weights[dst, src] = w
    return DirectedTopology(n=n, weights=weights)


def _node_index(label: float, n: int) -> int:
    """Validate a 1-based node label and return its 0-based index."""
    idx = int(label)
    if idx != label or not 1 <= idx <= n:
        raise ValueError(f"node index {label!r} outside [1..{n}]")
    return idx - 1


# ---------------------------------------------------------------------------
# Laplacians and connectivity
# ---------------------------------------------------------------------------


def laplacian_in(t: DirectedTopology) -> np.ndarray:
    """In-Laplacian ``diag(in_degrees) - weights``; its rows sum to zero."""
    return np.diag(t.in_degrees) - t.weights


def laplacian_out(t: DirectedTopology) -> np.ndarray:
    """Out-Laplacian ``diag(out_degrees) - weights``; its columns sum to zero."""
    return np.diag(t.out_degrees) - t.weights


def is_symmetric(t: DirectedTopology) -> bool:
    """True iff every edge has an equal-weight reverse edge."""
    return bool(np.array_equal(t.weights, t.weights.T))


def is_strongly_connected(t: DirectedTopology) -> bool:
    """Check that every agent reaches every other along directed edges.

    Uses two breadth-first sweeps from node 0, one along edge
    directions and one against them; node 0 reaching everyone and being
    reached by everyone is equivalent to strong connectivity. A single
    node is trivially strongly connected.
    """
    if t.n == 1:
        return True
    received_from = t.weights > 0.0  # received_from[i, j]: edge j -> i
    return _reaches_all(received_from.T) and _reaches_all(received_from)


def _reaches_all(successors: np.ndarray) -> bool:
    """BFS from node 0 over successors[u, v] = True meaning u -> v."""
    n = successors.shape[0]
    seen = np.zeros(n, dtype=bool)
    seen[0] = True
    frontier = [0]
    while frontier:
        nxt = []
        for u in frontier:
            for v in np.flatnonzero(successors[u]):
                if not seen[v]:
                    seen[v] = True
                    nxt.append(int(v))
        frontier = nxt
    return bool(seen.all())


# ---------------------------------------------------------------------------
# Lifted operators
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class LiftedOperators:
    """Operators of the gradient-observer update on the n^2 lifted coordinates.

    The diagonal operators are stored as their diagonals:

    * ``gamma[(i, m)] = 1/(d_i^in + a_im)``, the per-coordinate mixing
      gain (positive, requires every agent to have an in-neighbor).
    * ``a_d[(i, m)] = a_im``, the direct-measurement weights.

    ``l_hat0`` is the n-by-n^2 block-diagonal matrix whose i-th block is
    the i-th row of the transposed out-Laplacian; it collapses a stack
    of per-agent observer vectors into one aggregate vector. ``m`` is
    the observer iteration matrix ``I - diag(gamma) @ (L kron I + diag(a_d))``,
    which has spectral radius < 1 on strongly connected topologies.

    ``n``, ``l_in``, and ``l_out`` are carried for convenience so a
    stepping loop never rebuilds them.
    """

    n: int
    gamma: np.ndarray
    a_d: np.ndarray
    l_hat0: np.ndarray
    m: np.ndarray
    l_in: np.ndarray
    l_out: np.ndarray


def lifted_operators(t: DirectedTopology) -> LiftedOperators:
    """Assemble the lifted observer operators for a topology.

    Args:
        t: Topology in which every agent has at least one in-neighbor.

    Returns:
        LiftedOperators with coordinates ordered row-major by
        (owner agent i, tracked agent m).

    Raises:
        ValueError: if some agent has no in-neighbors (a mixing-gain
            denominator would be zero).
    """
    n = t.n
    in_deg = t.in_degrees
    if np.any(in_deg == 0.0):
        missing = int(np.flatnonzero(in_deg == 0.0)[0]) + 1
        raise ValueError(
            f"agent {missing} has no in-neighbors; every mixing-gain "
            "denominator must be positive"
        )
    a_d = t.weights.reshape(-1).copy()
    gamma = 1.0 / (np.repeat(in_deg, n) + a_d)
    l_in = laplacian_in(t)
    l_out = laplacian_out(t)
    lo_t = l_out.T
    l_hat0 = np.zeros((n, n * n))
    for i in range(n):
        l_hat0[i, i * n : (i + 1) * n] = lo_t[i]
    m = np.eye(n * n) - gamma[:, None] * (np.kron(l_in, np.eye(n)) + np.diag(a_d))
    for arr in (gamma, a_d, l_hat0, m):
        arr.setflags(write=False)
    return LiftedOperators(
        n=n, gamma=gamma, a_d=a_d, l_hat0=l_hat0, m=m, l_in=l_in, l_out=l_out
    )


# ---------------------------------------------------------------------------
# Spectral helpers
# ---------------------------------------------------------------------------


def lambda2_min_nonzero(s: np.ndarray) -> float:
    """Smallest nonzero eigenvalue of a symmetric positive semidefinite matrix.

    An eigenvalue counts as zero when its magnitude is at most
    ``1e-9 * max(1, ||s||)``, a scale-relative cutoff that is robust to
    conditioning.

    Args:
        s: Symmetric PSD matrix (validated up to small tolerances).

    Returns:
        The smallest eigenvalue strictly above the zero threshold.

    Raises:
        ValueError: if ``s`` is not symmetric PSD, or if every
            eigenvalue is below the threshold ("no nonzero eigenvalue").
    """
    a = np.asarray(s, dtype=float)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {a.shape}")
    scale = float(np.max(np.abs(a))) if a.size else 0.0
    if not np.allclose(a, a.T, rtol=0.0, atol=1e-12 * max(1.0, scale)):
        raise ValueError("matrix is not symmetric")
    vals = np.linalg.eigvalsh(a)
    norm = float(np.max(np.abs(vals))) if vals.size else 0.0
    threshold = _ZERO_REL * max(1.0, norm)
    if vals[0] < -threshold:
        raise ValueError("matrix is not positive semidefinite")
    nonzero = vals[vals > threshold]
    if nonzero.size == 0:
        raise ValueError("no nonzero eigenvalue")
    return float(nonzero[0])


def spectral_norm(a: np.ndarray) -> float:
    """Largest singular value of ``a``."""
    arr = np.asarray(a, dtype=float)
    if arr.ndim != 2:
        raise ValueError(f"expected a matrix, got shape {arr.shape}")
    return float(np.linalg.norm(arr, 2))
