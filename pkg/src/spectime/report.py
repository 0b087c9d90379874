"""Diagnostic figures for a finished run, rendered beside the trace.

Four PNGs: the per-agent allocation with the optimum overlaid, cost
convergence against the certified envelope, the constraint residual,
and (on directed runs) the observer deviation. All panels share the
wall-clock time axis with the settling time marked.
"""

from __future__ import annotations

import math
import os

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from .simulator import Scenario, SimulationTrace

__all__ = ["render_figures"]


def render_figures(out_dir: str | os.PathLike, sc: Scenario, tr: SimulationTrace) -> list[str]:
    """Render all applicable figures into ``out_dir``; returns their paths."""
    recs = tr.records
    cert = tr.certificate
    t = np.array([r.t for r in recs])
    x = np.vstack([r.x for r in recs])
    f = np.array([r.f for r in recs])
    v = np.array([r.v for r in recs])
    k = np.array([r.k for r in recs], dtype=float)
    resid = np.array([r.constraint_residual for r in recs])
    e_psi = np.array([r.e_psi_norm for r in recs])
    t_c = sc.schedule.t_c
    written = []

    fig, ax = plt.subplots(figsize=(7.0, 4.5))
    for i in range(sc.n):
        (line,) = ax.step(t, x[:, i], where="post", label=f"agent {i + 1}")
        ax.axhline(cert.x_star[i], color=line.get_color(), linestyle="--", linewidth=0.8)
    _mark_settling(ax, t_c)
    ax.set_xlabel("time [s]")
    ax.set_ylabel("allocation")
    ax.set_title("Allocations (dashed: optimum)")
    ax.legend(loc="best")
    written.append(_save(fig, out_dir, "allocation.png"))

    fig, ax = plt.subplots(figsize=(7.0, 4.5))
    gap = f - cert.f_star
    ax.semilogy(t, _positive(gap), label="cost gap")
    if cert.protocol == "directed":
        ax.semilogy(t, _positive(v), label="Lyapunov value")
    base = cert.envelope_base
    if not math.isnan(base) and cert.v0 > 0.0:
        ax.semilogy(t, _positive(base**k * cert.v0), linestyle="--", label="certified envelope")
    _mark_settling(ax, t_c)
    ax.set_xlabel("time [s]")
    ax.set_ylabel("value")
    ax.set_title("Convergence")
    ax.legend(loc="best")
    written.append(_save(fig, out_dir, "convergence.png"))

    fig, ax = plt.subplots(figsize=(7.0, 4.5))
    ax.semilogy(t, _positive(np.abs(resid)), label="|sum(x) - C|")
    ax.axhline(1e-9 * max(1.0, abs(sc.c)), linestyle="--", linewidth=0.8, label="tolerance")
    _mark_settling(ax, t_c)
    ax.set_xlabel("time [s]")
    ax.set_ylabel("residual")
    ax.set_title("Constraint conservation")
    ax.legend(loc="best")
    written.append(_save(fig, out_dir, "residual.png"))

    if cert.protocol == "directed" and not np.all(np.isnan(e_psi)):
        fig, ax = plt.subplots(figsize=(7.0, 4.5))
        ax.semilogy(t, _positive(e_psi), label="observer deviation")
        _mark_settling(ax, t_c)
        ax.set_xlabel("time [s]")
        ax.set_ylabel("deviation norm")
        ax.set_title("Gradient-observer consensus")
        ax.legend(loc="best")
        written.append(_save(fig, out_dir, "observer_error.png"))

    return written


def _positive(values: np.ndarray) -> np.ndarray:
    """Mask nonpositive entries so log plots skip them."""
    return np.where(values > 0.0, values, np.nan)


def _mark_settling(ax, t_c: float) -> None:
    ax.axvline(t_c, color="gray", linestyle=":", linewidth=0.9)
    ax.grid(True, alpha=0.3)


def _save(fig, out_dir: str | os.PathLike, name: str) -> str:
    path = os.path.join(os.fspath(out_dir), name)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path
