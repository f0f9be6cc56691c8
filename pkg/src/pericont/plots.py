"""Figure rendering for the report path.

Each run writes matplotlib figures next to the delimited trace output:
a branch diagram (lambda against per-block sup-norms) and, when a target
solution exists, the solution profile over one period. Import of matplotlib
is deferred and forced onto the Agg backend so headless runs work.
"""

from __future__ import annotations

import numpy as np

__all__ = ["render_trace_figure", "render_solution_figure", "render_averaged_figure"]


def _plt():
    import matplotlib

    matplotlib.use("Agg", force=False)
    import matplotlib.pyplot as plt

    return plt


def _trace_norms(trace, n: int, m: int):
    lams, norms = [], []
    for p in trace.points:
        lams.append(p.lam)
        sol = p.solution
        if hasattr(sol, "sup_norms"):
            norms.append(sol.sup_norms(n, m))
        else:
            norms.append(np.abs(np.atleast_1d(sol)))
    return np.array(lams), np.array(norms)


def render_trace_figure(trace, n: int, m: int, path) -> None:
    """Branch diagram: lambda vs sup-norm of every block, exit/fold annotated."""
    plt = _plt()
    lams, norms = _trace_norms(trace, n, m)
    fig, ax = plt.subplots(figsize=(6.0, 4.0))
    for i in range(norms.shape[1]):
        ax.plot(lams, norms[:, i], marker=".", lw=1.0, label=f"sup |x{i + 1}|")
    status = trace.status
    if status.lambda_star is not None:
        ax.axvline(status.lambda_star, color="k", ls="--", lw=0.8)
    ax.set_xlabel(r"$\lambda$")
    ax.set_ylabel("block sup-norm")
    ax.set_title(status.describe())
    ax.legend(loc="best", fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def render_solution_figure(sol, n: int, m: int, path) -> None:
    """Component profiles of a mesh solution over one period (closed up)."""
    plt = _plt()
    t = np.concatenate([sol.nodes, [sol.period]])
    vals = np.concatenate([sol.values, sol.values[:1]], axis=0)
    fig, ax = plt.subplots(figsize=(6.0, 4.0))
    for i in range(n):
        for j in range(m):
            label = f"x{i + 1}" if m == 1 else f"x{i + 1}_{j + 1}"
            ax.plot(t, vals[:, i * m + j], lw=1.2, label=label)
    ax.set_xlabel("t")
    ax.set_ylabel("components")
    ax.set_title(f"solution at lambda = {sol.lam:g}")
    ax.legend(loc="best", fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def render_averaged_figure(ws, vals, path, label: str = "averaged field") -> None:
    """Averaged-field graph: a curve for m = 1, a quiver for m = 2."""
    plt = _plt()
    ws = np.asarray(ws, dtype=float)
    vals = np.asarray(vals, dtype=float)
    fig, ax = plt.subplots(figsize=(6.0, 4.0))
    if ws.shape[1] == 1:
        ax.plot(ws[:, 0], vals[:, 0], lw=1.2)
        ax.axhline(0.0, color="k", lw=0.6)
        ax.set_xlabel("w")
        ax.set_ylabel(label)
    else:
        ax.quiver(ws[:, 0], ws[:, 1], vals[:, 0], vals[:, 1], angles="xy")
        ax.set_xlabel("w1")
        ax.set_ylabel("w2")
        ax.set_title(label)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
