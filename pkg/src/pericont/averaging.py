"""Mean-value projections, the periodic right inverse, and averaged fields.

Vector fields follow the toolkit-wide calling convention: ``field(t, x)``
where ``t`` is a scalar or an array of shape ``S`` and ``x`` has shape
``S + (dim,)`` (or plain ``(dim,)`` with scalar ``t``); the result has shape
``S + (m,)``. All catalog operators, compiled expression fields, and test
fields are written against this convention so that quadrature and mesh
sweeps evaluate in single vectorized calls.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import NonZeroMeanInput

__all__ = [
    "QuadratureRule",
    "MeshFunction",
    "mean_value",
    "zero_mean_antiderivative",
    "averaged_field",
    "h_avg",
    "averaged_block_map",
    "mawhin_operator",
]

# 4-point Gauss-Legendre nodes/weights on [-1, 1]
_GAUSS4_X = np.array(
    [-0.8611363115940526, -0.3399810435848563, 0.3399810435848563, 0.8611363115940526]
)
_GAUSS4_W = np.array(
    [0.3478548451374538, 0.6521451548625461, 0.6521451548625461, 0.3478548451374538]
)


@dataclass(frozen=True)
class QuadratureRule:
    """Composite quadrature over one period; ``panels`` counts subintervals."""

    kind: str = "composite_simpson"
    panels: int = 256

    def __post_init__(self):
        if self.kind not in ("composite_simpson", "composite_gauss4"):
            raise ValueError(f"unknown quadrature kind '{self.kind}'")
        if self.panels < 2:
            raise ValueError("panels must be >= 2")
        if self.kind == "composite_simpson" and self.panels % 2 != 0:
            raise ValueError("composite Simpson requires an even panel count")

    def nodes_weights(self, period: float):
        """Nodes t_k in [0, period] and weights summing to ``period``."""
        if self.kind == "composite_simpson":
            p = self.panels
            t = np.linspace(0.0, period, p + 1)
            w = np.full(p + 1, 2.0)
            w[1::2] = 4.0
            w[0] = w[-1] = 1.0
            w *= period / p / 3.0
            return t, w
        h = period / self.panels
        left = h * np.arange(self.panels)
        t = (left[:, None] + 0.5 * h * (1.0 + _GAUSS4_X)[None, :]).ravel()
        w = np.tile(0.5 * h * _GAUSS4_W, self.panels)
        return t, w


@dataclass
class MeshFunction:
    """Values of a T-periodic function on the uniform grid t_j = j*T/M.

    Node M wraps to node 0; the endpoint is not stored twice.
    """

    values: np.ndarray  # shape (M, k)
    period: float
    mesh_size: int = field(init=False)

    def __post_init__(self):
        self.values = np.atleast_2d(np.asarray(self.values, dtype=float))
        if self.values.shape[0] < 4:
            raise ValueError("mesh size must be >= 4")
        if not np.all(np.isfinite(self.values)):
            raise ValueError("mesh values must be finite")
        if self.period <= 0:
            raise ValueError("period must be positive")
        self.mesh_size = self.values.shape[0]

    @property
    def nodes(self) -> np.ndarray:
        return self.period * np.arange(self.mesh_size) / self.mesh_size

    def block(self, i: int, m: int) -> np.ndarray:
        """View of block ``i`` (0-based) of width ``m``."""
        return self.values[:, i * m : (i + 1) * m]


def mean_value(z: MeshFunction) -> np.ndarray:
    """Trapezoidal mean over the periodic mesh (= arithmetic mean of nodes)."""
    return z.values.mean(axis=0)


def zero_mean_antiderivative(z: MeshFunction, mean_tol: float = 1e-9) -> MeshFunction:
    """Periodic antiderivative with zero mean of a zero-mean input.

    The cumulative trapezoid closes up over one period exactly when the input
    mean is zero; the caller must subtract the mean first (within ``mean_tol``).
    """
    zbar = mean_value(z)
    if np.max(np.abs(zbar), initial=0.0) > mean_tol:
        raise NonZeroMeanInput(float(np.max(np.abs(zbar))), mean_tol)
    m = z.mesh_size
    dt = z.period / m
    znext = np.roll(z.values, -1, axis=0)
    edge = 0.5 * dt * (z.values + znext)
    x = np.zeros_like(z.values)
    x[1:] = np.cumsum(edge[:-1], axis=0)
    # shift to zero mean; repeat so the stored mean is exactly 0.0
    for _ in range(5):
        bar = x.mean(axis=0)
        if not np.any(bar):
            break
        x -= bar
    return MeshFunction(x, z.period)


def averaged_field(g, period: float, q: QuadratureRule):
    """Time average ``w -> (1/T) * integral of g(t, w) dt`` via quadrature.

    The returned callable accepts a single point ``(m,)`` or a batch
    ``(..., m)`` and is deterministic for a fixed rule.
    """
    t, w = q.nodes_weights(period)

    def avg(x):
        x = np.asarray(x, dtype=float)
        single = x.ndim == 1
        pts = x[None, :] if single else x
        tt = np.broadcast_to(t.reshape((-1,) + (1,) * (pts.ndim - 1)), (t.size,) + pts.shape[:-1])
        xx = np.broadcast_to(pts[None], (t.size,) + pts.shape)
        vals = g(tt, xx)
        wshape = (-1,) + (1,) * (vals.ndim - 1)
        out = np.sum(w.reshape(wshape) * vals, axis=0) / period
        return out[0] if single else out

    return avg


def h_hat(sys, q: QuadratureRule):
    """Averaged closing field at the constants slice: (1/T) * int h(t, w, 0, ..., 0) dt."""

    def padded(t, w):
        w = np.asarray(w, dtype=float)
        x = np.zeros(w.shape[:-1] + (sys.n * sys.m,))
        x[..., : sys.m] = w
        sys.assert_in_domain(x, context="h_avg")
        return sys.h(t, x)

    return averaged_field(padded, sys.T, q)


def averaged_block_map(sys, q: QuadratureRule):
    """Negated averaged block map on constants: -(g_1#(s_2), ..., h#(s))."""
    g_avgs = [averaged_field(gi, sys.T, q) for gi in sys.g]
    h_avg = averaged_field(sys.h, sys.T, q)
    m = sys.m

    def ell(s):
        s = np.asarray(s, dtype=float)
        sys.assert_in_domain(s, context="averaged_block_map")
        parts = [g_avgs[i](s[..., (i + 1) * m : (i + 2) * m]) for i in range(sys.n - 1)]
        parts.append(h_avg(s))
        return -np.concatenate([np.atleast_1d(p) for p in parts], axis=-1)

    return ell


def _nemytskii(sys, x: MeshFunction) -> np.ndarray:
    """Nodewise substitution N(x): blocks g_i(t, x_{i+1}(t)) and h(t, x(t))."""
    t = x.nodes
    m = sys.m
    sys.assert_in_domain(x.values, context="mawhin_operator")
    blocks = [sys.g[i](t, x.block(i + 1, m)) for i in range(sys.n - 1)]
    blocks.append(sys.h(t, x.values))
    return np.concatenate(blocks, axis=-1)


def mawhin_operator(sys, x: MeshFunction) -> MeshFunction:
    """Fixed-point operator: mean projection + identity lift + periodic antiderivative.

    Blockwise: Phi(x)_i = mean(x_i) + mean(N_i) + K(N_i - mean(N_i)).
    """
    nvals = _nemytskii(sys, x)
    m = sys.m
    out = np.empty_like(x.values)
    for i in range(sys.n):
        xi = x.block(i, m)
        ni = nvals[:, i * m : (i + 1) * m]
        nbar = ni.mean(axis=0)
        k = zero_mean_antiderivative(MeshFunction(ni - nbar, x.period), mean_tol=1e-7)
        out[:, i * m : (i + 1) * m] = xi.mean(axis=0) + nbar + k.values
    return MeshFunction(out, x.period)
