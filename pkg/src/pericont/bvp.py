"""Implicit-midpoint discretization of the periodic problem and its corrector.

The mesh stores M nodes t_j = j*T/M without duplicating the endpoint; edge j
connects node j to node (j+1) mod M, so the residual Jacobian is block
bidiagonal with one periodic corner. Solves use dense factorizations, which
is comfortable at desk scale (M * n * m up to a few thousand).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .averaging import QuadratureRule, h_hat
from .degree import Region, find_zeros_multistart
from .errors import ConvergenceFailure, NoStartingZero
from .newton import damped_newton
from .systems import CyclicSystem, HomotopyFamily

__all__ = [
    "PeriodicSolution",
    "residual",
    "rhs_jacobian_midpoints",
    "jacobian_fd",
    "newton_correct",
    "solve_averaged_start",
]


@dataclass
class PeriodicSolution:
    """Mesh values of all blocks on the uniform periodic grid, with lambda attached."""

    values: np.ndarray  # (M, n*m), node M wraps to node 0
    lam: float
    residual_norm: float
    period: float

    def __post_init__(self):
        self.values = np.atleast_2d(np.asarray(self.values, dtype=float))

    @property
    def mesh_size(self) -> int:
        return self.values.shape[0]

    @property
    def nodes(self) -> np.ndarray:
        return self.period * np.arange(self.mesh_size) / self.mesh_size

    def block(self, i: int, m: int) -> np.ndarray:
        return self.values[:, i * m : (i + 1) * m]

    def sup_norms(self, n: int, m: int) -> np.ndarray:
        """Per-block sup-norm max_t |x_i(t)| (Euclidean in R^m)."""
        return np.array(
            [float(np.max(np.linalg.norm(self.block(i, m), axis=1))) for i in range(n)]
        )


def _midpoints(fam: HomotopyFamily, x: np.ndarray):
    M = x.shape[0]
    dt = fam.base.T / M
    t_mid = dt * (np.arange(M) + 0.5)
    x_mid = 0.5 * (x + np.roll(x, -1, axis=0))
    return t_mid, x_mid, dt


def residual(fam: HomotopyFamily, x: np.ndarray, lam: float) -> np.ndarray:
    """Implicit-midpoint residual per edge, flattened to (M*n*m,)."""
    x = np.atleast_2d(np.asarray(x, dtype=float))
    fam.base.assert_in_domain(x, context="residual node")
    t_mid, x_mid, dt = _midpoints(fam, x)
    fam.base.assert_in_domain(x_mid, context="residual midpoint")
    rhs = fam.rhs(t_mid, x_mid, lam)
    return ((np.roll(x, -1, axis=0) - x) / dt - rhs).ravel()


def rhs_jacobian_midpoints(fam: HomotopyFamily, x: np.ndarray, lam: float,
                           rel_step: float = 1e-7) -> np.ndarray:
    """State Jacobian of the right-hand side at every edge midpoint, (M, d, d)."""
    x = np.atleast_2d(np.asarray(x, dtype=float))
    t_mid, x_mid, _ = _midpoints(fam, x)
    M, d = x.shape
    blocks = np.empty((M, d, d))
    for c in range(d):
        step = rel_step * (1.0 + np.abs(x_mid[:, c]))
        xp = x_mid.copy()
        xp[:, c] += step
        xm = x_mid.copy()
        xm[:, c] -= step
        blocks[:, :, c] = (fam.rhs(t_mid, xp, lam) - fam.rhs(t_mid, xm, lam)) / (
            2.0 * step[:, None]
        )
    return blocks


def jacobian_fd(fam: HomotopyFamily, x: np.ndarray, lam: float,
                rel_step: float = 1e-7) -> np.ndarray:
    """Dense residual Jacobian assembled from the midpoint stencil.

    Edge j depends on nodes j and j+1 only (through the midpoint), giving two
    nonzero blocks per block row plus the periodic corner.
    """
    x = np.atleast_2d(np.asarray(x, dtype=float))
    M, d = x.shape
    dt = fam.base.T / M
    blocks = rhs_jacobian_midpoints(fam, x, lam, rel_step=rel_step)
    eye = np.eye(d)
    jac = np.zeros((M * d, M * d))
    for j in range(M):
        r = slice(j * d, (j + 1) * d)
        jnext = (j + 1) % M
        jac[r, j * d : (j + 1) * d] = -eye / dt - 0.5 * blocks[j]
        jac[r, jnext * d : (jnext + 1) * d] += eye / dt - 0.5 * blocks[j]
    return jac


def residual_lambda_derivative(fam: HomotopyFamily, x: np.ndarray, lam: float,
                               step: float = 1e-7) -> np.ndarray:
    """Central difference of the residual in the homotopy parameter."""
    return (residual(fam, x, lam + step) - residual(fam, x, lam - step)) / (2.0 * step)


def newton_correct(fam: HomotopyFamily, x0, lam: float, tol: float = 1e-10,
                   max_iter: int = 25, max_halvings: int = 40) -> PeriodicSolution:
    """Damped Newton on the discrete residual at fixed lambda.

    Iterates leaving the domain are step-halved; returns a PeriodicSolution
    whose residual_norm re-verifies below ``tol``.
    """
    x0 = np.atleast_2d(np.asarray(x0, dtype=float))
    M, d = x0.shape

    def res_flat(u):
        return residual(fam, u.reshape(M, d), lam)

    def jac_flat(u):
        return jacobian_fd(fam, u.reshape(M, d), lam)

    try:
        u, nrm, _ = damped_newton(
            res_flat, jac_flat, x0.ravel(), tol=tol, max_iter=max_iter,
            max_halvings=max_halvings,
        )
    except ConvergenceFailure as exc:
        raise ConvergenceFailure(
            np.asarray(exc.best_values).reshape(M, d), exc.best_norm, exc.iterations
        ) from None
    return PeriodicSolution(u.reshape(M, d), lam, nrm, fam.base.T)


def solve_averaged_start(sys: CyclicSystem, window, q: QuadratureRule,
                         mesh_size: int = 128, starts_per_axis: int | None = None,
                         newton_tol: float = 1e-12, cluster_radius: float = 1e-6):
    """Zeros of the averaged closing field, each paired with a constant mesh start.

    The window provides the constants-slice box; zeros are found by multistart
    Newton, clustered, and sorted lexicographically. Each zero w* yields the
    constant start (w*, 0, ..., 0).
    """
    omega1 = np.asarray(getattr(window, "omega1", window), dtype=float)
    hhat = h_hat(sys, q)
    zeros = find_zeros_multistart(
        hhat, Region.box(omega1), starts_per_axis=starts_per_axis,
        newton_tol=newton_tol, cluster_radius=cluster_radius,
    )
    if not zeros:
        raise NoStartingZero("the averaged closing field has no zero in the window slice")
    out = []
    for w in zeros:
        x0 = np.zeros((mesh_size, sys.n * sys.m))
        x0[:, : sys.m] = w
        out.append((w, x0))
    return out
