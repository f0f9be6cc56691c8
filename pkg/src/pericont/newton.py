"""Damped Newton iteration shared by the corrector, zero finders, and inversion."""

from __future__ import annotations

import numpy as np

from .errors import ConvergenceFailure, DomainViolation, SingularLinearSolve

__all__ = ["damped_newton", "fd_jacobian"]


def fd_jacobian(f, x, rel_step: float = 1e-7) -> np.ndarray:
    """Central finite-difference Jacobian of ``f`` at ``x`` (one batched call)."""
    x = np.asarray(x, dtype=float)
    d = x.size
    steps = rel_step * (1.0 + np.abs(x))
    pts = np.repeat(x[None, :], 2 * d, axis=0)
    for j in range(d):
        pts[2 * j, j] += steps[j]
        pts[2 * j + 1, j] -= steps[j]
    vals = np.asarray(f(pts), dtype=float)
    jac = np.empty((vals.shape[-1], d))
    for j in range(d):
        jac[:, j] = (vals[2 * j] - vals[2 * j + 1]) / (2.0 * steps[j])
    return jac


def damped_newton(
    f,
    jac,
    x0,
    *,
    tol: float = 1e-10,
    max_iter: int = 25,
    max_halvings: int = 40,
    in_domain=None,
):
    """Newton iteration with step halving on increase or domain exit.

    ``f`` maps an (d,) array to a (d,) residual; ``jac`` returns the (d, d)
    matrix. Returns ``(x, residual_norm, iterations)``. Raises
    ConvergenceFailure (carrying the best iterate) or SingularLinearSolve.
    """
    x = np.asarray(x0, dtype=float).copy()
    fx = np.atleast_1d(np.asarray(f(x), dtype=float))
    nrm = float(np.max(np.abs(fx)))
    best_x, best_nrm = x.copy(), nrm
    for it in range(max_iter):
        if nrm <= tol:
            return x, nrm, it
        j = np.atleast_2d(np.asarray(jac(x), dtype=float))
        try:
            step = np.linalg.solve(j, -fx)
        except np.linalg.LinAlgError as exc:
            raise SingularLinearSolve(str(exc)) from exc
        if not np.all(np.isfinite(step)):
            raise SingularLinearSolve("non-finite Newton step")
        alpha = 1.0
        accepted = False
        for _ in range(max_halvings + 1):
            x_try = x + alpha * step
            try:
                ok = in_domain is None or in_domain(x_try)
                if ok:
                    f_try = np.atleast_1d(np.asarray(f(x_try), dtype=float))
                    n_try = float(np.max(np.abs(f_try)))
                    ok = np.isfinite(n_try)
            except DomainViolation:
                ok = False
            if ok and n_try < nrm:
                x, fx, nrm = x_try, f_try, n_try
                accepted = True
                break
            alpha *= 0.5
        if not accepted:
            raise ConvergenceFailure(best_x, best_nrm, it + 1)
        if nrm < best_nrm:
            best_x, best_nrm = x.copy(), nrm
    if nrm <= tol:
        return x, nrm, max_iter
    raise ConvergenceFailure(best_x, best_nrm, max_iter)
