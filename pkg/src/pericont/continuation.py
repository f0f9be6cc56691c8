"""Branch tracing in the homotopy parameter with exit and fold diagnostics.

Both drivers are deterministic: fixed options reproduce bit-identical traces.
The natural driver steps lambda monotonically and halves on corrector
failure; the pseudo-arclength driver follows the branch through folds by
bordering the Jacobian with the previous tangent. A zero-dimensional
algebraic mode runs the same drivers with the mesh replaced by a point.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import bvp
from .errors import ConvergenceFailure, PericontError, SingularLinearSolve
from .newton import damped_newton
from .systems import HomotopyFamily

__all__ = [
    "Window",
    "TraceStatus",
    "TracePoint",
    "ContinuationTrace",
    "detect_boundary_exit",
    "continue_natural",
    "continue_arclength",
    "algebraic_continue",
]


@dataclass
class Window:
    """Sup-norm bounds per block, the constants-slice box, optional derivative bound."""

    rho: np.ndarray  # (n,) positive sup-norm bounds
    omega1: np.ndarray  # (m, 2) box for the constants slice
    rho_prime: float | None = None
    deriv_map: object | None = None  # (t_nodes, values) -> (M, m) recovered derivative
    boundary_tol_factor: float = 1e-8

    def __post_init__(self):
        self.rho = np.atleast_1d(np.asarray(self.rho, dtype=float))
        self.omega1 = np.asarray(self.omega1, dtype=float)
        if self.omega1.ndim == 1:
            self.omega1 = self.omega1[None, :]
        if np.any(self.rho <= 0.0):
            raise PericontError("window bounds must be positive")
        if self.rho_prime is not None and self.rho_prime <= 0.0:
            raise PericontError("derivative bound must be positive")
        if np.any(np.abs(self.omega1) > self.rho[0] + 1e-12):
            raise PericontError("constants-slice box must sit inside the first block bound")


@dataclass
class TraceStatus:
    kind: str  # 'reached_target' | 'boundary_exit' | 'fold_detected' | 'step_failure'
    lambda_star: float | None = None
    lambda_last: float | None = None
    which: str | None = None
    margin: float | None = None

    def describe(self) -> str:
        if self.kind == "reached_target":
            return "reached_target"
        if self.kind == "boundary_exit":
            return f"boundary_exit({self.which} at lambda*={self.lambda_star:.8g})"
        if self.kind == "fold_detected":
            return f"fold_detected(lambda*={self.lambda_star:.8g})"
        return f"step_failure(lambda_last={self.lambda_last:.8g})"


@dataclass
class TracePoint:
    lam: float
    solution: object  # PeriodicSolution or an algebraic point array
    step: float


@dataclass
class ContinuationTrace:
    points: list = field(default_factory=list)
    status: TraceStatus = None

    def lambdas(self) -> np.ndarray:
        return np.array([p.lam for p in self.points])

    @property
    def final(self) -> TracePoint:
        return self.points[-1]


def detect_boundary_exit(sol: bvp.PeriodicSolution, window: Window):
    """First block at (or within tolerance of) its sup-norm bound, with margin."""
    n = window.rho.size
    m = sol.values.shape[1] // n
    sups = sol.sup_norms(n, m)
    for i in range(n):
        if sups[i] >= window.rho[i] * (1.0 - window.boundary_tol_factor):
            return {"which": f"x{i + 1}", "block": i + 1,
                    "margin": float(window.rho[i] - sups[i])}
    if window.rho_prime is not None and window.deriv_map is not None:
        deriv = np.asarray(window.deriv_map(sol.nodes, sol.values), dtype=float)
        sup = float(np.max(np.linalg.norm(np.atleast_2d(deriv), axis=-1)))
        if sup >= window.rho_prime * (1.0 - window.boundary_tol_factor):
            return {"which": "x'", "block": None, "margin": float(window.rho_prime - sup)}
    return None


# --- solver adapters ---------------------------------------------------------


class _MeshProblem:
    """Continuation callbacks over the discretized periodic problem."""

    def __init__(self, fam: HomotopyFamily, window: Window, mesh_size: int,
                 tol: float = 1e-10, max_iter: int = 25):
        self.fam = fam
        self.window = window
        self.M = mesh_size
        self.d = fam.base.n * fam.base.m
        self.xdim = mesh_size * self.d
        self.tol = tol
        self.max_iter = max_iter

    def _grid(self, x):
        return np.asarray(x, dtype=float).reshape(self.M, self.d)

    def residual(self, x, lam):
        return bvp.residual(self.fam, self._grid(x), lam)

    def residual_norm(self, x, lam):
        return float(np.max(np.abs(self.residual(x, lam))))

    def jac_x(self, x, lam):
        return bvp.jacobian_fd(self.fam, self._grid(x), lam)

    def jac_lam(self, x, lam):
        return bvp.residual_lambda_derivative(self.fam, self._grid(x), lam)

    def correct(self, x, lam):
        sol = bvp.newton_correct(self.fam, self._grid(x), lam,
                                 tol=self.tol, max_iter=self.max_iter)
        return sol.values.ravel(), sol.residual_norm

    def exit_info(self, x):
        sol = bvp.PeriodicSolution(self._grid(x), 0.0, 0.0, self.fam.base.T)
        return detect_boundary_exit(sol, self.window)

    def make_point(self, x, lam, nrm):
        return bvp.PeriodicSolution(self._grid(x).copy(), lam, nrm, self.fam.base.T)


class _AlgebraicProblem:
    """The same callbacks for f(x, lambda) = 0 with no time variable."""

    def __init__(self, f, box, tol: float = 1e-10, max_iter: int = 25):
        self.f = f
        self.box = np.asarray(box, dtype=float)
        if self.box.ndim == 1:
            self.box = self.box[None, :]
        self.xdim = self.box.shape[0]
        self.tol = tol
        self.max_iter = max_iter

    def residual(self, x, lam):
        return np.atleast_1d(np.asarray(self.f(np.asarray(x, dtype=float), lam), dtype=float))

    def residual_norm(self, x, lam):
        return float(np.max(np.abs(self.residual(x, lam))))

    def jac_x(self, x, lam):
        x = np.asarray(x, dtype=float)
        cols = []
        for j in range(self.xdim):
            h = 1e-7 * (1.0 + abs(float(x[j])))
            xp, xm = x.copy(), x.copy()
            xp[j] += h
            xm[j] -= h
            cols.append((self.residual(xp, lam) - self.residual(xm, lam)) / (2.0 * h))
        return np.stack(cols, axis=1)

    def jac_lam(self, x, lam):
        h = 1e-7
        return (self.residual(x, lam + h) - self.residual(x, lam - h)) / (2.0 * h)

    def correct(self, x, lam):
        u, nrm, _ = damped_newton(
            lambda u: self.residual(u, lam),
            lambda u: self.jac_x(u, lam),
            np.asarray(x, dtype=float),
            tol=self.tol, max_iter=self.max_iter,
        )
        return u, nrm

    def exit_info(self, x):
        x = np.asarray(x, dtype=float)
        half = 0.5 * (self.box[:, 1] - self.box[:, 0])
        tol = 1e-8 * half
        margins = np.minimum(x - self.box[:, 0], self.box[:, 1] - x)
        for j in range(self.xdim):
            if margins[j] <= tol[j]:
                return {"which": f"x{j + 1}", "block": j + 1, "margin": float(margins[j])}
        return None

    def make_point(self, x, lam, nrm):
        return np.asarray(x, dtype=float).copy()


# --- natural continuation ------------------------------------------------------


@dataclass
class NaturalOptions:
    lam_step0: float = 0.02
    lam_step_min: float = 1e-6
    target: float = 1.0
    max_steps: int = 100000
    bisect_tol: float = 1e-7


def _refine_exit_natural(prob, lam_in, x_in, lam_out, x_out, nrm_out, opts):
    info_out = prob.exit_info(x_out)
    for _ in range(40):
        if lam_out - lam_in <= opts.bisect_tol:
            break
        lam_mid = 0.5 * (lam_in + lam_out)
        frac = (lam_mid - lam_in) / (lam_out - lam_in)
        guess = x_in + frac * (x_out - x_in)
        try:
            x_mid, nrm_mid = prob.correct(guess, lam_mid)
        except (ConvergenceFailure, SingularLinearSolve):
            lam_out = lam_mid
            continue
        info = prob.exit_info(x_mid)
        if info is None:
            lam_in, x_in = lam_mid, x_mid
        else:
            lam_out, x_out, nrm_out, info_out = lam_mid, x_mid, nrm_mid, info
    return lam_out, x_out, nrm_out, info_out


def _start_point(prob, x0, lam0, exact_start):
    x0 = np.asarray(x0, dtype=float).ravel()
    if exact_start:
        nrm = prob.residual_norm(x0, lam0)
        if nrm > prob.tol:
            raise ConvergenceFailure(x0, nrm, 0)
        return x0.copy(), nrm
    return prob.correct(x0, lam0)


def _drive_natural(prob, x0, lam0, opts: NaturalOptions, exact_start: bool):
    x, nrm = _start_point(prob, x0, lam0, exact_start)
    points = [TracePoint(lam0, prob.make_point(x, lam0, nrm), 0.0)]
    info = prob.exit_info(x)
    if info is not None:
        return ContinuationTrace(points, TraceStatus(
            "boundary_exit", lambda_star=lam0, which=info["which"], margin=info["margin"]))
    lam = lam0
    x_prev = lam_prev = None
    step = opts.lam_step0
    streak = 0
    status = None
    for _ in range(opts.max_steps):
        if lam >= opts.target - 1e-14:
            status = TraceStatus("reached_target", lambda_star=lam)
            break
        step_try = min(step, opts.target - lam)
        if x_prev is not None and lam > lam_prev:
            x_pred = x + (x - x_prev) * (step_try / (lam - lam_prev))
        else:
            x_pred = x
        try:
            x_new, nrm = prob.correct(x_pred, lam + step_try)
        except (ConvergenceFailure, SingularLinearSolve):
            streak = 0
            step = 0.5 * step_try
            if step < opts.lam_step_min:
                status = TraceStatus("step_failure", lambda_last=lam)
                break
            continue
        info = prob.exit_info(x_new)
        if info is not None:
            lam_star, x_star, nrm_star, info_star = _refine_exit_natural(
                prob, lam, x, lam + step_try, x_new, nrm, opts)
            points.append(TracePoint(lam_star, prob.make_point(x_star, lam_star, nrm_star),
                                     lam_star - lam))
            status = TraceStatus("boundary_exit", lambda_star=lam_star,
                                 which=info_star["which"], margin=info_star["margin"])
            break
        x_prev, lam_prev = x, lam
        x, lam = x_new, lam + step_try
        points.append(TracePoint(lam, prob.make_point(x, lam, nrm), step_try))
        streak += 1
        if streak >= 2:
            step = min(2.0 * step_try, opts.lam_step0)
        else:
            step = step_try
    if status is None:
        status = TraceStatus("step_failure", lambda_last=lam)
    return ContinuationTrace(points, status)


# --- pseudo-arclength continuation ----------------------------------------------


@dataclass
class ArclengthOptions:
    ds0: float = 0.02
    ds_min: float = 1e-6
    target: float = 1.0
    max_steps: int = 5000
    bisect_tol: float = 1e-7


class _ArcState:
    """Augmented point (x, lambda) with the scaled metric used for arclength."""

    def __init__(self, prob):
        self.prob = prob
        self.wx = 1.0 / prob.xdim  # squared weight of the x part

    def sdot(self, dx1, dl1, dx2, dl2):
        return self.wx * float(np.dot(dx1, dx2)) + dl1 * dl2

    def sdist(self, x1, l1, x2, l2):
        return float(np.sqrt(self.sdot(x1 - x2, l1 - l2, x1 - x2, l1 - l2)))

    def tangent(self, x, lam, prev):
        """Scaled-unit nullspace vector of [J_x J_lam], oriented along ``prev``."""
        px, plam = prev
        jx = self.prob.jac_x(x, lam)
        jlam = self.prob.jac_lam(x, lam)
        n = self.prob.xdim
        bordered = np.zeros((n + 1, n + 1))
        bordered[:n, :n] = jx
        bordered[:n, n] = jlam
        bordered[n, :n] = self.wx * px
        bordered[n, n] = plam
        rhs = np.zeros(n + 1)
        rhs[n] = 1.0
        try:
            sol = np.linalg.solve(bordered, rhs)
        except np.linalg.LinAlgError as exc:
            raise SingularLinearSolve(f"singular bordered tangent system: {exc}") from exc
        tx, tlam = sol[:n], float(sol[n])
        scale = np.sqrt(self.sdot(tx, tlam, tx, tlam))
        if not np.isfinite(scale) or scale == 0.0:
            raise SingularLinearSolve("degenerate tangent")
        tx, tlam = tx / scale, tlam / scale
        if self.sdot(tx, tlam, px, plam) < 0.0:
            tx, tlam = -tx, -tlam
        return tx, tlam

    def correct(self, xk, lamk, tau, ds):
        """Newton on the residual plus the arclength plane constraint."""
        tx, tlam = tau
        n = self.prob.xdim

        def res(u):
            x, lam = u[:n], float(u[n])
            r = self.prob.residual(x, lam)
            c = self.wx * float(np.dot(tx, x - xk)) + tlam * (lam - lamk) - ds
            return np.concatenate([r, [c]])

        def jac(u):
            x, lam = u[:n], float(u[n])
            out = np.zeros((n + 1, n + 1))
            out[:n, :n] = self.prob.jac_x(x, lam)
            out[:n, n] = self.prob.jac_lam(x, lam)
            out[n, :n] = self.wx * tx
            out[n, n] = tlam
            return out

        u0 = np.concatenate([xk + ds * tx, [lamk + ds * tlam]])
        u, nrm, _ = damped_newton(res, jac, u0, tol=self.prob.tol,
                                  max_iter=self.prob.max_iter)
        return u[:n], float(u[n]), nrm


def _refine_fold(arc: _ArcState, xa, lama, taua, xb, lamb, nrmb, tol):
    """Bisect the branch segment on the tangent lambda-component sign."""
    for _ in range(80):
        dist = arc.sdist(xa, lama, xb, lamb)
        if dist <= tol:
            break
        try:
            xm, lamm, nrmm = arc.correct(xa, lama, taua, 0.5 * dist)
            taum = arc.tangent(xm, lamm, taua)
        except (ConvergenceFailure, SingularLinearSolve):
            break
        if taum[1] >= 0.0:
            xa, lama, taua = xm, lamm, taum
        else:
            xb, lamb, nrmb = xm, lamm, nrmm
    return xb, lamb, nrmb


def _refine_exit_arc(arc: _ArcState, xa, lama, taua, xb, lamb, nrmb, info_b, tol):
    """Bisect the branch segment on the window-exit test."""
    for _ in range(80):
        dist = arc.sdist(xa, lama, xb, lamb)
        if dist <= tol:
            break
        try:
            xm, lamm, nrmm = arc.correct(xa, lama, taua, 0.5 * dist)
        except (ConvergenceFailure, SingularLinearSolve):
            break
        info = arc.prob.exit_info(xm)
        if info is None:
            xa, lama = xm, lamm
            try:
                taua = arc.tangent(xm, lamm, taua)
            except (ConvergenceFailure, SingularLinearSolve):
                break
        else:
            xb, lamb, nrmb, info_b = xm, lamm, nrmm, info
    return xb, lamb, nrmb, info_b


def _drive_arclength(prob, x0, lam0, opts: ArclengthOptions, exact_start: bool):
    arc = _ArcState(prob)
    x, nrm = _start_point(prob, x0, lam0, exact_start)
    points = [TracePoint(lam0, prob.make_point(x, lam0, nrm), 0.0)]
    lam = lam0
    if exact_start:
        # the lambda = 0 problem of the scaling family leaves the last block
        # free; resolve it with one natural corrector step before bordering
        step0 = min(opts.ds0, opts.target - lam0)
        x, nrm = prob.correct(x, lam0 + step0)
        lam = lam0 + step0
        points.append(TracePoint(lam, prob.make_point(x, lam, nrm), step0))

    prev = (np.zeros(prob.xdim), 1.0)
    try:
        tau = arc.tangent(x, lam, prev)
    except (ConvergenceFailure, SingularLinearSolve):
        return ContinuationTrace(points, TraceStatus("step_failure", lambda_last=lam))
    ds = opts.ds0
    streak = 0
    status = None
    for _ in range(opts.max_steps):
        try:
            x_new, lam_new, nrm = arc.correct(x, lam, tau, ds)
        except (ConvergenceFailure, SingularLinearSolve):
            streak = 0
            ds *= 0.5
            if ds < opts.ds_min:
                status = TraceStatus("step_failure", lambda_last=lam)
                break
            continue
        info = prob.exit_info(x_new)
        if info is not None:
            x_star, lam_star, nrm_star, info_star = _refine_exit_arc(
                arc, x, lam, tau, x_new, lam_new, nrm, info, opts.bisect_tol)
            lam_rep = min(max(lam_star, 0.0), 1.0)
            points.append(TracePoint(lam_star, prob.make_point(x_star, lam_star, nrm_star),
                                     ds))
            status = TraceStatus("boundary_exit", lambda_star=lam_rep,
                                 which=info_star["which"], margin=info_star["margin"])
            break
        if lam_new >= opts.target - 1e-14:
            try:
                x_t, nrm_t = prob.correct(x_new, opts.target)
            except (ConvergenceFailure, SingularLinearSolve):
                status = TraceStatus("step_failure", lambda_last=lam)
                break
            points.append(TracePoint(opts.target, prob.make_point(x_t, opts.target, nrm_t), ds))
            status = TraceStatus("reached_target", lambda_star=opts.target)
            break
        try:
            tau_new = arc.tangent(x_new, lam_new, tau)
        except (ConvergenceFailure, SingularLinearSolve):
            status = TraceStatus("step_failure", lambda_last=lam_new)
            break
        if tau[1] > 0.0 and tau_new[1] < 0.0:
            points.append(TracePoint(lam_new, prob.make_point(x_new, lam_new, nrm), ds))
            fx, flam, fnrm = _refine_fold(arc, x, lam, tau, x_new, lam_new, nrm,
                                          opts.bisect_tol)
            points.append(TracePoint(flam, prob.make_point(fx, flam, fnrm), ds))
            status = TraceStatus("fold_detected", lambda_star=min(max(flam, 0.0), 1.0))
            break
        x, lam, tau = x_new, lam_new, tau_new
        points.append(TracePoint(lam, prob.make_point(x, lam, nrm), ds))
        if lam < lam0 - 0.25:
            status = TraceStatus("step_failure", lambda_last=lam)
            break
        streak += 1
        if streak >= 2:
            ds = min(1.5 * ds, opts.ds0)
    if status is None:
        status = TraceStatus("step_failure", lambda_last=lam)
    return ContinuationTrace(points, status)


# --- public drivers -----------------------------------------------------------


def _natural_opts(opts, kw):
    if opts is None:
        opts = NaturalOptions(**kw)
    return opts


def continue_natural(fam: HomotopyFamily, start: bvp.PeriodicSolution, window: Window,
                     opts: NaturalOptions | None = None, tol: float = 1e-10, **kw):
    """Trace from a lambda ~ 0 solution toward the target in natural stepping.

    For the scaling family at lambda = 0 the start is taken as exact and the
    first corrector runs at lambda = lam_step0 (the lambda = 0 Jacobian leaves
    the last block undetermined).
    """
    opts = _natural_opts(opts, kw)
    prob = _MeshProblem(fam, window, start.mesh_size, tol=tol)
    exact = fam.kind == "scaling" and start.lam == 0.0
    return _drive_natural(prob, start.values.ravel(), start.lam, opts, exact)


def continue_arclength(fam: HomotopyFamily, start: bvp.PeriodicSolution, window: Window,
                       opts: ArclengthOptions | None = None, tol: float = 1e-10, **kw):
    """Pseudo-arclength tracing; folds are traversed, recorded, and terminal."""
    if opts is None:
        opts = ArclengthOptions(**kw)
    prob = _MeshProblem(fam, window, start.mesh_size, tol=tol)
    exact = fam.kind == "scaling" and start.lam == 0.0
    return _drive_arclength(prob, start.values.ravel(), start.lam, opts, exact)


def algebraic_continue(f, x0, window, mode: str = "natural", opts=None,
                       tol: float = 1e-10, **kw):
    """Continuation of f(x, lambda) = 0 from a lambda = 0 root, no time variable."""
    x0 = np.atleast_1d(np.asarray(x0, dtype=float))
    prob = _AlgebraicProblem(f, window, tol=tol)
    start_res = prob.residual_norm(x0, 0.0)
    if start_res > 1e-6:
        raise PericontError(
            f"x0 is not a lambda = 0 solution (|f(x0, 0)| = {start_res:.3e})"
        )
    if mode == "natural":
        return _drive_natural(prob, x0, 0.0, _natural_opts(opts, kw), exact_start=False)
    if mode == "arclength":
        if opts is None:
            opts = ArclengthOptions(**kw)
        return _drive_arclength(prob, x0, 0.0, opts, exact_start=False)
    raise ValueError(f"unknown continuation mode '{mode}'")
