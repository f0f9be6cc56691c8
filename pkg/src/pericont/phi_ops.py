"""Time-dependent homeomorphism catalog and machine checks of its axioms.

Every operator maps an open ball U (radius ``domain_radius``) onto an open
ball V (radius ``range_radius``); radius ``inf`` means the whole space.
Forward and inverse callables follow the field convention: ``(t, s)`` with
``t`` scalar or shape ``S`` and ``s`` of shape ``S + (m,)``.

The ``check_*`` functions are sampled falsification tests, not proofs; they
return plain dict reports with stable keys and never raise on a failed axiom.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import expr
from .averaging import QuadratureRule, averaged_field
from .errors import (
    ConvergenceFailure,
    DomainViolation,
    MissingFactorization,
    NewtonDivergence,
    RangeViolation,
    SingularLinearSolve,
)
from .newton import damped_newton, fd_jacobian

__all__ = [
    "PhiOperator",
    "phi_eval",
    "phi_inverse",
    "check_phi_axioms",
    "check_averaged_inverse_injective",
    "check_inverse_factorization",
    "check_legacy_monotone_coercive",
    "identity_operator",
    "p_laplacian",
    "pt_laplacian",
    "mean_curvature",
    "minkowski",
    "rotation",
    "swap_negate",
    "scaled_operator",
    "custom_operator",
    "catalog_names",
]

INV_TOL = 1e-12


@dataclass(frozen=True)
class PhiOperator:
    name: str
    dim: int
    period: float
    forward: callable
    inverse: callable | None = None  # closed form; None means Newton inversion
    domain_radius: float = math.inf
    range_radius: float = math.inf
    factorization: tuple | None = None  # (sigma(t, s) -> scalar, tau(s) -> point)
    radial: bool = False


def _norm(s):
    return np.linalg.norm(np.asarray(s, dtype=float), axis=-1)


def phi_eval(op: PhiOperator, t, s) -> np.ndarray:
    """Forward evaluation; requires |s| < domain_radius."""
    s = np.asarray(s, dtype=float)
    r = _norm(s)
    if np.any(r >= op.domain_radius):
        raise DomainViolation(
            f"|s| = {float(np.max(r)):.6g} >= domain radius {op.domain_radius:.6g} "
            f"of operator '{op.name}'"
        )
    return np.asarray(op.forward(t, s), dtype=float)


def _invert_newton(op: PhiOperator, t: float, z: np.ndarray, tol: float) -> np.ndarray:
    shrink = 0.999999 * op.domain_radius

    def in_dom(s):
        return bool(_norm(s) < shrink)

    def res(s):
        return np.asarray(op.forward(t, s), dtype=float) - z

    try:
        s, nrm, _ = damped_newton(
            res,
            lambda s: fd_jacobian(lambda batch: op.forward(t, batch), s),
            np.zeros(op.dim),
            tol=tol,
            max_iter=60,
            in_domain=in_dom,
        )
        return s
    except (ConvergenceFailure, SingularLinearSolve) as exc:
        best = getattr(exc, "best_norm", math.inf)
        if not op.radial:
            raise NewtonDivergence(best) from exc

    # monotone radial profile: bisect |phi(t, r*zhat)| = |z| on [0, domain_radius)
    zn = _norm(z)
    if zn == 0.0:
        return np.zeros(op.dim)
    zhat = z / zn
    lo, hi = 0.0, min(1.0, 0.5 * op.domain_radius) if math.isfinite(op.domain_radius) else 1.0

    def profile(r):
        return float(_norm(op.forward(t, r * zhat)))

    tries = 0
    while profile(hi) < zn:
        tries += 1
        if tries > 200:
            raise NewtonDivergence(abs(profile(hi) - zn))
        if math.isfinite(op.domain_radius):
            hi = 0.5 * (hi + op.domain_radius)
        else:
            hi *= 2.0
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if profile(mid) < zn:
            lo = mid
        else:
            hi = mid
        if hi - lo < 1e-16 * max(1.0, hi):
            break
    s = 0.5 * (lo + hi) * zhat
    resid = float(_norm(op.forward(t, s) - z))
    if resid > max(tol, 1e-9 * max(1.0, zn)):
        raise NewtonDivergence(resid)
    return s


def phi_inverse(op: PhiOperator, t, z, tol: float = INV_TOL) -> np.ndarray:
    """Inverse evaluation; closed form when available, else damped Newton."""
    z = np.asarray(z, dtype=float)
    r = _norm(z)
    if np.any(r >= op.range_radius):
        raise RangeViolation(
            f"|z| = {float(np.max(r)):.6g} >= range radius {op.range_radius:.6g} "
            f"of operator '{op.name}'"
        )
    if op.inverse is not None:
        return np.asarray(op.inverse(t, z), dtype=float)
    if z.ndim == 1:
        return _invert_newton(op, float(t), z, tol)
    flat = z.reshape(-1, op.dim)
    ts = np.broadcast_to(np.asarray(t, dtype=float), z.shape[:-1]).ravel()
    out = np.stack([_invert_newton(op, float(ti), zi, tol) for ti, zi in zip(ts, flat)])
    return out.reshape(z.shape)


# --- catalog ---------------------------------------------------------------


def _radial_power(s: np.ndarray, exponent) -> np.ndarray:
    """|s|^exponent * s with the removable singularity at 0 filled by 0."""
    r = _norm(s)
    safe = np.where(r > 0.0, r, 1.0)
    factor = np.where(r > 0.0, safe**exponent, 0.0)
    return factor[..., None] * s


def identity_operator(m: int = 1, period: float = 1.0) -> PhiOperator:
    return PhiOperator("identity", m, period, lambda t, s: np.asarray(s, dtype=float),
                       inverse=lambda t, z: np.asarray(z, dtype=float), radial=True)


def p_laplacian(p: float, m: int = 1, period: float = 1.0) -> PhiOperator:
    if p <= 1:
        raise ValueError("p-Laplacian requires p > 1")
    q = p / (p - 1.0)
    return PhiOperator(
        f"p_laplacian({p:g})", m, period,
        lambda t, s: _radial_power(np.asarray(s, dtype=float), p - 2.0),
        inverse=lambda t, z: _radial_power(np.asarray(z, dtype=float), q - 2.0),
        radial=True,
    )


def pt_laplacian(p_expr, m: int = 1, period: float = 1.0) -> PhiOperator:
    """Variable-exponent operator |s|^(p(t)-2) s with conjugate inverse exponent."""
    tree = expr.parse(p_expr, ["t"]) if isinstance(p_expr, str) else p_expr

    def p_of(t):
        return expr.evaluate_array(tree, {"t": np.asarray(t, dtype=float)})

    def fwd(t, s):
        return _radial_power(np.asarray(s, dtype=float), p_of(t) - 2.0)

    def inv(t, z):
        q = 1.0 / (1.0 - 1.0 / p_of(t))
        return _radial_power(np.asarray(z, dtype=float), q - 2.0)

    def sigma(t, z):
        q = 1.0 / (1.0 - 1.0 / p_of(t))
        r = _norm(z)
        safe = np.where(r > 0.0, r, 1.0)
        return np.where(r > 0.0, safe ** (q - 2.0), 0.0)

    def tau(z):
        return np.asarray(z, dtype=float)

    return PhiOperator(
        "pt_laplacian", m, period, fwd, inverse=inv,
        factorization=(sigma, tau), radial=True,
    )


def mean_curvature(m: int = 1, period: float = 1.0) -> PhiOperator:
    def fwd(t, s):
        s = np.asarray(s, dtype=float)
        return s / np.sqrt(1.0 + _norm(s)[..., None] ** 2)

    def inv(t, z):
        z = np.asarray(z, dtype=float)
        return z / np.sqrt(1.0 - _norm(z)[..., None] ** 2)

    return PhiOperator("mean_curvature", m, period, fwd, inverse=inv,
                       range_radius=1.0, radial=True)


def minkowski(m: int = 1, period: float = 1.0) -> PhiOperator:
    def fwd(t, s):
        s = np.asarray(s, dtype=float)
        return s / np.sqrt(1.0 - _norm(s)[..., None] ** 2)

    def inv(t, z):
        z = np.asarray(z, dtype=float)
        return z / np.sqrt(1.0 + _norm(z)[..., None] ** 2)

    return PhiOperator("minkowski", m, period, fwd, inverse=inv,
                       domain_radius=1.0, radial=True)


def rotation(period: float = 1.0) -> PhiOperator:
    """Rotation by angle 2*pi*t/T in the plane; t is reduced mod T first."""

    def angle(t):
        return 2.0 * np.pi * np.mod(np.asarray(t, dtype=float), period) / period

    def fwd(t, s):
        s = np.asarray(s, dtype=float)
        a = angle(t)
        c, sn = np.cos(a), np.sin(a)
        return np.stack([c * s[..., 0] - sn * s[..., 1],
                         sn * s[..., 0] + c * s[..., 1]], axis=-1)

    def inv(t, z):
        z = np.asarray(z, dtype=float)
        a = angle(t)
        c, sn = np.cos(a), np.sin(a)
        return np.stack([c * z[..., 0] + sn * z[..., 1],
                         -sn * z[..., 0] + c * z[..., 1]], axis=-1)

    return PhiOperator("rotation", 2, period, fwd, inverse=inv)


def swap_negate(period: float = 1.0) -> PhiOperator:
    def both(t, s):
        s = np.asarray(s, dtype=float)
        return np.stack([-s[..., 1], -s[..., 0]], axis=-1)

    return PhiOperator("swap_negate", 2, period, both, inverse=both)


def scaled_operator(eta, inner: PhiOperator, period: float | None = None,
                    inner_linear: bool = False) -> PhiOperator:
    """phi(t, s) = eta(t) * inner(t, s) for a positive periodic scalar eta.

    With a linear autonomous ``inner`` the inverse factors as
    sigma(t, z) = 1/eta(t), tau(z) = inner^{-1}(z), certifying the
    factorized-inverse condition.
    """
    tree = expr.parse(eta, ["t"]) if isinstance(eta, str) else None
    period = inner.period if period is None else period

    def eta_of(t):
        t = np.mod(np.asarray(t, dtype=float), period)
        if tree is not None:
            return expr.evaluate_array(tree, {"t": t})
        return np.asarray(eta(t), dtype=float)

    def fwd(t, s):
        return eta_of(t)[..., None] * np.asarray(inner.forward(t, s), dtype=float)

    inv = None
    if inner.inverse is not None:
        def inv(t, z):
            return np.asarray(inner.inverse(t, np.asarray(z, dtype=float) / eta_of(t)[..., None]))

    fact = None
    if inner_linear and inner.inverse is not None:
        fact = (lambda t, z: 1.0 / eta_of(t), lambda z: np.asarray(inner.inverse(0.0, z)))

    # eta rescales the range; only a finite inner range stays a ball
    rng = inner.range_radius if math.isinf(inner.range_radius) else math.inf
    return PhiOperator(f"scaled({inner.name})", inner.dim, period, fwd, inverse=inv,
                       domain_radius=inner.domain_radius, range_radius=rng,
                       factorization=fact, radial=inner.radial)


def custom_operator(forward_exprs, inverse_exprs=None, m: int = 1, period: float = 1.0,
                    domain_radius: float = math.inf, range_radius: float = math.inf) -> PhiOperator:
    """Operator defined by expression text: forward in (t, s*), inverse in (t, z*)."""
    svars = ["s"] if m == 1 else [f"s{j + 1}" for j in range(m)]
    zvars = ["z"] if m == 1 else [f"z{j + 1}" for j in range(m)]
    fwd_trees = [expr.parse(e, ["t"] + svars) for e in forward_exprs]
    if len(fwd_trees) != m:
        raise ValueError(f"expected {m} forward component expressions")

    def make(trees, names):
        def call(t, s):
            s = np.asarray(s, dtype=float)
            bind = {"t": np.asarray(t, dtype=float)}
            for j, nm in enumerate(names):
                bind[nm] = s[..., j]
            comps = [np.broadcast_to(expr.evaluate_array(tr, bind), s.shape[:-1])
                     for tr in trees]
            return np.stack(comps, axis=-1)

        return call

    inv = None
    if inverse_exprs is not None:
        inv_trees = [expr.parse(e, ["t"] + zvars) for e in inverse_exprs]
        if len(inv_trees) != m:
            raise ValueError(f"expected {m} inverse component expressions")
        inv = make(inv_trees, zvars)
    return PhiOperator("custom", m, period, make(fwd_trees, svars), inverse=inv,
                       domain_radius=domain_radius, range_radius=range_radius)


def catalog_names():
    return ["identity", "p_laplacian", "pt_laplacian", "mean_curvature", "minkowski",
            "rotation", "swap_negate", "scaled", "custom"]


# --- sampled checks ---------------------------------------------------------


def _sample_ball(m: int, radius: float, count: int, seed: int = 0) -> np.ndarray:
    """Deterministic nonzero sample of the open ball of given radius."""
    if m == 1:
        pts = np.linspace(-radius, radius, count)[:, None]
    elif m == 2:
        k = max(4, int(math.isqrt(count)))
        ang = np.linspace(0.0, 2.0 * np.pi, k, endpoint=False)
        rad = np.linspace(radius / k, radius, k)
        pts = np.stack([np.outer(rad, np.cos(ang)).ravel(),
                        np.outer(rad, np.sin(ang)).ravel()], axis=-1)
    else:
        rng = np.random.default_rng(seed)
        dirs = rng.normal(size=(count, m))
        dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
        rad = radius * (np.arange(1, count + 1) / (count + 1))
        pts = rad[:, None] * dirs
    return pts[np.linalg.norm(pts, axis=1) > 0]


def _sample_radius(radius, cap: float = 2.0) -> float:
    return cap if math.isinf(radius) else 0.9 * radius


def check_phi_axioms(op: PhiOperator, t_count: int = 33, s_count: int = 32,
                     tol: float = 1e-9) -> dict:
    """Verify phi(t,0)=0, period matching, and the inverse round trip on a grid."""
    ts = np.linspace(0.0, op.period, t_count)
    r = _sample_radius(op.domain_radius)
    pts = _sample_ball(op.dim, r, s_count)

    zero = np.zeros(op.dim)
    v2 = max(float(np.max(_norm(np.stack([phi_eval(op, t, zero) for t in ts])))), 0.0)

    f0 = phi_eval(op, 0.0, pts)
    fT = phi_eval(op, op.period, pts)
    v3 = float(np.max(_norm(f0 - fT)))

    v1_escapes = 0
    v4 = 0.0
    finite = True
    for t in ts:
        vals = phi_eval(op, t, pts)
        finite = finite and bool(np.all(np.isfinite(vals)))
        v1_escapes += int(np.sum(_norm(vals) > op.range_radius + tol))
        try:
            back = phi_inverse(op, t, vals)
            v4 = max(v4, float(np.max(_norm(back - pts))))
        except (RangeViolation, NewtonDivergence):
            v4 = math.inf

    report = {
        "operator": op.name,
        "into_range": {"passed": finite and v1_escapes == 0, "range_escapes": v1_escapes},
        "zero_at_zero": {"passed": v2 <= tol, "max_violation": v2},
        "periodic_in_t": {"passed": v3 <= tol, "max_violation": v3},
        "round_trip": {"passed": v4 <= tol, "max_violation": v4},
    }
    report["passed"] = all(report[k]["passed"] for k in ("into_range", "zero_at_zero", "periodic_in_t", "round_trip"))
    return report


def check_averaged_inverse_injective(op: PhiOperator, q: QuadratureRule, pair_count: int = 200,
                   tol_collision: float = 1e-8, s_count: int = 24, seed: int = 0) -> dict:
    """Injectivity of the time-averaged inverse, by pairwise collision sampling."""
    psi = averaged_field(lambda t, s: phi_inverse(op, t, s), op.period, q)
    r = _sample_radius(op.range_radius)
    pts = _sample_ball(op.dim, r, s_count)
    vals = psi(pts)

    zero_collisions = []
    max_psi_nonzero = 0.0
    for p, v in zip(pts, vals):
        if _norm(p) >= 10.0 * tol_collision:
            max_psi_nonzero = max(max_psi_nonzero, float(_norm(v)))
            if _norm(v) < tol_collision:
                zero_collisions.append(p.tolist())

    pair_collisions = []
    n = len(pts)
    for i in range(n):
        for j in range(i + 1, n):
            if _norm(pts[i] - pts[j]) >= 10.0 * tol_collision:
                if _norm(vals[i] - vals[j]) < tol_collision:
                    pair_collisions.append((pts[i].tolist(), pts[j].tolist()))

    rng = np.random.default_rng(seed)
    extra = r * rng.uniform(-1.0, 1.0, size=(2 * pair_count, op.dim))
    extra = extra[np.linalg.norm(extra, axis=1) < r][:pair_count]
    half = len(extra) // 2
    a, b = extra[:half], extra[half : 2 * half]
    keep = np.linalg.norm(a - b, axis=1) >= 10.0 * tol_collision
    pa, pb = psi(a[keep]), psi(b[keep])
    for i in np.flatnonzero(np.linalg.norm(pa - pb, axis=1) < tol_collision):
        pair_collisions.append((a[keep][i].tolist(), b[keep][i].tolist()))

    return {
        "operator": op.name,
        "passed": not zero_collisions and not pair_collisions,
        "zero_collisions": len(zero_collisions),
        "pair_collisions": len(pair_collisions),
        "max_averaged_inverse_norm": max_psi_nonzero,
    }


def check_inverse_factorization(op: PhiOperator, t_count: int = 17, s_count: int = 24,
                    tol: float = 1e-9) -> dict:
    """Verify the separable inverse phi^{-1}(t, s) = sigma(t, s) tau(s)."""
    if op.factorization is None:
        raise MissingFactorization(f"operator '{op.name}' declares no factorization")
    sigma, tau = op.factorization
    ts = np.linspace(0.0, op.period, t_count)
    r = _sample_radius(op.range_radius)
    pts = _sample_ball(op.dim, r, s_count)
    worst = 0.0
    for t in ts:
        lhs = phi_inverse(op, t, pts)
        rhs = np.asarray(sigma(t, pts), dtype=float)[..., None] * np.asarray(tau(pts), dtype=float)
        worst = max(worst, float(np.max(_norm(lhs - rhs))))
    passed = worst <= tol
    # a factorized inverse is injective in the mean, so the averaged-inverse
    # injectivity condition follows
    return {"operator": op.name, "passed": passed, "max_violation": worst,
            "mean_injectivity_implied": passed}


def check_legacy_monotone_coercive(op: PhiOperator, pair_count: int = 200,
                                   t_count: int = 9, seed: int = 0) -> dict:
    """Sampled monotonicity and coercivity checks of the classical conditions."""
    rng = np.random.default_rng(seed)
    ts = np.linspace(0.0, op.period, t_count)
    r = _sample_radius(op.domain_radius)

    pairs = r * rng.uniform(-1.0, 1.0, size=(pair_count, 2, op.dim))
    keep = (np.linalg.norm(pairs[:, 0], axis=1) < r) & (np.linalg.norm(pairs[:, 1], axis=1) < r)
    pairs = pairs[keep]
    min_inner = math.inf
    witness = None
    for t in ts:
        fa = phi_eval(op, t, pairs[:, 0])
        fb = phi_eval(op, t, pairs[:, 1])
        inner = np.sum((fa - fb) * (pairs[:, 0] - pairs[:, 1]), axis=-1)
        k = int(np.argmin(inner))
        if inner[k] < min_inner:
            min_inner = float(inner[k])
            witness = {"t": float(t), "a": pairs[k, 0].tolist(), "b": pairs[k, 1].tolist()}
    h1 = {"passed": min_inner > 0.0, "min_inner_product": min_inner, "witness": witness}

    if math.isfinite(op.domain_radius):
        h2 = {"status": "not_applicable",
              "reason": "coercivity needs an unbounded domain"}
    else:
        dirs = _sample_ball(op.dim, 1.0, 16, seed=seed)
        dirs = dirs / np.linalg.norm(dirs, axis=1, keepdims=True)
        ladder_r = [2.0**k for k in range(8)]
        ladder = []
        for rad in ladder_r:
            worst = math.inf
            for t in ts:
                vals = phi_eval(op, t, rad * dirs)
                ratio = np.sum(vals * rad * dirs, axis=-1) / rad
                worst = min(worst, float(np.min(ratio)))
            ladder.append(worst)
        increasing_top = ladder[-1] > ladder[-2] > ladder[-3]
        h2 = {"status": "pass" if increasing_top else "fail",
              "radii": ladder_r, "alpha_hat": ladder}

    return {
        "operator": op.name,
        "monotonicity": h1,
        "coercivity": h2,
        "passed": h1["passed"] and h2.get("status") in ("pass", "not_applicable"),
    }
