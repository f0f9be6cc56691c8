"""Brouwer degree of continuous maps on low-dimensional regions.

Maps passed to this module take an ``(..., d)`` array of points and return
``(..., d)`` values (scalars are accepted in dimension one). Dimension 1 uses
boundary signs, dimension 2 accumulates the winding of the boundary image,
and dimension >= 3 falls back to a heuristic sum of Jacobian signs over
numerically located zeros.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import (
    ConvergenceFailure,
    InvalidRegion,
    RefinementExhausted,
    SingularJacobian,
    SingularLinearSolve,
    ZeroOnBoundary,
)
from .newton import damped_newton, fd_jacobian

__all__ = [
    "Region",
    "DegreeResult",
    "degree_1d",
    "degree_winding_2d",
    "degree_sign_sum",
    "brouwer_degree",
    "find_zeros_multistart",
]

ZERO_TOL = 1e-9


@dataclass(frozen=True)
class Region:
    """Interval, axis-aligned box, or convex positively oriented polygon (2-D)."""

    kind: str  # 'interval' | 'box' | 'polygon'
    data: np.ndarray

    @staticmethod
    def interval(a: float, b: float) -> "Region":
        if not a < b:
            raise InvalidRegion(f"empty interval [{a}, {b}]")
        return Region("interval", np.array([a, b], dtype=float))

    @staticmethod
    def box(bounds) -> "Region":
        arr = np.asarray(bounds, dtype=float)
        if arr.ndim != 2 or arr.shape[1] != 2:
            raise InvalidRegion("box bounds must have shape (d, 2)")
        if not np.all(arr[:, 0] < arr[:, 1]):
            raise InvalidRegion("box has empty interior on some axis")
        return Region("box", arr)

    @staticmethod
    def polygon(vertices) -> "Region":
        v = np.asarray(vertices, dtype=float)
        if v.ndim != 2 or v.shape[1] != 2 or v.shape[0] < 3:
            raise InvalidRegion("polygon needs >= 3 vertices in the plane")
        nxt = np.roll(v, -1, axis=0)
        nxt2 = np.roll(v, -2, axis=0)
        cross = (nxt[:, 0] - v[:, 0]) * (nxt2[:, 1] - nxt[:, 1]) - (
            nxt[:, 1] - v[:, 1]
        ) * (nxt2[:, 0] - nxt[:, 0])
        if not np.all(cross > 0):
            raise InvalidRegion("polygon must be convex and positively oriented")
        return Region("polygon", v)

    @property
    def dim(self) -> int:
        if self.kind == "interval":
            return 1
        if self.kind == "polygon":
            return 2
        return self.data.shape[0]

    @property
    def bounds(self) -> np.ndarray:
        """Axis-aligned bounding box, shape (d, 2)."""
        if self.kind == "interval":
            return self.data[None, :]
        if self.kind == "box":
            return self.data
        return np.stack([self.data.min(axis=0), self.data.max(axis=0)], axis=1)

    def contains(self, points, strict: bool = True) -> np.ndarray:
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        if self.kind == "polygon":
            v = self.data
            nxt = np.roll(v, -1, axis=0)
            edge = nxt - v
            rel = pts[:, None, :] - v[None, :, :]
            cross = edge[None, :, 0] * rel[:, :, 1] - edge[None, :, 1] * rel[:, :, 0]
            return np.all(cross > 0 if strict else cross >= 0, axis=1)
        b = self.bounds
        if strict:
            return np.all((pts > b[:, 0]) & (pts < b[:, 1]), axis=1)
        return np.all((pts >= b[:, 0]) & (pts <= b[:, 1]), axis=1)

    def boundary_vertices(self) -> np.ndarray:
        """Counterclockwise vertex loop of a 2-D region."""
        if self.kind == "polygon":
            return self.data
        if self.dim != 2:
            raise InvalidRegion("boundary loop requires a 2-D region")
        (x0, x1), (y0, y1) = self.data
        return np.array([[x0, y0], [x1, y0], [x1, y1], [x0, y1]])

    def boundary_points(self, s: np.ndarray) -> np.ndarray:
        """Map parameters s in [0, 1) to the boundary loop (arclength spacing)."""
        v = self.boundary_vertices()
        nxt = np.roll(v, -1, axis=0)
        lengths = np.linalg.norm(nxt - v, axis=1)
        cum = np.concatenate([[0.0], np.cumsum(lengths)])
        total = cum[-1]
        arc = (np.asarray(s, dtype=float) % 1.0) * total
        idx = np.clip(np.searchsorted(cum, arc, side="right") - 1, 0, len(v) - 1)
        local = (arc - cum[idx]) / lengths[idx]
        return v[idx] + local[:, None] * (nxt[idx] - v[idx])


@dataclass(frozen=True)
class DegreeResult:
    value: int
    method: str  # 'sign_1d' | 'winding_2d' | 'sign_sum'
    certified: bool
    boundary_min_norm: float


def _as_interval(region: Region):
    if region.kind == "interval":
        return float(region.data[0]), float(region.data[1])
    if region.kind == "box" and region.dim == 1:
        return float(region.data[0, 0]), float(region.data[0, 1])
    raise InvalidRegion("degree_1d requires a one-dimensional region")


def _eval_scalar(f, x: float) -> float:
    return float(np.asarray(f(np.array([x]))).ravel()[0])


def degree_1d(f, interval: Region, zero_tol: float = ZERO_TOL) -> DegreeResult:
    """Boundary-sign degree of a scalar map: (sign f(b) - sign f(a)) / 2."""
    a, b = _as_interval(interval)
    fa, fb = _eval_scalar(f, a), _eval_scalar(f, b)
    for x, v in ((a, fa), (b, fb)):
        if abs(v) <= zero_tol:
            raise ZeroOnBoundary(np.array([x]), abs(v), zero_tol)
    value = (int(np.sign(fb)) - int(np.sign(fa))) // 2
    bmin = min(abs(fa), abs(fb))
    return DegreeResult(value, "sign_1d", bmin >= 1e3 * zero_tol, bmin)


def _wrap_angle(d: np.ndarray) -> np.ndarray:
    return (d + np.pi) % (2.0 * np.pi) - np.pi


def degree_winding_2d(
    f,
    region: Region,
    init_samples: int = 64,
    max_refine: int = 20,
    zero_tol: float = ZERO_TOL,
) -> DegreeResult:
    """Winding number of the boundary image, with adaptive bisection.

    Boundary sampling is refined until every consecutive angle increment is
    below pi/2, which pins the winding of a continuous boundary image.
    """
    if region.dim != 2:
        raise InvalidRegion("winding degree requires a 2-D region")
    s = np.linspace(0.0, 1.0, max(8, init_samples), endpoint=False)
    pts = region.boundary_points(s)
    vals = np.asarray(f(pts), dtype=float)
    norms = np.linalg.norm(vals, axis=1)
    angles = np.arctan2(vals[:, 1], vals[:, 0])

    rounds = 0
    while True:
        k = np.argmin(norms)
        if norms[k] <= zero_tol:
            raise ZeroOnBoundary(pts[k], float(norms[k]), zero_tol)
        inc = _wrap_angle(np.roll(angles, -1) - angles)
        bad = np.abs(inc) >= 0.5 * np.pi
        if not np.any(bad):
            total = float(np.sum(inc))
            bmin = float(np.min(norms))
            value = int(np.rint(total / (2.0 * np.pi)))
            return DegreeResult(value, "winding_2d", bmin >= 1e3 * zero_tol, bmin)
        if rounds >= max_refine:
            raise RefinementExhausted(rounds, float(np.max(np.abs(inc))))
        rounds += 1
        s_next = np.roll(s, -1).copy()
        s_next[-1] += 1.0
        mids = 0.5 * (s[bad] + s_next[bad])
        new_pts = region.boundary_points(mids)
        new_vals = np.asarray(f(new_pts), dtype=float)
        s = np.concatenate([s, mids % 1.0])
        order = np.argsort(s, kind="stable")
        s = s[order]
        pts = np.concatenate([pts, new_pts])[order]
        vals = np.concatenate([vals, new_vals])[order]
        norms = np.linalg.norm(vals, axis=1)
        angles = np.arctan2(vals[:, 1], vals[:, 0])


def _default_starts(d: int) -> int:
    return {1: 16, 2: 8, 3: 5}.get(d, 3)


def _polish(f, x, rounds: int = 30):
    """Plain Newton polish past the convergence tolerance.

    Tightens degenerate (e.g. odd cubic) zeros far enough that duplicates from
    different starts collapse inside the cluster radius.
    """
    x = np.asarray(x, dtype=float).copy()
    fx = np.asarray(f(x[None, :]), dtype=float)[0]
    nrm = float(np.max(np.abs(fx)))
    for _ in range(rounds):
        if nrm == 0.0:
            break
        jac = fd_jacobian(f, x)
        try:
            step = np.linalg.solve(jac, -fx)
        except np.linalg.LinAlgError:
            break
        if not np.all(np.isfinite(step)):
            break
        x_new = x + step
        f_new = np.asarray(f(x_new[None, :]), dtype=float)[0]
        n_new = float(np.max(np.abs(f_new)))
        if n_new >= nrm:
            break
        x, fx, nrm = x_new, f_new, n_new
    return x, nrm


def find_zeros_multistart(
    f,
    box: Region,
    starts_per_axis: int | None = None,
    newton_tol: float = 1e-12,
    cluster_radius: float = 1e-6,
    max_iter: int = 60,
):
    """Damped Newton from a uniform grid; zeros polished, clustered, sorted.

    Returns representatives (lexicographically sorted) of the converged zeros
    strictly inside the box. Heuristic: zero finding may miss zeros.
    """
    b = box.bounds
    d = b.shape[0]
    k = starts_per_axis if starts_per_axis is not None else _default_starts(d)
    axes = [np.linspace(b[i, 0], b[i, 1], k + 2)[1:-1] for i in range(d)]
    grid = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, d)
    width = b[:, 1] - b[:, 0]
    roam_lo, roam_hi = b[:, 0] - 0.25 * width, b[:, 1] + 0.25 * width

    def in_roam(x):
        return bool(np.all((x >= roam_lo) & (x <= roam_hi)))

    def f_point(x):
        return np.asarray(f(np.asarray(x)[None, :]), dtype=float)[0]

    found = []
    for start in grid:
        try:
            x, nrm, _ = damped_newton(
                f_point,
                lambda x: fd_jacobian(f, x),
                start,
                tol=newton_tol,
                max_iter=max_iter,
                in_domain=in_roam,
            )
        except (ConvergenceFailure, SingularLinearSolve):
            continue
        x, nrm = _polish(f, x)
        if bool(np.all((x > b[:, 0]) & (x < b[:, 1]))):
            found.append((x, nrm))

    found.sort(key=lambda z: tuple(z[0]))
    clusters = []
    for x, nrm in found:
        for c in clusters:
            if np.max(np.abs(x - c[0])) <= cluster_radius:
                if nrm < c[1]:
                    c[0], c[1] = x, nrm
                break
        else:
            clusters.append([x, nrm])
    clusters.sort(key=lambda c: tuple(c[0]))
    return [c[0] for c in clusters]


def _boundary_grid(b: np.ndarray, per_axis: int) -> np.ndarray:
    """Sample points on all faces of a box."""
    d = b.shape[0]
    if d == 1:
        return np.array([[b[0, 0]], [b[0, 1]]])
    pts = []
    for axis in range(d):
        others = [np.linspace(b[i, 0], b[i, 1], per_axis) for i in range(d) if i != axis]
        face = np.stack(np.meshgrid(*others, indexing="ij"), axis=-1).reshape(-1, d - 1)
        for side in (b[axis, 0], b[axis, 1]):
            full = np.empty((face.shape[0], d))
            full[:, axis] = side
            cols = [i for i in range(d) if i != axis]
            full[:, cols] = face
            pts.append(full)
    return np.concatenate(pts, axis=0)


def degree_sign_sum(
    f,
    box: Region,
    starts_per_axis: int | None = None,
    newton_tol: float = 1e-12,
    cluster_radius: float = 1e-6,
    zero_tol: float = ZERO_TOL,
    singular_tol: float = 1e-13,
) -> DegreeResult:
    """Sum of Jacobian-determinant signs over multistart-located zeros.

    Heuristic by construction (certified=False): Newton may miss zeros.
    """
    b = box.bounds
    d = b.shape[0]
    per_axis = max(3, min(13, int(round((2000.0 / (2 * d)) ** (1.0 / max(1, d - 1))))))
    per_axis |= 1  # odd count keeps face centers in the sample
    bpts = _boundary_grid(b, per_axis)
    bvals = np.asarray(f(bpts), dtype=float)
    bnorms = np.linalg.norm(np.atleast_2d(bvals), axis=-1)
    k = int(np.argmin(bnorms))
    if bnorms[k] <= zero_tol:
        raise ZeroOnBoundary(bpts[k], float(bnorms[k]), zero_tol)

    zeros = find_zeros_multistart(
        f, box, starts_per_axis=starts_per_axis, newton_tol=newton_tol,
        cluster_radius=cluster_radius,
    )
    total = 0
    for z in zeros:
        jac = fd_jacobian(f, z, rel_step=1e-6)
        det = float(np.linalg.det(jac))
        if abs(det) <= singular_tol:
            raise SingularJacobian(z, det)
        total += 1 if det > 0 else -1
    return DegreeResult(total, "sign_sum", False, float(np.min(bnorms)))


def brouwer_degree(f, region: Region, **opts) -> DegreeResult:
    """Dispatch on dimension: 1 -> boundary signs, 2 -> winding, >= 3 -> sign sum."""
    if region.dim == 1:
        return degree_1d(f, region, zero_tol=opts.get("zero_tol", ZERO_TOL))
    if region.dim == 2:
        return degree_winding_2d(
            f,
            region,
            init_samples=opts.get("init_samples", 64),
            max_refine=opts.get("max_refine", 20),
            zero_tol=opts.get("zero_tol", ZERO_TOL),
        )
    return degree_sign_sum(
        f,
        region,
        starts_per_axis=opts.get("starts_per_axis"),
        newton_tol=opts.get("newton_tol", 1e-12),
        cluster_radius=opts.get("cluster_radius", 1e-6),
        zero_tol=opts.get("zero_tol", ZERO_TOL),
        singular_tol=opts.get("singular_tol", 1e-13),
    )
