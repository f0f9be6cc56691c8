"""Cyclic first-order systems, reductions from higher-order problems, homotopies.

A cyclic system couples n blocks of dimension m: block i feeds only on block
i+1 through g_i, and the last block closes the loop through h, which may read
every block. Second-order problems wrapped in a time-dependent operator
phi(t, x') reduce to the n = 2 case with g_1 the operator inverse.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import (
    DimensionMismatch,
    DomainMissingOrigin,
    DomainViolation,
    EndpointMismatch,
    UnknownIdentifierError,
)
from . import expr
from .phi_ops import PhiOperator, phi_inverse

__all__ = [
    "CyclicSystem",
    "HomotopyFamily",
    "block_variable_names",
    "build_cyclic",
    "reduce_second_order",
    "reduce_higher_order",
    "make_homotopy",
    "eval_rhs",
]


def block_variable_names(i: int, m: int):
    """Config names of block i (1-based): 'x2' for m = 1, else 'x2_1', ..."""
    if m == 1:
        return [f"x{i}"]
    return [f"x{i}_{j + 1}" for j in range(m)]


@dataclass
class CyclicSystem:
    n: int
    m: int
    T: float
    g: list  # n-1 fields (t, w) -> R^m
    h: object  # field (t, x) -> R^m with x in R^{nm}
    domain: np.ndarray  # (n, m, 2) per-block boxes, +-inf allowed

    def __post_init__(self):
        if self.n < 2 or self.m < 1 or self.T <= 0:
            raise DimensionMismatch("need n >= 2, m >= 1, T > 0")
        if len(self.g) != self.n - 1:
            raise DimensionMismatch(f"expected {self.n - 1} coupling fields, got {len(self.g)}")
        self.domain = np.asarray(self.domain, dtype=float)
        if self.domain.shape != (self.n, self.m, 2):
            raise DimensionMismatch("domain must have shape (n, m, 2)")
        for i in range(1, self.n):
            if not np.all((self.domain[i, :, 0] < 0.0) & (self.domain[i, :, 1] > 0.0)):
                raise DomainMissingOrigin(
                    f"0 must be interior to the block-{i + 1} domain box"
                )

    def assert_in_domain(self, x, context: str = ""):
        x = np.asarray(x, dtype=float)
        flat = x.reshape(-1, self.n * self.m)
        lo = self.domain[:, :, 0].ravel()
        hi = self.domain[:, :, 1].ravel()
        bad = (flat < lo) | (flat > hi)
        if np.any(bad):
            k = int(np.argmax(np.any(bad, axis=1)))
            where = f" ({context})" if context else ""
            raise DomainViolation(f"state {flat[k]} outside the problem domain{where}")

    def block_box(self, i: int) -> np.ndarray:
        """Domain box of block ``i`` (0-based), shape (m, 2)."""
        return self.domain[i]


@dataclass
class HomotopyFamily:
    """Scaling family (last block lambda*h) or deformation to an autonomous h0."""

    base: CyclicSystem
    kind: str  # 'scaling' | 'deformation'
    h_tilde: object | None = None  # (t, x, lam) -> R^m
    h0: object | None = None  # (x,) -> R^m

    def rhs(self, t, x, lam: float) -> np.ndarray:
        """Right-hand side without domain checks; batched over leading axes."""
        sys = self.base
        x = np.asarray(x, dtype=float)
        m = sys.m
        parts = [sys.g[i](t, x[..., (i + 1) * m : (i + 2) * m]) for i in range(sys.n - 1)]
        if self.kind == "scaling":
            parts.append(lam * sys.h(t, x))
        else:
            parts.append(self.h_tilde(t, x, lam))
        return np.concatenate([np.asarray(p, dtype=float) for p in parts], axis=-1)


def _unbounded_domain(n: int, m: int) -> np.ndarray:
    box = np.empty((n, m, 2))
    box[..., 0] = -np.inf
    box[..., 1] = np.inf
    return box


def field_from_expressions(exprs, var_names, in_dim: int, extra=()):
    """Compile m component expressions into a batched field callable.

    ``var_names`` are the state component names bound to the trailing axis of
    the state argument; ``extra`` lists further scalar parameters appended to
    the call (used for the homotopy parameter).
    """
    trees = [expr.parse(e, ["t", *var_names, *extra]) for e in exprs]

    def call(t, x, *params):
        x = np.asarray(x, dtype=float)
        if x.shape[-1] != in_dim:
            raise DimensionMismatch(
                f"field expects states of dimension {in_dim}, got {x.shape[-1]}"
            )
        bind = {"t": np.asarray(t, dtype=float)}
        for j, nm in enumerate(var_names):
            bind[nm] = x[..., j]
        for nm, val in zip(extra, params):
            bind[nm] = np.asarray(val, dtype=float)
        comps = [
            np.broadcast_to(expr.evaluate_array(tr, bind), x.shape[:-1]) for tr in trees
        ]
        return np.stack(comps, axis=-1)

    return call


def _as_expr_list(entry, m: int, label: str):
    if isinstance(entry, str):
        entry = [entry]
    if len(entry) != m:
        raise DimensionMismatch(f"{label} needs {m} component expression(s), got {len(entry)}")
    return list(entry)


def build_cyclic(n: int, m: int, T: float, g_exprs, h_exprs, domain=None) -> CyclicSystem:
    """Construct a cyclic system from expression text.

    Field g_i may reference t and the components of block i+1; h may
    reference t and every block. Unknown or out-of-range block references
    surface as DimensionMismatch.
    """
    if len(g_exprs) != n - 1:
        raise DimensionMismatch(f"expected {n - 1} coupling-field entries, got {len(g_exprs)}")
    g_fields = []
    for i in range(n - 1):
        names = block_variable_names(i + 2, m)
        comps = _as_expr_list(g_exprs[i], m, f"g[{i + 1}]")
        try:
            g_fields.append(field_from_expressions(comps, names, m))
        except UnknownIdentifierError as exc:
            raise DimensionMismatch(f"g[{i + 1}] references '{exc.name}', allowed: t, "
                                    + ", ".join(names)) from exc
    all_names = [nm for b in range(1, n + 1) for nm in block_variable_names(b, m)]
    comps = _as_expr_list(h_exprs, m, "h")
    try:
        h_field = field_from_expressions(comps, all_names, n * m)
    except UnknownIdentifierError as exc:
        raise DimensionMismatch(f"h references unknown name '{exc.name}'") from exc
    box = _unbounded_domain(n, m) if domain is None else np.asarray(domain, dtype=float)
    return CyclicSystem(n, m, T, g_fields, h_field, box)


def _range_box(op: PhiOperator, margin: float = 0.999) -> np.ndarray:
    """Box inscribed in the operator range ball, shrunk to stay interior."""
    box = np.empty((op.dim, 2))
    if np.isinf(op.range_radius):
        box[:, 0], box[:, 1] = -np.inf, np.inf
    else:
        half = margin * op.range_radius / np.sqrt(op.dim)
        box[:, 0], box[:, 1] = -half, half
    return box


def reduce_second_order(op: PhiOperator, f, m: int | None = None) -> CyclicSystem:
    """Rewrite (phi(t, x'))' = f(t, x, x') as the 2-block cyclic system.

    Block 2 carries phi(t, x'), so g_1 is the operator inverse and the
    closing field is f composed with that inverse.
    """
    m = op.dim if m is None else m
    if m != op.dim:
        raise DimensionMismatch(f"operator dimension {op.dim} != field dimension {m}")

    def g1(t, w):
        return phi_inverse(op, t, w)

    def h(t, x):
        x = np.asarray(x, dtype=float)
        return f(t, x[..., :m], phi_inverse(op, t, x[..., m:]))

    domain = _unbounded_domain(2, m)
    domain[1] = _range_box(op)
    return CyclicSystem(2, m, op.period, [g1], h, domain)


def reduce_higher_order(op: PhiOperator, h, n: int, m: int | None = None) -> CyclicSystem:
    """Chain-of-integrators reduction of (phi(t, x'))^{(n-1)} = h(...)."""
    if n < 2:
        raise DimensionMismatch("higher-order reduction needs n >= 2")
    m = op.dim if m is None else m
    if m != op.dim:
        raise DimensionMismatch(f"operator dimension {op.dim} != field dimension {m}")

    def g1(t, w):
        return phi_inverse(op, t, w)

    fields = [g1] + [(lambda t, w: np.asarray(w, dtype=float)) for _ in range(n - 2)]
    domain = _unbounded_domain(n, m)
    domain[1] = _range_box(op)
    return CyclicSystem(n, m, op.period, fields, h, domain)


def _sample_states(sys: CyclicSystem, count: int, seed: int) -> np.ndarray:
    rng = np.random.default_rng(seed)
    lo = np.where(np.isfinite(sys.domain[..., 0]), sys.domain[..., 0], -1.0).ravel()
    hi = np.where(np.isfinite(sys.domain[..., 1]), sys.domain[..., 1], 1.0).ravel()
    mid, half = 0.5 * (lo + hi), 0.45 * (hi - lo)
    return mid + half * rng.uniform(-1.0, 1.0, size=(count, sys.n * sys.m))


def make_homotopy(sys: CyclicSystem, kind: str, h_tilde=None, h0=None,
                  check_points: int = 100, seed: int = 0, tol: float = 1e-9) -> HomotopyFamily:
    """Build the lambda-family; deformation endpoints are sampled for consistency."""
    if kind == "scaling":
        return HomotopyFamily(sys, "scaling")
    if kind != "deformation":
        raise ValueError(f"unknown homotopy kind '{kind}'")
    if h_tilde is None or h0 is None:
        raise EndpointMismatch("deformation homotopy requires both h_tilde and h0")
    pts = _sample_states(sys, check_points, seed)
    ts = np.linspace(0.0, sys.T, 11)
    worst1 = worst0 = 0.0
    for t in ts:
        worst1 = max(worst1, float(np.max(np.abs(h_tilde(t, pts, 1.0) - sys.h(t, pts)))))
        worst0 = max(worst0, float(np.max(np.abs(h_tilde(t, pts, 0.0) - h0(pts)))))
    if worst1 > tol or worst0 > tol:
        raise EndpointMismatch(
            f"deformation endpoints differ: |h_tilde(.,1)-h| = {worst1:.3e}, "
            f"|h_tilde(.,0)-h0| = {worst0:.3e} (tol {tol:.1e})"
        )
    return HomotopyFamily(sys, "deformation", h_tilde=h_tilde, h0=h0)


def eval_rhs(fam: HomotopyFamily, t: float, x, lam: float) -> np.ndarray:
    """Right-hand side at one state, with the domain check.

    lambda outside [0, 1] is permitted (arclength overshoot); the family
    formulas extend.
    """
    x = np.asarray(x, dtype=float)
    fam.base.assert_in_domain(x, context="eval_rhs")
    return fam.rhs(t, x, lam)
