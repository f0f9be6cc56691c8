"""Problem configuration: JSON schema validation and runtime object builders.

A config is a single JSON object; unknown keys are rejected anywhere, and
violations name the offending key with a dotted path (e.g. ``window.rho[0]``).
Field expressions use the toolkit expression sublanguage; see the README for
the variable conventions of each problem kind.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from . import expr, phi_ops
from .averaging import QuadratureRule
from .continuation import ArclengthOptions, NaturalOptions, Window
from .errors import ConfigError, ParseError
from .systems import (
    block_variable_names,
    build_cyclic,
    field_from_expressions,
    make_homotopy,
    reduce_higher_order,
)

__all__ = ["ProblemConfig", "load_config", "build_problem"]

_PROBLEM_KINDS = ("cyclic", "second_order", "higher_order", "algebraic")

_NUMERIC_DEFAULTS = {
    "mesh": 128,
    "quad_panels": 256,
    "quad_kind": "composite_simpson",
    "seed": 0,
    "newton_tol": 1e-10,
    "lambda_step": 0.02,
    "lambda_step_min": 1e-6,
    "ds": 0.02,
    "ds_min": 1e-6,
    "target": 1.0,
    "max_steps": 5000,
    "mode": "natural",
}

_TOP_KEYS = {"problem", "name", "n", "m", "T", "g", "h", "f", "phi", "homotopy",
             "domain", "window", "algebraic", "numeric"}
_PHI_KEYS = {"name", "p", "p_expr", "eta", "inner", "inner_linear", "forward",
             "inverse", "m", "domain_radius", "range_radius"}
_WINDOW_KEYS = {"rho", "omega1", "rho_prime"}
_HOMOTOPY_KEYS = {"kind", "h_tilde", "h0", "f_tilde", "f0"}
_ALGEBRAIC_KEYS = {"f", "x0", "window"}


@dataclass
class ProblemConfig:
    """Validated configuration with every default filled in and recorded."""

    kind: str
    name: str
    raw: dict = field(default_factory=dict)

    @property
    def numeric(self) -> dict:
        return self.raw["numeric"]

    def quadrature(self) -> QuadratureRule:
        return QuadratureRule(self.numeric["quad_kind"], self.numeric["quad_panels"])

    def natural_options(self) -> NaturalOptions:
        n = self.numeric
        return NaturalOptions(lam_step0=n["lambda_step"], lam_step_min=n["lambda_step_min"],
                              target=n["target"], max_steps=n["max_steps"])

    def arclength_options(self) -> ArclengthOptions:
        n = self.numeric
        return ArclengthOptions(ds0=n["ds"], ds_min=n["ds_min"], target=n["target"],
                                max_steps=n["max_steps"])


def _fail(key, msg):
    raise ConfigError(key, msg)


def _check_keys(d: dict, allowed: set, path: str):
    for k in d:
        if k not in allowed:
            _fail(f"{path}.{k}" if path else k, "unknown key")


def _get(d, key, types, path, default=None, required=False):
    if key not in d:
        if required:
            _fail(f"{path}.{key}" if path else key, "missing required key")
        return default
    v = d[key]
    if types is not None and not isinstance(v, types):
        _fail(f"{path}.{key}" if path else key,
              f"expected {getattr(types, '__name__', types)}, got {type(v).__name__}")
    return v


def _positive_number(v, key):
    if not isinstance(v, (int, float)) or isinstance(v, bool) or v <= 0:
        _fail(key, "must be a positive number")
    return float(v)


def _expr_list(v, m, key):
    if isinstance(v, str):
        v = [v]
    if not isinstance(v, list) or not all(isinstance(e, str) for e in v):
        _fail(key, "expected an expression string or a list of them")
    if len(v) != m:
        _fail(key, f"needs {m} component expression(s), got {len(v)}")
    return v


def _check_expr(source, allowed, key):
    try:
        expr.parse(source, allowed)
    except ParseError as exc:
        _fail(key, str(exc))


def _box_list(v, m, key):
    """Accept [lo, hi] (m = 1) or [[lo, hi], ...] with lo < hi."""
    if (isinstance(v, list) and len(v) == 2
            and all(isinstance(x, (int, float)) for x in v)):
        v = [v]
    if not isinstance(v, list) or len(v) != m:
        _fail(key, f"expected {m} [lo, hi] pair(s)")
    out = np.empty((m, 2))
    for j, pair in enumerate(v):
        if (not isinstance(pair, list) or len(pair) != 2
                or not all(isinstance(x, (int, float)) for x in pair)):
            _fail(f"{key}[{j}]", "expected [lo, hi]")
        if not pair[0] < pair[1]:
            _fail(f"{key}[{j}]", "needs lo < hi")
        out[j] = pair
    return out


def _validate_numeric(d: dict) -> dict:
    _check_keys(d, set(_NUMERIC_DEFAULTS), "numeric")
    out = dict(_NUMERIC_DEFAULTS)
    out.update(d)
    for k in ("mesh", "quad_panels", "seed", "max_steps"):
        if not isinstance(out[k], int) or isinstance(out[k], bool):
            _fail(f"numeric.{k}", "must be an integer")
    if out["mesh"] < 4:
        _fail("numeric.mesh", "mesh size must be >= 4")
    if out["quad_kind"] not in ("composite_simpson", "composite_gauss4"):
        _fail("numeric.quad_kind", "must be composite_simpson or composite_gauss4")
    if out["mode"] not in ("natural", "arclength"):
        _fail("numeric.mode", "must be natural or arclength")
    for k in ("newton_tol", "lambda_step", "lambda_step_min", "ds", "ds_min", "target"):
        out[k] = _positive_number(out[k], f"numeric.{k}")
    return out


def _validate_window(d: dict, n: int, m: int) -> dict:
    _check_keys(d, _WINDOW_KEYS, "window")
    rho = _get(d, "rho", list, "window", required=True)
    if len(rho) != n:
        _fail("window.rho", f"needs {n} entries, got {len(rho)}")
    for i, r in enumerate(rho):
        if not isinstance(r, (int, float)) or isinstance(r, bool) or r <= 0:
            _fail(f"window.rho[{i}]", "must be a positive number")
    out = {"rho": [float(r) for r in rho]}
    if "omega1" in d:
        out["omega1"] = _box_list(d["omega1"], m, "window.omega1").tolist()
    else:
        out["omega1"] = [[-out["rho"][0], out["rho"][0]] for _ in range(m)]
    if "rho_prime" in d:
        out["rho_prime"] = _positive_number(d["rho_prime"], "window.rho_prime")
    return out


def _validate_phi(d: dict, m: int) -> dict:
    _check_keys(d, _PHI_KEYS, "phi")
    name = _get(d, "name", str, "phi", required=True)
    valid = phi_ops.catalog_names()
    if name not in valid:
        _fail("phi.name", f"unknown operator '{name}'; valid names: {', '.join(valid)}")
    out = {"name": name}
    if name == "p_laplacian":
        p = _get(d, "p", (int, float), "phi", required=True)
        if p <= 1:
            _fail("phi.p", "needs p > 1")
        out["p"] = float(p)
    elif name == "pt_laplacian":
        p_expr = _get(d, "p_expr", str, "phi", required=True)
        _check_expr(p_expr, ["t"], "phi.p_expr")
        out["p_expr"] = p_expr
    elif name == "scaled":
        eta = _get(d, "eta", str, "phi", required=True)
        _check_expr(eta, ["t"], "phi.eta")
        inner = _get(d, "inner", dict, "phi", required=True)
        out["eta"] = eta
        out["inner"] = _validate_phi(inner, m)
        out["inner_linear"] = bool(_get(d, "inner_linear", bool, "phi", default=False))
    elif name == "custom":
        svars = ["s"] if m == 1 else [f"s{j + 1}" for j in range(m)]
        zvars = ["z"] if m == 1 else [f"z{j + 1}" for j in range(m)]
        fwd = _expr_list(_get(d, "forward", (str, list), "phi", required=True), m, "phi.forward")
        for j, e in enumerate(fwd):
            _check_expr(e, ["t"] + svars, f"phi.forward[{j}]")
        out["forward"] = fwd
        if "inverse" in d:
            inv = _expr_list(d["inverse"], m, "phi.inverse")
            for j, e in enumerate(inv):
                _check_expr(e, ["t"] + zvars, f"phi.inverse[{j}]")
            out["inverse"] = inv
        for k in ("domain_radius", "range_radius"):
            if k in d:
                out[k] = _positive_number(d[k], f"phi.{k}")
    if name in ("rotation", "swap_negate") and m != 2:
        _fail("phi.name", f"'{name}' is a planar operator; requires m = 2")
    return out


def load_config(path) -> ProblemConfig:
    """Read, validate, and normalize a JSON problem configuration."""
    with open(path, "r", encoding="utf-8") as fh:
        try:
            raw = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ConfigError("(file)", f"invalid JSON at line {exc.lineno}, "
                                        f"column {exc.colno}: {exc.msg}") from exc
    if not isinstance(raw, dict):
        raise ConfigError("(file)", "top level must be a JSON object")
    _check_keys(raw, _TOP_KEYS, "")
    kind = _get(raw, "problem", str, "", required=True)
    if kind not in _PROBLEM_KINDS:
        _fail("problem", f"must be one of: {', '.join(_PROBLEM_KINDS)}")
    name = _get(raw, "name", str, "", default=None)
    out = {"problem": kind, "name": name,
           "numeric": _validate_numeric(_get(raw, "numeric", dict, "", default={}))}

    if kind == "algebraic":
        alg = _get(raw, "algebraic", dict, "", required=True)
        _check_keys(alg, _ALGEBRAIC_KEYS, "algebraic")
        x0 = _get(alg, "x0", list, "algebraic", required=True)
        k = len(x0)
        if k == 0 or not all(isinstance(v, (int, float)) for v in x0):
            _fail("algebraic.x0", "expected a nonempty list of numbers")
        fexprs = _expr_list(_get(alg, "f", (str, list), "algebraic", required=True),
                            k, "algebraic.f")
        xvars = [f"x{j + 1}" for j in range(k)]
        for j, e in enumerate(fexprs):
            _check_expr(e, xvars + ["lambda"], f"algebraic.f[{j}]")
        box = _box_list(_get(alg, "window", list, "algebraic", required=True),
                        k, "algebraic.window")
        out["algebraic"] = {"f": fexprs, "x0": [float(v) for v in x0],
                            "window": box.tolist()}
        return ProblemConfig(kind, name or "algebraic", out)

    m = _get(raw, "m", int, "", default=1)
    if m < 1:
        _fail("m", "must be >= 1")
    T = _positive_number(_get(raw, "T", (int, float), "", default=1.0), "T")
    out["m"], out["T"] = m, T

    if kind == "cyclic":
        n = _get(raw, "n", int, "", required=True)
        if n < 2:
            _fail("n", "must be >= 2")
        g = _get(raw, "g", list, "", required=True)
        if len(g) != n - 1:
            _fail("g", f"needs {n - 1} coupling field(s), got {len(g)}")
        gexprs = []
        for i, gi in enumerate(g):
            comps = _expr_list(gi, m, f"g[{i}]")
            names = block_variable_names(i + 2, m)
            for j, e in enumerate(comps):
                _check_expr(e, ["t"] + names, f"g[{i}][{j}]")
            gexprs.append(comps)
        all_names = [nm for b in range(1, n + 1) for nm in block_variable_names(b, m)]
        hexprs = _expr_list(_get(raw, "h", (str, list), "", required=True), m, "h")
        for j, e in enumerate(hexprs):
            _check_expr(e, ["t"] + all_names, f"h[{j}]")
        out["n"], out["g"], out["h"] = n, gexprs, hexprs
        if "domain" in raw:
            dom = raw["domain"]
            if not isinstance(dom, list) or len(dom) != n:
                _fail("domain", f"needs {n} per-block boxes")
            out["domain"] = [_box_list(b, m, f"domain[{i}]").tolist()
                             for i, b in enumerate(dom)]
        hom = _get(raw, "homotopy", dict, "", default={"kind": "scaling"})
        _check_keys(hom, _HOMOTOPY_KEYS, "homotopy")
        hk = _get(hom, "kind", str, "homotopy", default="scaling")
        if hk not in ("scaling", "deformation"):
            _fail("homotopy.kind", "must be scaling or deformation")
        out["homotopy"] = {"kind": hk}
        if hk == "deformation":
            ht = _expr_list(_get(hom, "h_tilde", (str, list), "homotopy", required=True),
                            m, "homotopy.h_tilde")
            h0 = _expr_list(_get(hom, "h0", (str, list), "homotopy", required=True),
                            m, "homotopy.h0")
            for j, e in enumerate(ht):
                _check_expr(e, ["t"] + all_names + ["lambda"], f"homotopy.h_tilde[{j}]")
            for j, e in enumerate(h0):
                _check_expr(e, all_names, f"homotopy.h0[{j}]")
            out["homotopy"].update({"h_tilde": ht, "h0": h0})
        nblocks = n
    elif kind == "second_order":
        xv = ["x"] if m == 1 else [f"x{j + 1}" for j in range(m)]
        yv = ["y"] if m == 1 else [f"y{j + 1}" for j in range(m)]
        fexprs = _expr_list(_get(raw, "f", (str, list), "", required=True), m, "f")
        for j, e in enumerate(fexprs):
            _check_expr(e, ["t"] + xv + yv, f"f[{j}]")
        out["f"] = fexprs
        out["phi"] = _validate_phi(_get(raw, "phi", dict, "", required=True), m)
        hom = _get(raw, "homotopy", dict, "", default={"kind": "scaling"})
        _check_keys(hom, _HOMOTOPY_KEYS, "homotopy")
        hk = _get(hom, "kind", str, "homotopy", default="scaling")
        if hk not in ("scaling", "deformation"):
            _fail("homotopy.kind", "must be scaling or deformation")
        out["homotopy"] = {"kind": hk}
        if hk == "deformation":
            ft = _expr_list(_get(hom, "f_tilde", (str, list), "homotopy", required=True),
                            m, "homotopy.f_tilde")
            f0 = _expr_list(_get(hom, "f0", (str, list), "homotopy", required=True),
                            m, "homotopy.f0")
            for j, e in enumerate(ft):
                _check_expr(e, ["t"] + xv + yv + ["lambda"], f"homotopy.f_tilde[{j}]")
            for j, e in enumerate(f0):
                _check_expr(e, xv + yv, f"homotopy.f0[{j}]")
            out["homotopy"].update({"f_tilde": ft, "f0": f0})
        nblocks = 2
    else:  # higher_order
        n = _get(raw, "n", int, "", required=True)
        if n < 2:
            _fail("n", "must be >= 2")
        all_names = [nm for b in range(1, n + 1) for nm in block_variable_names(b, m)]
        hexprs = _expr_list(_get(raw, "h", (str, list), "", required=True), m, "h")
        for j, e in enumerate(hexprs):
            _check_expr(e, ["t"] + all_names, f"h[{j}]")
        out["n"], out["h"] = n, hexprs
        out["phi"] = _validate_phi(_get(raw, "phi", dict, "", required=True), m)
        out["homotopy"] = {"kind": "scaling"}
        nblocks = n

    out["window"] = _validate_window(_get(raw, "window", dict, "", required=True),
                                     nblocks, m)
    return ProblemConfig(kind, name or kind, out)


# --- runtime builders ---------------------------------------------------------


def build_phi(cfg: dict, m: int, T: float) -> phi_ops.PhiOperator:
    name = cfg["name"]
    if name == "identity":
        return phi_ops.identity_operator(m, T)
    if name == "p_laplacian":
        return phi_ops.p_laplacian(cfg["p"], m, T)
    if name == "pt_laplacian":
        return phi_ops.pt_laplacian(cfg["p_expr"], m, T)
    if name == "mean_curvature":
        return phi_ops.mean_curvature(m, T)
    if name == "minkowski":
        return phi_ops.minkowski(m, T)
    if name == "rotation":
        return phi_ops.rotation(T)
    if name == "swap_negate":
        return phi_ops.swap_negate(T)
    if name == "scaled":
        inner = build_phi(cfg["inner"], m, T)
        return phi_ops.scaled_operator(cfg["eta"], inner, period=T,
                                       inner_linear=cfg.get("inner_linear", False))
    return phi_ops.custom_operator(
        cfg["forward"], cfg.get("inverse"), m, T,
        domain_radius=cfg.get("domain_radius", math.inf),
        range_radius=cfg.get("range_radius", math.inf),
    )


def _window_from_config(wcfg: dict, deriv_map=None) -> Window:
    return Window(rho=np.array(wcfg["rho"]), omega1=np.array(wcfg["omega1"]),
                  rho_prime=wcfg.get("rho_prime"), deriv_map=deriv_map)


@dataclass
class BuiltProblem:
    config: ProblemConfig
    kind: str
    family: object = None
    window: Window | None = None
    phi: phi_ops.PhiOperator | None = None
    f: object = None  # second-order field (t, x, y)
    f_tilde: object = None
    f0: object = None
    algebraic_f: object = None
    x0: np.ndarray | None = None
    box: np.ndarray | None = None


def build_problem(cfg: ProblemConfig) -> BuiltProblem:
    """Turn a validated config into runtime fields, operators, and windows."""
    raw = cfg.raw
    if cfg.kind == "algebraic":
        alg = raw["algebraic"]
        k = len(alg["x0"])
        xvars = [f"x{j + 1}" for j in range(k)]
        base = field_from_expressions(alg["f"], xvars, k, extra=("lambda",))

        def f(x, lam):
            return base(0.0, np.asarray(x, dtype=float), lam)

        return BuiltProblem(cfg, "algebraic", algebraic_f=f,
                            x0=np.array(alg["x0"]), box=np.array(alg["window"]))

    m, T = raw["m"], raw["T"]
    if cfg.kind == "cyclic":
        sys = build_cyclic(raw["n"], m, T, raw["g"], raw["h"],
                           domain=raw.get("domain"))
        hom = raw["homotopy"]
        if hom["kind"] == "scaling":
            fam = make_homotopy(sys, "scaling")
        else:
            all_names = [nm for b in range(1, raw["n"] + 1)
                         for nm in block_variable_names(b, m)]
            ht = field_from_expressions(hom["h_tilde"], all_names, raw["n"] * m,
                                        extra=("lambda",))
            h0f = field_from_expressions(hom["h0"], all_names, raw["n"] * m)

            def h_tilde(t, x, lam):
                return ht(t, x, lam)

            def h0(x):
                return h0f(0.0, x)

            fam = make_homotopy(sys, "deformation", h_tilde=h_tilde, h0=h0)
        return BuiltProblem(cfg, "cyclic", family=fam,
                            window=_window_from_config(raw["window"]))

    if cfg.kind == "second_order":
        op = build_phi(raw["phi"], m, T)
        xv = ["x"] if m == 1 else [f"x{j + 1}" for j in range(m)]
        yv = ["y"] if m == 1 else [f"y{j + 1}" for j in range(m)]
        base = field_from_expressions(raw["f"], xv + yv, 2 * m)

        def f(t, x, y):
            return base(t, np.concatenate([np.asarray(x, dtype=float),
                                           np.asarray(y, dtype=float)], axis=-1))

        f_tilde = f0 = None
        if raw["homotopy"]["kind"] == "deformation":
            bt = field_from_expressions(raw["homotopy"]["f_tilde"], xv + yv, 2 * m,
                                        extra=("lambda",))
            b0 = field_from_expressions(raw["homotopy"]["f0"], xv + yv, 2 * m)

            def f_tilde(t, x, y, lam):
                return bt(t, np.concatenate([np.asarray(x, dtype=float),
                                             np.asarray(y, dtype=float)], axis=-1), lam)

            def f0(x, y):
                return b0(0.0, np.concatenate([np.asarray(x, dtype=float),
                                               np.asarray(y, dtype=float)], axis=-1))

        def deriv_map(t, vals, op=op, m=m):
            return phi_ops.phi_inverse(op, t, vals[:, m:])

        window = _window_from_config(raw["window"], deriv_map=deriv_map)
        return BuiltProblem(cfg, "second_order", phi=op, f=f, f_tilde=f_tilde, f0=f0,
                            window=window)

    # higher_order
    op = build_phi(raw["phi"], m, T)
    n = raw["n"]
    all_names = [nm for b in range(1, n + 1) for nm in block_variable_names(b, m)]
    h = field_from_expressions(raw["h"], all_names, n * m)
    sys = reduce_higher_order(op, h, n)
    fam = make_homotopy(sys, "scaling")

    def deriv_map(t, vals, op=op, m=m):
        return phi_ops.phi_inverse(op, t, vals[:, m : 2 * m])

    window = _window_from_config(raw["window"], deriv_map=deriv_map)
    return BuiltProblem(cfg, "higher_order", family=fam, window=window, phi=op)
