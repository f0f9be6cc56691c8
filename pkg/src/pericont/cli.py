"""Command-line entry point: load a problem config, run a pipeline, write outputs.

Every subcommand writes ``report.json`` into the output directory; the
continuation paths also write one ``trace_<k>.csv`` per traced branch and, by
default, matplotlib figures next to them. Exit codes: 0 for a mathematical
pass (hypotheses hold / target reached), 2 for a clean diagnostic failure
(boundary exit, fold, failed hypothesis), 1 for operational errors.

Outputs are byte-reproducible for a fixed config and seed; wall-clock timing
is only embedded when --timings is given.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import sys as _sys
import time
from pathlib import Path

import numpy as np

from . import bvp, continuation, verify
from .averaging import averaged_field, h_hat
from .config import ProblemConfig, build_problem, load_config
from .degree import Region, brouwer_degree
from .errors import (
    ConfigError,
    MismatchDetected,
    NoStartingZero,
    PericontError,
    PhiChecksFailed,
)
from .phi_ops import (
    check_legacy_monotone_coercive,
    check_phi_axioms,
    check_inverse_factorization,
    check_averaged_inverse_injective,
)

__all__ = ["main", "entrypoint"]


# --- serialization helpers --------------------------------------------------


def _jsonable(obj):
    if isinstance(obj, (np.floating,)):
        return float(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if dataclasses.is_dataclass(obj) and not isinstance(obj, type):
        return {k: _jsonable(v) for k, v in dataclasses.asdict(obj).items()}
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (str, int, float, bool)) or obj is None:
        return obj
    return repr(obj)


def _write_report(outdir: Path, report: dict) -> None:
    text = json.dumps(_jsonable(report), indent=2, sort_keys=True) + "\n"
    (outdir / "report.json").write_text(text, encoding="utf-8")


def _status_dict(status) -> dict:
    return {
        "kind": status.kind,
        "lambda_star": status.lambda_star,
        "lambda_last": status.lambda_last,
        "which": status.which,
        "margin": status.margin,
    }


def _point_sups(solution, n: int, m: int):
    if hasattr(solution, "sup_norms"):
        return solution.sup_norms(n, m)
    return np.abs(np.atleast_1d(np.asarray(solution, dtype=float)))


def _write_trace_csv(path: Path, trace, n: int, m: int, residual_of=None) -> None:
    width = n if any(hasattr(p.solution, "sup_norms") for p in trace.points) else \
        len(_point_sups(trace.points[0].solution, n, m)) if trace.points else n
    header = ["step", "lambda"] + [f"sup_x{i + 1}" for i in range(width)] + \
        ["residual_norm", "status"]
    lines = [",".join(header)]
    last = len(trace.points) - 1
    for k, p in enumerate(trace.points):
        sups = _point_sups(p.solution, n, m)
        if hasattr(p.solution, "residual_norm"):
            rn = p.solution.residual_norm
        elif residual_of is not None:
            rn = residual_of(p.solution, p.lam)
        else:
            rn = 0.0
        status = trace.status.describe() if k == last else "accepted"
        row = [repr(k), repr(float(p.lam))] + [repr(float(s)) for s in sups] + \
            [repr(float(rn)), status]
        lines.append(",".join(row))
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")


def _trace_summary(trace, csv_name: str) -> dict:
    lams = trace.lambdas()
    return {
        "status": _status_dict(trace.status),
        "points": len(trace.points),
        "lambda_max": float(lams.max()) if lams.size else None,
        "csv": csv_name,
    }


def _solution_summary(sol: bvp.PeriodicSolution, n: int, m: int) -> dict:
    return {
        "lambda": sol.lam,
        "mesh_size": sol.mesh_size,
        "residual_norm": sol.residual_norm,
        "sup_norms": sol.sup_norms(n, m).tolist(),
    }


def _emit_traces(outdir: Path, traces, n: int, m: int, plot: bool,
                 residual_of=None) -> list:
    from . import plots

    summaries = []
    for k, trace in enumerate(traces):
        csv_name = f"trace_{k}.csv"
        _write_trace_csv(outdir / csv_name, trace, n, m, residual_of=residual_of)
        if plot and trace.points:
            plots.render_trace_figure(trace, n, m, outdir / f"trace_{k}.png")
            final = trace.points[-1].solution
            if hasattr(final, "sup_norms") and trace.status.kind == "reached_target":
                plots.render_solution_figure(final, n, m, outdir / f"solution_{k}.png")
        summaries.append(_trace_summary(trace, csv_name))
    return summaries


# --- subcommand implementations -----------------------------------------------


def _system_of(built):
    if built.kind in ("cyclic", "higher_order"):
        return built.family.base
    if built.kind == "second_order":
        return verify.build_second_order_family(built.phi, built.f).base
    raise ConfigError("problem", "this subcommand needs a differential problem")


def _family_of(built, cfg: ProblemConfig):
    if built.kind in ("cyclic", "higher_order"):
        return built.family
    hom = cfg.raw["homotopy"]
    return verify.build_second_order_family(
        built.phi, built.f, kind=hom["kind"], f_tilde=built.f_tilde, f0=built.f0)


def _cmd_run(cfg: ProblemConfig, built, outdir: Path, plot: bool) -> tuple[dict, int]:
    num = cfg.numeric
    q = cfg.quadrature()
    mode = num["mode"]
    opts = cfg.natural_options() if mode == "natural" else cfg.arclength_options()
    n, m = _dims(cfg)

    if built.kind == "algebraic":
        trace = continuation.algebraic_continue(
            built.algebraic_f, built.x0, built.box, mode=mode, opts=opts,
            tol=num["newton_tol"])

        def residual_of(x, lam):
            return float(np.max(np.abs(built.algebraic_f(np.atleast_1d(x), lam))))

        summaries = _emit_traces(outdir, [trace], built.x0.size, 1, plot,
                                 residual_of=residual_of)
        report = {"traces": summaries, "hypotheses": None, "solutions": []}
        return report, 0 if trace.status.kind == "reached_target" else 2

    try:
        if built.kind == "second_order":
            hom = cfg.raw["homotopy"]
            res = verify.run_second_order_pipeline(
                built.phi, built.f, built.window, mesh_size=num["mesh"], q=q,
                kind=hom["kind"], f_tilde=built.f_tilde, f0=built.f0, mode=mode,
                opts=opts, tol=num["newton_tol"], seed=num["seed"])
        else:
            if built.kind == "higher_order":
                verify.check_phi_gate(built.phi, q, seed=num["seed"])
            fam = built.family
            if fam.kind == "scaling":
                res = verify.run_scaling_pipeline(fam, built.window, mesh_size=num["mesh"],
                                           q=q, mode=mode, opts=opts,
                                           tol=num["newton_tol"], seed=num["seed"])
            else:
                res = verify.run_deformation_pipeline(fam, built.window, mesh_size=num["mesh"],
                                           q=q, mode=mode, opts=opts,
                                           tol=num["newton_tol"], seed=num["seed"])
    except PhiChecksFailed as exc:
        return {"hypotheses": {"verdict": "fail", "phi_checks_failed": exc.failed},
                "traces": [], "solutions": []}, 2
    except MismatchDetected as exc:
        return {"hypotheses": {"verdict": "fail", "product_mismatch": {
            "direct": exc.direct, "negated_product": exc.negated_product,
            "plain_product": exc.plain_product}}, "traces": [], "solutions": []}, 2

    summaries = _emit_traces(outdir, res.traces, n, m, plot)
    report = {
        "hypotheses": {"verdict": res.hypotheses.verdict,
                       "entries": [_jsonable(e) for e in res.hypotheses.entries]},
        "traces": summaries,
        "solutions": [_solution_summary(s, n, m) for s in res.solutions],
    }
    if "phi_checks" in res.extras:
        report["phi_checks"] = res.extras["phi_checks"]
    if "recovered" in res.extras:
        report["recovered"] = [
            {"second_order_residual": r["second_order_residual"]}
            for r in res.extras["recovered"]
        ]
    ok = res.hypotheses.verdict == "pass" and any(
        t.status.kind == "reached_target" for t in res.traces)
    return report, 0 if ok else 2


def _cmd_continue(cfg: ProblemConfig, built, outdir: Path, plot: bool) -> tuple[dict, int]:
    num = cfg.numeric
    q = cfg.quadrature()
    mode = num["mode"]
    opts = cfg.natural_options() if mode == "natural" else cfg.arclength_options()
    n, m = _dims(cfg)

    if built.kind == "algebraic":
        trace = continuation.algebraic_continue(
            built.algebraic_f, built.x0, built.box, mode=mode, opts=opts,
            tol=num["newton_tol"])

        def residual_of(x, lam):
            return float(np.max(np.abs(built.algebraic_f(np.atleast_1d(x), lam))))

        summaries = _emit_traces(outdir, [trace], built.x0.size, 1, plot,
                                 residual_of=residual_of)
        return ({"traces": summaries},
                0 if trace.status.kind == "reached_target" else 2)

    fam = _family_of(built, cfg)
    try:
        starts = bvp.solve_averaged_start(fam.base, built.window, q,
                                          mesh_size=num["mesh"])
    except NoStartingZero:
        return {"traces": [], "starting_zeros": []}, 2
    traces, _ = verify._run_traces(fam, starts, built.window, num["mesh"], mode,
                                   opts, num["newton_tol"])
    summaries = _emit_traces(outdir, traces, n, m, plot)
    ok = any(t.status.kind == "reached_target" for t in traces)
    return ({"traces": summaries,
             "starting_zeros": [w.tolist() for w, _ in starts]},
            0 if ok else 2)


def _cmd_degree(cfg: ProblemConfig, built, outdir: Path, plot: bool) -> tuple[dict, int]:
    q = cfg.quadrature()
    if built.kind == "algebraic":
        box = built.box

        def f0(pts):
            pts = np.atleast_2d(pts)
            return np.stack([built.algebraic_f(p, 0.0) for p in pts])

        region = Region.interval(box[0, 0], box[0, 1]) if box.shape[0] == 1 \
            else Region.box(box)
        result = brouwer_degree(f0, region)
    else:
        sys = _system_of(built)
        hhat = h_hat(sys, q)
        box = np.asarray(built.window.omega1, dtype=float)
        region = Region.interval(box[0, 0], box[0, 1]) if sys.m == 1 else Region.box(box)
        result = brouwer_degree(hhat, region)
    report = {"degree": _jsonable(result)}
    return report, 0 if result.value != 0 else 2


def _cmd_average(cfg: ProblemConfig, built, outdir: Path, plot: bool) -> tuple[dict, int]:
    from . import plots

    q = cfg.quadrature()
    sys = _system_of(built)
    m = sys.m
    box = np.asarray(built.window.omega1, dtype=float)
    per_axis = 201 if m == 1 else 21
    axes = [np.linspace(box[j, 0], box[j, 1], per_axis) for j in range(m)]
    ws = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, m)
    hhat = h_hat(sys, q)
    hvals = np.atleast_2d(hhat(ws))

    lines = [",".join(["field"] + [f"w{j + 1}" for j in range(m)]
                      + [f"v{j + 1}" for j in range(m)])]
    for w, v in zip(ws, hvals):
        lines.append(",".join(["h_avg"] + [repr(float(x)) for x in w]
                              + [repr(float(x)) for x in v]))
    for i, gi in enumerate(sys.g):
        gbox = np.stack([-built.window.rho[i + 1] * np.ones(m),
                         built.window.rho[i + 1] * np.ones(m)], axis=1)
        gaxes = [np.linspace(gbox[j, 0], gbox[j, 1], per_axis) for j in range(m)]
        gws = np.stack(np.meshgrid(*gaxes, indexing="ij"), axis=-1).reshape(-1, m)
        gvals = np.atleast_2d(averaged_field(gi, sys.T, q)(gws))
        for w, v in zip(gws, gvals):
            lines.append(",".join([f"g{i + 1}_avg"] + [repr(float(x)) for x in w]
                                  + [repr(float(x)) for x in v]))
    (outdir / "averaged.csv").write_text("\n".join(lines) + "\n", encoding="utf-8")
    if plot and m <= 2:
        plots.render_averaged_figure(ws, hvals, outdir / "averaged.png",
                                     label="averaged closing field")
    return {"averaged_csv": "averaged.csv", "samples": int(ws.shape[0])}, 0


def _cmd_check_phi(cfg: ProblemConfig, built, outdir: Path, plot: bool) -> tuple[dict, int]:
    if built.phi is None:
        raise ConfigError("phi", "check-phi needs a problem with an operator")
    q = cfg.quadrature()
    seed = cfg.numeric["seed"]
    axioms = check_phi_axioms(built.phi)
    star = check_averaged_inverse_injective(built.phi, q, seed=seed)
    sharp = None
    if built.phi.factorization is not None:
        sharp = check_inverse_factorization(built.phi)
    legacy = check_legacy_monotone_coercive(built.phi, seed=seed)
    ok = axioms["passed"] and (star["passed"] or (sharp is not None and sharp["passed"]))
    report = {"phi_checks": {"axioms": axioms, "averaged_inverse": star, "inverse_factorization": sharp,
                             "legacy": legacy}}
    return report, 0 if ok else 2


def _cmd_check_hypotheses(cfg: ProblemConfig, built, outdir: Path,
                          plot: bool) -> tuple[dict, int]:
    q = cfg.quadrature()
    sys = _system_of(built)
    report = verify.HypothesisReport()
    report.entries.append(verify.check_coupling_hypotheses(sys, built.window, q, seed=cfg.numeric["seed"]))
    report.entries.append(verify.check_closing_degree(sys, built.window, q))
    out = {"hypotheses": {"verdict": report.verdict,
                          "entries": [_jsonable(e) for e in report.entries]}}
    return out, 0 if report.verdict == "pass" else 2


def _cmd_product_check(cfg: ProblemConfig, built, outdir: Path,
                       plot: bool) -> tuple[dict, int]:
    q = cfg.quadrature()
    sys = _system_of(built)
    try:
        entry = verify.product_formula_check(sys, built.window, q)
    except MismatchDetected as exc:
        return {"product_check": {"equal": False, "direct": exc.direct,
                                  "negated_product": exc.negated_product,
                                  "plain_product": exc.plain_product}}, 2
    ev = entry.evidence
    return {"product_check": {"equal": True, "direct": ev["direct"],
                              "negated_product": ev["negated_product"],
                              "plain_product": ev["plain_product"],
                              "negated_factors": ev["negated_factors"],
                              "plain_factors": ev["plain_factors"]}}, 0


def _dims(cfg: ProblemConfig) -> tuple[int, int]:
    raw = cfg.raw
    if cfg.kind == "algebraic":
        k = len(raw["algebraic"]["x0"])
        return k, 1
    if cfg.kind == "second_order":
        return 2, raw["m"]
    return raw["n"], raw["m"]


_COMMANDS = {
    "run": _cmd_run,
    "continue": _cmd_continue,
    "degree": _cmd_degree,
    "average": _cmd_average,
    "check-phi": _cmd_check_phi,
    "check-hypotheses": _cmd_check_hypotheses,
    "product-check": _cmd_product_check,
}


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="pericont",
        description="Periodic-solution continuation toolkit for cyclic systems",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name in _COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", required=True, help="problem config (JSON)")
        p.add_argument("--out", default="out", help="output directory")
        p.add_argument("--mesh", type=int, default=None, help="override mesh size M")
        p.add_argument("--seed", type=int, default=None, help="override sampling seed")
        p.add_argument("--quad", type=int, default=None, help="override quadrature panels")
        p.add_argument("--quad-kind", choices=["composite_simpson", "composite_gauss4"],
                       default=None)
        p.add_argument("--mode", choices=["natural", "arclength"], default=None)
        p.add_argument("--no-plot", action="store_true", help="skip figure rendering")
        p.add_argument("--timings", action="store_true",
                       help="embed wall-clock timing in the report "
                            "(breaks byte reproducibility)")
    return parser


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    t0 = time.perf_counter()
    try:
        cfg = load_config(args.config)
        for key, val in (("mesh", args.mesh), ("seed", args.seed),
                         ("quad_panels", args.quad), ("quad_kind", args.quad_kind),
                         ("mode", args.mode)):
            if val is not None:
                cfg.numeric[key] = val
        built = build_problem(cfg)
        outdir = Path(args.out)
        outdir.mkdir(parents=True, exist_ok=True)
        body, code = _COMMANDS[args.command](cfg, built, outdir, not args.no_plot)
    except (ConfigError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=_sys.stderr)
        return 1
    except PericontError as exc:
        print(f"error: {exc}", file=_sys.stderr)
        return 1

    report = {
        "problem": cfg.name,
        "command": args.command,
        "config": cfg.raw,
        "timings": {"wall_s": time.perf_counter() - t0} if args.timings else None,
        "exit_code": code,
    }
    report.update(body)
    _write_report(outdir, report)
    print(f"{args.command}: exit {code}; report written to {outdir / 'report.json'}")
    return code


def entrypoint() -> None:
    raise SystemExit(main())


if __name__ == "__main__":
    entrypoint()
