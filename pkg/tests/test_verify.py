import numpy as np
import pytest

from pericont import bvp, phi_ops, systems, verify
from pericont.averaging import averaged_field, h_hat
from pericont.continuation import Window
from pericont.errors import MismatchDetected, PhiChecksFailed

from conftest import (
    manufactured_field,
    manufactured_window,
    random_product_system,
    xstar,
)


# --- coupling-field hypothesis -----------------------------------------------------


def test_h2_passes_for_minkowski_reduction(quad):
    sys = systems.reduce_second_order(phi_ops.minkowski(), lambda t, x, y: -x)
    window = Window(rho=[1.0, 5.0], omega1=[[-1.0, 1.0]])
    entry = verify.check_coupling_hypotheses(sys, window, quad)
    assert entry.status == "pass"


def test_h2_detects_off_origin_common_zero(quad):
    sys = systems.build_cyclic(2, 1, 1.0, ["sin(x2)"], "x1")
    window = Window(rho=[4.0, 4.0], omega1=[[-4.0, 4.0]])
    entry = verify.check_coupling_hypotheses(sys, window, quad)
    assert entry.status == "fail"
    w = entry.evidence["fields"][0]["spurious_zero_at"]
    assert abs(abs(w[0]) - np.pi) <= 1e-6


def test_h2_detects_even_coupling_collision(quad):
    sys = systems.build_cyclic(2, 1, 1.0, ["x2^2"], "x1")
    window = Window(rho=[2.0, 2.0], omega1=[[-2.0, 2.0]])
    entry = verify.check_coupling_hypotheses(sys, window, quad)
    assert entry.status == "fail"
    assert not entry.evidence["fields"][0]["average_injective"]


# --- closing-field hypothesis -------------------------------------------------------


def test_closing_degree_affine_pass(quad):
    sys = systems.build_cyclic(2, 1, 1.0, ["x2"], "x1 - 0.3")
    window = Window(rho=[2.0, 2.0], omega1=[[-2.0, 2.0]])
    entry = verify.check_closing_degree(sys, window, quad)
    assert entry.status == "heuristic_pass"
    assert entry.evidence["degree"] == 1
    assert entry.evidence["degree_certified"]


def test_closing_degree_zero_fails_with_zero_list(quad):
    sys = systems.build_cyclic(2, 1, 1.0, ["x2"], "x1^2 - 1")
    window = Window(rho=[2.0, 2.0], omega1=[[-2.0, 2.0]])
    entry = verify.check_closing_degree(sys, window, quad)
    assert entry.status == "fail"
    assert entry.evidence["degree"] == 0
    zeros = sorted(z[0] for z in entry.evidence["zeros"])
    assert zeros[0] == pytest.approx(-1.0, abs=1e-9)
    assert zeros[1] == pytest.approx(1.0, abs=1e-9)


def test_closing_degree_boundary_zero_fails(quad):
    sys = systems.build_cyclic(2, 1, 1.0, ["x2"], "x1^2 - 4")
    window = Window(rho=[2.0, 2.0], omega1=[[-2.0, 2.0]])
    entry = verify.check_closing_degree(sys, window, quad)
    assert entry.status == "fail"
    assert not entry.evidence["boundary_clear"]


# --- degree product formula -----------------------------------------------------------


def test_product_formula_worked_linear(quad):
    sys = systems.build_cyclic(2, 1, 1.0, ["x2"], "x1")
    window = Window(rho=[1.5, 1.5], omega1=[[-1.5, 1.5]])
    entry = verify.product_formula_check(sys, window, quad)
    assert entry.evidence["direct"] == -1
    assert entry.evidence["negated_product"] == -1
    assert entry.evidence["plain_product"] == -1


def test_product_formula_worked_cubic(quad):
    sys = systems.build_cyclic(2, 1, 1.0, ["x2^3"], "-x1")
    window = Window(rho=[1.5, 1.5], omega1=[[-1.5, 1.5]])
    entry = verify.product_formula_check(sys, window, quad)
    assert (entry.evidence["direct"], entry.evidence["negated_product"],
            entry.evidence["plain_product"]) == (1, 1, 1)


def test_product_formula_degree_zero_case(quad):
    sys = systems.build_cyclic(2, 1, 1.0, ["x2"], "x1^2 - 1")
    window = Window(rho=[2.0, 2.0], omega1=[[-2.0, 2.0]])
    entry = verify.product_formula_check(sys, window, quad)
    assert (entry.evidence["direct"], entry.evidence["negated_product"],
            entry.evidence["plain_product"]) == (0, 0, 0)


@pytest.mark.parametrize("n,m,seed", [(2, 1, 11), (2, 1, 12), (3, 1, 13), (2, 2, 14)])
def test_product_formula_random_systems(n, m, seed, quad):
    sys = random_product_system(n, m, seed)
    window = Window(rho=[2.0] * n, omega1=[[-2.0, 2.0]] * m)
    entry = verify.product_formula_check(sys, window, quad)
    ev = entry.evidence
    assert ev["direct"] == ev["negated_product"] == ev["plain_product"]


def test_product_formula_slice_excluding_zero_stays_consistent(quad):
    # the constants-slice box may exclude the averaged zero; all three
    # integers must then agree at 0
    sys = systems.build_cyclic(2, 1, 1.0, ["x2"], "x1 - 0.5")
    window = Window(rho=[2.0, 2.0], omega1=[[0.8, 2.0]])
    entry = verify.product_formula_check(sys, window, quad)
    assert (entry.evidence["direct"], entry.evidence["negated_product"],
            entry.evidence["plain_product"]) == (0, 0, 0)


def test_product_formula_mismatch_never_silent(quad, monkeypatch):
    # corrupt one degree computation; the check must raise, not report pass
    import pericont.verify as v

    real = v.brouwer_degree
    calls = {"n": 0}

    def corrupted(f, region, **opts):
        res = real(f, region, **opts)
        calls["n"] += 1
        if calls["n"] == 1:  # flip the sign of the direct degree
            return type(res)(-res.value if res.value else 1, res.method,
                             res.certified, res.boundary_min_norm)
        return res

    monkeypatch.setattr(v, "brouwer_degree", corrupted)
    sys = systems.build_cyclic(2, 1, 1.0, ["x2"], "x1")
    window = Window(rho=[1.5, 1.5], omega1=[[-1.5, 1.5]])
    with pytest.raises(MismatchDetected):
        v.product_formula_check(sys, window, quad)


# --- averaged-field identity -----------------------------------------------------------


def test_fhat_equals_hhat_on_random_problems(quad):
    rng = np.random.default_rng(23)
    ops = [phi_ops.identity_operator(), phi_ops.minkowski(),
           phi_ops.mean_curvature(), phi_ops.p_laplacian(3)]
    for k in range(10):
        a, b, c, d = rng.uniform(-1.0, 1.0, 4)

        def f(t, x, y, a=a, b=b, c=c, d=d):
            t = np.asarray(t, dtype=float)
            ripple = np.sin(2 * np.pi * t)[..., None] * (1.0 + x)
            return a + b * x + c * x**2 + d * y + ripple

        op = ops[k % len(ops)]
        sys = systems.reduce_second_order(op, f)
        fhat = averaged_field(lambda t, w: f(t, w, np.zeros_like(w)), 1.0, quad)
        hhat = h_hat(sys, quad)
        grid = np.linspace(-1.0, 1.0, 21)[:, None]
        assert np.max(np.abs(fhat(grid) - hhat(grid))) <= 1e-10


# --- full pipelines ---------------------------------------------------------------


def test_manufactured_averaged_field_is_identity(quad):
    # the forcing integrates to zero over the period, so h_hat(w) = w
    sys = systems.reduce_second_order(phi_ops.minkowski(), manufactured_field)
    hh = h_hat(sys, quad)
    grid = np.linspace(-0.5, 0.5, 21)[:, None]
    assert np.max(np.abs(hh(grid) - grid)) <= 1e-10


def test_pipeline_reclassifies_natural_step_failure_as_fold(quad):
    # fold analog on the mesh: natural stepping stalls at lambda = 1/2 and the
    # one-shot arclength retry resolves it into a fold report
    sys = systems.build_cyclic(2, 1, 1.0, ["x2"], "4*x1^2 + 1")

    def h_tilde(t, x, lam):
        x = np.asarray(x, dtype=float)
        return 4.0 * x[..., :1] ** 2 + 2.0 * lam - 1.0

    def h0(x):
        x = np.asarray(x, dtype=float)
        return 4.0 * x[..., :1] ** 2 - 1.0

    fam = systems.make_homotopy(sys, "deformation", h_tilde=h_tilde, h0=h0)
    window = Window(rho=[1.0, 1.0], omega1=[[-1.0, 1.0]])
    res = verify.run_deformation_pipeline(fam, window, mesh_size=16, q=quad)
    kinds = {t.status.kind for t in res.traces}
    assert kinds == {"fold_detected"}
    for t in res.traces:
        assert t.status.lambda_star == pytest.approx(0.5, abs=1e-6)


def test_run_scaling_pipeline_manufactured(quad):
    op = phi_ops.minkowski()
    sys = systems.reduce_second_order(op, manufactured_field)
    fam = systems.make_homotopy(sys, "scaling")
    res = verify.run_scaling_pipeline(fam, manufactured_window(op), mesh_size=64, q=quad)
    assert res.hypotheses.verdict == "pass"
    assert [t.status.kind for t in res.traces] == ["reached_target"]
    assert len(res.solutions) == 1


def test_run_scaling_pipeline_no_starting_zero(quad):
    sys = systems.build_cyclic(2, 1, 1.0, ["x2"], "x1^2 + 1")
    fam = systems.make_homotopy(sys, "scaling")
    window = Window(rho=[2.0, 2.0], omega1=[[-2.0, 2.0]])
    res = verify.run_scaling_pipeline(fam, window, mesh_size=16, q=quad)
    assert res.hypotheses.entry("starting_zeros").status == "fail"
    assert res.traces == [] and res.solutions == []


def test_run_scaling_pipeline_boundary_exit_reported(quad):
    op = phi_ops.minkowski()
    sys = systems.reduce_second_order(op, manufactured_field)
    fam = systems.make_homotopy(sys, "scaling")
    window = Window(rho=[0.05, 10.0], omega1=[[-0.04, 0.04]])
    res = verify.run_scaling_pipeline(fam, window, mesh_size=64, q=quad)
    assert any(t.status.kind == "boundary_exit" for t in res.traces)
    assert res.hypotheses.entry("interior_traces").status == "fail"
    assert res.hypotheses.verdict == "fail"


def test_deformation_pipeline_matches_scaling_for_average_homotopy(quad):
    sys = systems.build_cyclic(2, 1, 1.0, ["x2"], "-x1 + 0.3*sin(2*pi*t)")

    def h0(x):
        return -np.asarray(x, dtype=float)[..., :1]

    def h_tilde(t, x, lam):
        t = np.asarray(t, dtype=float)
        x = np.asarray(x, dtype=float)
        return -x[..., :1] + lam * 0.3 * np.sin(2 * np.pi * t)[..., None]

    fam_def = systems.make_homotopy(sys, "deformation", h_tilde=h_tilde, h0=h0)
    window = Window(rho=[1.0, 1.0], omega1=[[-1.0, 1.0]])
    res_def = verify.run_deformation_pipeline(fam_def, window, mesh_size=64, q=quad)

    fam_scal = systems.make_homotopy(sys, "scaling")
    res_scal = verify.run_scaling_pipeline(fam_scal, window, mesh_size=64, q=quad)

    assert res_def.hypotheses.verdict == res_scal.hypotheses.verdict == "pass"
    assert [t.status.kind for t in res_def.traces] == ["reached_target"]
    assert [t.status.kind for t in res_scal.traces] == ["reached_target"]
    gap = np.max(np.abs(res_def.solutions[0].values - res_scal.solutions[0].values))
    assert gap <= 1e-8


def test_deformation_start_zero_iterations(quad):
    # autonomous closing field whose constant already solves lambda = 0
    sys = systems.build_cyclic(2, 1, 1.0, ["x2"], "-x1 + 0.2*sin(2*pi*t)")

    def h0(x):
        return -np.asarray(x, dtype=float)[..., :1]

    def h_tilde(t, x, lam):
        t = np.asarray(t, dtype=float)
        x = np.asarray(x, dtype=float)
        return -x[..., :1] + lam * 0.2 * np.sin(2 * np.pi * t)[..., None]

    fam = systems.make_homotopy(sys, "deformation", h_tilde=h_tilde, h0=h0)
    x0 = np.zeros((16, 2))
    sol = bvp.newton_correct(fam, x0, 0.0)
    assert np.array_equal(sol.values, x0)


def test_run_second_order_pipeline_manufactured_pass(quad):
    op = phi_ops.minkowski()
    res = verify.run_second_order_pipeline(op, manufactured_field, manufactured_window(op),
                               mesh_size=128, q=quad)
    assert res.hypotheses.verdict == "pass"
    sol = res.solutions[0]
    assert np.max(np.abs(sol.block(0, 1)[:, 0] - xstar(sol.nodes))) <= 1e-3
    rec = res.extras["recovered"][0]
    assert np.max(np.abs(rec["xprime"])) < 1.0  # x' stays in the unit ball
    assert rec["second_order_residual"] <= 10 * 1e-10


def test_run_second_order_pipeline_rejects_rotation(quad):
    def f(t, x, y):
        return -np.asarray(x, dtype=float)

    window = Window(rho=[1.0, 5.0], omega1=[[-1.0, 1.0], [-1.0, 1.0]])
    with pytest.raises(PhiChecksFailed) as info:
        verify.run_second_order_pipeline(phi_ops.rotation(period=1.0), f, window, mesh_size=16,
                             q=quad)
    assert "averaged_inverse" in info.value.failed


def test_run_second_order_pipeline_forced_oscillator(quad):
    op = phi_ops.identity_operator()

    def f(t, x, y):
        t = np.asarray(t, dtype=float)
        return -x + np.cos(2 * np.pi * t)[..., None]

    window = Window(rho=[1.0, 10.0], omega1=[[-1.0, 1.0]])
    res = verify.run_second_order_pipeline(op, f, window, mesh_size=64, q=quad)
    assert [t.status.kind for t in res.traces] == ["reached_target"]
    # x'' = -x + cos(2 pi t) has the explicit solution cos(2 pi t)/(1 - 4 pi^2)
    sol = res.solutions[0]
    amp = 1.0 / (1.0 - 4.0 * np.pi**2)
    exact = amp * np.cos(2 * np.pi * sol.nodes)
    assert np.max(np.abs(sol.block(0, 1)[:, 0] - exact)) <= 1e-3


def test_run_second_order_pipeline_planar_swap_negate(quad):
    # m = 2 with the non-monotone homeomorphism: the classical conditions
    # fail for it, the pipeline still continues to the target
    amp = 0.3
    w = 2 * np.pi
    op = phi_ops.swap_negate()

    def xs(t):
        t = np.asarray(t, dtype=float)
        return amp * np.stack([np.sin(w * t), np.cos(w * t)], axis=-1)

    def f(t, x, y):
        t = np.asarray(t, dtype=float)
        acc = -amp * w * w * np.stack([np.sin(w * t), np.cos(w * t)], axis=-1)
        return op.forward(t, acc) + (np.asarray(x, dtype=float) - xs(t))

    assert not phi_ops.check_legacy_monotone_coercive(op)["monotonicity"]["passed"]
    window = Window(rho=[1.0, 20.0], omega1=[[-0.6, 0.6], [-0.6, 0.6]])
    res = verify.run_second_order_pipeline(op, f, window, mesh_size=128, q=quad)
    assert res.hypotheses.verdict == "pass"
    assert res.hypotheses.entry("closing_degree").evidence["degree_method"] == "winding_2d"
    assert [t.status.kind for t in res.traces] == ["reached_target"]
    sol = res.solutions[0]
    assert np.max(np.abs(sol.block(0, 2) - xs(sol.nodes))) <= 1e-3


def test_degree_excision_monotonicity(quad):
    rng = np.random.default_rng(31)
    for _ in range(5):
        c = float(rng.uniform(-0.5, 0.5))
        sys = systems.build_cyclic(2, 1, 1.0, ["x2"], f"x1 - {c!r}")
        degs = []
        for half in (1.0, 1.7, 2.4):
            window = Window(rho=[3.0, 3.0], omega1=[[-half, half]])
            entry = verify.check_closing_degree(sys, window, quad)
            degs.append(entry.evidence["degree"])
        assert degs[0] == degs[1] == degs[2] == 1
