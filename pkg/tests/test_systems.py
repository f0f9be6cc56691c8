import numpy as np
import pytest

from pericont import phi_ops, systems
from pericont.errors import (
    DimensionMismatch,
    DomainMissingOrigin,
    DomainViolation,
    EndpointMismatch,
)

from conftest import random_trig_path


def test_build_cyclic_valid():
    sys = systems.build_cyclic(2, 1, 1.0, ["x2"], "x1")
    assert sys.n == 2 and sys.m == 1
    out = sys.g[0](0.0, np.array([0.5]))
    assert out[0] == 0.5


def test_build_cyclic_domain_missing_origin():
    with pytest.raises(DomainMissingOrigin):
        systems.build_cyclic(2, 1, 1.0, ["x2"], "x1", domain=[[[-1, 1]], [[1, 2]]])


def test_build_cyclic_bad_block_reference():
    with pytest.raises(DimensionMismatch):
        systems.build_cyclic(2, 1, 1.0, ["x3"], "x1")


def test_build_cyclic_wrong_field_count():
    with pytest.raises(DimensionMismatch):
        systems.build_cyclic(3, 1, 1.0, ["x2"], "x1")


# --- second-order reduction ------------------------------------------------------


def test_reduce_identity_harmonic():
    op = phi_ops.identity_operator()
    f = lambda t, x, y: -x
    sys = systems.reduce_second_order(op, f)
    fam = systems.make_homotopy(sys, "scaling")
    rhs = systems.eval_rhs(fam, 0.0, np.array([1.0, 0.0]), 1.0)
    assert np.array_equal(rhs, [0.0, -1.0])


def test_reduce_dimension_mismatch():
    op = phi_ops.minkowski(m=2)
    with pytest.raises(DimensionMismatch):
        systems.reduce_second_order(op, lambda t, x, y: -x, m=1)


def test_reduce_second_order_domain_is_range_box():
    op = phi_ops.mean_curvature()
    sys = systems.reduce_second_order(op, lambda t, x, y: -x)
    assert sys.domain[1, 0, 1] == pytest.approx(0.999, abs=1e-12)
    with pytest.raises(DomainViolation):
        sys.assert_in_domain(np.array([0.0, 0.9995]))


def test_reduce_higher_order_chain():
    op = phi_ops.identity_operator()
    h = lambda t, x: -x[..., :1]
    sys = systems.reduce_higher_order(op, h, 3)
    fam = systems.make_homotopy(sys, "scaling")
    rhs = systems.eval_rhs(fam, 0.0, np.array([1.0, 2.0, 3.0]), 1.0)
    assert np.array_equal(rhs, [2.0, 3.0, -1.0])


def test_reduce_higher_order_n2_matches_second_order():
    op = phi_ops.minkowski()
    f = lambda t, x, y: -x

    def h(t, x):
        return f(t, x[..., :1], phi_ops.phi_inverse(op, t, x[..., 1:]))

    s_a = systems.reduce_higher_order(op, h, 2)
    s_b = systems.reduce_second_order(op, f)
    pt = np.array([0.3, 0.8])
    fam_a = systems.make_homotopy(s_a, "scaling")
    fam_b = systems.make_homotopy(s_b, "scaling")
    assert np.allclose(systems.eval_rhs(fam_a, 0.2, pt, 1.0),
                       systems.eval_rhs(fam_b, 0.2, pt, 1.0), atol=1e-15)


def test_reduce_higher_order_p_laplacian_inverse_is_signed_sqrt():
    op = phi_ops.p_laplacian(3)
    sys = systems.reduce_higher_order(op, lambda t, x: -x[..., :1], 3)
    w = np.array([[4.0], [-9.0], [0.25]])
    out = sys.g[0](0.0, w)
    assert np.allclose(out[:, 0], [2.0, -3.0, 0.5], atol=1e-12)


# --- homotopy families -----------------------------------------------------------


def test_scaling_family_endpoints():
    sys = systems.build_cyclic(2, 1, 1.0, ["x2"], "x1 - 0.2")
    fam = systems.make_homotopy(sys, "scaling")
    x = np.array([0.5, 0.1])
    assert systems.eval_rhs(fam, 0.3, x, 0.0)[1] == 0.0
    full = systems.eval_rhs(fam, 0.3, x, 1.0)
    assert full[1] == pytest.approx(0.3, abs=1e-15)


def test_scaling_lambda_zero_kernel_states():
    # with every downstream block at 0 the rhs vanishes iff g_i(t, 0) = 0
    sys = systems.build_cyclic(3, 1, 1.0, ["x2", "x3"], "x1")
    fam = systems.make_homotopy(sys, "scaling")
    rhs = systems.eval_rhs(fam, 0.1, np.array([0.7, 0.0, 0.0]), 0.0)
    assert np.array_equal(rhs, np.zeros(3))


def test_deformation_convex_combination():
    sys = systems.build_cyclic(2, 1, 1.0, ["x2"], "-x1 + sin(2*pi*t)")

    def h0(x):
        return -np.asarray(x, dtype=float)[..., :1]

    def h_tilde(t, x, lam):
        t = np.asarray(t, dtype=float)
        x = np.asarray(x, dtype=float)
        return (1 - lam) * h0(x) + lam * (-x[..., :1] + np.sin(2 * np.pi * t)[..., None])

    fam = systems.make_homotopy(sys, "deformation", h_tilde=h_tilde, h0=h0)
    x = np.array([0.4, -0.6])
    assert systems.eval_rhs(fam, 0.2, x, 0.0)[1] == pytest.approx(-0.4, abs=1e-15)


def test_deformation_endpoint_mismatch():
    sys = systems.build_cyclic(2, 1, 1.0, ["x2"], "-x1")
    h0 = lambda x: -np.asarray(x, dtype=float)[..., :1]
    bad_tilde = lambda t, x, lam: h0(x) + 0.5  # does not match h at lam = 1
    with pytest.raises(EndpointMismatch):
        systems.make_homotopy(sys, "deformation", h_tilde=bad_tilde, h0=h0)


def test_homotopy_endpoint_identities_random_points():
    sys = systems.build_cyclic(2, 1, 1.0, ["x2"], "-x1 + 0.5*cos(2*pi*t)")

    def h0(x):
        return -np.asarray(x, dtype=float)[..., :1]

    def h_tilde(t, x, lam):
        t = np.asarray(t, dtype=float)
        x = np.asarray(x, dtype=float)
        h1 = -x[..., :1] + 0.5 * np.cos(2 * np.pi * t)[..., None]
        return (1 - lam) * h0(x) + lam * h1

    fam = systems.make_homotopy(sys, "deformation", h_tilde=h_tilde, h0=h0)
    rng = np.random.default_rng(0)
    for _ in range(100):
        t = float(rng.random())
        x = rng.uniform(-1, 1, size=2)
        r1 = fam.rhs(t, x, 1.0)
        assert abs(r1[1] - sys.h(t, x)[0]) <= 1e-12
        r0 = fam.rhs(t, x, 0.0)
        assert abs(r0[1] - h0(x)[0]) <= 1e-12


def test_eval_rhs_domain_violation():
    dom = [[[-1, 1]], [[-1, 1]]]
    sys = systems.build_cyclic(2, 1, 1.0, ["x2"], "x1", domain=dom)
    fam = systems.make_homotopy(sys, "scaling")
    with pytest.raises(DomainViolation):
        systems.eval_rhs(fam, 0.0, np.array([2.0, 0.0]), 1.0)


# --- reduction equivalence (continuous-level identity) ------------------------------


def _reduction_gap(op, f, x_of, xp_of, t):
    """Blockwise gap between the cyclic residual at (x, phi(., x')) and the
    second-order residual, sharing one dense finite-difference derivative."""
    x = x_of(t)
    xp = xp_of(t)
    x2 = phi_ops.phi_eval(op, t, xp)
    h = 1e-6
    dphi = (phi_ops.phi_eval(op, t + h, xp_of(t + h))
            - phi_ops.phi_eval(op, t - h, xp_of(t - h))) / (2.0 * h)
    # block 1: x' - phi^{-1}(t, x_2) vs the identically-zero reference
    r1 = xp - phi_ops.phi_inverse(op, t, x2)
    # block 2: d/dt[phi] - f(t, x, phi^{-1}(t, x_2)) vs d/dt[phi] - f(t, x, x')
    r2_cyclic = dphi - f(t, x, phi_ops.phi_inverse(op, t, x2))
    r2_second = dphi - f(t, x, xp)
    return max(float(np.max(np.abs(r1))), float(np.max(np.abs(r2_cyclic - r2_second))))


@pytest.mark.parametrize("make_op", [phi_ops.identity_operator,
                                     lambda: phi_ops.minkowski(),
                                     lambda: phi_ops.p_laplacian(3)],
                         ids=["identity", "minkowski", "p_laplacian3"])
def test_reduction_equivalence_random_paths(make_op):
    op = make_op()
    rng = np.random.default_rng(17)
    t = np.linspace(0.0, 1.0, 257)

    def f(tt, x, y):
        tt = np.asarray(tt, dtype=float)
        return np.sin(2 * np.pi * tt)[..., None] + 0.7 * x - 0.3 * y**2

    for _ in range(10):
        x_of, xp_of = random_trig_path(rng)
        assert _reduction_gap(op, f, x_of, xp_of, t) <= 1e-8


def test_periodic_boundary_transfer():
    # x'(0) = x'(T) implies phi(0, x'(0)) = phi(T, x'(T))
    s = np.array([0.37, -0.11])
    rot = phi_ops.rotation(period=1.0)
    assert np.array_equal(phi_ops.phi_eval(rot, 0.0, s), phi_ops.phi_eval(rot, 1.0, s))
    sn = phi_ops.swap_negate()
    assert np.array_equal(phi_ops.phi_eval(sn, 0.0, s), phi_ops.phi_eval(sn, 1.0, s))
    mk = phi_ops.minkowski()
    s1 = np.array([0.4])
    assert np.array_equal(phi_ops.phi_eval(mk, 0.0, s1), phi_ops.phi_eval(mk, 1.0, s1))
    ptl = phi_ops.pt_laplacian("3 + sin(2*pi*t)")
    gap = np.max(np.abs(phi_ops.phi_eval(ptl, 0.0, s1) - phi_ops.phi_eval(ptl, 1.0, s1)))
    assert gap <= 1e-12
