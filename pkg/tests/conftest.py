"""Shared problem builders for the test suite."""

import numpy as np
import pytest

from pericont import continuation, phi_ops, systems
from pericont.averaging import QuadratureRule

# Manufactured second-order problem: phi = minkowski, T = 1, exact solution
# x*(t) = AMPLITUDE * sin(2 pi t). The derivative amplitude 2 pi A must stay
# strictly inside the operator's unit domain ball.
AMPLITUDE = 0.1
OMEGA = 2.0 * np.pi


def xstar(t):
    return AMPLITUDE * np.sin(OMEGA * np.asarray(t, dtype=float))


def xstar_prime(t):
    return AMPLITUDE * OMEGA * np.cos(OMEGA * np.asarray(t, dtype=float))


def forcing(t):
    """Exact d/dt of minkowski(x*'(t)), evaluated analytically."""
    t = np.asarray(t, dtype=float)
    u = xstar_prime(t)
    du = -AMPLITUDE * OMEGA**2 * np.sin(OMEGA * t)
    return du * (1.0 - u**2) ** (-1.5)


def manufactured_field(t, x, y):
    t = np.asarray(t, dtype=float)
    x = np.asarray(x, dtype=float)
    return (forcing(t) + x[..., 0] - xstar(t))[..., None]


def manufactured_window(op=None):
    op = op or phi_ops.minkowski()

    def deriv_map(t, vals):
        return phi_ops.phi_inverse(op, t, vals[:, 1:2])

    return continuation.Window(rho=[1.0, 10.0], omega1=[[-0.5, 0.5]],
                               rho_prime=0.95, deriv_map=deriv_map)


@pytest.fixture(scope="session")
def quad():
    return QuadratureRule()


def random_trig_path(rng, m=1, period=1.0, derivative_cap=0.8):
    """Smooth random periodic path with its analytic derivative.

    The derivative sup-norm is rescaled below ``derivative_cap`` so the path
    stays inside every bounded-domain catalog operator.
    """
    kmax = 3
    a = rng.normal(size=(kmax, m))
    b = rng.normal(size=(kmax, m))
    c0 = rng.normal(size=m)
    w = 2.0 * np.pi / period

    def x(t):
        t = np.asarray(t, dtype=float)[..., None]
        out = np.broadcast_to(c0, t.shape[:-1] + (m,)).copy()
        for k in range(1, kmax + 1):
            out = out + a[k - 1] * np.sin(k * w * t) + b[k - 1] * np.cos(k * w * t)
        return out

    def xp(t):
        t = np.asarray(t, dtype=float)[..., None]
        out = np.zeros(t.shape[:-1] + (m,))
        for k in range(1, kmax + 1):
            out = out + k * w * (a[k - 1] * np.cos(k * w * t) - b[k - 1] * np.sin(k * w * t))
        return out

    tt = np.linspace(0.0, period, 512, endpoint=False)
    sup = float(np.max(np.linalg.norm(xp(tt), axis=-1)))
    scale = derivative_cap / sup

    return (lambda t: scale * x(t)), (lambda t: scale * xp(t))


def random_product_system(n, m, seed):
    """Random affine-plus-odd-cubic cyclic system with isolated averaged zeros.

    The couplings get a zero-mean time ripple so the averaged fields differ
    from any single time slice; the closing field carries an offset zero.
    """
    rng = np.random.default_rng(seed)
    gs = []
    for _ in range(n - 1):
        while True:
            amat = rng.uniform(-1, 1, size=(m, m)) + np.eye(m)
            if abs(np.linalg.det(amat)) > 0.3:
                break
        eps = 0.1 * rng.uniform(-1, 1, size=m)
        freq = int(rng.integers(1, 4))

        def g(t, w, amat=amat, eps=eps, freq=freq):
            t = np.asarray(t, dtype=float)
            ripple = np.sin(2 * np.pi * freq * t)[..., None] * (1.0 + w**2)
            return w @ amat.T + eps * w**3 + ripple

        gs.append(g)
    while True:
        bmat = rng.uniform(-1, 1, size=(m, n * m))
        if abs(np.linalg.det(bmat[:, :m])) > 0.3:
            break
    offset = 0.4 * rng.uniform(-1, 1, size=m)

    def h(t, x, bmat=bmat, offset=offset):
        t = np.asarray(t, dtype=float)
        ripple = np.cos(2 * np.pi * t)[..., None] * (1.0 + x[..., :1] ** 2)
        return (x @ bmat.T) - offset + ripple

    dom = np.empty((n, m, 2))
    dom[..., 0], dom[..., 1] = -np.inf, np.inf
    return systems.CyclicSystem(n, m, 1.0, gs, h, dom)
