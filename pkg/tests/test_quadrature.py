import numpy as np
import pytest
from hypothesis import given, strategies as st

from qbx3d.geometry import sphere_domain
from qbx3d.quadrature import (direct_layer_eval, double_layer_kernel, single_layer_kernel,
                              upsample, upsampled_panel_quad)
from qbx3d.reference import separation_solution, sphere_angles
from qbx3d.specfun import spherical_harmonic

# dblquad (epsrel 1e-14) of the panel integrals below; unit sphere, N_theta = 16,
# panel 87, target 1.1 * (panel-center direction), sigma = cos(t) sin(p) + 1/2
PANEL_DL_ORACLE = 0.11112800712360528
PANEL_SL_ORACLE = 0.02182749169532259


def _panel_setup():
    d = sphere_domain(16)
    pan = d.panels[87]
    t0, t1, p0, p1 = pan.box
    tm, pm = 0.5 * (t0 + t1), 0.5 * (p0 + p1)
    u = np.array([np.sin(tm) * np.cos(pm), np.sin(tm) * np.sin(pm), np.cos(tm)])
    return pan, 1.1 * u, np.cos(pan.theta) * np.sin(pan.phi) + 0.5


def test_kernel_values():
    x, y, nu = np.array([0, 0, 2.0]), np.array([0, 0, 1.0]), np.array([0, 0, 1.0])
    assert double_layer_kernel(x, y, nu) == pytest.approx(1 / (4 * np.pi))
    assert double_layer_kernel(x, y, np.array([1.0, 0, 0])) == 0.0
    assert single_layer_kernel(x, y) == pytest.approx(1 / (4 * np.pi))
    with pytest.raises(ValueError):
        double_layer_kernel(y, y, nu)


@given(st.lists(st.floats(-1, 1), min_size=9, max_size=9))
def test_kernel_is_normal_derivative(v):
    x, y, nu = np.array(v[:3]), np.array(v[3:6]) + 3.0, np.array(v[6:])
    if np.linalg.norm(nu) < 0.1:
        return
    nu = nu / np.linalg.norm(nu)
    h = 1e-5
    G = lambda yy: single_layer_kernel(x, yy)
    fd = (G(y + h * nu) - G(y - h * nu)) / (2 * h)
    assert double_layer_kernel(x, y, nu) == pytest.approx(fd, abs=1e-6)


def test_gauss_identity_direct(sphere8):
    one = np.ones(sphere8.n_nodes)
    assert direct_layer_eval(sphere8, one, np.zeros((1, 3)))[0] == pytest.approx(-1, abs=1e-10)
    assert abs(direct_layer_eval(sphere8, one, np.array([[10.0, 0, 0]]))[0]) < 1e-10


def test_gauss_identity_converges():
    errs = []
    for n in (2, 4):
        d = sphere_domain(n)
        errs.append(abs(direct_layer_eval(d, np.ones(d.n_nodes), np.array([[0.0, 0.2, 0.5]]))[0]
                        + 1))
    assert errs[1] < errs[0]


def test_interior_harmonic_field(sphere8):
    _, th, ph = sphere_angles(sphere8.nodes)
    sigma = np.real(spherical_harmonic(2, 2, th, ph))
    x = 0.5 * sphere8.nodes[::7]
    rho, t2, p2 = sphere_angles(x)
    u = direct_layer_eval(sphere8, sigma, x)
    exact = separation_solution(2, 2, rho, t2, p2, "interior")
    assert np.max(np.abs(u - exact)) < 1e-8


def test_direct_layer_linear(rng, sphere4):
    a, b = rng.normal(size=(2, sphere4.n_nodes))
    x = rng.normal(size=(5, 3)) * 3
    for layer in ("single", "double"):
        lhs = direct_layer_eval(sphere4, 2 * a - 3 * b, x, layer)
        rhs = 2 * direct_layer_eval(sphere4, a, x, layer) - 3 * direct_layer_eval(sphere4, b, x, layer)
        assert np.max(np.abs(lhs - rhs)) < 1e-14 * max(1, np.abs(lhs).max()) * 10


def test_upsample_constant_and_identity(sphere4):
    pan = sphere4.panels[3]
    up = upsample(pan, np.full(49, 2.5), 3)
    assert np.allclose(up.sigma, 2.5, atol=1e-14)
    assert len(up.nodes) == 9 * 49
    same = upsample(pan, np.arange(49.0), 1)
    assert np.array_equal(same.nodes, pan.nodes) and np.array_equal(same.sigma, np.arange(49.0))
    assert np.array_equal(same.weights, pan.weights)


def test_upsample_polynomial_exact(sphere4):
    pan = sphere4.panels[6]
    t0, t1, p0, p1 = pan.box
    # O(1) local coordinates keep the check free of cancellation
    a = lambda t: (2 * t - t0 - t1) / (t1 - t0)
    b = lambda p: (2 * p - p0 - p1) / (p1 - p0)
    f = lambda t, p: a(t) ** 6 - 2 * a(t) ** 3 * b(p) ** 3 + b(p) ** 6 + a(t) * b(p) - 1
    up = upsample(pan, f(pan.theta, pan.phi), 4)
    from qbx3d.geometry import tensor_grid
    _, _, _, th, ph = tensor_grid(pan.shape, pan.box, 4, pan.q)
    assert np.max(np.abs(up.sigma - f(th, ph))) < 1e-12


def test_upsample_interpolation_order():
    from qbx3d.geometry import tensor_grid
    f = lambda t, p: np.sin(3 * t) * np.cos(2 * p)
    errs = []
    for n in (4, 8, 16):
        d = sphere_domain(n)
        e = 0.0
        for pan in d.panels[: n]:
            up = upsample(pan, f(pan.theta, pan.phi), 2)
            _, _, _, th, ph = tensor_grid(pan.shape, pan.box, 2, pan.q)
            e = max(e, np.max(np.abs(up.sigma - f(th, ph))))
        errs.append(e)
    # halving h should gain roughly 2^7
    assert errs[0] / errs[1] > 2 ** 6
    assert errs[1] / errs[2] > 2 ** 6


def test_upsampled_quad_kappa1_equals_direct(sphere4):
    pan = sphere4.panels[2]
    s = np.cos(pan.theta)
    x = np.array([0.3, 1.4, -0.2])
    v = upsampled_panel_quad(upsample(pan, s, 1), x)
    ref = np.sum(s * pan.weights * np.array([double_layer_kernel(x, y, n)
                                              for y, n in zip(pan.nodes, pan.normals)]))
    assert v == pytest.approx(ref, rel=1e-14)


def test_upsampled_gauss_identity(sphere8):
    x = np.array([0.1, -0.2, 0.3])
    tot = sum(upsampled_panel_quad(upsample(p, np.ones(49), 2), x) for p in sphere8.panels)
    assert tot == pytest.approx(-1.0, abs=1e-12)


def test_upsampled_quad_near_target_oracle():
    pan, x, s = _panel_setup()
    up = upsample(pan, s, 4)
    assert abs(upsampled_panel_quad(up, x, "double") / PANEL_DL_ORACLE - 1) < 1e-8
    assert abs(upsampled_panel_quad(up, x, "single") / PANEL_SL_ORACLE - 1) < 1e-8
