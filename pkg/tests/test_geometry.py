import numpy as np
import pytest
from hypothesis import given, strategies as st

from qbx3d.geometry import (Domain, SurfaceShape, build_panels, ellipsoid, fourfold,
                            nearest_surface_point, panel_distance, panels_within, sphere,
                            sphere_domain)
from qbx3d.quadrature import upsample

# Carlson R_G closed form for the (0.5, 1, 2) ellipsoid, cross-checked by dblquad
ELLIPSOID_AREA = 15.86916216311515


def test_build_panels_counts_and_area():
    pans = build_panels(sphere(), 4, 4, 7)
    assert len(pans) == 16
    assert sum(len(p.weights) for p in pans) == 784
    assert sum(p.weights.sum() for p in pans) == pytest.approx(4 * np.pi, rel=1e-8)


def test_build_panels_rejects_bad_input():
    with pytest.raises(ValueError):
        build_panels(sphere(), 0, 4, 7)
    with pytest.raises(ValueError):
        build_panels(sphere(), 4, 4, 1)
    for kind, params in (("sphere", (-1.0,)), ("ellipsoid", (1.0, 0.0, 1.0)),
                         ("fourfold", (1.2,))):
        with pytest.raises(ValueError):
            SurfaceShape(kind, params)


def test_ellipsoid_area():
    d = Domain([(ellipsoid(0.5, 1.0, 2.0), 8, 8)])
    assert d.areas()[0] == pytest.approx(ELLIPSOID_AREA, rel=1e-6)


def test_area_error_decreases_with_refinement():
    # the sphere area is exact to rounding from N_theta = 2 on
    errs = [abs(sphere_domain(n).areas()[0] - 4 * np.pi) for n in (1, 2)]
    assert errs[0] > errs[1]
    errs = [abs(Domain([(ellipsoid(0.5, 1, 2), n, n)]).areas()[0] - ELLIPSOID_AREA)
            for n in (2, 4, 8, 16)]
    assert errs[0] > errs[1] > errs[2] > errs[3]


def test_sphere_normals_radial(sphere8):
    assert np.max(np.abs(sphere8.normals - sphere8.nodes)) < 1e-12


def test_bounding_sphere_contains_nodes(sphere4):
    for p in sphere4.panels:
        assert np.all(np.linalg.norm(p.nodes - p.bc_center, axis=1) <= p.bc_radius + 1e-14)


def test_fourfold_periodic_and_pole_flat(rng):
    s = fourfold(0.3)
    t = rng.uniform(0, np.pi, 50)
    p = rng.uniform(0, 2 * np.pi, 50)
    x0 = s.position(t, p)
    x1 = s.position(t, p + np.pi / 2)
    # rotation by 90 degrees about z maps the surface onto itself
    rot = np.stack([-x0[:, 1], x0[:, 0], x0[:, 2]], axis=1)
    assert np.max(np.abs(x1 - rot)) < 1e-14
    # radial profile has zero theta derivative at the poles
    h = 1e-6
    for t0 in (0.0, np.pi):
        r0 = np.linalg.norm(s.position(t0, 0.3))
        r1 = np.linalg.norm(s.position(abs(t0 - h), 0.3))
        assert abs(r1 - r0) / h < 1e-4


def test_outward_normals(rng):
    for s in (ellipsoid(0.5, 1, 2), fourfold(0.3)):
        d = Domain([(s, 4, 4)])
        probe = d.nodes + 1e-3 * d.normals
        assert not np.any(s.contains(probe))
        assert np.all(s.contains(d.nodes - 1e-3 * d.normals))


def test_domain_disjoint_and_interior_points():
    d = Domain([(sphere(1.0, (0, 0, 0)), 2, 2), (sphere(1.0, (2.01, 0, 0)), 2, 2)])
    for k, c in enumerate(d.components):
        assert c.shape.contains(d.interior_points[k:k + 1])[0]
    with pytest.raises(ValueError):
        Domain([(sphere(), 2, 2), (sphere(1.0, (1.5, 0, 0)), 2, 2)])


def test_panel_distance_basics(sphere4):
    pan = sphere4.panels[5]
    assert panel_distance(pan.nodes[3], pan) == 0.0
    assert panel_distance(np.zeros(3), pan) == pytest.approx(1.0, abs=1e-12)


def test_panel_distance_vs_dense_cloud(rng, sphere4):
    for _ in range(10):
        pan = sphere4.panels[rng.integers(sphere4.n_panels)]
        x = rng.normal(size=3)
        x *= rng.uniform(0.5, 2.0) / np.linalg.norm(x)
        dense = upsample(pan, np.zeros(49), 16).nodes
        ref = np.min(np.linalg.norm(dense - x, axis=1))
        spacing = pan.h / (4 * pan.q)
        d = panel_distance(x, pan)
        assert abs(d - ref) <= spacing


def test_panels_within_trivial(sphere8):
    assert panels_within(np.array([0.0, 0.0, 1.5]), 0.0, sphere8) == []
    assert panels_within(np.array([0.0, 0.0, 1.5]), 10.0, sphere8) == list(range(64))
    with pytest.raises(ValueError):
        panels_within(np.zeros(3), -1.0, sphere8)


def _scan(domain, x, cutoff):
    return [p.index for p in domain.panels if panel_distance(x, p) <= cutoff]


def test_panels_within_matches_scan(sphere8):
    x = np.array([1.05, 0.0, 0.0])
    assert panels_within(x, 0.35, sphere8) == _scan(sphere8, x, 0.35)


@given(st.lists(st.floats(-2, 2), min_size=3, max_size=3), st.floats(0, 1.5))
def test_panels_within_property(x, cutoff):
    d = sphere_domain(4)
    x = np.array(x)
    assert panels_within(x, cutoff, d) == _scan(d, x, cutoff)


def test_nearest_point_sphere():
    for z in (1.3, 0.7):
        sp = nearest_surface_point(np.array([0, 0, z]), sphere())
        assert np.allclose(sp.point, [0, 0, 1], atol=1e-12)
        assert np.allclose(sp.normal, [0, 0, 1], atol=1e-12)
        assert sp.distance == pytest.approx(0.3, abs=1e-12)
        assert sp.converged


def test_nearest_point_ellipsoid_optimal(rng):
    s = ellipsoid(0.5, 1.0, 2.0)
    d = Domain([(s, 8, 8)])
    comp = d.components[0]
    for _ in range(10):
        x = rng.normal(size=3) * np.array([0.7, 1.3, 2.4])
        sp = nearest_surface_point(x, comp)
        assert sp.converged
        _, xt, xp = s.geometry(sp.theta, sp.phi)[:3]
        r = x - sp.point
        assert abs(r @ xt) < 1e-11 and abs(r @ xp) < 1e-11
        cloud = np.vstack([p.probe_cloud() for p in d.panels])
        assert sp.distance <= np.min(np.linalg.norm(cloud - x, axis=1)) + 1e-12
