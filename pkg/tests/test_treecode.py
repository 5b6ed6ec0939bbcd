import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from qbx3d import kernels
from qbx3d.geometry import Domain, sphere, sphere_domain
from qbx3d.reference import legendre_terms
from qbx3d.treecode import (Tree, TreecodeParams, build_tree, expected_depth_bound, multi_indices,
                            taylor_coeffs_bk, treecode_eval)


def direct(domain, sigma, x):
    return kernels.dl_direct(x, domain.nodes, domain.normals, sigma * domain.weights)


def smooth_density(d):
    return np.cos(d.nodes[:, 0]) + d.nodes[:, 2] ** 2 + 0.3 * d.nodes[:, 1]


def test_params_validation():
    for bad in (dict(eps_T=0.0), dict(eps_T=1.0), dict(p_T=-1), dict(leaf_cap=0)):
        with pytest.raises(ValueError):
            TreecodeParams(**bad)


def test_bk_low_orders():
    c, y = np.array([0.1, -0.2, 0.3]), np.array([1.0, 0.5, -0.4])
    K, b = taylor_coeffs_bk(c, y, 2)
    R = np.linalg.norm(y - c)
    assert b[0] == pytest.approx(1 / R, rel=1e-15)
    i = [tuple(k) for k in K].index((1, 0, 0))
    assert b[i] == pytest.approx((y[0] - c[0]) / R ** 3, rel=1e-14)
    with pytest.raises(ValueError):
        taylor_coeffs_bk(c, c, 2)


def test_bk_finite_differences():
    c, y = np.array([0.1, -0.2, 0.3]), np.array([1.0, 0.5, -0.4])
    K, b = taylor_coeffs_bk(c, y, 3)
    f = lambda cc: 1.0 / np.linalg.norm(cc - y)
    h = 1e-3
    # b_k = (1/k!) d^k f / dc^k, from a tensor central-difference stencil
    w = {0: [(0, 1.0)], 1: [(1, 0.5), (-1, -0.5)], 2: [(1, 1.0), (0, -2.0), (-1, 1.0)],
         3: [(2, 0.5), (1, -1.0), (-1, 1.0), (-2, -0.5)]}
    for k, bk in zip(K, b):
        acc = 0.0
        for s0, w0 in w[k[0]]:
            for s1, w1 in w[k[1]]:
                for s2, w2 in w[k[2]]:
                    acc += w0 * w1 * w2 * f(c + h * np.array([s0, s1, s2]))
        fd = acc / h ** k.sum() / np.prod([math.factorial(v) for v in k])
        assert abs(fd - bk) < 1e-5


@settings(max_examples=30)
@given(st.integers(0, 2 ** 31))
def test_shell_sums_match_legendre(seed):
    from qbx3d.reference import shell_sums
    rng = np.random.default_rng(seed)
    c = rng.normal(size=3)
    y = c + rng.normal(size=3)
    x = c + rng.uniform(0, 0.9) * np.linalg.norm(y - c) * rng.normal(size=3) / math.sqrt(3)
    if np.linalg.norm(x - c) >= np.linalg.norm(y - c):
        return
    a, b = shell_sums(c, x, y, 8), legendre_terms(c, x, y, 8)
    assert np.max(np.abs(a - b)) < 1e-12 * max(1.0, np.abs(b).max())


def test_multi_indices_graded():
    K, deg, _, _ = multi_indices(4)
    assert len(K) == math.comb(4 + 3, 3)
    assert np.all(np.diff(deg) >= 0) and np.array_equal(K.sum(axis=1), deg)


def test_small_tree_is_single_leaf():
    d = sphere_domain(1)
    s = smooth_density(d)
    t = build_tree(d, s, TreecodeParams(leaf_cap=64))
    assert t.n_clusters == 1 and t.root.is_leaf
    x = np.array([[0.0, 0.0, 1.5], [0.3, 0.1, -0.2]])
    assert np.allclose(treecode_eval(t, x), direct(d, s, x), rtol=1e-14, atol=1e-15)


def test_root_moment_order_zero(sphere4):
    t = build_tree(sphere4, np.ones(sphere4.n_nodes))
    ref = (sphere4.weights[:, None] * sphere4.normals).sum(axis=0)
    assert np.allclose(t.root.moments[:, 0], ref, atol=1e-13)


def fibonacci_sphere(n):
    i = np.arange(n) + 0.5
    z = 1 - 2 * i / n
    ph = np.pi * (1 + 5 ** 0.5) * i
    r = np.sqrt(1 - z * z)
    return np.stack([r * np.cos(ph), r * np.sin(ph), z], axis=1)


def test_depth_bound_uniform_nodes():
    for n in (3136, 12544, 50176):
        x = fibonacci_sphere(n)
        t = Tree(x, x, np.full(n, 4 * np.pi / n), TreecodeParams())
        assert t.depth <= expected_depth_bound(n, 64)


def test_leaves_and_radii():
    for n in (8, 16):
        d = sphere_domain(n)
        t = build_tree(d)
        leaves = t.n_children == 0
        assert np.all(t.hi[leaves] - t.lo[leaves] <= 64)
        for cid in range(0, t.n_clusters, max(1, t.n_clusters // 50)):
            pts = t.points[t.perm[t.lo[cid]:t.hi[cid]]]
            assert np.all(np.linalg.norm(pts - t.centers[cid], axis=1) <= t.radii[cid] + 1e-14)


def test_tiny_eps_is_bitwise_direct(sphere4):
    s = smooth_density(sphere4)
    p = TreecodeParams(eps_T=1e-9)
    t = build_tree(sphere4, s, p)
    x = sphere4.nodes[::5]
    assert np.array_equal(treecode_eval(t, x, p), direct(sphere4, s, x))


def test_sphere_deviation_small(sphere4):
    s = smooth_density(sphere4)
    t = build_tree(sphere4, s, TreecodeParams())
    x = sphere4.nodes
    ref = direct(sphere4, s, x)
    dev = np.max(np.abs(treecode_eval(t, x) - ref)) / np.max(np.abs(ref))
    assert dev < 1e-6


def test_error_decreases_with_order():
    d = Domain([(sphere(1.0, (2.01 * i, 0, 0)), 4, 4) for i in range(4)])
    s = smooth_density(d)
    ref = direct(d, s, d.nodes)
    errs = []
    for pT in (1, 3, 5, 7):
        p = TreecodeParams(p_T=pT)
        errs.append(np.max(np.abs(treecode_eval(build_tree(d, s, p), d.nodes, p) - ref)))
    assert all(b < a for a, b in zip(errs, errs[1:]))


def test_set_density_reuses_tree(sphere4, rng):
    t = build_tree(sphere4)
    x = sphere4.nodes[::3]
    for _ in range(2):
        s = rng.normal(size=sphere4.n_nodes)
        fresh = treecode_eval(build_tree(sphere4, s), x)
        assert np.allclose(treecode_eval(t.set_density(s), x), fresh, rtol=0, atol=1e-14)


def test_interactions_subquadratic():
    counts = []
    for nphi in (16, 32):
        d = Domain([(sphere(), 16, nphi)])
        t = build_tree(d, smooth_density(d))
        treecode_eval(t, d.nodes)
        counts.append(t.last_interactions)
    assert counts[1] / counts[0] < 3.0
