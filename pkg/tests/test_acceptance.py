"""Acceptance criteria, one test (or parametrized group) per criterion.

Every criterion prints a PASS/FAIL line, also collected in the terminal
summary under "acceptance criteria".  Run only this file with

    pytest tests/test_acceptance.py -v -rA
"""
import math
import os
import time

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from qbx3d import kernels
from qbx3d.config import load_config
from qbx3d.estimates import (ErrorInputs, coeff_error_estimate, measured_coeff_error,
                             truncation_error_estimate_dl, truncation_error_estimate_sl)
from qbx3d.experiments import run_row
from qbx3d.geometry import Domain, sphere, sphere_domain
from qbx3d.qbx import LayerEvaluator, QbxParams, corrected_eval
from qbx3d.reference import expansion_equivalence_check
from qbx3d.specfun import legendre_coeff_bound_check, lemma_binom_sum, lemma_binom_terms
from qbx3d.treecode import TreecodeParams, build_tree, treecode_eval

CONFIGS = os.path.join(os.path.dirname(__file__), os.pardir, "configs")

# published l2 errors
TABLE1_P20 = {4: 1.8e-5, 8: 4.3e-7, 16: 5.8e-9}
TABLE2 = {2: 5.6e-4, 4: 1.3e-5, 8: 2.7e-7, 16: 2.5e-9}
TABLE6 = {2: 7.1e-4, 4: 6.6e-6, 8: 2.1e-7}


def run_config(name, n_theta=None, far_field=None):
    """Rows of ``qbx3d run`` for one shipped config, optionally filtered."""
    cfg = load_config(os.path.join(CONFIGS, name))
    t = time.perf_counter()
    rows = []
    for row in cfg.rows():
        if n_theta is None or int(row["n_theta"]) in n_theta:
            rows.extend(run_row(cfg, row, far_field))
    return rows, time.perf_counter() - t


def by(rows, target_set=None):
    return {r["N_theta"]: r for r in rows if target_set is None or r["target_set"] == target_set}


def eoc(errs, ns):
    return [math.log(errs[i] / errs[i + 1]) / math.log(ns[i + 1] / ns[i])
            for i in range(len(errs) - 1)]


# ---------------------------------------------------------------- 1

@pytest.fixture(scope="module")
def gauss_setup():
    t = time.perf_counter()
    d = sphere_domain(8)
    P = QbxParams(p=20, kappa=8, r_c=0.2, d_qbx=0.7)
    one = np.ones(d.n_nodes)
    pv = {s: LayerEvaluator(d, P, side=s)(one) for s in ("interior", "exterior")}
    return d, P, pv, time.perf_counter() - t


@pytest.fixture(scope="module")
def average_mode(gauss_setup):
    d, P = gauss_setup[:2]
    return LayerEvaluator(d, P.with_(onsurface="average"))(np.ones(d.n_nodes))


@settings(max_examples=20)
@given(st.integers(0, 2 ** 31))
def test_c1_gauss_identities_property(gauss_setup, average_mode, seed):
    d, P, pv, _ = gauss_setup
    avg = average_mode
    rng = np.random.default_rng(seed)
    i = rng.integers(0, d.n_nodes, 20)
    assert np.all(np.abs(pv["interior"][i] - 0.5 + 1.0) < 1e-8)
    assert np.all(np.abs(pv["exterior"][i] + 0.5) < 1e-8)
    assert np.all(np.abs(avg[i] + 0.5) < 1e-8)
    u = rng.normal(size=(6, 3))
    u /= np.linalg.norm(u, axis=1)[:, None]
    x = np.vstack([u[:3] * rng.uniform(0.0, 0.995, (3, 1)), u[3:] * rng.uniform(1.005, 4, (3, 1))])
    v = corrected_eval(d, np.ones(d.n_nodes), x, P)
    assert np.all(np.abs(v[:3] + 1.0) < 1e-8) and np.all(np.abs(v[3:]) < 1e-8)


def test_c1_gauss_identities(gauss_setup, acceptance):
    d, P, pv, setup = gauss_setup
    t = time.perf_counter()
    lim_in, lim_out = pv["interior"] - 0.5, pv["exterior"] + 0.5
    x_in = np.array([[0.0, 0.0, 0.0], [0.3, -0.2, 0.5], [0.0, 0.0, 0.99]])
    x_out = np.array([[0.0, 0.0, 1.01], [2.0, 1.0, 0.0], [10.0, 0.0, 0.0]])
    v_in = corrected_eval(d, np.ones(d.n_nodes), x_in, P)
    v_out = corrected_eval(d, np.ones(d.n_nodes), x_out, P)
    errs = {"interior": np.abs(v_in + 1).max(), "exterior": np.abs(v_out).max(),
            "limit-": np.abs(lim_in + 1).max(), "limit+": np.abs(lim_out).max(),
            "average": np.abs(0.5 * (lim_in + lim_out) + 0.5).max()}
    wall = setup + time.perf_counter() - t
    ok = max(errs.values()) < 1e-8 and wall < 10
    acceptance("1 Gauss/jump identities", ok,
               " ".join("%s=%.1e" % kv for kv in errs.items()) + " runtime %.1fs" % wall)
    assert ok


# ---------------------------------------------------------------- 2

def test_c2_table1_p20(acceptance):
    rows, wall = run_config("table1_p20.ini")
    r = by(rows)
    ns = sorted(TABLE1_P20)
    errs = [r[n]["l2_rel_error"] for n in ns]
    rates = eoc(errs, ns)
    ok = all(e <= 5 * TABLE1_P20[n] for e, n in zip(errs, ns)) and min(rates) >= 5 and wall < 120
    acceptance("2 Table 1 p=20", ok, "l2 %s EOC %s runtime %.0fs" % (
        " ".join("%.2e" % e for e in errs), " ".join("%.1f" % x for x in rates), wall))
    assert ok


# ---------------------------------------------------------------- 3

@pytest.mark.slow
@pytest.mark.parametrize("name,target", [("table1_p3.ini", 2.0), ("table1_p7.ini", 4.8)])
def test_c3_convergence_regimes(name, target, acceptance):
    rows, wall = run_config(name)
    r = by(rows)
    ns = sorted(r)
    errs = [r[n]["l2_rel_error"] for n in ns]
    rates = eoc(errs, ns)
    ok = all(abs(x - target) <= 1 for x in rates) and wall < 120
    acceptance("3 EOC %s (target %.1f +/- 1)" % (name[:-4], target), ok,
               "l2 %s EOC %s runtime %.0fs" % (" ".join("%.2e" % e for e in errs),
                                              " ".join("%.1f" % x for x in rates), wall))
    assert ok


# ---------------------------------------------------------------- 4

@pytest.mark.slow
def test_c4_table2_linear_scaling(acceptance):
    rows, wall = run_config("table2.ini")
    r = by(rows)
    ns = sorted(TABLE2)
    ops = [r[n]["qbx_correction_ops"] for n in ns]
    ratios = [b / a for a, b in zip(ops, ops[1:])]
    errs = [r[n]["l2_rel_error"] for n in ns]
    ok = (all(3.5 <= x <= 5.7 for x in ratios)
          and all(e <= 5 * TABLE2[n] for e, n in zip(errs, ns)) and wall < 300)
    acceptance("4 Table 2 O(N) regime", ok, "ops ratios %s l2 %s runtime %.0fs" % (
        " ".join("%.2f" % x for x in ratios), " ".join("%.2e" % e for e in errs), wall))
    assert ok


# ---------------------------------------------------------------- 5

@pytest.mark.slow
def test_c5_interior_bvp(acceptance):
    rows, wall = run_config("table3_interior.ini", n_theta=(8,))
    e = {r["target_set"]: r["l2_rel_error"] for r in rows}
    its = rows[0]["gmres_iters"]
    ok = e["r=0.99"] <= 1e-6 and e["r=0.5"] <= 1e-6 and its <= 20 and wall < 300
    acceptance("5 Table 3 interior N=8", ok, "r=0.99 %.2e r=0.5 %.2e its %d runtime %.0fs"
               % (e["r=0.99"], e["r=0.5"], its, wall))
    assert ok


@pytest.mark.slow
def test_c5_exterior_point_charges(acceptance):
    rows, wall = run_config("table4.ini", n_theta=(8,))
    e = {r["target_set"]: r["l2_rel_error"] for r in rows}
    ok = e["r=1.005"] <= 1e-5 and wall < 300
    acceptance("5 Table 4 exterior N=8", ok, "r=1.005 %.2e its %d runtime %.0fs"
               % (e["r=1.005"], rows[0]["gmres_iters"], wall))
    assert ok


# ---------------------------------------------------------------- 6

@pytest.mark.slow
def test_c6_two_spheres(acceptance):
    rows, wall = run_config("table6.ini")
    gap_rows, wall_gap = run_config("gap_sweep.ini")
    r = by(rows)
    errs = [r[n]["l2_rel_error"] for n in sorted(TABLE6)]
    gap_err = [g["linf_rel_error"] for g in gap_rows]
    spread = max(gap_err) / min(gap_err)
    ok = (all(e <= 10 * TABLE6[n] for e, n in zip(errs, sorted(TABLE6))) and spread <= 10
          and wall + wall_gap < 600)
    acceptance("6 two spheres, gap 0.01", ok,
               "l2 %s gap-sweep linf %s (spread %.1f) runtime %.0fs" % (
                   " ".join("%.2e" % e for e in errs), " ".join("%.1e" % e for e in gap_err),
                   spread, wall + wall_gap))
    assert ok


# ---------------------------------------------------------------- 7

def test_c7_treecode(acceptance):
    d = Domain([(sphere(1.0, (2.01 * i, 0, 0)), 4, 4) for i in range(4)])
    s = np.cos(d.nodes[:, 0]) + d.nodes[:, 2] ** 2 + 0.3 * d.nodes[:, 1]
    ref = kernels.dl_direct(d.nodes, d.nodes, d.normals, s * d.weights)
    p = TreecodeParams(p_T=5, eps_T=0.2)
    u = treecode_eval(build_tree(d, s, p), d.nodes, p)
    dev = np.abs(u - ref).max() / np.abs(ref).max()
    p9 = TreecodeParams(eps_T=1e-9)
    bitwise = np.array_equal(treecode_eval(build_tree(d, s, p9), d.nodes, p9), ref)
    counts, ns = [], []
    for nphi in (16, 32, 64):
        dd = Domain([(sphere(), 16, nphi)])
        t = build_tree(dd, np.cos(dd.nodes[:, 0]))
        treecode_eval(t, dd.nodes)
        counts.append(t.last_interactions)
        ns.append(dd.n_nodes)
    slope = math.log(counts[-1] / counts[0]) / math.log(ns[-1] / ns[0])
    ok = dev < 1e-6 and bitwise and slope < 1.9
    acceptance("7 treecode equivalence", ok,
               "deviation %.1e bitwise(eps=1e-9) %s interactions ~ N^%.2f" % (dev, bitwise, slope))
    assert ok


@pytest.mark.slow
def test_c7_four_sphere_row(acceptance):
    rd, wd = run_config("table7.ini", far_field="direct")
    rt, wt = run_config("table7.ini")
    ed, et = rd[0]["l2_rel_error"], rt[0]["l2_rel_error"]
    it = rt[0]["gmres_iters"]
    ok = et <= 1e-4 and it <= 60 and abs(et - ed) <= 0.1 * ed
    acceptance("7 four-sphere row (40-sphere substitute)", ok,
               "direct %.2e treecode %.2e its %d/%d runtime %.0fs" % (
                   ed, et, rd[0]["gmres_iters"], it, wd + wt))
    assert ok


# ---------------------------------------------------------------- 8

def test_c8_appendix_oracles(acceptance):
    t = time.perf_counter()
    rng = np.random.default_rng(8)
    worst = 0.0
    for _ in range(1000):
        c = rng.normal(size=3)
        y = c + rng.normal(size=3)
        u = rng.normal(size=3)
        x = c + rng.uniform(0, 0.95) * np.linalg.norm(y - c) * u / np.linalg.norm(u)
        worst = max(worst, expansion_equivalence_check(c, x, y, 10)
                    * min(1.0, np.linalg.norm(y - c)))
    lemma = max(abs(lemma_binom_sum(n, m)) / np.abs(lemma_binom_terms(n, m)).max()
                for n in range(2, 31) for m in range(1, n // 2 + 1))
    bound = all(legendre_coeff_bound_check(n) for n in range(41))
    wall = time.perf_counter() - t
    ok = worst < 1e-12 and lemma < 1e-8 and bound and wall < 10
    acceptance("8 appendix oracles", ok, "equivalence %.1e lemma1 %.1e lemma2 %s runtime %.1fs"
               % (worst, lemma, bound, wall))
    assert ok


@given(st.integers(0, 2 ** 31))
def test_c8_equivalence_property(seed):
    rng = np.random.default_rng(seed)
    c = rng.normal(size=3)
    y = c + rng.normal(size=3)
    u = rng.normal(size=3)
    x = c + rng.uniform(0, 0.95) * np.linalg.norm(y - c) * u / np.linalg.norm(u)
    assert expansion_equivalence_check(c, x, y, 10) * min(1.0, np.linalg.norm(y - c)) < 1e-12


# ---------------------------------------------------------------- 9

def test_c9_estimators(acceptance):
    mono = True
    for c in np.linspace(0.02, 0.2, 10):
        for R in np.linspace(0.1, 0.5, 10):
            rmax = min(c, 0.5 * math.hypot(c, R) / (1 + math.sqrt(2)))
            for est in (truncation_error_estimate_dl, truncation_error_estimate_sl):
                for p in range(1, 14):
                    a = ErrorInputs(p=p, r=rmax, c=c, R_bar=R, H=1.0)
                    mono &= est(a.replace(p=p + 2)) < est(a)
                v = [est(ErrorInputs(p=5, r=r, c=c, R_bar=R, H=1.0))
                     for r in np.linspace(0.1 * rmax, rmax, 5)]
                mono &= bool(np.all(np.diff(v) > 0))
    ratios = []
    for h in (0.2, 0.1):
        for frac in (0.25, 0.5, 0.75):
            for p in (0, 3, 6, 10):
                r_P = frac * h
                ratios.append(coeff_error_estimate(ErrorInputs(h=h, q=7, p=p, r=r_P, r_P=r_P,
                                                               c=r_P))
                              / measured_coeff_error(h, 7, p, r_P, r_P))
    ok = mono and 1e-2 < min(ratios) and max(ratios) < 1e2
    acceptance("9 estimator sanity", ok, "monotone %s coeff estimate/measured in [%.2f, %.1f]"
               % (mono, min(ratios), max(ratios)))
    assert ok
