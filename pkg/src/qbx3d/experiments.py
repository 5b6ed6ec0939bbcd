"""Experiment kinds behind the command line driver."""
import csv
import math
import time

import numpy as np

from . import estimates, reference, solver
from .config import ConfigError, _floats
from .qbx import KIND_ONSURFACE, LayerEvaluator, TargetSet
from .specfun import spherical_harmonic

COLUMNS = ("experiment_id", "N_theta", "p", "kappa", "r_c", "d_qbx", "target_set",
           "l2_rel_error", "linf_rel_error", "gmres_iters", "qbx_correction_ops", "wall_seconds")
ESTIMATE_COLUMNS = ("coeff_error_estimate", "truncation_error_estimate")
SWEEP_COLUMNS = ("experiment_id", "N_theta", "distance", "error_qbx", "error_upsampling_only")


def rel_errors(u, exact):
    u, exact = np.asarray(u, dtype=float), np.asarray(exact, dtype=float)
    e = u - exact
    return (float(np.linalg.norm(e) / np.linalg.norm(exact)),
            float(np.abs(e).max() / np.abs(exact).max()))


# ---------------------------------------------------------------- data

def _ylm_lm(cfg):
    b = cfg.boundary
    return int(b.get("l", 2)), int(b.get("m", 2))


def _require_unit_sphere(domain):
    for comp in domain.components:
        s = comp.shape
        if s.kind != "sphere" or abs(s.params[0] - 1.0) > 1e-14:
            raise ConfigError("spherical-harmonic data needs unit spheres")
    if len(domain.components) != 1:
        raise ConfigError("spherical-harmonic data needs a single component")


def _ylm_at(domain, l, m, points=None):
    x = domain.nodes if points is None else points
    _, th, ph = reference.sphere_angles(x, domain.components[0].shape.center)
    return np.real(spherical_harmonic(l, m, th, ph))


def _charges(cfg, domain):
    b = cfg.boundary
    n = int(b.get("n", 7))
    rad = float(b.get("radius", 0.5))
    s = float(b.get("strength", 1.0))
    sets = [reference.charge_grid(n, rad, c.shape.center, s) for c in domain.components]
    ch = reference.PointChargeSet(np.vstack([c.positions for c in sets]),
                                  np.concatenate([c.strengths for c in sets]))
    for k, comp in enumerate(domain.components):
        if not np.all(comp.shape.contains(sets[k].positions)):
            raise ConfigError("point charges of component %d are not inside it" % k)
    return ch


def _target_sets(cfg, domain, row):
    """[(id, points)] from the [targets] section."""
    t = cfg.targets
    n = int(t.get("n", 16))
    k = int(t.get("component", 0))
    comp = domain.components[k].shape
    out = []
    for r in _floats(t.get("radii", "")):
        out.append(("r=%g" % r, reference.target_sphere(r, n, comp.center)))
    for s in _floats(t.get("scale", "")):
        out.append(("scale=%g" % s, reference.scaled_surface_targets(comp, s, n)))
    if t.get("gap_bisect", "false").strip().lower() in ("1", "true", "yes", "on"):
        gap = row.get("gap", cfg.scene.gap)
        r = comp.bounding_radius + 0.5 * gap
        out.append(("r=%g" % r, reference.target_sphere(r, n, comp.center)))
    return out


def _want_sigma(cfg):
    return cfg.targets.get("sigma", "false").strip().lower() in ("1", "true", "yes", "on")


# ---------------------------------------------------------------- rows

def _base_row(cfg, row, params, tid):
    return {"experiment_id": cfg.id, "N_theta": int(row["n_theta"]), "p": params.p,
            "kappa": params.kappa, "r_c": params.r_c, "d_qbx": params.d_qbx, "target_set": tid}


def _estimate_overlay(cfg, domain, params, nt):
    shape = domain.components[0].shape
    rad = shape.bounding_radius
    h = math.pi * rad / (nt * params.kappa)
    inp = estimates.ErrorInputs(h=h, q=cfg.scene.q, p=params.p, r=params.r_c, r_P=params.r_c,
                                c=params.r_c, R_bar=params.d_qbx, H=1.0 / rad)
    return {"coeff_error_estimate": estimates.coeff_error_estimate(inp),
            "truncation_error_estimate": estimates.truncation_error_estimate_dl(inp)}


def run_row(cfg, row, far_field=None, with_estimates=False):
    """Results of one parameter row as a list of CSV dicts."""
    far = far_field or cfg.far_field
    params = cfg.qbx_params(row)
    nt = int(row["n_theta"])
    t0 = time.perf_counter()
    domain = cfg.scene.domain(nt, row.get("gap"))
    btype = cfg.boundary.get("type", "ylm")
    rows = []

    def emit(tid, u, exact, iters, ops):
        r = _base_row(cfg, row, params, tid)
        r["l2_rel_error"], r["linf_rel_error"] = rel_errors(u, exact)
        r["gmres_iters"] = iters
        r["qbx_correction_ops"] = ops
        r["wall_seconds"] = round(time.perf_counter() - t0, 3)
        if with_estimates:
            r.update(_estimate_overlay(cfg, domain, params, nt))
        rows.append(r)

    if cfg.kind == "eval_onsurface":
        _require_unit_sphere(domain)
        l, m = _ylm_lm(cfg)
        ev = LayerEvaluator(domain, params, None, far, cfg.side, cfg.tree)
        y = _ylm_at(domain, l, m)
        emit("surface", ev(y), -y / (4 * l + 2), "", ev.onsurface_ops)
        return rows

    if cfg.kind in ("eval_near", "sweep"):
        _require_unit_sphere(domain)
        l, m = _ylm_lm(cfg)
        y = _ylm_at(domain, l, m)
        sgn = 1.0 if cfg.side == "exterior" else -1.0
        for d in _floats(cfg.targets.get("distances", "")):
            x = reference.target_sphere(1.0 + sgn * d, int(cfg.targets.get("n", 16)),
                                        domain.components[0].shape.center)
            ev = LayerEvaluator(domain, params, TargetSet.off_surface(x), far, cfg.side, cfg.tree)
            rho, th, ph = reference.sphere_angles(x)
            emit("d=%g" % d, ev(y), reference.separation_solution(l, m, rho, th, ph, cfg.side),
                 "", int(ev.correction.vals.shape[1] * len(ev.correction.rows)))
        return rows

    side = "interior" if cfg.kind == "solve_interior" else "exterior"
    sets = _target_sets(cfg, domain, row)
    if not sets and not _want_sigma(cfg):
        return rows
    if btype == "ylm":
        _require_unit_sphere(domain)
        l, m = _ylm_lm(cfg)
        y = _ylm_at(domain, l, m)
        f = y * (-(l + 1) if side == "interior" else l) / (2 * l + 1)

        def exact(x):
            rho, th, ph = reference.sphere_angles(x, domain.components[0].shape.center)
            return reference.separation_solution(l, m, rho, th, ph, side)
    elif btype == "charges":
        if side == "interior":
            raise ConfigError("point-charge data is for exterior problems")
        ch = _charges(cfg, domain)
        f = reference.point_charge_potential(ch, domain.nodes)

        def exact(x):
            return reference.point_charge_potential(ch, x)
    else:
        raise ConfigError("unknown boundary type %r" % btype)
    spec = solver.BvpSpec(side, f, domain)
    state = solver.GmresState(tol=cfg.gmres_tol, maxit=cfg.gmres_maxit)
    sigma, state, op = solver.solve_bvp(domain, spec, params, far, state, cfg.tree)
    ops = op.evaluator.correction.ops(KIND_ONSURFACE)
    if _want_sigma(cfg):
        if btype != "ylm":
            raise ConfigError("the exact density is known for spherical-harmonic data only")
        emit("sigma", sigma, y, state.iterations, ops)
    for tid, x in sets:
        u = solver.postprocess_field(domain, sigma, spec, x, params, far, cfg.tree)
        emit(tid, u, exact(x), state.iterations, ops)
    return rows


def run_distance_sweep(cfg, row, far_field=None):
    """Error against target distance with and without QBX."""
    if cfg.kind not in ("eval_near", "sweep"):
        raise ConfigError("distance sweeps need kind eval_near")
    far = far_field or cfg.far_field
    params = cfg.qbx_params(row)
    up = params.with_(qbx=False, kappa=int(cfg.targets.get("kappa_upsampling", 8)))
    nt = int(row["n_theta"])
    domain = cfg.scene.domain(nt, row.get("gap"))
    _require_unit_sphere(domain)
    l, m = _ylm_lm(cfg)
    y = _ylm_at(domain, l, m)
    sgn = 1.0 if cfg.side == "exterior" else -1.0
    n = int(cfg.targets.get("n", 16))
    out = []
    for d in _floats(cfg.targets.get("distances", "")):
        x = reference.target_sphere(1.0 + sgn * d, n, domain.components[0].shape.center)
        rho, th, ph = reference.sphere_angles(x)
        ex = reference.separation_solution(l, m, rho, th, ph, cfg.side)
        errs = []
        for prm in (params, up):
            ev = LayerEvaluator(domain, prm, TargetSet.off_surface(x), far, cfg.side, cfg.tree)
            errs.append(rel_errors(ev(y), ex)[1])
        out.append({"experiment_id": cfg.id, "N_theta": nt, "distance": d,
                    "error_qbx": errs[0], "error_upsampling_only": errs[1]})
    return out


def write_csv(path_or_file, rows, columns):
    own = isinstance(path_or_file, str)
    f = open(path_or_file, "w", newline="") if own else path_or_file
    try:
        w = csv.DictWriter(f, fieldnames=list(columns), extrasaction="ignore",
                           lineterminator="\n")
        w.writeheader()
        for r in rows:
            w.writerow({k: ("%.6e" % v if isinstance(v, float) and k not in
                            ("r_c", "d_qbx", "distance", "wall_seconds") else v)
                        for k, v in r.items()})
    finally:
        if own:
            f.close()
