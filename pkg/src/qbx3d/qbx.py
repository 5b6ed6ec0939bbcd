"""Target-specific QBX: centers, coefficients and local corrections.

The local correction for a set of targets is stored block-sparse: one
q^2 block of weights per (target, panel) pair.  A corrected layer
potential is then ``far_field(sigma) + C sigma``, where ``C`` replaces
the direct contribution of every nearby panel by either an upsampled
quadrature or a target-specific expansion.
"""
import math
from collections import OrderedDict
from dataclasses import dataclass, field, replace

import numpy as np

from . import kernels
from .geometry import SurfaceShape, near_pairs, nearest_surface_point, panel_distances, tensor_grid
from .quadrature import reduce_fine_weights
from .specfun import legendre_table
from .treecode import TreecodeParams, build_tree, treecode_eval

INV4PI = kernels.INV4PI

KIND_ONSURFACE = 0
KIND_UPSAMPLE = 1
KIND_ONTHEFLY = 2

SIDES = ("interior", "exterior")


class CenterValidityError(RuntimeError):
    def __init__(self, target_id, msg):
        super().__init__("target %s: %s" % (target_id, msg))
        self.target_id = target_id


class ConvergenceBallError(RuntimeError):
    pass


class WeightBudgetError(MemoryError):
    pass


@dataclass(frozen=True)
class QbxParams:
    """Parameters of the local QBX correction.

    d_qbx defaults to 3.5 r_c and d_up to 2 d_qbx.  ``kappa`` applies to
    expansion coefficients, ``kappa_up`` to the upsampled region
    d_qbx < d <= d_up.  Coefficient quadrature uses q_onsurface (on-surface
    precompute) or q_c (on-the-fly) Gauss points per sub-panel direction.  With ``qbx=False`` every panel within d_up is
    handled by upsampled quadrature (kappa, q_c) instead.
    """
    p: int = 20
    kappa: int = 8
    r_c: float = 0.2
    d_qbx: float = None
    d_up: float = None
    kappa_up: int = 2
    q_c: int = 15
    q_onsurface: int = 15
    adaptive_onsurface: bool = True
    onsurface: str = "one_sided"
    qbx: bool = True
    max_weights: int = 200_000_000

    def __post_init__(self):
        if self.d_qbx is None:
            object.__setattr__(self, "d_qbx", 3.5 * self.r_c)
        if self.d_up is None:
            object.__setattr__(self, "d_up", 2.0 * self.d_qbx)
        if self.p < 0:
            raise ValueError("p must be nonnegative")
        if self.kappa < 1 or self.kappa_up < 1:
            raise ValueError("upsampling factors must be >= 1")
        if not (self.r_c > 0 and self.d_qbx > 0 and self.d_up >= self.d_qbx):
            raise ValueError("need r_c > 0 and d_up >= d_qbx > 0")
        if self.onsurface not in ("one_sided", "average"):
            raise ValueError("onsurface must be 'one_sided' or 'average'")

    def with_(self, **kw):
        return replace(self, **kw)


@dataclass
class QbxCenter:
    """Expansion center; r_c = |c - base_point|, radius = |c - target|."""
    position: np.ndarray
    r_c: float
    side: str
    component: int
    base_point: np.ndarray
    radius: float


@dataclass
class ExpansionCoeffs:
    center: np.ndarray
    target: np.ndarray
    z: np.ndarray
    r: float

    @property
    def p(self):
        return len(self.z) - 1


@dataclass
class TargetWeights:
    """u_L(x_i) = weights . sigma[source_ids]."""
    target: int
    source_ids: np.ndarray
    weights: np.ndarray
    panels: np.ndarray = None
    kappas: np.ndarray = None


def adaptive_kappa(r_P, r_c, kappa_base):
    """Upsampling factor for a panel at distance r_P from a center (kappa r_P ~ const)."""
    if not (r_c > 0):
        raise ValueError("r_c must be positive")
    k = math.ceil(kappa_base * r_c / r_P - 1e-9)
    return int(min(max(k, 1), kappa_base))


def _adaptive_kappa_vec(r_P, r_c, kappa_base):
    k = np.ceil(kappa_base * r_c / np.maximum(r_P, r_c) - 1e-9)
    return np.clip(k, 1, kappa_base).astype(np.int64)


def _side_sign(side):
    if side not in SIDES:
        raise ValueError("side must be 'interior' or 'exterior'")
    return 1.0 if side == "exterior" else -1.0


def _cloud_distance(component, points):
    tree, _ = component.seed_tree()
    d, _ = tree.query(np.atleast_2d(points))
    return d


def place_center(target, component, r_c, side=None, normal=None, target_id=None,
                 max_halvings=3):
    """Expansion center for ``target`` relative to ``component``.

    On-surface (``normal`` given): c = x +- r_c nu.  Off-surface: c lies
    r_c beyond the target on the ray from the nearest surface point, and
    ``side`` is inferred.  r_c is halved (at most ``max_halvings`` times)
    if the ball |y - c| < |x - c| would contain surface points of the
    component.
    """
    from .geometry import Component, build_panels
    if isinstance(component, SurfaceShape):
        component = Component(component, 8, 16, build_panels(component, 8, 16, 7))
    x = np.asarray(target, dtype=float)
    if normal is not None:
        nu = np.asarray(normal, dtype=float)
        s = _side_sign(side or "exterior")
        base = x
        direction = s * nu
        offset = 0.0
        side = side or "exterior"
    else:
        sp = nearest_surface_point(x, component)
        if sp.distance < kernels.COINCIDENT:
            raise CenterValidityError(target_id, "off-surface target lies on the surface")
        s = 1.0 if (x - sp.point) @ sp.normal > 0 else -1.0
        side = "exterior" if s > 0 else "interior"
        base = sp.point
        direction = (x - sp.point) / sp.distance
        offset = sp.distance
    rc = float(r_c)
    comp_id = getattr(component.panels[0], "component", 0) if component.panels else 0
    for _ in range(max_halvings + 1):
        c = x + rc * direction
        if nearest_surface_point(c, component).distance >= (rc + offset) * (1 - 1e-6):
            return QbxCenter(c, rc + offset, side, comp_id, base, rc)
        rc *= 0.5
    raise CenterValidityError(target_id, "no valid expansion center after %d halvings" % max_halvings)


def ts_coefficients(patch, c, x, p):
    """Target-specific coefficients z_n, n = 0..p, from upsampled panels."""
    c = np.asarray(c, dtype=float)
    x = np.asarray(x, dtype=float)
    y = np.vstack([u.nodes for u in patch])
    nu = np.vstack([u.normals for u in patch])
    sw = np.concatenate([u.sigma * u.weights for u in patch])
    dx = x - c
    r = float(np.sqrt(dx @ dx))
    e = y - c
    R = np.sqrt(np.einsum("ij,ij->i", e, e))
    if np.any(R < r * (1 - 1e-10)):
        raise ConvergenceBallError("patch node inside the convergence ball")
    en = np.einsum("ij,ij->i", e, nu)
    z = np.zeros(p + 1)
    if r == 0.0:
        z[0] = INV4PI * np.sum(sw * (-en) / R ** 3)
        return ExpansionCoeffs(c, x, z, 0.0)
    alpha = e @ dx
    t = alpha / (r * R)
    P, dP = legendre_table(p, np.clip(t, -1.0, 1.0))
    v = nu @ dx
    grad_t = v / (r * R) - alpha * en / (r * R ** 3)
    for n in range(p + 1):
        g = -(n + 1) * R ** (-(n + 3)) * en * P[n] + R ** (-(n + 1)) * dP[n] * grad_t
        z[n] = INV4PI * np.sum(sw * g)
    return ExpansionCoeffs(c, x, z, r)


def eval_expansion(coeffs):
    """Truncated sum  sum_n z_n r^n."""
    n = np.arange(len(coeffs.z))
    return float(np.sum(coeffs.z * coeffs.r ** n))


# ---------------------------------------------------------------- targets

@dataclass
class TargetSet:
    """Evaluation points; on-surface targets carry their node id and normal."""
    points: np.ndarray
    node_ids: np.ndarray
    components: np.ndarray
    normals: np.ndarray

    @classmethod
    def nodes(cls, domain):
        return cls(domain.nodes, np.arange(domain.n_nodes), domain.node_component, domain.normals)

    @classmethod
    def off_surface(cls, points):
        pts = np.atleast_2d(np.asarray(points, dtype=float)).reshape(-1, 3)
        n = len(pts)
        return cls(pts, np.full(n, -1), np.full(n, -1), np.zeros((n, 3)))

    def __len__(self):
        return len(self.points)

    @property
    def on_surface(self):
        return self.node_ids >= 0


@dataclass
class BlockCorrection:
    """Block-sparse local correction.

    out[rows[b]] += vals[vidx[b]] . sigma[starts[b] : starts[b] + q^2]

    Blocks related by a symmetry of the surface share one row of ``vals``.
    """
    n_targets: int
    rows: np.ndarray
    panels: np.ndarray
    starts: np.ndarray
    vidx: np.ndarray
    vals: np.ndarray
    kinds: np.ndarray
    kappas: np.ndarray
    stats: dict = field(default_factory=dict)

    def apply(self, sigma):
        return kernels.block_apply(self.rows, self.starts, self.vidx, self.vals, sigma,
                                   self.n_targets)

    @property
    def n_blocks(self):
        return len(self.rows)

    @property
    def stored_weights(self):
        return int(self.vals.size)

    def ops(self, kind=KIND_ONSURFACE):
        """Multiply-adds spent on blocks of one kind per application."""
        return int(np.count_nonzero(self.kinds == kind) * self.vals.shape[1])


# on-surface blocks keyed by shape, tiling and parameters
_ONSURFACE_CACHE = OrderedDict()
_ONSURFACE_CACHE_BYTES = 1_000_000_000


def clear_cache():
    _ONSURFACE_CACHE.clear()


def _cache_put(key, value):
    _ONSURFACE_CACHE[key] = value
    total = sum(v[3].nbytes for v in _ONSURFACE_CACHE.values())
    while total > _ONSURFACE_CACHE_BYTES and len(_ONSURFACE_CACHE) > 1:
        _, old = _ONSURFACE_CACHE.popitem(last=False)
        total -= old[3].nbytes


def rotation_shift(comp):
    """Smallest panel shift in phi that maps the tiled component onto itself."""
    shape, nphi = comp.shape, comp.n_phi
    if shape.kind == "sphere":
        return 1
    if shape.kind == "ellipsoid" and shape.params[0] == shape.params[1]:
        return 1
    if shape.kind == "fourfold" and nphi % 4 == 0:
        return nphi // 4
    return nphi


def _onsurface_centers(domain, params, side, idx):
    """Normal-offset centers for nodes ``idx``, halving r_c where needed."""
    s = _side_sign(side)
    x, nu = domain.nodes[idx], domain.normals[idx]
    rc = np.full(len(idx), params.r_c)
    c = x + s * params.r_c * nu
    comp = domain.components[domain.node_component[idx[0]]]
    for _ in range(4):
        bad = _cloud_distance(comp, c) < rc * (1 - 1e-6)
        if not bad.any():
            return c, rc
        rc[bad] *= 0.5
        c[bad] = x[bad] + s * rc[bad, None] * nu[bad]
    raise CenterValidityError(int(idx[np.flatnonzero(bad)[0]]),
                              "no valid on-surface center after 3 halvings")


class _Assembler:
    """Evaluate weight blocks panel by panel so fine grids are built once."""

    def __init__(self, domain, chunk_entries=4_000_000):
        self.domain = domain
        self.chunk = chunk_entries

    def run(self, jobs, vals, subtract_direct, p, scale=1.0):
        # jobs: (panel, kappa, q_fine, kind, block rows, targets, centers)
        q = self.domain.q
        jobs = sorted(jobs, key=lambda j: (j[0], j[1], j[2]))
        grid_key, grid = None, None
        for pid, kap, qf, kind, idx, xt, cs in jobs:
            pan = self.domain.panels[pid]
            if grid_key != (pid, kap, qf):
                grid = tensor_grid(pan.shape, pan.box, kap, qf)
                grid_key = (pid, kap, qf)
            fx, fnu, fw = grid[0], grid[1], grid[2]
            step = max(1, self.chunk // len(fw))
            for s in range(0, len(idx), step):
                sl = slice(s, s + step)
                if kind == KIND_UPSAMPLE:
                    G = kernels.dl_weights(xt[sl], fx, fnu, fw)
                else:
                    G, ratio = kernels.tsqbx_weights(cs[sl], xt[sl], fx, fnu, fw, p)
                    if np.any(ratio < 1.0 - 1e-10):
                        raise ConvergenceBallError(
                            "panel %d: node inside convergence ball (ratio %.3g)" % (pid, ratio.min()))
                W = reduce_fine_weights(G, q, kap, qf) if (kap > 1 or qf != q) else G
                if subtract_direct:
                    W = W - kernels.dl_weights(xt[sl], pan.nodes, pan.normals, pan.weights)
                vals[idx[sl]] += scale * W


def _group_jobs(pi, kap, qf, kind, xt, cs):
    """Split pair lists into (panel, kappa) jobs."""
    jobs = []
    if len(pi) == 0:
        return jobs
    order = np.lexsort((kap, pi))
    bounds = np.flatnonzero(np.diff(pi[order]) | np.diff(kap[order])) + 1
    for grp in np.split(order, bounds):
        jobs.append((int(pi[grp[0]]), int(kap[grp[0]]), qf, kind, grp, xt[grp],
                     None if cs is None else cs[grp]))
    return jobs


def _onsurface_component(domain, k, params, sides, subtract_direct):
    """On-surface blocks of component k in component-local numbering.

    Weights are computed for one fundamental column of panels and mapped
    to the other columns by the rotational symmetry of the tiling.
    """
    comp = domain.components[k]
    q, nphi = domain.q, comp.n_phi
    qq = q * q
    pan0 = comp.panels[0].index
    sh = rotation_shift(comp)
    lp = np.arange(len(comp.panels))
    fund_pan = lp[(lp % nphi) < sh]
    fund = (comp.start + fund_pan[:, None] * qq + np.arange(qq)[None, :]).ravel()
    # same-component upsampling blocks share the symmetry, so build them here too
    cut = params.d_up if subtract_direct else params.d_qbx
    ti, pi, d = near_pairs(domain, domain.nodes[fund], cut)
    keep = domain.panel_component[pi] == k
    ti, pi, d = ti[keep], pi[keep], d[keep]
    is_up = d > params.d_qbx
    iu = np.flatnonzero(is_up)
    iq = np.flatnonzero(~is_up)
    nblk = len(ti)
    vals = np.zeros((nblk, qq))
    kap = np.full(nblk, params.kappa_up, dtype=np.int64)
    kind = np.where(is_up, KIND_UPSAMPLE, KIND_ONSURFACE).astype(np.int8)
    if len(iu):
        jobs = _group_jobs(pi[iu], kap[iu], q, KIND_UPSAMPLE, domain.nodes[fund][ti[iu]], None)
        jobs = [j[:4] + (iu[j[4]],) + j[5:] for j in jobs]
        _Assembler(domain).run(jobs, vals, subtract_direct, params.p)
    kap[iq] = 0
    ti_all, pi_all = ti, pi
    ti, pi = ti[iq], pi[iq]
    for side in sides:
        cen, rc = _onsurface_centers(domain, params, side, fund)
        if params.adaptive_onsurface:
            rP = panel_distances(domain, cen[ti], pi)
            kap_s = _adaptive_kappa_vec(rP, rc[ti], params.kappa)
        else:
            kap_s = np.full(nblk, params.kappa, dtype=np.int64)
        kap[iq] = np.maximum(kap[iq], kap_s)
        jobs = _group_jobs(pi, kap_s, params.q_onsurface, KIND_ONSURFACE,
                           domain.nodes[fund][ti], cen[ti])
        jobs = [j[:4] + (iq[j[4]],) + j[5:] for j in jobs]
        _Assembler(domain).run(jobs, vals, subtract_direct, params.p, scale=1.0 / len(sides))
    # replicate over symmetric columns
    frow = fund[ti_all] - comp.start
    fpan = pi_all - pan0
    rows, pans, vidx = [], [], []
    for j in range(0, nphi, sh):
        prow = frow // qq
        rows.append(((prow // nphi) * nphi + (prow % nphi + j) % nphi) * qq + frow % qq)
        pans.append((fpan // nphi) * nphi + (fpan % nphi + j) % nphi)
        vidx.append(np.arange(nblk))
    return (np.concatenate(rows).astype(np.int64), np.concatenate(pans).astype(np.int64),
            np.concatenate(vidx).astype(np.int64), vals, np.tile(kap, nphi // sh),
            np.tile(kind, nphi // sh))


def _onsurface_blocks(domain, params, side, subtract_direct):
    """On-surface QBX blocks for all nodes in global numbering.

    Components with identical shape and tiling share one computation.
    Returns rows, panels, vidx, vals, kappas, kinds.
    """
    sides = (side,) if params.onsurface == "one_sided" else ("exterior", "interior")
    rows_all, pans_all, vidx_all, vals_all, kap_all, kind_all = [], [], [], [], [], []
    nv = 0
    for k, comp in enumerate(domain.components):
        key = (comp.shape.key(), comp.n_theta, comp.n_phi, domain.q, params.p, params.kappa,
               params.r_c, params.d_qbx, params.d_up, params.kappa_up,
               params.adaptive_onsurface, params.q_onsurface, sides, subtract_direct)
        hit = _ONSURFACE_CACHE.get(key)
        if hit is None:
            hit = _onsurface_component(domain, k, params, sides, subtract_direct)
            _cache_put(key, hit)
        lrows, lpans, lvidx, lvals, lkap, lkind = hit
        if any(v is lvals for v in vals_all):
            off = sum(len(v) for v in vals_all[:[i for i, v in enumerate(vals_all) if v is lvals][0]])
        else:
            off = nv
            vals_all.append(lvals)
            nv += len(lvals)
        rows_all.append(lrows + comp.start)
        pans_all.append(lpans + comp.panels[0].index)
        vidx_all.append(lvidx + off)
        kap_all.append(lkap)
        kind_all.append(lkind)
    return (np.concatenate(rows_all), np.concatenate(pans_all), np.concatenate(vidx_all),
            np.concatenate(vals_all), np.concatenate(kap_all), np.concatenate(kind_all))


def build_correction(domain, targets, params, side="exterior"):
    """Assemble the local correction for ``targets``.

    For each (target, panel) pair within d_up the direct panel
    contribution is removed and replaced by
      - precomputed target-specific QBX (same-component panels of an
        on-surface target, d <= d_qbx),
      - on-the-fly QBX with q_c-point coefficient quadrature and
        adaptive kappa (other panels with d <= d_qbx),
      - upsampled quadrature with kappa_up (d_qbx < d <= d_up).
    """
    q = domain.q
    qq = q * q
    nt = len(targets)
    on = targets.on_surface
    if on.any() and not params.qbx:
        raise ValueError("on-surface targets require QBX")
    rows, pans, vidx, kinds, kaps, vals = [], [], [], [], [], []
    nv = 0
    stats = {}
    if on.any():
        if not on.all() or not np.array_equal(targets.node_ids, np.arange(domain.n_nodes)):
            raise ValueError("on-surface targets must be the full node set in order")
        r0, p0, v0, w0, k0, c0 = _onsurface_blocks(domain, params, side, subtract_direct=True)
        rows.append(r0)
        pans.append(p0)
        vidx.append(v0)
        vals.append(w0)
        kinds.append(c0)
        kaps.append(k0)
        nv = len(w0)
    if nt:
        # same-component pairs of on-surface targets come from the symmetric build
        skip = np.where(on, targets.components, -1) if params.qbx else None
        ti, pi, d = near_pairs(domain, targets.points, params.d_up, skip_component=skip)
    else:
        ti = pi = np.zeros(0, np.int64)
        d = np.zeros(0)
    same = on[ti] & (domain.panel_component[pi] == targets.components[ti])
    if params.qbx:
        k_up = (d > params.d_qbx) & (d <= params.d_up) & ~same
        k_fly = (d <= params.d_qbx) & ~same
    else:
        k_up = d <= params.d_up
        k_fly = np.zeros_like(k_up)
    n_new = int(k_up.sum() + k_fly.sum())
    if (nv + n_new) * qq > params.max_weights:
        raise WeightBudgetError("local correction needs %d stored weights, cap is %d"
                                % ((nv + n_new) * qq, params.max_weights))
    jobs = []
    iu = np.flatnonzero(k_up)
    kap_u = params.kappa_up if params.qbx else params.kappa
    qf_u = q if params.qbx else params.q_c
    ku = np.full(len(iu), kap_u, dtype=np.int64)
    for j in _group_jobs(pi[iu], ku, qf_u, KIND_UPSAMPLE, targets.points[ti[iu]], None):
        jobs.append(j[:4] + (j[4] + nv,) + j[5:])
    rows.append(ti[iu])
    pans.append(pi[iu])
    kinds.append(np.full(len(iu), KIND_UPSAMPLE, dtype=np.int8))
    kaps.append(ku)
    ifl = np.flatnonzero(k_fly)
    if len(ifl):
        pc = domain.panel_component[pi[ifl]]
        centers = {}
        for t_, c_ in sorted(set(zip(ti[ifl].tolist(), pc.tolist()))):
            centers[(t_, c_)] = place_center(targets.points[t_], domain.components[c_],
                                             params.r_c, target_id=t_)
        cpos = np.array([centers[key].position for key in zip(ti[ifl].tolist(), pc.tolist())])
        crad = np.array([centers[key].radius for key in zip(ti[ifl].tolist(), pc.tolist())])
        rP = panel_distances(domain, cpos, pi[ifl])
        kf = _adaptive_kappa_vec(rP, crad, params.kappa)
        stats["onthefly_centers"] = len(centers)
        off = nv + len(iu)
        for j in _group_jobs(pi[ifl], kf, params.q_c, KIND_ONTHEFLY, targets.points[ti[ifl]], cpos):
            jobs.append(j[:4] + (j[4] + off,) + j[5:])
        rows.append(ti[ifl])
        pans.append(pi[ifl])
        kinds.append(np.full(len(ifl), KIND_ONTHEFLY, dtype=np.int8))
        kaps.append(kf)
    n_tot = nv + n_new
    all_vals = np.zeros((n_tot, qq))
    if nv:
        all_vals[:nv] = vals[0]
    _Assembler(domain).run(jobs, all_vals, True, params.p)
    vidx.append(nv + np.arange(n_new))
    rows = np.concatenate(rows).astype(np.int64)
    pans = np.concatenate(pans).astype(np.int64)
    vidx = np.concatenate(vidx).astype(np.int64)
    kinds = np.concatenate(kinds)
    kaps = np.concatenate(kaps).astype(np.int64)
    order = np.argsort(rows, kind="stable")
    starts = np.array([domain.panels[p_].start for p_ in pans[order]], dtype=np.int64)
    bc = BlockCorrection(nt, rows[order], pans[order], starts, vidx[order], all_vals,
                         kinds[order], kaps[order], stats)
    stats["blocks"] = bc.n_blocks
    stats["stored_weights"] = bc.stored_weights
    stats["onsurface_ops"] = bc.ops(KIND_ONSURFACE)
    return bc


def precompute_onsurface(domain, params, side="exterior"):
    """Precomputed QBX weight vectors R_i for every node.

    R_i . sigma[source_ids] is the one-sided local expansion value of
    the same-component patch (panels within d_qbx) at node i.
    """
    qq = domain.q ** 2
    rows, pans, vidx, vals, kap, _ = _onsurface_blocks(domain, params, side, subtract_direct=False)
    if len(rows) * qq > params.max_weights:
        raise WeightBudgetError("on-surface weights exceed cap %d" % params.max_weights)
    order = np.argsort(rows, kind="stable")
    rows, pans, vidx, kap = rows[order], pans[order], vidx[order], kap[order]
    bounds = np.searchsorted(rows, np.arange(domain.n_nodes + 1))
    ar = np.arange(qq)
    out = []
    for i in range(domain.n_nodes):
        s, e = bounds[i], bounds[i + 1]
        ids = (np.array([domain.panels[p_].start for p_ in pans[s:e]])[:, None] + ar).ravel()
        out.append(TargetWeights(i, ids, vals[vidx[s:e]].ravel(), pans[s:e], kap[s:e]))
    return out


FAR_FIELDS = ("direct", "treecode")


class LayerEvaluator:
    """Corrected double-layer evaluation at a fixed target set.

    With ``targets=None`` the targets are the quadrature nodes and the
    returned value is the principal value D sigma (the one-sided QBX
    limit minus the jump, or the average of both one-sided limits).
    Off-surface targets return the potential itself.  The local
    correction is built once and reused for every density.
    """

    def __init__(self, domain, params, targets=None, far_field="direct", side="exterior",
                 tree_params=None):
        if far_field not in FAR_FIELDS:
            raise ValueError("far_field must be one of %s" % (FAR_FIELDS,))
        self.domain = domain
        self.params = params
        self.far_field = far_field
        self.side = side
        self.tree_params = tree_params
        if targets is None:
            self.targets = TargetSet.nodes(domain)
        elif isinstance(targets, TargetSet):
            self.targets = targets
        else:
            self.targets = TargetSet.off_surface(targets)
        self.onsurface = bool(self.targets.on_surface.any())
        self.correction = build_correction(domain, self.targets, params, side=side)
        self.interactions = 0
        self._tree = None

    @property
    def onsurface_ops(self):
        return self.correction.ops(KIND_ONSURFACE)

    def far(self, sigma):
        sw = sigma * self.domain.weights
        if len(self.targets) == 0:
            return np.zeros(0)
        if self.far_field == "direct":
            return kernels.dl_direct(self.targets.points, self.domain.nodes, self.domain.normals, sw)
        tp = self.tree_params or TreecodeParams()
        if self._tree is None:
            self._tree = build_tree(self.domain, None, tp)
        self._tree.set_density(sigma)
        val = treecode_eval(self._tree, self.targets.points, tp)
        self.interactions = self._tree.last_interactions
        return val

    def __call__(self, sigma):
        sigma = np.asarray(sigma, dtype=float)
        if sigma.shape != (self.domain.n_nodes,):
            raise ValueError("density has wrong length")
        val = self.far(sigma) + self.correction.apply(sigma)
        if self.onsurface and self.params.onsurface == "one_sided":
            val = val - 0.5 * _side_sign(self.side) * sigma
        return val


def corrected_eval(domain, sigma, targets=None, params=None, far_field="direct",
                   side="exterior", tree_params=None):
    """Double-layer potential with local QBX/upsampling corrections.

    ``targets=None`` evaluates the principal value at all nodes.
    """
    params = params or QbxParams()
    ev = LayerEvaluator(domain, params, targets, far_field, side, tree_params)
    return ev(sigma)
