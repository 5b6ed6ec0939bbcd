"""Parametric surfaces, panel tiling and panel/target distance queries."""
from dataclasses import dataclass, field
from functools import lru_cache
from typing import NamedTuple

import numpy as np
from scipy.spatial import cKDTree

from . import kernels
from .specfun import gauss_rule

SHAPE_KINDS = ("sphere", "ellipsoid", "fourfold")


class SurfaceShape:
    """Closed surface x(theta, phi) = center + r(theta, phi).

    Parameters
    ----------
    kind : {'sphere', 'ellipsoid', 'fourfold'}
    params : tuple
        sphere: (radius,); ellipsoid: (a, b, c); fourfold: (epsilon,) or
        (epsilon, scale).
    center : 3-vector
    """

    def __init__(self, kind, params=(), center=(0.0, 0.0, 0.0)):
        if kind not in SHAPE_KINDS:
            raise ValueError("unknown shape kind %r" % kind)
        params = tuple(float(v) for v in np.atleast_1d(params)) if len(np.atleast_1d(params)) else ()
        if kind == "sphere":
            params = params or (1.0,)
            if len(params) != 1 or params[0] <= 0:
                raise ValueError("sphere needs a positive radius")
        elif kind == "ellipsoid":
            if len(params) != 3 or min(params) <= 0:
                raise ValueError("ellipsoid needs three positive semiaxes")
        else:
            params = params or (0.3,)
            if len(params) == 1:
                params = (params[0], 1.0)
            eps, scale = params
            if scale <= 0 or not (0 <= abs(eps) < 1):
                raise ValueError("fourfold shape needs |epsilon| < 1 and positive scale")
        self.kind = kind
        self.params = params
        self.center = np.asarray(center, dtype=float).reshape(3)

    def __repr__(self):
        return "SurfaceShape(%r, %r, center=%r)" % (self.kind, self.params, tuple(self.center))

    def key(self):
        """Hashable description of the shape up to translation."""
        return (self.kind, self.params)

    @property
    def bounding_radius(self):
        if self.kind == "sphere":
            return self.params[0]
        if self.kind == "ellipsoid":
            return max(self.params)
        eps, scale = self.params
        return scale * (1.0 + abs(eps))

    @property
    def interior_point(self):
        return self.center.copy()

    def _axes(self):
        if self.kind == "sphere":
            r = self.params[0]
            return r, r, r
        if self.kind == "ellipsoid":
            return self.params
        s = self.params[1]
        return s, s, s

    def geometry(self, theta, phi, second=False):
        """Position and parameter derivatives.

        Returns x, x_t, x_p (each shape (..., 3)); with ``second`` also
        x_tt, x_tp, x_pp.
        """
        theta = np.asarray(theta, dtype=float)
        phi = np.asarray(phi, dtype=float)
        st, ct = np.sin(theta), np.cos(theta)
        sp, cp = np.sin(phi), np.cos(phi)
        a, b, c = self._axes()
        z = np.zeros_like(st * sp)
        w = np.stack([a * st * cp, b * st * sp, c * ct], axis=-1)
        w_t = np.stack([a * ct * cp, b * ct * sp, -c * st], axis=-1)
        w_p = np.stack([-a * st * sp, b * st * cp, z], axis=-1)
        if second:
            w_tt = -np.stack([a * st * cp, b * st * sp, c * ct], axis=-1)
            w_tp = np.stack([-a * ct * sp, b * ct * cp, z], axis=-1)
            w_pp = np.stack([-a * st * cp, -b * st * sp, z], axis=-1)
        if self.kind == "fourfold":
            eps = self.params[0]
            c4, s4 = np.cos(4 * phi), np.sin(4 * phi)
            rho = (1.0 + eps * st * st * c4)[..., None]
            r_t = (2 * eps * st * ct * c4)[..., None]
            r_p = (-4 * eps * st * st * s4)[..., None]
            x = rho * w
            x_t = r_t * w + rho * w_t
            x_p = r_p * w + rho * w_p
            if second:
                r_tt = (2 * eps * (ct * ct - st * st) * c4)[..., None]
                r_tp = (-8 * eps * st * ct * s4)[..., None]
                r_pp = (-16 * eps * st * st * c4)[..., None]
                x_tt = r_tt * w + 2 * r_t * w_t + rho * w_tt
                x_tp = r_tp * w + r_t * w_p + r_p * w_t + rho * w_tp
                x_pp = r_pp * w + 2 * r_p * w_p + rho * w_pp
        else:
            x, x_t, x_p = w, w_t, w_p
            if second:
                x_tt, x_tp, x_pp = w_tt, w_tp, w_pp
        x = x + self.center
        if second:
            return x, x_t, x_p, x_tt, x_tp, x_pp
        return x, x_t, x_p

    def position(self, theta, phi):
        return self.geometry(theta, phi)[0]

    def contains(self, points):
        """True for points strictly inside the (star-shaped) surface."""
        u = (np.atleast_2d(np.asarray(points, dtype=float)) - self.center) / np.array(self._axes())
        s = np.sqrt(np.einsum("ij,ij->i", u, u))
        if self.kind != "fourfold":
            return s < 1.0
        eps = self.params[0]
        with np.errstate(invalid="ignore", divide="ignore"):
            st2 = np.where(s > 0, (u[:, 0] ** 2 + u[:, 1] ** 2) / s ** 2, 0.0)
        phi = np.arctan2(u[:, 1], u[:, 0])
        return s < 1.0 + eps * st2 * np.cos(4 * phi)

    def surface_element(self, theta, phi):
        """Position, outward unit normal and area element W."""
        x, x_t, x_p = self.geometry(theta, phi)
        cr = np.cross(x_t, x_p)
        W = np.linalg.norm(cr, axis=-1)
        with np.errstate(invalid="ignore", divide="ignore"):
            nu = cr / W[..., None]
        return x, nu, W

    def normal(self, theta, phi):
        return self.surface_element(theta, phi)[1]


def sphere(radius=1.0, center=(0.0, 0.0, 0.0)):
    return SurfaceShape("sphere", (radius,), center)


def ellipsoid(a, b, c, center=(0.0, 0.0, 0.0)):
    return SurfaceShape("ellipsoid", (a, b, c), center)


def fourfold(epsilon=0.3, center=(0.0, 0.0, 0.0), scale=1.0):
    return SurfaceShape("fourfold", (epsilon, scale), center)


@lru_cache(maxsize=None)
def fine_abscissae(kappa, q):
    """Gauss nodes/weights of kappa equal subintervals of [-1, 1]."""
    g = gauss_rule(q)
    s = np.arange(kappa)
    t = (-1.0 + (2 * s[:, None] + 1 + g.nodes[None, :]) / kappa).ravel()
    w = np.tile(g.weights / kappa, kappa)
    t.setflags(write=False)
    w.setflags(write=False)
    return t, w


def tensor_grid(shape, box, kappa, q):
    """Tensor Gauss grid on a parameter box split kappa x kappa.

    Nodes are ordered theta-major over the (kappa q) x (kappa q) grid.

    Returns
    -------
    x, nu : (M, 3) arrays
    w : (M,) quadrature weights including W and the box Jacobian
    theta, phi : (M,) parameter values
    """
    t0, t1, p0, p1 = box
    s, ws = fine_abscissae(kappa, q)
    th = t0 + 0.5 * (s + 1.0) * (t1 - t0)
    ph = p0 + 0.5 * (s + 1.0) * (p1 - p0)
    TH, PH = np.meshgrid(th, ph, indexing="ij")
    x, nu, W = shape.surface_element(TH.ravel(), PH.ravel())
    w = np.outer(ws, ws).ravel() * W * (0.25 * (t1 - t0) * (p1 - p0))
    return x, nu, w, TH.ravel(), PH.ravel()


@dataclass
class Panel:
    """Tensor Gauss-Legendre panel on one parameter rectangle."""
    shape: SurfaceShape
    component: int
    index: int
    box: tuple
    q: int
    nodes: np.ndarray
    normals: np.ndarray
    weights: np.ndarray
    theta: np.ndarray
    phi: np.ndarray
    start: int = 0
    bc_center: np.ndarray = None
    bc_radius: float = 0.0
    _probe: np.ndarray = field(default=None, repr=False)

    @property
    def h(self):
        t0, t1, p0, p1 = self.box
        return max(t1 - t0, p1 - p0)

    @property
    def node_ids(self):
        return np.arange(self.start, self.start + self.q * self.q)

    def probe_cloud(self):
        """Own nodes, a kappa=4 Gauss grid and edge samples (cached)."""
        if self._probe is None:
            fine = tensor_grid(self.shape, self.box, 4, self.q)[0]
            t0, t1, p0, p1 = self.box
            m = 4 * self.q + 1
            u = np.linspace(0.0, 1.0, m)
            et = np.concatenate([t0 + u * (t1 - t0), t0 + u * (t1 - t0),
                                 np.full(m, t0), np.full(m, t1)])
            ep = np.concatenate([np.full(m, p0), np.full(m, p1),
                                 p0 + u * (p1 - p0), p0 + u * (p1 - p0)])
            edges = self.shape.position(et, ep)
            self._probe = np.ascontiguousarray(np.vstack([self.nodes, fine, edges]))
        return self._probe


def build_panels(shape, n_theta, n_phi, q=7, component=0):
    """Tile ``shape`` into n_theta x n_phi tensor Gauss panels."""
    if n_theta < 1 or n_phi < 1:
        raise ValueError("n_theta and n_phi must be positive")
    if q < 2:
        raise ValueError("q must be at least 2")
    tb = np.linspace(0.0, np.pi, n_theta + 1)
    pb = np.linspace(0.0, 2 * np.pi, n_phi + 1)
    panels = []
    for i in range(n_theta):
        for j in range(n_phi):
            box = (tb[i], tb[i + 1], pb[j], pb[j + 1])
            x, nu, w, th, ph = tensor_grid(shape, box, 1, q)
            pan = Panel(shape, component, i * n_phi + j, box, q, x, nu, w, th, ph)
            probe = pan.probe_cloud()
            pan.bc_center = probe.mean(axis=0)
            pan.bc_radius = float(np.max(np.linalg.norm(probe - pan.bc_center, axis=1)))
            panels.append(pan)
    return panels


@dataclass
class Component:
    shape: SurfaceShape
    n_theta: int
    n_phi: int
    panels: list
    start: int = 0
    count: int = 0
    _tree: object = field(default=None, repr=False)
    _tree_params: object = field(default=None, repr=False)

    @property
    def area(self):
        return float(sum(p.weights.sum() for p in self.panels))

    def seed_tree(self):
        """KD-tree over a parameter-tagged point cloud of the surface."""
        if self._tree is None:
            pts, th, ph = [], [], []
            for pan in self.panels:
                x, _, _, t, p = tensor_grid(self.shape, pan.box, 3, pan.q)
                pts.append(x)
                th.append(t)
                ph.append(p)
            pts = np.vstack(pts)
            self._tree = cKDTree(pts)
            self._tree_params = (np.concatenate(th), np.concatenate(ph), pts)
        return self._tree, self._tree_params


class Domain:
    """Union of disjoint closed surfaces with global node ordering.

    Nodes are ordered by (component, panel, theta index, phi index).
    """

    def __init__(self, components, q=7):
        self.q = q
        self.components = []
        self.panels = []
        start = 0
        for k, (shape, n_theta, n_phi) in enumerate(components):
            pans = build_panels(shape, n_theta, n_phi, q, component=k)
            comp = Component(shape, n_theta, n_phi, pans, start=start)
            for pan in pans:
                pan.start = start
                pan.index = len(self.panels)
                self.panels.append(pan)
                start += q * q
            comp.count = start - comp.start
            self.components.append(comp)
        self._check_disjoint()
        self.nodes = np.ascontiguousarray(np.vstack([p.nodes for p in self.panels]))
        self.normals = np.ascontiguousarray(np.vstack([p.normals for p in self.panels]))
        self.weights = np.ascontiguousarray(np.concatenate([p.weights for p in self.panels]))
        self.node_component = np.concatenate(
            [np.full(c.count, k) for k, c in enumerate(self.components)])
        self.node_panel = np.repeat(np.arange(len(self.panels)), q * q)
        self.panel_component = np.array([p.component for p in self.panels])
        self.bc_center = np.array([p.bc_center for p in self.panels])
        self.bc_radius = np.array([p.bc_radius for p in self.panels])
        self._bc_tree = cKDTree(self.bc_center)
        probes = [p.probe_cloud() for p in self.panels]
        self.probe_offsets = np.concatenate([[0], np.cumsum([len(c) for c in probes])]).astype(np.int64)
        self.probe_points = np.ascontiguousarray(np.vstack(probes))

    def _check_disjoint(self):
        for i, ci in enumerate(self.components):
            for cj in self.components[i + 1:]:
                d = np.linalg.norm(ci.shape.center - cj.shape.center)
                if d <= ci.shape.bounding_radius + cj.shape.bounding_radius:
                    raise ValueError("components %r and %r may intersect" % (ci.shape, cj.shape))

    @property
    def n_nodes(self):
        return len(self.weights)

    @property
    def n_panels(self):
        return len(self.panels)

    @property
    def interior_points(self):
        return np.array([c.shape.interior_point for c in self.components])

    def component_slice(self, k):
        c = self.components[k]
        return slice(c.start, c.start + c.count)

    def areas(self):
        return np.array([self.weights[self.component_slice(k)].sum()
                         for k in range(len(self.components))])

    def candidate_panels(self, targets, cutoff):
        """Panels whose bounding sphere comes within ``cutoff`` of each target."""
        rmax = float(self.bc_radius.max())
        lists = self._bc_tree.query_ball_point(np.atleast_2d(targets), cutoff + rmax)
        return lists


def sphere_domain(n_theta, n_phi=None, q=7, radius=1.0, center=(0.0, 0.0, 0.0)):
    """Single-sphere domain; n_phi defaults to n_theta."""
    return Domain([(sphere(radius, center), n_theta, n_theta if n_phi is None else n_phi)], q)


def panel_distance(target, panel):
    """Distance from ``target`` to the panel, estimated on its probe cloud."""
    d = panel.probe_cloud() - np.asarray(target, dtype=float)
    return float(np.sqrt(np.min(np.einsum("ij,ij->i", d, d))))


def panel_distances(domain, targets, panel_ids):
    """Probe-cloud distances for paired (target, panel) lists."""
    targets = np.ascontiguousarray(np.atleast_2d(targets), dtype=float)
    return kernels.probe_min_distance(targets, np.asarray(panel_ids, dtype=np.int64),
                                      domain.probe_points, domain.probe_offsets)


def near_pairs(domain, targets, cutoff, skip_component=None):
    """All (target index, panel id, distance) with panel distance <= cutoff.

    Bounding-sphere rejection via a KD-tree, then probe-cloud refinement.
    Pairs whose panel belongs to ``skip_component[target]`` are dropped
    (entries < 0 skip nothing).
    """
    targets = np.atleast_2d(np.asarray(targets, dtype=float))
    cand = domain.candidate_panels(targets, cutoff)
    ti = np.concatenate([np.full(len(c), i, dtype=np.int64) for i, c in enumerate(cand)]
                        + [np.zeros(0, np.int64)])
    pi = np.concatenate([np.asarray(c, dtype=np.int64) for c in cand] + [np.zeros(0, np.int64)])
    if len(ti):
        # exact bounding-sphere test before the probe scan
        lb = np.linalg.norm(targets[ti] - domain.bc_center[pi], axis=1) - domain.bc_radius[pi]
        keep = lb <= cutoff
        if skip_component is not None:
            keep &= domain.panel_component[pi] != np.asarray(skip_component)[ti]
        ti, pi = ti[keep], pi[keep]
    d = panel_distances(domain, targets[ti], pi) if len(ti) else np.zeros(0)
    keep = d <= cutoff
    order = np.lexsort((pi[keep], ti[keep]))
    return ti[keep][order], pi[keep][order], d[keep][order]


def panels_within(target, cutoff, domain):
    """Sorted ids of panels with panel_distance(target, panel) <= cutoff."""
    if cutoff < 0:
        raise ValueError("cutoff must be nonnegative")
    _, pi, _ = near_pairs(domain, np.asarray(target, dtype=float)[None, :], cutoff)
    return sorted(int(p) for p in pi)


class SurfacePoint(NamedTuple):
    point: np.ndarray
    normal: np.ndarray
    distance: float
    theta: float
    phi: float
    converged: bool


def nearest_surface_point(target, component, tol=1e-12, maxit=50):
    """Closest point on a component by damped Newton in (theta, phi).

    ``component`` is a :class:`Component` (its panels seed the search)
    or a bare :class:`SurfaceShape` (a coarse parameter grid is used).
    """
    if isinstance(component, SurfaceShape):
        component = Component(component, 8, 16, build_panels(component, 8, 16, 7))
    shape = component.shape
    x0 = np.asarray(target, dtype=float)
    tree, (th, ph, pts) = component.seed_tree()
    _, j = tree.query(x0)
    t, p = th[j], ph[j]
    seed_dist = float(np.linalg.norm(pts[j] - x0))

    def f_and_derivs(t, p):
        x, xt, xp, xtt, xtp, xpp = shape.geometry(t, p, second=True)
        d = x - x0
        g = np.array([d @ xt, d @ xp])
        H = np.array([[xt @ xt + d @ xtt, xt @ xp + d @ xtp],
                      [xt @ xp + d @ xtp, xp @ xp + d @ xpp]])
        return x, xt, xp, d, 0.5 * d @ d, g, H

    mu = 0.0
    converged = False
    for _ in range(maxit):
        x, xt, xp, d, f, g, H = f_and_derivs(t, p)
        nrm = np.cross(xt, xp)
        nn = np.linalg.norm(nrm)
        if nn <= 1e-10 * (xt @ xt + xp @ xp):
            # at a pole the chart degenerates; all shapes have an axial normal
            nrm = np.array([0.0, 0.0, np.sign(np.cos(t))])
            nn = 1.0
        tang = d - (d @ nrm) / nn ** 2 * nrm
        if np.linalg.norm(tang) < tol * max(1.0, np.linalg.norm(x0 - shape.center)):
            converged = True
            break
        scale = max(np.trace(H), 1e-300)
        for _ in range(40):
            try:
                step = np.linalg.solve(H + mu * scale * np.eye(2), -g)
            except np.linalg.LinAlgError:
                step = -g / scale
            tn, pn = t + step[0], p + step[1]
            fn = 0.5 * np.sum((shape.position(tn, pn) - x0) ** 2)
            if fn <= f and np.all(np.isfinite(step)):
                t, p = tn, pn
                mu = mu * 0.3 if mu > 1e-12 else 0.0
                break
            mu = max(4.0 * mu, 1e-6)
        else:
            break
    # map an iterate that crossed a pole back to the canonical chart
    if t < 0.0:
        t, p = -t, p + np.pi
    elif t > np.pi:
        t, p = 2 * np.pi - t, p + np.pi
    p = float(np.mod(p, 2 * np.pi))
    x, xt, xp = shape.geometry(t, p)
    nrm = np.cross(xt, xp)
    nn = np.linalg.norm(nrm)
    if not converged and np.linalg.norm(x - x0) > seed_dist:
        # stalled iteration: fall back to the best seed point
        x = pts[j]
        t, p = th[j], ph[j]
        x, xt, xp = shape.geometry(t, p)
        nrm = np.cross(xt, xp)
        nn = np.linalg.norm(nrm)
    if nn <= 1e-10 * (xt @ xt + xp @ xp):
        nu = np.array([0.0, 0.0, np.sign(np.cos(t))])
    else:
        nu = nrm / nn
    return SurfacePoint(x, nu, float(np.linalg.norm(x - x0)), float(t), float(p), converged)
