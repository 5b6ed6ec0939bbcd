"""Particle-cluster treecode for the double-layer far field.

Sources are sorted into an octree.  Each cluster carries Cartesian
moments of sigma*w*nu about its centroid; a target interacts with a
cluster through the Taylor expansion of 1/|x - y| about the centroid
when eps_T > R_T / D_T, and otherwise descends, summing leaves directly.

Near-field sources of one target are gathered, sorted by global index
and summed with the same sequential loop as the direct evaluator, so a
vanishing eps_T reproduces direct summation bit for bit.
"""
import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from . import _backend, kernels
from ._backend import JIT_PAR, njit, prange
from .kernels import INV4PI, _dl_sum_one, dl_terms_np


@dataclass(frozen=True)
class TreecodeParams:
    p_T: int = 5
    eps_T: float = 0.2
    leaf_cap: int = 64

    def __post_init__(self):
        if not 0.0 < self.eps_T < 1.0:
            raise ValueError("eps_T must lie in (0, 1)")
        if self.p_T < 0:
            raise ValueError("p_T must be nonnegative")
        if self.leaf_cap < 1:
            raise ValueError("leaf_cap must be positive")


@dataclass
class TreeCluster:
    """Read-only view of one cluster."""
    id: int
    lo: int
    hi: int
    center: np.ndarray
    radius: float
    children: list
    moments: np.ndarray = None

    @property
    def is_leaf(self):
        return not self.children

    @property
    def size(self):
        return self.hi - self.lo


# ---------------------------------------------------------------- multi-indices

@lru_cache(maxsize=None)
def multi_indices(order):
    """Multi-indices k with |k| <= order, graded, plus lookup tables.

    Returns (K, deg, m1, m2): K[j] is the index triple, m1[j, i] the
    position of k - e_i and m2[j, i] that of k - 2 e_i (-1 if negative).
    """
    K = [(a, n - a - b, b) for n in range(order + 1)
         for a in range(n, -1, -1) for b in range(n - a + 1)]
    K = np.array(K, dtype=np.int64).reshape(-1, 3)
    pos = {tuple(k): j for j, k in enumerate(K.tolist())}
    m1 = np.full((len(K), 3), -1, dtype=np.int64)
    m2 = np.full((len(K), 3), -1, dtype=np.int64)
    for j, k in enumerate(K.tolist()):
        for i in range(3):
            k1 = list(k)
            k1[i] -= 1
            if k1[i] >= 0:
                m1[j, i] = pos[tuple(k1)]
            k1[i] -= 1
            if k1[i] >= 0:
                m2[j, i] = pos[tuple(k1)]
    for a in (K, m1, m2):
        a.setflags(write=False)
    deg = K.sum(axis=1)
    deg.setflags(write=False)
    return K, deg, m1, m2


def _bk_np(d, R2, deg, m1, m2):
    # d: (T, 3) = y - c, R2: (T,) ; returns (T, nk)
    T = d.shape[0]
    b = np.zeros((T, len(deg)))
    b[:, 0] = 1.0 / np.sqrt(R2)
    for j in range(1, len(deg)):
        n = deg[j]
        acc = np.zeros(T)
        for i in range(3):
            if m1[j, i] >= 0:
                acc += (2 * n - 1) * d[:, i] * b[:, m1[j, i]]
            if m2[j, i] >= 0:
                acc -= (n - 1) * b[:, m2[j, i]]
        b[:, j] = acc / (n * R2)
    return b


def taylor_coeffs_bk(c, y, p_T):
    """Taylor coefficients b_k = (1/k!) d^k/dc^k 1/|c - y| for |k| <= p_T.

    Returns
    -------
    K : (n, 3) int array of multi-indices (graded order)
    b : (n,) coefficients
    """
    c = np.asarray(c, dtype=float)
    y = np.asarray(y, dtype=float)
    d = y - c
    R2 = float(d @ d)
    if R2 < kernels.COINCIDENT ** 2:
        raise ValueError("coincident points in Taylor coefficients")
    K, deg, m1, m2 = multi_indices(int(p_T))
    return K, _bk_np(d[None, :], np.array([R2]), deg, m1, m2)[0]


def _monomials(d, K):
    """(y - c)^k for rows of d, shape (n, len(K))."""
    order = int(K.max()) if len(K) else 0
    pw = np.ones((d.shape[0], 3, order + 1))
    for e in range(1, order + 1):
        pw[:, :, e] = pw[:, :, e - 1] * d
    return pw[:, 0, K[:, 0]] * pw[:, 1, K[:, 1]] * pw[:, 2, K[:, 2]]


# ---------------------------------------------------------------- tree

class Tree:
    """Octree over the domain nodes with per-cluster Taylor moments."""

    def __init__(self, points, normals, weights, params):
        self.params = params
        self.points = np.ascontiguousarray(points, dtype=float)
        self.normals = np.ascontiguousarray(normals, dtype=float)
        self.weights = np.ascontiguousarray(weights, dtype=float)
        n = len(self.points)
        if n < 1:
            raise ValueError("tree needs at least one source")
        self.perm = np.arange(n)
        centers, radii, lo, hi, kids, levels = [], [], [], [], [], []
        self._split(0, n, 0, centers, radii, lo, hi, kids, levels)
        self.centers = np.array(centers)
        self.radii = np.array(radii)
        self.lo = np.array(lo, dtype=np.int64)
        self.hi = np.array(hi, dtype=np.int64)
        self.levels = np.array(levels, dtype=np.int64)
        self.children = np.full((len(kids), 8), -1, dtype=np.int64)
        for c, ks in enumerate(kids):
            self.children[c, :len(ks)] = ks
        self.n_children = np.array([len(k) for k in kids], dtype=np.int64)
        self.depth = int(self.levels.max())
        # nu_i-weighted moments to order p_T + 1; the derivative of the
        # double layer needs b_k one order higher still
        self.K, self.deg, self.m1, self.m2 = multi_indices(params.p_T + 2)
        Kp, _, _, _ = multi_indices(params.p_T + 1)
        self._nkp = len(Kp)
        self._mono = []
        for lev in range(self.depth + 1):
            ids = np.flatnonzero(self.levels == lev)
            rows = np.concatenate([np.arange(self.lo[c], self.hi[c]) for c in ids])
            owner = np.repeat(ids, self.hi[ids] - self.lo[ids])
            d = self.points[self.perm[rows]] - self.centers[owner]
            offs = np.concatenate([[0], np.cumsum(self.hi[ids] - self.lo[ids])[:-1]])
            self._mono.append((ids, rows, offs, _monomials(d, Kp)))
        self.moments = np.zeros((len(self.centers), 3, self._nkp))
        self.E = np.zeros((len(self.centers), len(self.K)))
        self.sw = np.zeros(n)
        self.last_interactions = 0

    def _split(self, s, e, level, centers, radii, lo, hi, kids, levels):
        cid = len(centers)
        idx = self.perm[s:e]
        pts = self.points[idx]
        c = pts.mean(axis=0)
        centers.append(c)
        radii.append(float(np.sqrt(np.max(np.einsum("ij,ij->i", pts - c, pts - c)))))
        lo.append(s)
        hi.append(e)
        kids.append([])
        levels.append(level)
        if e - s <= self.params.leaf_cap:
            return cid
        # cubic bisection about the box midpoint
        bmin, bmax = pts.min(axis=0), pts.max(axis=0)
        mid = 0.5 * (bmin + bmax)
        octant = ((pts[:, 0] > mid[0]).astype(np.int64)
                  + 2 * (pts[:, 1] > mid[1]) + 4 * (pts[:, 2] > mid[2]))
        order = np.argsort(octant, kind="stable")
        self.perm[s:e] = idx[order]
        counts = np.bincount(octant, minlength=8)
        if counts.max() == e - s:
            return cid  # coincident cloud, cannot split
        start = s
        for o in range(8):
            if counts[o]:
                ch = self._split(start, start + counts[o], level + 1,
                                 centers, radii, lo, hi, kids, levels)
                kids[cid].append(ch)
                start += counts[o]
        return cid

    def set_density(self, sigma):
        """Recompute cluster moments for a new density."""
        sigma = np.asarray(sigma, dtype=float)
        self.sw = sigma * self.weights
        s = (self.sw[:, None] * self.normals)[self.perm]
        for ids, rows, offs, mono in self._mono:
            for i in range(3):
                self.moments[ids, i] = np.add.reduceat(mono * s[rows, i][:, None], offs, axis=0)
        # E_k = sum_i k_i M_i[k - e_i]: contracts the derivative of the expansion
        E = np.zeros_like(self.E)
        for i in range(3):
            ok = self.m1[:, i] >= 0
            E[:, ok] += self.K[ok, i] * self.moments[:, i, self.m1[ok, i]]
        self.E = E
        return self

    def cluster(self, cid):
        kids = self.children[cid, :self.n_children[cid]].tolist()
        return TreeCluster(int(cid), int(self.lo[cid]), int(self.hi[cid]), self.centers[cid],
                           float(self.radii[cid]), kids, self.moments[cid])

    @property
    def root(self):
        return self.cluster(0)

    @property
    def n_clusters(self):
        return len(self.centers)


def build_tree(domain, sigma=None, params=None):
    """Octree over the domain nodes; moments are set when ``sigma`` is given."""
    params = params or TreecodeParams()
    tree = Tree(domain.nodes, domain.normals, domain.weights, params)
    if sigma is not None:
        tree.set_density(sigma)
    return tree


# ---------------------------------------------------------------- traversal

@njit(**JIT_PAR)
def _traverse_nb(x, y, nu, sw, perm, centers, radii, lo, hi, children, nkids, E,
                 deg, m1, m2, eps, out, counts):
    nk = deg.shape[0]
    ncl = centers.shape[0]
    for i in prange(x.shape[0]):
        stack = np.empty(ncl, dtype=np.int64)
        near = np.empty(y.shape[0], dtype=np.int64)
        b = np.empty(nk)
        nn = 0
        far = 0.0
        napprox = 0
        top = 0
        stack[0] = 0
        top = 1
        while top > 0:
            top -= 1
            c = stack[top]
            d0 = x[i, 0] - centers[c, 0]
            d1 = x[i, 1] - centers[c, 1]
            d2 = x[i, 2] - centers[c, 2]
            R2 = d0 * d0 + d1 * d1 + d2 * d2
            D = np.sqrt(R2)
            if eps * D > radii[c]:
                # b_k about the centroid, then contract with the moments
                b[0] = 1.0 / D
                for j in range(1, nk):
                    n = deg[j]
                    acc = 0.0
                    if m1[j, 0] >= 0:
                        acc += (2 * n - 1) * d0 * b[m1[j, 0]]
                    if m1[j, 1] >= 0:
                        acc += (2 * n - 1) * d1 * b[m1[j, 1]]
                    if m1[j, 2] >= 0:
                        acc += (2 * n - 1) * d2 * b[m1[j, 2]]
                    for a in range(3):
                        if m2[j, a] >= 0:
                            acc -= (n - 1) * b[m2[j, a]]
                    b[j] = acc / (n * R2)
                s = 0.0
                for j in range(1, nk):
                    s += b[j] * E[c, j]
                far += s
                napprox += 1
            elif nkids[c] == 0:
                for k in range(lo[c], hi[c]):
                    near[nn] = perm[k]
                    nn += 1
            else:
                for k in range(nkids[c]):
                    stack[top] = children[c, k]
                    top += 1
        idx = np.sort(near[:nn])
        out[i] = (_dl_sum_one(x[i, 0], x[i, 1], x[i, 2], y, nu, sw, idx) + far) * INV4PI
        counts[i, 0] = nn
        counts[i, 1] = napprox


def _traverse_np(tree, x, eps):
    """Vectorised over targets: breadth-first over clusters."""
    T = x.shape[0]
    far = np.zeros(T)
    near = [[] for _ in range(T)]
    nn = np.zeros(T, dtype=np.int64)
    napprox = np.zeros(T, dtype=np.int64)
    work = [(0, np.arange(T))]
    while work:
        c, tid = work.pop()
        d = x[tid] - tree.centers[c]
        R2 = np.einsum("ij,ij->i", d, d)
        D = np.sqrt(R2)
        acc = eps * D > tree.radii[c]
        if acc.any():
            ta = tid[acc]
            b = _bk_np(d[acc], R2[acc], tree.deg, tree.m1, tree.m2)
            far[ta] += b[:, 1:] @ tree.E[c, 1:]
            napprox[ta] += 1
        rest = tid[~acc]
        if len(rest) == 0:
            continue
        if tree.n_children[c] == 0:
            seg = tree.perm[tree.lo[c]:tree.hi[c]]
            for t in rest:
                near[t].append(seg)
            nn[rest] += len(seg)
        else:
            for k in tree.children[c, :tree.n_children[c]][::-1]:
                work.append((int(k), rest))
    out = np.empty(T)
    for t in range(T):
        idx = np.sort(np.concatenate(near[t])) if near[t] else np.zeros(0, dtype=np.int64)
        s = np.sum(dl_terms_np(x[t], tree.points[idx], tree.normals[idx], tree.sw[idx]))
        out[t] = (s + far[t]) * INV4PI
    return out, np.stack([nn, napprox], axis=1)


def treecode_eval(tree, targets, params=None):
    """Double-layer potential of the tree's density at ``targets``.

    The number of direct pair evaluations plus cluster approximations
    is stored in ``tree.last_interactions``.
    """
    params = params or tree.params
    x = np.ascontiguousarray(np.atleast_2d(targets), dtype=float)
    if x.shape[0] == 0:
        tree.last_interactions = 0
        return np.zeros(0)
    if _backend.USE_NUMBA:
        out = np.empty(x.shape[0])
        counts = np.zeros((x.shape[0], 2), dtype=np.int64)
        _traverse_nb(x, tree.points, tree.normals, tree.sw, tree.perm, tree.centers,
                     tree.radii, tree.lo, tree.hi, tree.children, tree.n_children, tree.E,
                     tree.deg, tree.m1, tree.m2, float(params.eps_T), out, counts)
    else:
        out, counts = _traverse_np(tree, x, float(params.eps_T))
    tree.last_interactions = int(counts.sum())
    tree.last_counts = counts
    return out


def expected_depth_bound(n, leaf_cap):
    """ceil(log8(n / leaf_cap)) + 2."""
    return int(math.ceil(math.log(max(n / leaf_cap, 1.0), 8))) + 2
