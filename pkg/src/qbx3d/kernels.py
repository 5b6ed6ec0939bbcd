"""Hot loops: direct sums, TSQBX node weights, block-sparse products.

Each public function dispatches to a numba kernel or a numpy
implementation depending on :mod:`qbx3d._backend`.
"""
import numpy as np

from . import _backend
from ._backend import JIT, JIT_PAR, njit, prange

INV4PI = 1.0 / (4.0 * np.pi)
COINCIDENT = 1e-14


# ---------------------------------------------------------------- numba

@njit(**JIT)
def _dl_sum_one(x0, x1, x2, y, nu, sw, idx):
    # sequential sum over the listed sources; no reassociation
    acc = 0.0
    for jj in range(idx.shape[0]):
        j = idx[jj]
        d0 = x0 - y[j, 0]
        d1 = x1 - y[j, 1]
        d2 = x2 - y[j, 2]
        r2 = d0 * d0 + d1 * d1 + d2 * d2
        if r2 < COINCIDENT * COINCIDENT:
            continue
        r = np.sqrt(r2)
        acc += sw[j] * (nu[j, 0] * d0 + nu[j, 1] * d1 + nu[j, 2] * d2) / (r2 * r)
    return acc


@njit(**JIT)
def _dl_sum_range(x0, x1, x2, y, nu, sw, lo, hi):
    acc = 0.0
    for j in range(lo, hi):
        d0 = x0 - y[j, 0]
        d1 = x1 - y[j, 1]
        d2 = x2 - y[j, 2]
        r2 = d0 * d0 + d1 * d1 + d2 * d2
        if r2 < COINCIDENT * COINCIDENT:
            continue
        r = np.sqrt(r2)
        acc += sw[j] * (nu[j, 0] * d0 + nu[j, 1] * d1 + nu[j, 2] * d2) / (r2 * r)
    return acc


@njit(**JIT_PAR)
def _dl_direct_nb(x, y, nu, sw):
    out = np.empty(x.shape[0])
    n = y.shape[0]
    for i in prange(x.shape[0]):
        out[i] = _dl_sum_range(x[i, 0], x[i, 1], x[i, 2], y, nu, sw, 0, n) * INV4PI
    return out


@njit(**JIT_PAR)
def _sl_direct_nb(x, y, sw):
    out = np.empty(x.shape[0])
    for i in prange(x.shape[0]):
        acc = 0.0
        for j in range(y.shape[0]):
            d0 = x[i, 0] - y[j, 0]
            d1 = x[i, 1] - y[j, 1]
            d2 = x[i, 2] - y[j, 2]
            r2 = d0 * d0 + d1 * d1 + d2 * d2
            if r2 < COINCIDENT * COINCIDENT:
                continue
            acc += sw[j] / np.sqrt(r2)
        out[i] = acc * INV4PI
    return out


@njit(**JIT_PAR)
def _dl_weights_nb(x, y, nu, w):
    out = np.empty((x.shape[0], y.shape[0]))
    for i in prange(x.shape[0]):
        for j in range(y.shape[0]):
            d0 = x[i, 0] - y[j, 0]
            d1 = x[i, 1] - y[j, 1]
            d2 = x[i, 2] - y[j, 2]
            r2 = d0 * d0 + d1 * d1 + d2 * d2
            if r2 < COINCIDENT * COINCIDENT:
                out[i, j] = 0.0
            else:
                r = np.sqrt(r2)
                out[i, j] = w[j] * (nu[j, 0] * d0 + nu[j, 1] * d1 + nu[j, 2] * d2) / (r2 * r) * INV4PI
    return out


@njit(**JIT_PAR)
def _tsqbx_weights_nb(c, x, y, nu, w, p, out, ratio):
    # recurrence coefficients hoisted out of the node loop
    a = np.empty(p)
    b = np.empty(p)
    f = np.empty(p)
    for n in range(p):
        a[n] = (2.0 * n + 1.0) / (n + 1.0)
        b[n] = n / (n + 1.0)
        f[n] = 2.0 * n + 1.0
    for i in prange(x.shape[0]):
        d0 = x[i, 0] - c[i, 0]
        d1 = x[i, 1] - c[i, 1]
        d2 = x[i, 2] - c[i, 2]
        r = np.sqrt(d0 * d0 + d1 * d1 + d2 * d2)
        rmin = np.inf
        for j in range(y.shape[0]):
            e0 = y[j, 0] - c[i, 0]
            e1 = y[j, 1] - c[i, 1]
            e2 = y[j, 2] - c[i, 2]
            R2 = e0 * e0 + e1 * e1 + e2 * e2
            iR = 1.0 / np.sqrt(R2)
            R = R2 * iR
            if R < rmin:
                rmin = R
            u = -(e0 * nu[j, 0] + e1 * nu[j, 1] + e2 * nu[j, 2])
            if r == 0.0:
                # only n = 0 survives
                out[i, j] = w[j] * u * iR * iR * iR * INV4PI
                continue
            alpha = e0 * d0 + e1 * d1 + e2 * d2
            t = alpha * iR / r
            rho = r * iR
            v = nu[j, 0] * d0 + nu[j, 1] * d1 + nu[j, 2] * d2
            pm = 0.0
            pc = 1.0
            dm = 0.0
            dc = 0.0
            A = 1.0
            B = 0.0
            rn = 1.0
            for n in range(p):
                pn = a[n] * t * pc - b[n] * pm
                dn = dm + f[n] * pc
                pm = pc
                pc = pn
                dm = dc
                dc = dn
                rn *= rho
                A += (n + 2) * rn * pc
                B += rn * dc
            out[i, j] = w[j] * (u * A + (v * R / r + t * u) * B) * iR * iR * iR * INV4PI
        ratio[i] = rmin / r if r > 0.0 else np.inf


@njit(**JIT)
def _block_apply_nb(rows, starts, vidx, vals, sigma, out):
    nb = rows.shape[0]
    m = vals.shape[1]
    for b in range(nb):
        acc = 0.0
        s = starts[b]
        v = vidx[b]
        for k in range(m):
            acc += vals[v, k] * sigma[s + k]
        out[rows[b]] += acc


@njit(**JIT_PAR)
def _probe_min_nb(x, pid, pts, off):
    out = np.empty(x.shape[0])
    for i in prange(x.shape[0]):
        best = np.inf
        for j in range(off[pid[i]], off[pid[i] + 1]):
            d0 = x[i, 0] - pts[j, 0]
            d1 = x[i, 1] - pts[j, 1]
            d2 = x[i, 2] - pts[j, 2]
            r2 = d0 * d0 + d1 * d1 + d2 * d2
            if r2 < best:
                best = r2
        out[i] = np.sqrt(best)
    return out


# ---------------------------------------------------------------- numpy

def dl_terms_np(x, y, nu, sw):
    """Unscaled double-layer terms sw * nu.(x-y)/|x-y|^3, zero when coincident.

    ``x`` is a single target; the expression mirrors the compiled loop.
    """
    d0 = x[0] - y[:, 0]
    d1 = x[1] - y[:, 1]
    d2 = x[2] - y[:, 2]
    r2 = d0 * d0 + d1 * d1 + d2 * d2
    ok = r2 >= COINCIDENT * COINCIDENT
    r2s = np.where(ok, r2, 1.0)
    r = np.sqrt(r2s)
    t = sw * (nu[:, 0] * d0 + nu[:, 1] * d1 + nu[:, 2] * d2) / (r2s * r)
    return np.where(ok, t, 0.0)


def _dl_direct_np(x, y, nu, sw):
    out = np.empty(x.shape[0])
    for i in range(x.shape[0]):
        out[i] = np.sum(dl_terms_np(x[i], y, nu, sw)) * INV4PI
    return out


def _sl_direct_np(x, y, sw, chunk=256):
    out = np.empty(x.shape[0])
    for s in range(0, x.shape[0], chunk):
        d = x[s:s + chunk, None, :] - y[None, :, :]
        r = np.sqrt(np.einsum("ijk,ijk->ij", d, d))
        inv = np.where(r >= COINCIDENT, 1.0 / np.where(r > 0, r, 1.0), 0.0)
        out[s:s + chunk] = inv @ sw * INV4PI
    return out


def _dl_weights_np(x, y, nu, w):
    d = x[:, None, :] - y[None, :, :]
    r2 = np.einsum("ijk,ijk->ij", d, d)
    ok = r2 >= COINCIDENT * COINCIDENT
    r2s = np.where(ok, r2, 1.0)
    k = np.einsum("ijk,jk->ij", d, nu) / (r2s * np.sqrt(r2s))
    return np.where(ok, k * w[None, :] * INV4PI, 0.0)


def _tsqbx_weights_np(c, x, y, nu, w, p, out, ratio):
    for i in range(x.shape[0]):
        dx = x[i] - c[i]
        r = np.sqrt(dx @ dx)
        e = y - c[i]
        R = np.sqrt(np.einsum("ij,ij->i", e, e))
        ratio[i] = R.min() / r if r > 0 else np.inf
        u = -np.einsum("ij,ij->i", e, nu)
        if r == 0.0:
            out[i] = w * u / R ** 3 * INV4PI
            continue
        t = (e @ dx) / (R * r)
        rho = r / R
        v = nu @ dx
        pm = np.zeros_like(t)
        pc = np.ones_like(t)
        dm = np.zeros_like(t)
        dc = np.zeros_like(t)
        A = np.ones_like(t)
        B = np.zeros_like(t)
        rn = np.ones_like(t)
        for n in range(p):
            pn = ((2 * n + 1) * t * pc - n * pm) / (n + 1)
            dn = dm + (2 * n + 1) * pc
            pm, pc, dm, dc = pc, pn, dc, dn
            rn = rn * rho
            A = A + (n + 2) * rn * pc
            B = B + rn * dc
        out[i] = w * (u * A + (v * R / r + t * u) * B) / R ** 3 * INV4PI


def _block_apply_np(rows, starts, vidx, vals, sigma, out):
    m = vals.shape[1]
    cols = starts[:, None] + np.arange(m)[None, :]
    np.add.at(out, rows, np.einsum("bk,bk->b", vals[vidx], sigma[cols]))


def _probe_min_np(x, pid, pts, off):
    out = np.empty(x.shape[0])
    for i in range(x.shape[0]):
        d = pts[off[pid[i]]:off[pid[i] + 1]] - x[i]
        out[i] = np.sqrt(np.min(np.einsum("ij,ij->i", d, d)))
    return out


# ---------------------------------------------------------------- dispatch

def _f(a):
    return np.ascontiguousarray(a, dtype=np.float64)


def dl_direct(targets, src, normals, sw):
    """(1/4pi) sum_j sw_j nu_j.(x-y_j)/|x-y_j|^3, skipping coincident pairs."""
    args = (_f(np.atleast_2d(targets)), _f(src), _f(normals), _f(sw))
    if _backend.USE_NUMBA:
        return _dl_direct_nb(*args)
    return _dl_direct_np(*args)


def sl_direct(targets, src, sw):
    """(1/4pi) sum_j sw_j / |x - y_j|, skipping coincident pairs."""
    args = (_f(np.atleast_2d(targets)), _f(src), _f(sw))
    if _backend.USE_NUMBA:
        return _sl_direct_nb(*args)
    return _sl_direct_np(*args)


def dl_weights(targets, src, normals, w):
    """Matrix of double-layer quadrature weights K(x_i, y_j) w_j."""
    args = (_f(np.atleast_2d(targets)), _f(src), _f(normals), _f(w))
    if _backend.USE_NUMBA:
        return _dl_weights_nb(*args)
    return _dl_weights_np(*args)


def tsqbx_weights(centers, targets, src, normals, w, p):
    """Per-node weights of the target-specific expansion.

    Row i holds g_j such that sum_j g_j sigma_j = sum_{n<=p} z_n r^n for
    target i expanded about center i.

    Returns
    -------
    weights : (T, M) array
    ratio : (T,) min_j |y_j - c| / |x - c|; values below 1 signal a
        convergence-ball violation.
    """
    centers = _f(np.atleast_2d(centers))
    targets = _f(np.atleast_2d(targets))
    out = np.empty((targets.shape[0], len(w)))
    ratio = np.empty(targets.shape[0])
    args = (centers, targets, _f(src), _f(normals), _f(w), int(p), out, ratio)
    if _backend.USE_NUMBA:
        _tsqbx_weights_nb(*args)
    else:
        _tsqbx_weights_np(*args)
    return out, ratio


def block_apply(rows, starts, vidx, vals, sigma, n_out):
    """out[rows[b]] += vals[vidx[b]] . sigma[starts[b]:starts[b]+m]."""
    out = np.zeros(n_out)
    if len(rows) == 0:
        return out
    args = (np.asarray(rows, np.int64), np.asarray(starts, np.int64),
            np.asarray(vidx, np.int64), _f(vals), _f(sigma), out)
    if _backend.USE_NUMBA:
        _block_apply_nb(*args)
    else:
        _block_apply_np(*args)
    return out


def probe_min_distance(targets, panel_ids, points, offsets):
    args = (_f(targets), np.asarray(panel_ids, np.int64), points, offsets)
    if _backend.USE_NUMBA:
        return _probe_min_nb(*args)
    return _probe_min_np(*args)
