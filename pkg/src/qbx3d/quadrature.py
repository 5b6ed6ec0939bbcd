"""Direct panel quadrature and barycentric upsampling of densities."""
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from . import kernels
from .geometry import fine_abscissae, tensor_grid
from .specfun import gauss_rule

INV4PI = kernels.INV4PI


def double_layer_kernel(x, y, nu_y):
    """K(x, y) = (1/4pi) nu(y).(x-y)/|x-y|^3."""
    d = np.asarray(x, dtype=float) - np.asarray(y, dtype=float)
    r = np.sqrt(d @ d)
    if r < kernels.COINCIDENT:
        raise ValueError("coincident source and target")
    return INV4PI * float(np.asarray(nu_y, dtype=float) @ d) / r ** 3


def single_layer_kernel(x, y):
    """G(x, y) = 1/(4pi |x-y|)."""
    d = np.asarray(x, dtype=float) - np.asarray(y, dtype=float)
    r = np.sqrt(d @ d)
    if r < kernels.COINCIDENT:
        raise ValueError("coincident source and target")
    return INV4PI / r


def direct_layer_eval(domain, sigma, targets, layer="double"):
    """Plain q x q Gauss quadrature of a layer potential at off-surface targets."""
    sigma = np.asarray(sigma, dtype=float)
    if sigma.shape != (domain.n_nodes,):
        raise ValueError("density length %d does not match %d nodes" % (sigma.size, domain.n_nodes))
    targets = np.atleast_2d(np.asarray(targets, dtype=float))
    if len(targets) == 0:
        return np.zeros(0)
    sw = sigma * domain.weights
    if layer == "double":
        return kernels.dl_direct(targets, domain.nodes, domain.normals, sw)
    if layer == "single":
        return kernels.sl_direct(targets, domain.nodes, sw)
    raise ValueError("layer must be 'single' or 'double'")


@lru_cache(maxsize=None)
def barycentric_weights(q):
    """Barycentric weights of the Gauss-Legendre nodes (closed form, up to scale)."""
    g = gauss_rule(q)
    j = np.arange(q)
    # nodes ascending, so the sign alternates starting from (-1)^(q-1)
    lam = (-1.0) ** (q - 1 - j) * np.sqrt((1.0 - g.nodes ** 2) * g.weights)
    lam.setflags(write=False)
    return lam


def bary_matrix(q, t):
    """Second-form barycentric interpolation from q Gauss nodes to points t."""
    x = gauss_rule(q).nodes
    lam = barycentric_weights(q)
    t = np.asarray(t, dtype=float)
    d = t[:, None] - x[None, :]
    hit = d == 0.0
    d = np.where(hit, 1.0, d)
    c = lam[None, :] / d
    L = c / c.sum(axis=1, keepdims=True)
    rows = hit.any(axis=1)
    L[rows] = hit[rows].astype(float)
    return L


@lru_cache(maxsize=None)
def interp_matrix(q, kappa, q_fine):
    """1D interpolation matrix from q parent nodes to kappa*q_fine fine nodes."""
    t, _ = fine_abscissae(kappa, q_fine)
    L = bary_matrix(q, t)
    L.setflags(write=False)
    return L


@dataclass
class UpsampledPanel:
    """Panel split into kappa x kappa sub-boxes with q_fine^2 Gauss nodes each.

    Fine nodes form a (kappa q_fine)^2 tensor grid, theta-major.
    """
    parent: int
    kappa: int
    q_fine: int
    nodes: np.ndarray
    normals: np.ndarray
    weights: np.ndarray
    sigma: np.ndarray


def upsample(panel, sigma_panel, kappa, q_fine=None):
    """Interpolate a panel density onto the upsampled grid.

    Geometry is evaluated exactly on the fine grid; only sigma is
    interpolated.  kappa = 1 with q_fine = q returns the parent nodes.
    """
    if kappa < 1:
        raise ValueError("kappa must be >= 1")
    q = panel.q
    qf = q if q_fine is None else q_fine
    sig = np.asarray(sigma_panel, dtype=float).reshape(q, q)
    if kappa == 1 and qf == q:
        return UpsampledPanel(panel.index, 1, q, panel.nodes, panel.normals,
                              panel.weights, sig.ravel().copy())
    L = interp_matrix(q, kappa, qf)
    x, nu, w, _, _ = tensor_grid(panel.shape, panel.box, kappa, qf)
    fine = (L @ sig @ L.T).ravel()
    return UpsampledPanel(panel.index, kappa, qf, x, nu, w, fine)


def upsampled_panel_quad(upanel, target, layer="double"):
    """Quadrature of one panel's layer potential on its fine nodes."""
    x = np.atleast_2d(np.asarray(target, dtype=float))
    sw = upanel.sigma * upanel.weights
    if layer == "double":
        return float(kernels.dl_direct(x, upanel.nodes, upanel.normals, sw)[0])
    if layer == "single":
        return float(kernels.sl_direct(x, upanel.nodes, sw)[0])
    raise ValueError("layer must be 'single' or 'double'")


def reduce_fine_weights(G, q, kappa, q_fine):
    """Map fine-node weights (T, (kappa q_fine)^2) to parent-node weights (T, q^2).

    If value = sum_f G_f sigma_f with sigma_f = (L S L^T)_f, then
    value = sum_{ij} (L^T G L)_{ij} S_{ij}.
    """
    L = interp_matrix(q, kappa, q_fine)
    m = kappa * q_fine
    G = G.reshape(-1, m, m)
    return np.matmul(L.T, np.matmul(G, L)).reshape(-1, q * q)
