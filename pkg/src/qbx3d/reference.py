"""Analytic reference solutions and independent expansion oracles."""
from dataclasses import dataclass

import numpy as np

from .specfun import assoc_legendre, legendre_table, sph_norm, spherical_harmonic
from .treecode import multi_indices, _bk_np

INV4PI = 1.0 / (4.0 * np.pi)


def _real_ylm(l, m, theta, phi):
    if abs(m) > l or l < 0:
        raise IndexError("need |m| <= l")
    return np.real(spherical_harmonic(l, m, theta, phi))


def eigen_dl_value(l, m, theta, phi):
    """Principal value of D[Re Y_l^m] on the unit sphere: -Re Y_l^m / (4l+2)."""
    return -_real_ylm(l, m, theta, phi) / (4 * l + 2)


def separation_solution(l, m, rho, theta, phi, side):
    """Double layer of Re Y_l^m on the unit sphere at radius rho."""
    rho = np.asarray(rho, dtype=float)
    y = _real_ylm(l, m, theta, phi)
    if side == "interior":
        if np.any(rho >= 1.0):
            raise ValueError("interior solution needs rho < 1")
        return -(l + 1) / (2 * l + 1) * rho ** l * y
    if side == "exterior":
        if np.any(rho <= 1.0):
            raise ValueError("exterior solution needs rho > 1")
        return l / (2 * l + 1) * rho ** (-(l + 1)) * y
    raise ValueError("side must be 'interior' or 'exterior'")


def sphere_angles(points, center=(0.0, 0.0, 0.0)):
    """(rho, theta, phi) of points about ``center``."""
    d = np.atleast_2d(points) - np.asarray(center, dtype=float)
    rho = np.linalg.norm(d, axis=1)
    theta = np.arccos(np.clip(d[:, 2] / rho, -1.0, 1.0))
    phi = np.arctan2(d[:, 1], d[:, 0])
    return rho, theta, phi


def target_sphere(radius, n=16, center=(0.0, 0.0, 0.0)):
    """n x 2n midpoint grid in (theta, phi) on a sphere."""
    t = (np.arange(n) + 0.5) * np.pi / n
    p = np.arange(2 * n) * np.pi / n
    T, P = np.meshgrid(t, p, indexing="ij")
    T, P = T.ravel(), P.ravel()
    x = np.stack([np.sin(T) * np.cos(P), np.sin(T) * np.sin(P), np.cos(T)], axis=1)
    return radius * x + np.asarray(center, dtype=float)


def scaled_surface_targets(shape, scale, n=16):
    """Copy of ``shape`` scaled about its center, sampled on the same grid."""
    t = (np.arange(n) + 0.5) * np.pi / n
    p = np.arange(2 * n) * np.pi / n
    T, P = np.meshgrid(t, p, indexing="ij")
    x = shape.position(T.ravel(), P.ravel())
    return shape.center + scale * (x - shape.center)


# ---------------------------------------------------------------- point charges

@dataclass
class PointChargeSet:
    positions: np.ndarray
    strengths: np.ndarray

    def __post_init__(self):
        self.positions = np.atleast_2d(np.asarray(self.positions, dtype=float))
        self.strengths = np.asarray(self.strengths, dtype=float).reshape(-1)
        if len(self.strengths) != len(self.positions):
            raise ValueError("one strength per charge")

    def inside(self, shape):
        return bool(np.all(shape.contains(self.positions)))


def charge_grid(n=7, radius=0.5, center=(0.0, 0.0, 0.0), strength=1.0):
    """n*n unit charges on a (theta, phi) tensor grid of a sphere."""
    t = (np.arange(n) + 0.5) * np.pi / n
    p = 2 * np.pi * np.arange(n) / n
    T, P = np.meshgrid(t, p, indexing="ij")
    T, P = T.ravel(), P.ravel()
    x = radius * np.stack([np.sin(T) * np.cos(P), np.sin(T) * np.sin(P), np.cos(T)], axis=1)
    return PointChargeSet(x + np.asarray(center, dtype=float), np.full(n * n, float(strength)))


def point_charge_potential(charges, x):
    """sum_j s_j / (4 pi |x - y_j|)."""
    x = np.atleast_2d(np.asarray(x, dtype=float))
    d = x[:, None, :] - charges.positions[None, :, :]
    r = np.sqrt(np.einsum("ijk,ijk->ij", d, d))
    if np.any(r < 1e-14):
        raise ValueError("target coincides with a point charge")
    return (charges.strengths[None, :] / r).sum(axis=1) * INV4PI


# ---------------------------------------------------------------- expansion oracles

def shell_sums(c, x, y, p):
    """B_n = sum_{|k|=n} b_k(c, y) (x - c)^k for n = 0..p."""
    c, x, y = (np.asarray(v, dtype=float) for v in (c, x, y))
    K, deg, m1, m2 = multi_indices(int(p))
    e = y - c
    b = _bk_np(e[None, :], np.array([e @ e]), deg, m1, m2)[0]
    dx = x - c
    mono = np.prod(dx[None, :] ** K, axis=1)
    return np.bincount(deg, weights=b * mono, minlength=p + 1)


def legendre_terms(c, x, y, p):
    """(r^n / R^{n+1}) P_n(alpha / (r R)) for n = 0..p."""
    c, x, y = (np.asarray(v, dtype=float) for v in (c, x, y))
    r = np.linalg.norm(x - c)
    R = np.linalg.norm(y - c)
    if r == 0.0:
        out = np.zeros(p + 1)
        out[0] = 1.0 / R
        return out
    t = np.clip((x - c) @ (y - c) / (r * R), -1.0, 1.0)
    P, _ = legendre_table(p, t)
    n = np.arange(p + 1)
    return r ** n / R ** (n + 1) * P


def expansion_equivalence_check(c, x, y, p):
    """Max |B_n(Taylor shells) - B_n(Legendre)| over n <= p."""
    if np.linalg.norm(np.subtract(x, c)) >= np.linalg.norm(np.subtract(y, c)):
        raise ValueError("need |x - c| < |y - c| for convergence")
    return float(np.max(np.abs(shell_sums(c, x, y, p) - legendre_terms(c, x, y, p))))


def _dylm_dtheta(n, m, theta, phi):
    # d/dtheta of P_n^m(cos theta) from (1-x^2) P' = -n x P_n^m + (n+m) P_{n-1}^m
    x = np.cos(theta)
    s = np.sin(theta)
    pn = assoc_legendre(n, m, x)
    pn1 = assoc_legendre(n - 1, m, x) if n - 1 >= m else np.zeros_like(x)
    return (n * x * pn - (n + m) * pn1) / s


def sph_qbx_coefficients(c, y, nu, sw, p):
    """Spherical-harmonic QBX coefficients z_nm of the double layer.

    z_nm = 1/(2n+1) sum_j sw_j nu_j . grad_y [conj(Y_n^m(y^)) / R^{n+1}],
    so that u = sum_{n,m} z_nm r^n Y_n^m(x^).  Returns a dict (n, m) -> z.
    """
    e = np.atleast_2d(y) - np.asarray(c, dtype=float)
    R = np.linalg.norm(e, axis=1)
    th = np.arccos(np.clip(e[:, 2] / R, -1.0, 1.0))
    ph = np.arctan2(e[:, 1], e[:, 0])
    st, ct, sp, cp = np.sin(th), np.cos(th), np.sin(ph), np.cos(ph)
    eR = np.stack([st * cp, st * sp, ct], axis=1)
    et = np.stack([ct * cp, ct * sp, -st], axis=1)
    ep = np.stack([-sp, cp, np.zeros_like(sp)], axis=1)
    nR, nt, npp = (np.einsum("ij,ij->i", nu, v) for v in (eR, et, ep))
    z = {}
    for n in range(p + 1):
        for m in range(-n, n + 1):
            am = abs(m)
            N = sph_norm(n, m)
            P = assoc_legendre(n, am, ct)
            dP = _dylm_dtheta(n, am, th, ph)
            ybar = N * P * np.exp(-1j * m * ph)
            f_R = -(n + 1) * ybar / R ** (n + 2)
            f_t = N * dP * np.exp(-1j * m * ph) / R ** (n + 1)
            f_p = -1j * m * ybar / R ** (n + 1)
            g = f_R * nR + f_t * nt / R + f_p * npp / (R * st)
            z[(n, m)] = np.sum(sw * g) / (2 * n + 1)
    return z


def sph_qbx_eval(z, c, x, p):
    """sum_{n<=p, m} z_nm r^n Y_n^m(x^), real part."""
    d = np.asarray(x, dtype=float) - np.asarray(c, dtype=float)
    r = np.linalg.norm(d)
    th = np.arccos(np.clip(d[2] / r, -1.0, 1.0)) if r > 0 else 0.0
    ph = np.arctan2(d[1], d[0])
    acc = 0.0 + 0.0j
    for n in range(p + 1):
        for m in range(-n, n + 1):
            acc += z[(n, m)] * r ** n * spherical_harmonic(n, m, th, ph)
    return float(acc.real)
