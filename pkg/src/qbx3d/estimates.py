"""Closed-form QBX error estimators and small measured oracles.

The estimators are pure functions of :class:`ErrorInputs`.  Unknown
constants default to 1 (``C``) and the estimates are meant for ordering
parameter choices, not as certified bounds.
"""
from dataclasses import dataclass
import math

import numpy as np

from .specfun import gauss_rule, legendre_table

SQ2P1 = 1.0 + math.sqrt(2.0)
LOG_MAX = math.log(np.finfo(float).max)


@dataclass
class ErrorInputs:
    """Inputs of the estimators.

    h, q : panel size and Gauss order
    p : truncation order
    r : center-to-target distance
    r_P : distance from the center to the nearest panel
    c : center offset from the surface (signed)
    R_bar : radius of the projected patch
    H : mean curvature at the base point
    sigma0 : density magnitude at the base point
    """
    h: float = 0.1
    q: int = 7
    p: int = 10
    r: float = 0.05
    r_P: float = 0.05
    c: float = 0.05
    R_bar: float = 0.3
    H: float = 0.0
    sigma0: float = 1.0

    def __post_init__(self):
        for name in ("h", "R_bar"):
            if not getattr(self, name) > 0.0:
                raise ValueError("%s must be positive" % name)
        for name in ("r", "r_P"):
            if getattr(self, name) < 0.0:
                raise ValueError("%s must be non-negative" % name)
        if self.p < 0:
            raise ValueError("p must be >= 0")
        if self.r > abs(self.c) * (1 + 1e-12) and self.c != 0.0:
            raise ValueError("need r <= |c|")

    @property
    def rho(self):
        """sqrt(c^2 + R_bar^2), the convergence radius of the local expansion."""
        return math.hypot(self.c, self.R_bar)

    @property
    def regime_ok(self):
        """Whether R_bar^2 < |c| < R_bar holds (recorded, never enforced)."""
        return self.R_bar ** 2 < abs(self.c) < self.R_bar < 1.0

    def replace(self, **kw):
        d = dict(self.__dict__)
        d.update(kw)
        return ErrorInputs(**d)


def alpha(p, c, R_bar):
    """1 for odd p and c / sqrt(c^2 + R_bar^2) for even p."""
    if p % 2 == 1:
        return 1.0
    return abs(c) / math.hypot(c, R_bar)


def _log_coeff_term(l):
    # log of 2 pi^{3/2} (2l)! / (Gamma(l + 1/2) (l!)^2)
    return (math.log(2.0) + 1.5 * math.log(math.pi) + math.lgamma(2 * l + 1)
            - math.lgamma(l + 0.5) - 2 * math.lgamma(l + 1))


def coeff_error_estimate(inp):
    """Coefficient (quadrature) error of one flat h x h panel.

    |sigma| (h/q) sum_{l<=p} c_l (q r/h)^l exp(-4 q r_P / h), evaluated in
    log space; returns inf when the result overflows.
    """
    if inp.q < 2:
        raise ValueError("need q >= 2")
    h, q = float(inp.h), int(inp.q)
    s0 = abs(inp.sigma0)
    if s0 == 0.0:
        return 0.0
    base = math.log(s0) + math.log(h / q) - 4.0 * q * inp.r_P / h
    x = q * inp.r / h
    logs = []
    for l in range(int(inp.p) + 1):
        t = _log_coeff_term(l)
        if l > 0:
            if x == 0.0:
                break
            t += l * math.log(x)
        logs.append(t)
    m = max(logs)
    lv = base + m + math.log(sum(math.exp(v - m) for v in logs))
    if lv > LOG_MAX:
        return math.inf
    return math.exp(lv)


def truncation_error_estimate_dl(inp, C=1.0, C_curv=1.0):
    """Leading truncation error of a local double-layer expansion."""
    p, r, rho = int(inp.p), float(inp.r), inp.rho
    s0 = abs(inp.sigma0)
    lead = C * max(p, 1) * alpha(p + 1, inp.c, inp.R_bar) * s0 * (SQ2P1 * r / rho) ** (p + 1)
    curv = C_curv * alpha(p, inp.c, inp.R_bar) * max(p, 1) * s0 * abs(inp.H) * inp.R_bar \
        * (r / rho) ** (p + 1)
    return lead + curv


def truncation_error_estimate_sl(inp, C=1.0, C_curv=1.0):
    """Leading truncation error of a local single-layer expansion."""
    p, r, rho = int(inp.p), float(inp.r), inp.rho
    s0 = abs(inp.sigma0)
    lead = C * alpha(p, inp.c, inp.R_bar) * s0 * (SQ2P1 * r) ** (p + 1) / rho ** p
    curv = C_curv * alpha(p + 1, inp.c, inp.R_bar) * s0 * abs(inp.H) * inp.R_bar ** 2 \
        * (r / rho) ** (p + 1)
    return lead + curv


def calibrate(estimator, inputs, measured):
    """Least-squares (in log) constant C so that C * estimate ~ measured."""
    est = np.array([estimator(i) for i in inputs])
    meas = np.asarray(measured, dtype=float)
    ok = (est > 0) & (meas > 0) & np.isfinite(est)
    if not ok.any():
        return 1.0
    return float(np.exp(np.mean(np.log(meas[ok]) - np.log(est[ok]))))


# ---------------------------------------------------------------- measured oracles

def _panel_nodes(h, q, k=1):
    """Composite q-point Gauss nodes on [-h/2, h/2]^2 with k x k subpanels."""
    g = gauss_rule(q)
    a = -0.5 * h + h * np.arange(k) / k
    t = (a[:, None] + 0.5 * h / k * (g.nodes[None, :] + 1.0)).ravel()
    w = np.tile(0.5 * h / k * g.weights, k)
    X, Y = np.meshgrid(t, t, indexing="ij")
    return X.ravel(), Y.ravel(), np.outer(w, w).ravel()


def flat_panel_sl_coefficients(h, q, p, r_P, k=1):
    """Legendre-form single-layer coefficients of a flat panel, sigma = 1.

    The panel is [-h/2, h/2]^2 in the plane z = 0, the center sits at
    (0, 0, r_P) and the target direction is -z.  Returns z_n, n = 0..p,
    so that the potential at distance r is sum z_n r^n / (4 pi).
    """
    X, Y, W = _panel_nodes(h, q, k)
    R = np.sqrt(X * X + Y * Y + r_P * r_P)
    cosg = r_P / R                 # angle between (x - c) = -z and (y - c)
    P, _ = legendre_table(p, cosg)
    n = np.arange(p + 1)[:, None]
    return (P * W[None, :] / R[None, :] ** (n + 1)).sum(axis=1)


def measured_coeff_error(h, q, p, r_P, r, k_ref=32):
    """|sum_n (z_n - z_n^h) r^n| / (4 pi) for a flat panel, sigma = 1."""
    zh = flat_panel_sl_coefficients(h, q, p, r_P, 1)
    zr = flat_panel_sl_coefficients(h, q, p, r_P, k_ref)
    n = np.arange(p + 1)
    return float(abs(((zr - zh) * r ** n).sum()) / (4.0 * np.pi))


def _taylor_fft(f, z0, rad, nmax, m=256):
    t = np.exp(2j * np.pi * np.arange(m) / m)
    a = np.fft.fft(f(z0 + rad * t)) / m
    return (a[: nmax + 1] / rad ** np.arange(nmax + 1)).real


def disk_axis_potential(kind, z, R_bar):
    """Single or double layer of sigma = 1 on a flat disk, on its axis (z > 0).

    The normal is -z so that the center side is the exterior.
    """
    s = np.sqrt(z * z + R_bar * R_bar + 0j)
    if kind == "sl":
        return 0.5 * (s - z)
    if kind == "dl":
        return 0.5 * (1.0 - z / s)
    raise ValueError("kind must be 'sl' or 'dl'")


def cap_axis_potential(kind, t, theta0, a=1.0):
    """Layer potential of sigma = 1 on the cap theta <= theta0 of a sphere of
    radius ``a`` (outward normal), on the polar axis at distance t > a."""
    s = np.sqrt(a * a + t * t - 2 * a * t * np.cos(theta0) + 0j)
    S = a / (2 * t) * (s - (t - a))
    if kind == "sl":
        return S
    if kind == "dl":
        dS = (s - (t - a)) / (2 * t) + a / (2 * t) * ((a - t * np.cos(theta0)) / s + 1.0)
        return dS - 2.0 / a * S
    raise ValueError("kind must be 'sl' or 'dl'")


def measured_truncation_error(f, c, r, p, rho, nmax=60):
    """|u(x) - sum_{n<=p} a_n (-r)^n| for an axis function ``f`` analytic in
    the disk of radius ``rho`` about ``c``; target at c - r."""
    a = _taylor_fft(f, c, 0.7 * rho, nmax)
    n = np.arange(p + 1)
    exact = np.real(f(np.array([c - r], dtype=complex)))[0]
    return float(abs(exact - (a[: p + 1] * (-r) ** n).sum()))
