"""Legendre polynomials, spherical harmonics, Gauss-Legendre rules and
two binomial identities used by the truncation analysis."""
import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np


@dataclass(frozen=True)
class GaussRule:
    """Gauss-Legendre rule on [-1, 1]."""
    order: int
    nodes: np.ndarray
    weights: np.ndarray


@dataclass(frozen=True)
class LegendreEval:
    degree: int
    value: float
    derivative: float


def _check_unit_interval(x):
    x = np.asarray(x, dtype=float)
    if np.any(np.abs(x) > 1.0 + 1e-12):
        raise ValueError("Legendre argument outside [-1, 1]")
    return np.clip(x, -1.0, 1.0)


def legendre_table(p, x):
    """P_n(x) and P'_n(x) for n = 0..p.

    Parameters
    ----------
    p : int
        Highest degree.
    x : array_like
        Points in [-1, 1]; values within 1e-12 outside are clamped.

    Returns
    -------
    P, dP : ndarray, shape (p+1,) + x.shape
    """
    if p < 0:
        raise ValueError("p must be nonnegative")
    x = _check_unit_interval(x)
    P = np.empty((p + 1,) + x.shape)
    dP = np.empty_like(P)
    P[0] = 1.0
    dP[0] = 0.0
    if p >= 1:
        P[1] = x
        dP[1] = 1.0
    for n in range(1, p):
        P[n + 1] = ((2 * n + 1) * x * P[n] - n * P[n - 1]) / (n + 1)
        # P'_{n+1} = P'_{n-1} + (2n+1) P_n, valid at x = +-1 as well
        dP[n + 1] = dP[n - 1] + (2 * n + 1) * P[n]
    return P, dP


def legendre_all(p, x):
    """Legendre values and derivatives at a scalar x for degrees 0..p."""
    P, dP = legendre_table(p, float(x))
    return [LegendreEval(n, float(P[n]), float(dP[n])) for n in range(p + 1)]


def legendre_monomial(n, x):
    """P_n(x) from the explicit monomial sum (test oracle, moderate n)."""
    x = np.asarray(x, dtype=float)
    out = np.zeros_like(x)
    for j in range(n // 2 + 1):
        c = (-1) ** j * math.comb(n, j) * math.comb(2 * n - 2 * j, n)
        out = out + c * x ** (n - 2 * j)
    return out / 2.0 ** n


def assoc_legendre(n, m, x):
    """Associated Legendre P_n^m(x), m >= 0, without Condon-Shortley phase.

    Upward recurrence in degree at fixed order.
    """
    if m < 0 or m > n:
        raise ValueError("need 0 <= m <= n")
    x = _check_unit_interval(x)
    s = np.sqrt(np.maximum(0.0, 1.0 - x * x))
    pmm = np.ones_like(x)
    fact = 1.0
    for _ in range(m):
        pmm = pmm * fact * s
        fact += 2.0
    if n == m:
        return pmm
    pm1 = x * (2 * m + 1) * pmm
    if n == m + 1:
        return pm1
    for k in range(m + 2, n + 1):
        pk = (x * (2 * k - 1) * pm1 - (k + m - 1) * pmm) / (k - m)
        pmm, pm1 = pm1, pk
    return pm1


def sph_norm(n, m):
    m = abs(m)
    return math.sqrt((2 * n + 1) / (4 * math.pi)
                     * math.exp(math.lgamma(n - m + 1) - math.lgamma(n + m + 1)))


def spherical_harmonic(n, m, theta, phi):
    """Complex orthonormal spherical harmonic Y_n^m(theta, phi).

    Uses P_n^{|m|} without the Condon-Shortley phase, so that
    Y_n^{-m} = conj(Y_n^m).
    """
    if n < 0 or abs(m) > n:
        raise IndexError("spherical harmonic index out of range: n=%d m=%d" % (n, m))
    theta = np.asarray(theta, dtype=float)
    phi = np.asarray(phi, dtype=float)
    val = sph_norm(n, m) * assoc_legendre(n, abs(m), np.cos(theta)) * np.exp(1j * m * phi)
    if val.ndim == 0:
        return complex(val)
    return val


@lru_cache(maxsize=None)
def _gauss(q):
    # Newton iteration from Chebyshev-like initial guesses
    i = np.arange(1, q + 1)
    x = np.cos(np.pi * (4 * i - 1) / (4 * q + 2))
    for _ in range(100):
        P, dP = legendre_table(q, x)
        dx = P[q] / dP[q]
        x = x - dx
        if np.max(np.abs(dx)) < 1e-16:
            break
    P, dP = legendre_table(q, x)
    x = np.sort(x)
    # enforce exact symmetry
    x = 0.5 * (x - x[::-1])
    if q % 2 == 1:
        x[q // 2] = 0.0
    _, dP = legendre_table(q, x)
    w = 2.0 / ((1.0 - x * x) * dP[q] ** 2)
    w = 0.5 * (w + w[::-1])
    x.setflags(write=False)
    w.setflags(write=False)
    return x, w


def gauss_rule(q):
    """q-point Gauss-Legendre rule on [-1, 1] for 1 <= q <= 64."""
    if not (isinstance(q, (int, np.integer)) and 1 <= q <= 64):
        raise ValueError("unsupported Gauss order %r (need 1..64)" % (q,))
    x, w = _gauss(int(q))
    return GaussRule(int(q), x, w)


def _log_binom(n, k):
    return math.lgamma(n + 1) - math.lgamma(k + 1) - math.lgamma(n - k + 1)


def lemma_binom_terms(n, m):
    """Signed summands of the alternating binomial identity."""
    if n < 2 or not (1 <= m <= n // 2):
        raise ValueError("need n >= 2 and 1 <= m <= n//2")
    terms = []
    for j in range(n // 2 + 1):
        logt = _log_binom(n, j) + _log_binom(2 * n - 2 * j, n)
        for i in range(1, m + 1):
            logt -= math.log(2 * n - 2 * j - (2 * i - 1))
        terms.append((-1) ** j * math.exp(logt))
    return np.array(terms)


def lemma_binom_sum(n, m):
    """sum_j (-1)^j C(n,j) C(2n-2j,n) / prod_{i<=m} (2n-2j-2i+1); zero in exact arithmetic."""
    return math.fsum(lemma_binom_terms(n, m))


def legendre_coeff_bound_check(n):
    """True iff every monomial coefficient of P_n is bounded by (1+sqrt 2)^n."""
    if n < 0:
        raise ValueError("n must be nonnegative")
    bound = n * math.log(1.0 + math.sqrt(2.0))
    worst = max(_log_binom(n, k) + _log_binom(2 * n - 2 * k, n) - n * math.log(2.0)
                for k in range(n // 2 + 1))
    return worst <= bound + 1e-12
