"""Power-law sums over cubic shells of Z^d.

Sums of the form ``sum |x|^{-s}`` (optionally times ``cos(k.x)``) over
``R1 < ||x||_inf <= R2`` are rewritten with the Gamma-function identity

    |x|^{-s} = Gamma(s/2)^{-1} int_0^inf t^{s/2-1} exp(-t |x|^2) dt,

after which the lattice sum over a box factorises into a product of
one-dimensional theta sums.  This is what lets the step distribution
handle truncation radii far larger than anything that can be tabulated.
"""

from __future__ import annotations

import math

import numpy as np
from scipy import integrate
from scipy.special import bernoulli, factorial, gammaln, wofz

_TAIL_CUT = 80.0  # exp(-80) ~ 2e-35
_EM_MIN_TERMS = 4096  # longer tails switch from explicit sums to Euler-Maclaurin
_EM_HEAD = 64
_EM_COEF = bernoulli(80)[2::2] / factorial(np.arange(2, 81, 2))  # B_2j / (2j)!


def _gauss_integral(t: float, k: float, a: float) -> complex:
    """int_a^inf exp(-t x^2 + i k x) dx via the Faddeeva function."""
    sq = math.sqrt(t)
    return 0.5 * math.sqrt(math.pi / t) * complex(np.exp(complex(-t * a * a, a * k)) * wofz(complex(k / (2 * sq), sq * a)))


def _gauss_derivs(t: float, k: float, x: float, order: int) -> np.ndarray:
    """d^j/dx^j exp(-t x^2 + i k x) for j = 0..order."""
    g = np.exp(complex(-t * x * x, k * x))
    dphi = complex(-2.0 * t * x, k)
    q = np.empty(order + 1, dtype=np.complex128)
    q[0] = 1.0
    if order >= 1:
        q[1] = dphi
    for j in range(1, order):
        q[j + 1] = dphi * q[j] - 2.0 * t * j * q[j - 1]
    return g * q


def _em_sum(t: float, k: float, a: int, b: float) -> float:
    """sum_{m=a}^{b} exp(-t m^2) cos(k m) by Euler-Maclaurin (b may be inf)."""
    order = 2 * _EM_COEF.shape[0] - 1
    da = _gauss_derivs(t, k, a, order)
    total = _gauss_integral(t, k, a) + 0.5 * da[0]
    db = None
    if math.isfinite(b):
        db = _gauss_derivs(t, k, b, order)
        total += -_gauss_integral(t, k, b) + 0.5 * db[0]
    for j, c in enumerate(_EM_COEF):
        term = c * ((db[2 * j + 1] if db is not None else 0.0) - da[2 * j + 1])
        total += term
        if abs(term) < 1e-18 * abs(total):
            break
    return total.real


def _theta_tail(t: float, r1: int, r2: float, k: float = 0.0) -> float:
    """2 * sum_{m=r1+1}^{r2} exp(-t m^2) cos(k m), truncated where negligible."""
    m_max = r1 + 1 + int(math.sqrt(_TAIL_CUT / t)) + 1
    if math.isfinite(r2):
        m_max = min(m_max, int(r2))
    if m_max <= r1:
        return 0.0
    if m_max - r1 > _EM_MIN_TERMS:
        # smooth on the unit scale here: t < 80/4096^2 and |k| <= pi
        head = np.arange(r1 + 1, r1 + _EM_HEAD + 1, dtype=np.float64)
        h = np.exp(-t * head * head)
        if k != 0.0:
            h = h * np.cos(k * head)
        b = float(r2) if math.isfinite(r2) and r2 < r1 + 1 + math.sqrt(_TAIL_CUT / t) else math.inf
        return 2.0 * (float(h.sum()) + _em_sum(t, k, r1 + _EM_HEAD + 1, b))
    m = np.arange(r1 + 1, m_max + 1, dtype=np.float64)
    terms = np.exp(-t * m * m)
    if k != 0.0:
        terms = terms * np.cos(k * m)
    return 2.0 * float(terms.sum())


def _theta_box(t: float, r: int, k: float = 0.0) -> float:
    return 1.0 + _theta_tail(t, 0, r, k)


def _theta_full(t: float) -> float:
    """sum_{m in Z} exp(-t m^2), via Poisson summation for small t."""
    if t < 1.0:
        m = np.arange(1, 8, dtype=np.float64)
        return math.sqrt(math.pi / t) * (1.0 + 2.0 * float(np.exp(-(math.pi**2) * m * m / t).sum()))
    return _theta_box(t, int(math.sqrt(_TAIL_CUT / t)) + 2)


def _breakpoints(r1: int, r2: float, lo: float, hi: float) -> list[float]:
    top = r2 if math.isfinite(r2) else 1e8
    radii = np.geomspace(max(r1, 1), max(top, r1 + 1), 24)
    pts = sorted({float(-2.0 * math.log(r)) for r in radii})
    return [p for p in pts if lo < p < hi]


def _mellin(integrand, s: float, lo: float, hi: float, points) -> float:
    """Gamma(s/2)^{-1} * int_lo^hi exp(u s/2) integrand(exp(u)) du."""
    edges = [lo, *points, hi]
    total = 0.0
    for a, b in zip(edges[:-1], edges[1:]):
        val, _ = integrate.quad(
            lambda u: math.exp(u * s / 2.0) * integrand(math.exp(u)),
            a, b, epsabs=0.0, epsrel=1e-13, limit=400,
        )
        total += val
    return total * math.exp(-gammaln(s / 2.0))


def shell_power_sum(d: int, s: float, r1: int, r2: float) -> float:
    """``sum_{r1 < ||x||_inf <= r2} |x|^{-s}`` for ``x`` in Z^d.

    ``r2`` may be ``math.inf`` provided ``s > d``.
    """
    if r2 <= r1:
        return 0.0
    if not math.isfinite(r2) and s <= d:
        raise ValueError("infinite shell sum diverges for s <= d")

    def diff(t: float) -> float:
        a = _theta_full(t) if not math.isfinite(r2) else _theta_box(t, int(r2))
        b = _theta_box(t, r1)
        # a - b computed directly when it is small to avoid cancellation
        if t * (r1 + 1) ** 2 > 4.0 or math.isfinite(r2):
            delta = _theta_tail(t, r1, r2)
        else:
            delta = a - b
        acc = 0.0
        for j in range(d):
            acc += a**j * b ** (d - 1 - j)
        return delta * acc

    hi = math.log(_TAIL_CUT / (r1 + 1) ** 2) + 1.0
    if math.isfinite(r2):
        lo = -2.0 * math.log(r2 + 1) - 2.0 * (40.0 + d * math.log(2 * r2 + 1)) / s
        return _mellin(diff, s, lo, hi, _breakpoints(r1, r2, lo, hi))

    # below t0 the full theta sum is exactly sqrt(pi/t) and the inner box sum is flat
    t0 = 1e-8 / (r1 + 1) ** 2
    lo = math.log(t0)
    alpha = s - d
    head = math.pi ** (d / 2.0) * t0 ** (alpha / 2.0) / (alpha / 2.0)
    head -= (2 * r1 + 1) ** d * t0 ** (s / 2.0) / (s / 2.0)
    head *= math.exp(-gammaln(s / 2.0))
    return head + _mellin(diff, s, lo, hi, _breakpoints(r1, r2, lo, hi))


def shell_cos_sum(d: int, s: float, r1: int, r2: int, k) -> float:
    """``sum_{r1 < ||x||_inf <= r2} |x|^{-s} cos(k.x)`` for finite ``r2``."""
    k = np.asarray(k, dtype=np.float64)
    if r2 <= r1:
        return 0.0
    if not np.any(k):
        return shell_power_sum(d, s, r1, r2)

    def diff(t: float) -> float:
        a = [_theta_box(t, r2, float(kj)) for kj in k]
        b = [_theta_box(t, r1, float(kj)) for kj in k]
        # prod(a) - prod(b) as a telescoping sum of single-factor differences
        acc = 0.0
        for j in range(d):
            term = _theta_tail(t, r1, r2, float(k[j]))
            for i in range(j):
                term *= a[i]
            for i in range(j + 1, d):
                term *= b[i]
            acc += term
        return acc

    hi = math.log(_TAIL_CUT / (r1 + 1) ** 2) + 1.0
    lo = -2.0 * math.log(r2 + 1) - 2.0 * (40.0 + d * math.log(2 * r2 + 1)) / s
    return _mellin(diff, s, lo, hi, _breakpoints(r1, r2, lo, hi))
