"""Bessel functions of the first kind and their positive zeros.

Values are produced by Miller's downward recurrence normalized with the
identity ``J_0(x) + 2 * sum_k J_{2k}(x) = 1``; for small arguments the
ascending power series is used instead, where the recurrence loses its
normalization accuracy.
"""

from __future__ import annotations

import math

import numpy as np
from scipy.optimize import brentq

_SERIES_SWITCH = 2.0
_SERIES_TERMS = 40
_RESCALE_ABOVE = 1e200


def _series(nmax: int, x: np.ndarray) -> np.ndarray:
    half = 0.5 * x[:, None]
    orders = np.arange(nmax + 1)
    # (x/2)^n / n!, built without overflow for the small x handled here.
    lead = np.exp(orders * np.log(np.where(half > 0, half, 1.0)) - _lgamma1(orders))
    lead = np.where(half > 0, lead, (orders == 0).astype(float))
    term = lead.copy()
    total = lead.copy()
    q = -(half**2)
    for k in range(_SERIES_TERMS):
        term = term * q / ((k + 1) * (orders + k + 1))
        total += term
    return total


def _lgamma1(orders: np.ndarray) -> np.ndarray:
    return np.array([math.lgamma(n + 1.0) for n in orders])


def _miller(nmax: int, x: np.ndarray) -> np.ndarray:
    top = max(nmax, float(x.max()))
    start = int(top + 30 + 12 * math.sqrt(top))
    start += start % 2
    vals = np.zeros((x.size, nmax + 1))
    j_next = np.zeros_like(x)
    j_cur = np.full_like(x, 1e-30)
    norm = np.zeros_like(x)
    for k in range(start, 0, -1):
        j_prev = (2.0 * k / x) * j_cur - j_next
        j_next, j_cur = j_cur, j_prev
        # j_cur now holds J_{k-1}
        order = k - 1
        if order <= nmax:
            vals[:, order] = j_cur
        if order > 0 and order % 2 == 0:
            norm += 2.0 * j_cur
        big = np.abs(j_cur) > _RESCALE_ABOVE
        if big.any():
            scale = np.where(big, 1.0 / _RESCALE_ABOVE, 1.0)
            j_cur = j_cur * scale
            j_next = j_next * scale
            norm = norm * scale
            vals *= scale[:, None]
    norm += j_cur
    return vals / norm[:, None]


def bessel_j_orders(nmax: int, x) -> np.ndarray:
    """Return ``J_0(x) ... J_nmax(x)`` along the last axis.

    ``x`` may be a scalar or an array; the result has shape
    ``np.shape(x) + (nmax + 1,)``.
    """
    if nmax < 0:
        raise ValueError("nmax must be non-negative")
    xa = np.asarray(x, dtype=float)
    flat = np.abs(xa.ravel())
    out = np.empty((flat.size, nmax + 1))
    small = flat < _SERIES_SWITCH
    if small.any():
        out[small] = _series(nmax, flat[small])
    if (~small).any():
        out[~small] = _miller(nmax, flat[~small])
    # J_n(-x) = (-1)^n J_n(x)
    neg = xa.ravel() < 0
    if neg.any():
        out[neg] *= (-1.0) ** np.arange(nmax + 1)
    return out.reshape(xa.shape + (nmax + 1,))


def bessel_j(order: int, x):
    """Bessel function of the first kind ``J_order(x)`` for integer order >= 0."""
    if order < 0:
        raise ValueError("order must be non-negative")
    vals = bessel_j_orders(order, x)[..., order]
    return float(vals) if np.ndim(vals) == 0 else vals


def bessel_zeros(order: int, count: int, xtol: float = 1e-14) -> np.ndarray:
    """First ``count`` positive zeros of ``J_order``, ascending.

    Sign changes are bracketed on a coarse scan (zeros are spaced by
    roughly pi) and each bracket is polished with Brent's method.
    """
    if count < 1:
        raise ValueError("count must be >= 1")
    roots: list[float] = []
    step = 0.25
    lo = max(step, float(order))
    f_lo = bessel_j(order, lo)
    while len(roots) < count:
        hi = lo + step
        f_hi = bessel_j(order, hi)
        if f_lo == 0.0:
            roots.append(lo)
        elif f_lo * f_hi < 0:
            roots.append(brentq(lambda z: bessel_j(order, z), lo, hi, xtol=xtol, rtol=1e-15))
        lo, f_lo = hi, f_hi
    return np.array(roots[:count])
