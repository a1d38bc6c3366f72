"""Bessel functions J0, J1, Y0, Y1 and the Hankel function H0^(1).

All functions are vectorized: they accept a float or an array and return the
same shape. Three evaluation regimes are used:

* ``x <= 4``: ascending power series (Y0/Y1 with the logarithmic part);
* ``4 < x < 25``: Miller backward recurrence normalized by
  ``J0 + 2 sum J_2k = 1``, with Y0/Y1 from Neumann series in the same J_n;
* ``x >= 25``: Hankel asymptotic expansion, 22 terms, in amplitude-phase
  form with the phase shift applied through ``sin x`` and ``cos x`` so that
  large arguments lose no accuracy to the subtraction ``x - pi/4``.
"""
import math

import numpy as np

from .errors import DomainError

__all__ = ["bessel_j0", "bessel_j1", "bessel_y0", "bessel_y1", "bessel_all", "hankel1_0"]

EULER_GAMMA = 0.57721566490153286061
SERIES_MAX = 4.0
ASYMPTOTIC_MIN = 25.0
_ASYMPTOTIC_TERMS = 22
_TWO_OVER_PI = 2.0 / math.pi


def _as_array(x, allow_zero):
    arr = np.asarray(x, dtype=float)
    if not np.all(np.isfinite(arr)):
        raise DomainError("Bessel argument must be finite")
    if allow_zero:
        if np.any(arr < 0):
            raise DomainError("Bessel argument must be >= 0")
    elif np.any(arr <= 0):
        raise DomainError("Y0, Y1 and H0 are singular at x <= 0")
    return arr


def _series(x):
    q = 0.25 * x * x
    h = 0.5 * x
    j0 = np.zeros_like(x)
    j1 = np.zeros_like(x)
    s0 = np.zeros_like(x)
    s1 = np.zeros_like(x)
    t0 = np.ones_like(x)
    t1 = h.copy()
    hk = 0.0
    # q <= 4 here; 30 terms leave a remainder far below 1e-20
    for k in range(30):
        hk1 = hk + 1.0 / (k + 1)
        j0 += t0
        j1 += t1
        s0 -= hk * t0
        s1 += (hk + hk1) * t1
        t0 = -t0 * q / ((k + 1) * (k + 1))
        t1 = -t1 * q / ((k + 1) * (k + 2))
        hk = hk1
    with np.errstate(divide="ignore"):
        log_half = np.log(h)
    y0 = _TWO_OVER_PI * ((log_half + EULER_GAMMA) * j0 + s0)
    with np.errstate(divide="ignore"):
        y1 = (_TWO_OVER_PI * log_half * j1 - _TWO_OVER_PI / x
              - (s1 - 2.0 * EULER_GAMMA * j1) / math.pi)
    return j0, j1, y0, y1


def _miller(x):
    xmax = float(x.max())
    n_start = 2 * (int(0.65 * xmax + 3.0 * xmax ** (1.0 / 3.0)) + 16)
    inv_x = 1.0 / x
    j_next = np.zeros_like(x)        # J_{n+1}
    j_cur = np.full_like(x, 1e-30)   # J_n, arbitrary scale
    norm = np.zeros_like(x)
    ysum = np.zeros_like(x)          # sum (-1)^k J_2k / k
    y1sum = np.zeros_like(x)         # sum (-1)^k (J_{2k-1} - J_{2k+1}) / k
    j_odd_above = np.zeros_like(x)   # J_{2k+1} seen one step earlier
    n = n_start
    j1 = None
    while n > 0:
        if n % 2 == 0:
            k = n // 2
            sign = -1.0 if k % 2 else 1.0
            norm += 2.0 * j_cur
            ysum += sign * j_cur / k
            j_odd_above = j_next
        j_prev = 2.0 * n * inv_x * j_cur - j_next
        j_next, j_cur = j_cur, j_prev
        n -= 1
        if n % 2 == 1:
            k = (n + 1) // 2
            sign = -1.0 if k % 2 else 1.0
            y1sum += sign * (j_cur - j_odd_above) / k
        if n == 1:
            j1 = j_cur
    j0 = j_cur
    norm += j0
    j0 = j0 / norm
    j1 = j1 / norm
    ysum = ysum / norm
    y1sum = y1sum / norm
    log_term = np.log(0.5 * x) + EULER_GAMMA
    y0 = _TWO_OVER_PI * (log_term * j0 - 2.0 * ysum)
    y1 = _TWO_OVER_PI * (log_term * j1 - j0 * inv_x + y1sum)
    return j0, j1, y0, y1


def _pq(nu, x):
    mu = 4.0 * nu * nu
    inv8x = 1.0 / (8.0 * x)
    p = np.ones_like(x)
    q = np.zeros_like(x)
    term = np.ones_like(x)
    for k in range(1, 2 * _ASYMPTOTIC_TERMS):
        term = term * (mu - (2 * k - 1) ** 2) * inv8x / k
        if k % 2:
            q += term if (k // 2) % 2 == 0 else -term
        else:
            p += term if (k // 2) % 2 == 0 else -term
    return p, q


def _asymptotic(x):
    amp = np.sqrt(_TWO_OVER_PI / x) * math.sqrt(0.5)
    s = np.sin(x)
    c = np.cos(x)
    p0, q0 = _pq(0, x)
    p1, q1 = _pq(1, x)
    # chi0 = x - pi/4: cos = (c + s)/sqrt2, sin = (s - c)/sqrt2
    j0 = amp * (p0 * (c + s) - q0 * (s - c))
    y0 = amp * (p0 * (s - c) + q0 * (c + s))
    # chi1 = x - 3pi/4: cos = (s - c)/sqrt2, sin = -(s + c)/sqrt2
    j1 = amp * (p1 * (s - c) + q1 * (s + c))
    y1 = amp * (-p1 * (s + c) + q1 * (s - c))
    return j0, j1, y0, y1


def _evaluate(arr):
    flat = arr.ravel()
    out = [np.empty_like(flat) for _ in range(4)]
    small = flat <= SERIES_MAX
    large = flat >= ASYMPTOTIC_MIN
    mid = ~(small | large)
    for mask, fn in ((small, _series), (mid, _miller), (large, _asymptotic)):
        if np.any(mask):
            for dst, val in zip(out, fn(flat[mask])):
                dst[mask] = val
    return [o.reshape(arr.shape) for o in out]


def _wrap(value, like):
    if np.ndim(like) == 0:
        return float(value)
    return value


def bessel_all(x):
    """Return ``(J0, J1, Y0, Y1)`` at ``x > 0`` in a single pass."""
    arr = _as_array(x, allow_zero=False)
    return tuple(_wrap(v, x) for v in _evaluate(arr))


def bessel_j0(x):
    arr = _as_array(x, allow_zero=True)
    pos = np.where(arr > 0, arr, 1.0)
    j0 = np.where(arr > 0, _evaluate(pos)[0], 1.0)
    return _wrap(j0, x)


def bessel_j1(x):
    arr = _as_array(x, allow_zero=True)
    pos = np.where(arr > 0, arr, 1.0)
    j1 = np.where(arr > 0, _evaluate(pos)[1], 0.0)
    return _wrap(j1, x)


def bessel_y0(x):
    arr = _as_array(x, allow_zero=False)
    return _wrap(_evaluate(arr)[2], x)


def bessel_y1(x):
    arr = _as_array(x, allow_zero=False)
    return _wrap(_evaluate(arr)[3], x)


def hankel1_0(x):
    """Hankel function of the first kind, order zero: ``J0(x) + i Y0(x)``."""
    arr = _as_array(x, allow_zero=False)
    j0, _, y0, _ = _evaluate(arr)
    h = j0 + 1j * y0
    if np.ndim(x) == 0:
        return complex(h)
    return h
