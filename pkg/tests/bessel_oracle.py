"""Slow high-precision reference values for J0, J1, Y0, Y1.

Evaluates the ascending power series in ``decimal`` arithmetic with enough
working digits that cancellation at x = 100 (terms near 1e42) still leaves
more than 30 correct digits. Shares no code with ``helios.special_fn``.
"""
from decimal import Decimal, localcontext
import math

PREC = 110

# Euler-Mascheroni constant, 70 digits
_GAMMA = "0.5772156649015328606065120900824024310421593359399235988057672348848677"


def _pi():
    # Machin's formula
    def arctan_inv(n):
        x = Decimal(1) / n
        x2 = x * x
        total, term, k = x, x, 1
        eps = Decimal(10) ** (-(PREC + 5))
        while abs(term) > eps:
            term *= -x2
            total += term / (2 * k + 1)
            k += 1
        return total

    return 16 * arctan_inv(5) - 4 * arctan_inv(239)


def bessel_all(x):
    """Return ``(j0, j1, y0, y1)`` as floats for a positive float ``x``."""
    if not math.isfinite(x) or x <= 0:
        raise ValueError("oracle requires x > 0")
    with localcontext() as ctx:
        ctx.prec = PREC
        X = Decimal(x)
        pi = _pi()
        gamma = Decimal(_GAMMA)
        h = X / 2
        q = h * h
        eps = Decimal(10) ** (-(PREC - 10))

        # term_k = (-q)^k / (k!)^2 for J0 ; J1 uses (x/2)(-q)^k/(k!(k+1)!)
        j0 = Decimal(0)
        j1 = Decimal(0)
        s0 = Decimal(0)  # sum_{k>=1} (-1)^{k+1} H_k q^k/(k!)^2
        s1 = Decimal(0)  # sum_{k>=0} (-1)^k (H_k + H_{k+1}) h^{2k+1}/(k!(k+1)!)
        t0 = Decimal(1)
        t1 = h
        hk = Decimal(0)
        k = 0
        while True:
            hk1 = hk + Decimal(1) / (k + 1)
            j0 += t0
            j1 += t1
            s0 -= hk * t0
            s1 += (hk + hk1) * t1
            if k > 2 * float(h) and abs(t0) < eps and abs(t1) < eps:
                break
            k += 1
            t0 = -t0 * q / (k * k)
            t1 = -t1 * q / (k * (k + 1))
            hk = hk1

        lg = (X / 2).ln() + gamma
        y0 = 2 / pi * (lg * j0 + s0)
        y1 = 2 / pi * ((X / 2).ln() * j1) - 2 / (pi * X) - (s1 - 2 * gamma * j1) / pi
        return float(j0), float(j1), float(y0), float(y1)
