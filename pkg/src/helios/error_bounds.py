"""Single-source DSM localization error estimates.

For one source of strength ``lambda`` seen from sensors at least ``xi`` away,
the normalized indicator along the ray from the source behaves like
``g(y) = (lambda/k) |J0(ky)| / |H0(ky + k xi)|``. Its derivative ``g'`` is
positive at ``y = 0`` and negative at ``y = 1/(15k)`` whenever ``k xi >= 15``,
so the indicator peak sits within ``1/(15k)`` of the source (a priori), and
the first root of ``g'`` gives a sharper a posteriori radius.
"""
from dataclasses import dataclass
import math
import warnings

import numpy as np

from .errors import ContractViolation, DomainError, InvalidInputError, NumericError
from .special_fn import bessel_all, bessel_j0, bessel_j1

THRESHOLD = 15.0
_EDGE = 1e-12
_MAX_BISECTIONS = 200


@dataclass(frozen=True)
class SingleSourceSetup:
    k: float
    xi: float
    theta_dist: float
    lam: float = 1.0

    def __post_init__(self):
        for name in ("k", "xi", "theta_dist", "lam"):
            if not getattr(self, name) > 0:
                raise InvalidInputError(f"{name} must be positive")
        if self.xi < self.theta_dist:
            raise InvalidInputError("xi is an infimum over a subset, so xi >= theta_dist")

    @property
    def prior_applicable(self):
        return self.k * self.theta_dist >= THRESHOLD

    @property
    def posterior_applicable(self):
        return self.k * self.xi >= THRESHOLD


def hankel_modulus(t):
    j0, _, y0, _ = bessel_all(t)
    return np.hypot(j0, y0)


def g_cross(t):
    """``J0 J1 + Y0 Y1`` at ``t``; equals ``-K K'`` with ``K = |H0|``."""
    j0, j1, y0, y1 = bessel_all(t)
    return j0 * j1 + y0 * y1


def g_prime(y, setup: SingleSourceSetup):
    """Three-term derivative of ``g`` at distance ``y`` from the source."""
    return g_prime_values(y, setup.k, setup.xi, setup.lam)


def g_prime_values(y, k, xi, lam=1.0):
    """``g_prime`` with ``y``, ``k``, ``xi`` and ``lam`` broadcast against each other."""
    y, k, xi, lam = np.broadcast_arrays(*(np.asarray(v, dtype=float) for v in (y, k, xi, lam)))
    t = k * y + k * xi
    if np.any(t <= 0):
        raise InvalidInputError("k*y + k*xi must be positive")
    if np.any(y < 0):
        raise DomainError("g' is defined for y >= 0")
    j0t, j1t, y0t, y1t = (np.asarray(v) for v in bessel_all(t))
    ky = k * y
    j0y = np.ones_like(ky)
    j1y = np.zeros_like(ky)
    pos = ky > 0
    if np.any(pos):
        j0p, j1p, _, _ = bessel_all(ky[pos])
        j0y[pos], j1y[pos] = j0p, j1p
    sgn = np.sign(j0y)
    mod = np.hypot(j0t, y0t)
    out = (-lam * j1y * sgn / mod
           + lam * sgn * j0y / mod ** 3 * j0t * j1t
           + lam * sgn * j0y / mod ** 3 * y0t * y1t)
    if not np.all(np.isfinite(out)):
        raise NumericError("non-finite value in g'")
    return float(out) if out.ndim == 0 else out


def prior_edge_slope(z, lam=1.0):
    """``A(z) = g'(1/(15k))`` written in terms of ``z = k xi``."""
    z = np.asarray(z, dtype=float)
    if np.any(z < THRESHOLD):
        warnings.warn("A(z) is only used for z >= 15", RuntimeWarning, stacklevel=2)
    s = 1.0 / THRESHOLD
    t = z + s
    mod = hankel_modulus(t)
    out = -lam * bessel_j1(s) / mod + lam * bessel_j0(s) * g_cross(t) / mod ** 3
    return float(out) if np.ndim(out) == 0 else out


def prior_bound(k, theta_dist=None):
    """A priori radius ``1/(15k)``.

    With ``theta_dist`` given, raises ``ContractViolation`` when
    ``k * theta_dist < 15``.
    """
    if not k > 0:
        raise InvalidInputError("k must be positive")
    if theta_dist is not None and k * theta_dist < THRESHOLD:
        raise ContractViolation(f"k*Theta = {k * theta_dist:.4g} < 15; the a priori bound does not apply")
    return 1.0 / (THRESHOLD * k)


def posterior_root(setup: SingleSourceSetup, tol=1e-7):
    """Bisection root of ``g'`` on ``(0, 1/(15k))``."""
    if not tol > 0:
        raise InvalidInputError("tol must be positive")
    lo = _EDGE
    hi = prior_bound(setup.k) - _EDGE
    f_lo = g_prime(lo, setup)
    f_hi = g_prime(hi, setup)
    if not (f_lo > 0 > f_hi):
        raise ContractViolation(
            f"g' has no sign change on (0, 1/(15k)) (k*xi = {setup.k * setup.xi:.4g}); "
            "the posterior estimate needs k*xi >= 15")
    for _ in range(_MAX_BISECTIONS):
        if hi - lo <= tol:
            break
        mid = 0.5 * (lo + hi)
        if g_prime(mid, setup) > 0:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def aperture_distances(radius, half_angle, source, domain=(-2.0, 2.0, -2.0, 2.0)):
    """``(Theta, xi)``: arc-to-domain distance and arc-to-source distance.

    Both are distances from the arc ``{R(cos t, sin t): |t| <= half_angle}``;
    Theta takes the worst point of the rectangular domain.
    """
    x0, x1, y0, y1 = domain
    corners = np.array([(x0, y0), (x0, y1), (x1, y0), (x1, y1)])
    theta = radius - np.hypot(corners[:, 0], corners[:, 1]).max()
    t = np.linspace(-half_angle, half_angle, 20001)
    arc = radius * np.stack([np.cos(t), np.sin(t)], axis=-1)
    xi = np.hypot(arc[:, 0] - source[0], arc[:, 1] - source[1]).min()
    return float(theta), float(xi)


def bound_report(k, xi, theta_dist, lam=1.0, tol=1e-7):
    """Flat dict of the quantities printed by the ``bounds`` command."""
    setup = SingleSourceSetup(k, xi, theta_dist, lam)
    report = {
        "k": k,
        "Theta": theta_dist,
        "xi": xi,
        "k*Theta": k * theta_dist,
        "k*Theta >= 15": setup.prior_applicable,
        "prior_bound": prior_bound(k),
    }
    try:
        report["posterior_root"] = posterior_root(setup, tol)
    except ContractViolation:
        report["posterior_root"] = math.nan
    return report
