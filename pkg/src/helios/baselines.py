"""Classical trace densification: piecewise linear, piecewise quadratic and
global polynomial interpolation in the angle, applied to the real and
imaginary parts independently. Queries outside the node span are rejected.
"""
import enum

import numpy as np

from .errors import DomainError, InvalidInputError
from .forward import Trace


class InterpolantKind(enum.Enum):
    PIECEWISE_LINEAR = "pl"
    PIECEWISE_QUADRATIC = "pq"
    GLOBAL_POLYNOMIAL = "poly"

    @classmethod
    def parse(cls, value):
        if isinstance(value, cls):
            return value
        try:
            return cls(str(value).lower())
        except ValueError:
            raise InvalidInputError(f"unknown interpolant {value!r}; use pl, pq or poly") from None

    @property
    def min_nodes(self):
        return 2 if self is InterpolantKind.PIECEWISE_LINEAR else 3


def _prepare(kind, nodes: Trace, phi):
    kind = InterpolantKind.parse(kind)
    if not isinstance(nodes, Trace):
        nodes = Trace.from_samples(nodes)
    if len(nodes) < kind.min_nodes:
        raise InvalidInputError(f"{kind.name.lower()} needs at least {kind.min_nodes} nodes")
    t = nodes.angles
    if np.any(np.diff(t) <= 0):
        raise InvalidInputError("node angles must be strictly increasing")
    phi = np.asarray(phi, dtype=float)
    if np.any(phi < t[0]) or np.any(phi > t[-1]):
        raise DomainError("query angle outside the node span (no extrapolation)")
    return kind, t, nodes.values, phi


def _segment(t, phi):
    return np.clip(np.searchsorted(t, phi, side="right") - 1, 0, len(t) - 2)


def _linear(t, v, phi):
    j = _segment(t, phi)
    w = (phi - t[j]) / (t[j + 1] - t[j])
    re = (1 - w) * v.real[j] + w * v.real[j + 1]
    im = (1 - w) * v.imag[j] + w * v.imag[j + 1]
    return re + 1j * im


def _quadratic(t, v, phi):
    # segment [t_j, t_j+1] uses nodes j-1, j, j+1; j+2 replaces j-1 on the first segment
    j = _segment(t, phi)
    start = np.where(j == 0, 0, j - 1)
    idx = start[..., None] + np.arange(3)
    tt = t[idx]
    out = np.zeros(phi.shape, dtype=complex)
    for a in range(3):
        basis = np.ones(phi.shape)
        for b in range(3):
            if a != b:
                basis = basis * (phi - tt[..., b]) / (tt[..., a] - tt[..., b])
        out = out + basis * v.real[idx[..., a]] + 1j * (basis * v.imag[idx[..., a]])
    return out


def barycentric_weights(t):
    t = np.asarray(t, dtype=float)
    diff = t[:, None] - t[None, :]
    np.fill_diagonal(diff, 1.0)
    # scale by the mean gap to keep the product in range for large M
    scale = (t[-1] - t[0]) / (len(t) - 1) if len(t) > 1 else 1.0
    return 1.0 / np.prod(diff / scale, axis=1)


def _polynomial(t, v, phi):
    w = barycentric_weights(t)
    flat = phi.ravel()
    d = flat[:, None] - t[None, :]
    exact = d == 0
    d[exact] = 1.0
    c = w / d
    den = c.sum(axis=1)
    re = (c @ v.real) / den
    im = (c @ v.imag) / den
    out = re + 1j * im
    hit_row, hit_col = np.nonzero(exact)
    out[hit_row] = v[hit_col]
    return out.reshape(phi.shape)


_EVAL = {
    InterpolantKind.PIECEWISE_LINEAR: _linear,
    InterpolantKind.PIECEWISE_QUADRATIC: _quadratic,
    InterpolantKind.GLOBAL_POLYNOMIAL: _polynomial,
}


def interpolate(kind, nodes, phi):
    """Interpolated complex value(s) at angle(s) ``phi``."""
    kind, t, v, phi_arr = _prepare(kind, nodes, phi)
    out = _EVAL[kind](t, v, np.atleast_1d(phi_arr))
    return complex(out[0]) if phi_arr.ndim == 0 else out.reshape(phi_arr.shape)


def dense_trace(kind, nodes, query_angles) -> Trace:
    q = np.asarray(query_angles, dtype=float).ravel()
    return Trace(q, interpolate(kind, nodes, q))


def total_variation(values) -> float:
    """Sum of |increments| of the real and imaginary parts."""
    v = np.asarray(values, dtype=complex)
    return float(np.abs(np.diff(v.real)).sum() + np.abs(np.diff(v.imag)).sum())
