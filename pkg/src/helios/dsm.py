"""Direct Sampling Method for point sources from partial-aperture traces.

The indicator at a sampling point ``z`` is::

    I(z) = | sum_k <u_k, Phi_k(., z)> | / sum_k ||u_k|| ||Phi_k(., z)||

with discrete inner products over the trace samples. Equal quadrature weights
are used; for equi-angular samples the arc-length weight cancels in the ratio.
"""
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
import functools
import io
import itertools
import math
from typing import Mapping

import numpy as np

from .errors import DomainError, InvalidInputError
from .forward import Aperture, Trace, fundamental_solution

DENOMINATOR_FLOOR = 1e-300
PEAK_SEPARATION_CELLS = 5
_CHUNK = 2048


@dataclass(frozen=True)
class SamplingGrid:
    x_min: float = -2.0
    x_max: float = 2.0
    y_min: float = -2.0
    y_max: float = 2.0
    spacing: float = 0.04

    def __post_init__(self):
        if not self.spacing > 0:
            raise InvalidInputError("grid spacing must be positive")
        if self.x_max < self.x_min or self.y_max < self.y_min:
            raise InvalidInputError("grid bounds are inverted")

    def _axis(self, lo, hi):
        n = int(math.floor((hi - lo) / self.spacing + 1e-9)) + 1
        return np.round(lo + np.arange(n) * self.spacing, 12)

    @property
    def xs(self) -> np.ndarray:
        return self._axis(self.x_min, self.x_max)

    @property
    def ys(self) -> np.ndarray:
        return self._axis(self.y_min, self.y_max)

    @property
    def shape(self):
        return len(self.xs), len(self.ys)

    def nodes(self) -> np.ndarray:
        """All nodes as an ``(nx * ny, 2)`` array, x index varying slowest."""
        gx, gy = np.meshgrid(self.xs, self.ys, indexing="ij")
        return np.stack([gx.ravel(), gy.ravel()], axis=-1)


@dataclass(frozen=True)
class IndicatorField:
    grid: SamplingGrid
    values: np.ndarray  # shape (nx, ny), values[i, j] at (xs[i], ys[j])

    def argmax(self) -> np.ndarray:
        i, j = np.unravel_index(np.argmax(self.values), self.values.shape)
        return np.array([self.grid.xs[i], self.grid.ys[j]])

    def to_csv(self, path_or_buf=None):
        """Write ``x,y,value`` rows (x slowest, 17 significant digits)."""
        nodes = self.grid.nodes()
        buf = io.StringIO()
        buf.write("x,y,value\n")
        for (x, y), v in zip(nodes, self.values.ravel()):
            buf.write(f"{x:.17g},{y:.17g},{v:.17g}\n")
        text = buf.getvalue()
        if path_or_buf is None:
            return text
        if hasattr(path_or_buf, "write"):
            path_or_buf.write(text)
        else:
            with open(path_or_buf, "w") as fh:
                fh.write(text)
        return None


def _validate(traces_per_k: Mapping[float, Trace]):
    if not traces_per_k:
        raise InvalidInputError("at least one wavenumber is required")
    for k, tr in traces_per_k.items():
        if not k > 0:
            raise InvalidInputError("wavenumbers must be positive")
        if len(tr) == 0:
            raise InvalidInputError(f"empty trace for k={k}")


@functools.lru_cache(maxsize=96)
def _kernel(k, radius, angles_bytes, points_bytes):
    angles = np.frombuffer(angles_bytes)
    points = np.frombuffer(points_bytes).reshape(-1, 2)
    sensors = radius * np.stack([np.cos(angles), np.sin(angles)], axis=-1)
    phi = fundamental_solution(points[:, None, :], sensors[None, :, :], k)
    conj = np.conj(phi)
    conj.flags.writeable = False
    norms = np.linalg.norm(phi, axis=1)
    norms.flags.writeable = False
    return conj, norms


def _indicator(traces_per_k, ap: Aperture, points):
    num = np.zeros(len(points), dtype=complex)
    den = np.zeros(len(points))
    points = np.ascontiguousarray(points, dtype=float)
    for k in sorted(traces_per_k):
        tr = traces_per_k[k]
        conj_phi, phi_norm = _kernel(float(k), float(ap.radius), tr.angles.tobytes(), points.tobytes())
        num += conj_phi @ tr.values
        den += np.linalg.norm(tr.values) * phi_norm
    out = np.zeros(len(points))
    ok = den >= DENOMINATOR_FLOOR
    out[ok] = np.abs(num[ok]) / den[ok]
    # rounding can push a Cauchy-Schwarz equality a few ulp above 1
    return np.minimum(out, 1.0)


def _check_inside(ap, points):
    if np.any(np.hypot(points[:, 0], points[:, 1]) >= ap.radius):
        raise DomainError("sampling point on or outside the measurement circle")


def indicator_at(traces_per_k: Mapping[float, Trace], ap: Aperture, z_p) -> float:
    _validate(traces_per_k)
    pts = np.asarray(z_p, dtype=float).reshape(1, 2)
    _check_inside(ap, pts)
    return float(_indicator(traces_per_k, ap, pts)[0])


def indicator_field(traces_per_k: Mapping[float, Trace], ap: Aperture,
                    grid: SamplingGrid = SamplingGrid(), threads=1) -> IndicatorField:
    """Indicator over every node of ``grid``; ``threads`` splits node chunks."""
    _validate(traces_per_k)
    nodes = grid.nodes()
    _check_inside(ap, nodes)
    chunks = [nodes[i:i + _CHUNK] for i in range(0, len(nodes), _CHUNK)]
    if threads and threads > 1:
        with ThreadPoolExecutor(threads) as pool:
            parts = list(pool.map(lambda c: _indicator(traces_per_k, ap, c), chunks))
    else:
        parts = [_indicator(traces_per_k, ap, c) for c in chunks]
    return IndicatorField(grid, np.concatenate(parts).reshape(grid.shape))


def find_peaks(field: IndicatorField, n_peaks: int) -> np.ndarray:
    """Up to ``n_peaks`` strict 8-neighbour local maxima, strongest first.

    Edge nodes compete only with neighbours that exist. Equal values are
    ordered by ascending (x, y). A peak closer than ``PEAK_SEPARATION_CELLS``
    grid cells to an already accepted, stronger peak is dropped.
    """
    if n_peaks < 1:
        raise InvalidInputError("n_peaks must be >= 1")
    v = np.asarray(field.values, dtype=float)
    if v.ndim != 2 or v.shape[0] < 3 or v.shape[1] < 3:
        raise InvalidInputError("peak search needs at least a 3x3 field")
    padded = np.pad(v, 1, constant_values=-np.inf)
    nx, ny = v.shape
    strict = np.ones_like(v, dtype=bool)
    for di, dj in itertools.product((-1, 0, 1), repeat=2):
        if di == dj == 0:
            continue
        strict &= v > padded[1 + di:1 + di + nx, 1 + dj:1 + dj + ny]
    ii, jj = np.nonzero(strict)
    xs, ys = field.grid.xs, field.grid.ys
    order = sorted(range(len(ii)), key=lambda n: (-v[ii[n], jj[n]], xs[ii[n]], ys[jj[n]]))
    accepted = []
    for n in order:
        cell = (ii[n], jj[n])
        if all(math.hypot(cell[0] - a[0], cell[1] - a[1]) >= PEAK_SEPARATION_CELLS for a in accepted):
            accepted.append(cell)
        if len(accepted) == n_peaks:
            break
    return np.array([[xs[i], ys[j]] for i, j in accepted], dtype=float).reshape(-1, 2)


def mae(predicted, truth) -> float:
    """Mean Euclidean error under the best one-to-one pairing."""
    p = np.asarray(predicted, dtype=float).reshape(-1, 2)
    t = np.asarray(truth, dtype=float).reshape(-1, 2)
    if len(p) != len(t) or len(t) == 0:
        raise InvalidInputError("mae needs two non-empty point sets of equal length")
    dist = np.hypot(p[:, None, 0] - t[None, :, 0], p[:, None, 1] - t[None, :, 1])
    n = len(t)
    if n <= 6:
        cols = np.arange(n)
        best = min(dist[list(perm), cols].sum() for perm in itertools.permutations(range(n)))
        return float(best / n)
    from scipy.optimize import linear_sum_assignment
    r, c = linear_sum_assignment(dist)
    return float(dist[r, c].sum() / n)


def localization_error(predicted, truth):
    """MAE tolerant of missing peaks; returns ``(error, complete)``.

    With fewer predictions than sources, the predictions are paired optimally
    with a subset of the sources and each remaining source is charged the
    distance to its nearest prediction. With no prediction at all the error
    is ``inf``.
    """
    p = np.asarray(predicted, dtype=float).reshape(-1, 2)
    t = np.asarray(truth, dtype=float).reshape(-1, 2)
    if len(p) == len(t):
        return mae(p, t), True
    if len(p) == 0:
        return math.inf, False
    if len(p) > len(t):
        raise InvalidInputError("more predictions than sources")
    dist = np.hypot(p[:, None, 0] - t[None, :, 0], p[:, None, 1] - t[None, :, 1])
    best = math.inf
    for subset in itertools.permutations(range(len(t)), len(p)):
        matched = dist[np.arange(len(p)), list(subset)].sum()
        rest = [j for j in range(len(t)) if j not in subset]
        total = matched + sum(dist[:, j].min() for j in rest)
        best = min(best, total)
    return float(best / len(t)), False
