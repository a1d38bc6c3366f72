"""Point-source Helmholtz forward model on a partial circular aperture.

The field radiated by sources ``lambda_j delta(x - z_j)`` is taken as
``u(x) = -sum_j lambda_j Phi_k(x, z_j)`` with ``Phi_k(x, y) = (i/4) H0(k|x-y|)``,
the sign that makes ``(Delta + k^2) Phi = -delta``. DSM indicators only see
``|u|``-normalized correlations, so the sign never affects localization.
"""
from dataclasses import dataclass
import math
from typing import Iterator, NamedTuple, Sequence

import numpy as np

from . import rng
from .errors import GeometryError, InvalidInputError, SingularityError
from .special_fn import bessel_all

DOMAIN = (-2.0, 2.0, -2.0, 2.0)
MIN_SEPARATION = 0.3
BOUNDARY_MARGIN = 0.05


@dataclass(frozen=True)
class PointSource:
    position: tuple
    amplitude: float

    def __post_init__(self):
        object.__setattr__(self, "position", (float(self.position[0]), float(self.position[1])))
        if not self.amplitude > 0:
            raise InvalidInputError(f"source amplitude must be positive, got {self.amplitude}")


@dataclass(frozen=True)
class SourceConfig:
    sources: tuple = ()

    def __post_init__(self):
        object.__setattr__(self, "sources", tuple(self.sources))

    @classmethod
    def from_arrays(cls, positions, amplitudes):
        return cls(tuple(PointSource(tuple(p), float(a)) for p, a in zip(positions, amplitudes)))

    @property
    def positions(self) -> np.ndarray:
        return np.array([s.position for s in self.sources], dtype=float).reshape(-1, 2)

    @property
    def amplitudes(self) -> np.ndarray:
        return np.array([s.amplitude for s in self.sources], dtype=float)

    def scaled(self, factor):
        return SourceConfig(tuple(PointSource(s.position, s.amplitude * factor) for s in self.sources))

    def __len__(self):
        return len(self.sources)


@dataclass(frozen=True)
class Aperture:
    """Equi-angular sensor arc ``{R(cos t, sin t) : |t| <= half_angle}``."""

    radius: float
    half_angle: float
    sensor_count: int

    def __post_init__(self):
        if not self.radius > 0:
            raise InvalidInputError("aperture radius must be positive")
        if not 0 < self.half_angle <= math.pi:
            raise InvalidInputError("half_angle must lie in (0, pi]")
        if int(self.sensor_count) < 2:
            raise InvalidInputError("an aperture needs at least 2 sensors")
        object.__setattr__(self, "sensor_count", int(self.sensor_count))

    def with_sensors(self, count):
        return Aperture(self.radius, self.half_angle, count)

    def encloses_domain(self, domain=DOMAIN):
        x0, x1, y0, y1 = domain
        return self.radius > math.hypot(max(abs(x0), abs(x1)), max(abs(y0), abs(y1)))

    def points(self, angles) -> np.ndarray:
        angles = np.asarray(angles, dtype=float)
        return self.radius * np.stack([np.cos(angles), np.sin(angles)], axis=-1)


class TraceSample(NamedTuple):
    angle: float
    value: complex


@dataclass(frozen=True)
class Trace:
    """Field samples on the aperture arc, stored as parallel arrays."""

    angles: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        a = np.asarray(self.angles, dtype=float)
        v = np.asarray(self.values, dtype=complex)
        if a.ndim != 1 or a.shape != v.shape:
            raise InvalidInputError("trace angles and values must be 1-D and equally long")
        object.__setattr__(self, "angles", a)
        object.__setattr__(self, "values", v)

    @classmethod
    def from_samples(cls, samples: Sequence[TraceSample]):
        return cls(np.array([s.angle for s in samples], dtype=float),
                   np.array([s.value for s in samples], dtype=complex))

    def __len__(self):
        return len(self.angles)

    def __iter__(self) -> Iterator[TraceSample]:
        for a, v in zip(self.angles, self.values):
            yield TraceSample(float(a), complex(v))

    def __getitem__(self, i):
        return TraceSample(float(self.angles[i]), complex(self.values[i]))


@dataclass(frozen=True)
class NoiseModel:
    sigma: float = 0.0
    seed: int = rng.CANONICAL_SEED

    def __post_init__(self):
        if self.sigma < 0:
            raise InvalidInputError("noise sigma must be >= 0")


def fundamental_solution(x, y, k):
    """``(i/4) H0^(1)(k |x - y|)`` for broadcastable arrays of 2-D points."""
    if not k > 0:
        raise InvalidInputError("wavenumber must be positive")
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    r = np.hypot(x[..., 0] - y[..., 0], x[..., 1] - y[..., 1])
    if np.any(r == 0):
        raise SingularityError("fundamental solution evaluated at its source point")
    j0, _, y0, _ = bessel_all(k * r)
    out = -0.25 * np.asarray(y0) + 0.25j * np.asarray(j0)
    if out.ndim == 0:
        return complex(out)
    return out


def field_at(config: SourceConfig, x, k):
    """Field ``-sum lambda_j Phi_k(x, z_j)`` at one point or an array of points."""
    x = np.asarray(x, dtype=float)
    if len(config) == 0:
        zero = np.zeros(x.shape[:-1], dtype=complex)
        return complex(zero) if zero.ndim == 0 else zero
    z = config.positions
    phi = fundamental_solution(x[..., None, :], z, k)
    out = -(np.asarray(phi) @ config.amplitudes)
    if out.ndim == 0:
        return complex(out)
    return out


def sensor_angles(ap: Aperture) -> np.ndarray:
    m = np.arange(ap.sensor_count)
    angles = -ap.half_angle + m * (2.0 * ap.half_angle / (ap.sensor_count - 1))
    angles[-1] = ap.half_angle
    return angles


def check_inside(config: SourceConfig, ap: Aperture):
    if len(config) and np.any(np.hypot(*config.positions.T) >= ap.radius):
        raise GeometryError("a source lies on or outside the measurement circle")


def sample_trace(config: SourceConfig, ap: Aperture, angles, k, noise: NoiseModel = NoiseModel(),
                 stream=()) -> Trace:
    """Field at arbitrary arc angles plus complex Gaussian noise ``N_C(0, sigma^2 |u|^2)``.

    Noise on sample m uses Philox words 2m and 2m+1 of the stream
    ``(noise.seed, "noise", *stream)``.
    """
    check_inside(config, ap)
    angles = np.asarray(angles, dtype=float)
    clean = np.asarray(field_at(config, ap.points(angles), k), dtype=complex)
    if noise.sigma == 0:
        return Trace(angles, clean)
    z = rng.indexed_normals(noise.seed, len(angles), "noise", *stream)
    scale = noise.sigma * np.abs(clean) / math.sqrt(2.0)
    return Trace(angles, clean + scale * (z[:, 0] + 1j * z[:, 1]))


def measure(config: SourceConfig, ap: Aperture, k, noise: NoiseModel = NoiseModel(), stream=()) -> Trace:
    """Noisy sensor readings at the aperture's equi-angular sensors."""
    return sample_trace(config, ap, sensor_angles(ap), k, noise, stream)
