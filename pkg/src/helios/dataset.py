"""Synthetic training data: random source configurations, sparse sensor
vectors and dense auxiliary samples of the same field.

Config ``l`` of a dataset draws its sources and auxiliary angles from the
Philox stream ``(seed, "config", l)`` and its sensor noise from
``(seed, "noise", "sensor", l)``, so every config is reproducible on its own.
Sensor vectors are noisy; auxiliary targets are noiseless.

Binary format (little-endian)::

    "HISD"  version u32
    radius f64  half_angle f64  M u32  k f64  N u32  N_cfg u32  N_aux u32  sigma f64  seed u64
    crc32 u32                       CRC-32 of everything after this field
    configs   N_cfg x N x (x, y, lambda)              f64
    triplets  N_cfg*N_aux x (re u_1, im u_1, ..., re u_M, im u_M, phi, re u_aux, im u_aux)  f64
"""
from dataclasses import dataclass
import io
import math
import struct
from typing import NamedTuple
import zlib

import numpy as np

from . import rng
from .errors import FormatError, GenerationError, InvalidInputError
from .forward import (BOUNDARY_MARGIN, DOMAIN, MIN_SEPARATION, Aperture, NoiseModel, SourceConfig,
                      field_at, measure)
from .operator_net import Batch

DATASET_MAGIC = b"HISD"
DATASET_VERSION = 1
MAX_ATTEMPTS = 10_000
AMPLITUDE_RANGE = (5.0, 7.0)
_HEADER = struct.Struct("<4sIddIdIIIdQ")
_CRC = struct.Struct("<I")


class Triplet(NamedTuple):
    u_sen: np.ndarray
    phi_aux: float
    u_aux: complex


@dataclass(frozen=True)
class DatasetHeader:
    aperture: Aperture
    k: float
    n_sources: int
    n_cfg: int
    n_aux: int
    sigma: float = 0.0
    seed: int = rng.CANONICAL_SEED
    format_version: int = DATASET_VERSION

    @property
    def n_triplets(self):
        return self.n_cfg * self.n_aux


@dataclass
class Dataset:
    header: DatasetHeader
    positions: np.ndarray   # (N_cfg, N, 2)
    amplitudes: np.ndarray  # (N_cfg, N)
    u_sen: np.ndarray       # (N_cfg, M) complex
    phi: np.ndarray         # (N_cfg, N_aux)
    u_aux: np.ndarray       # (N_cfg, N_aux) complex

    def __len__(self):
        return self.header.n_triplets

    def config(self, i) -> SourceConfig:
        return SourceConfig.from_arrays(self.positions[i], self.amplitudes[i])

    def triplet(self, n) -> Triplet:
        c, p = divmod(n, self.header.n_aux)
        return Triplet(self.u_sen[c], float(self.phi[c, p]), complex(self.u_aux[c, p]))

    def triplets(self):
        for n in range(len(self)):
            yield self.triplet(n)

    def as_batch(self) -> Batch:
        n_aux = self.header.n_aux
        return Batch(self.u_sen, np.repeat(np.arange(self.header.n_cfg), n_aux),
                     self.phi.ravel(), self.u_aux.ravel())

    def triplet_matrix(self) -> np.ndarray:
        """All triplets as rows ``(re u_1, im u_1, ..., phi, re u_aux, im u_aux)``."""
        h = self.header
        m = h.aperture.sensor_count
        out = np.empty((h.n_cfg, h.n_aux, 2 * m + 3))
        out[:, :, 0:2 * m:2] = self.u_sen.real[:, None, :]
        out[:, :, 1:2 * m:2] = self.u_sen.imag[:, None, :]
        out[:, :, 2 * m] = self.phi
        out[:, :, 2 * m + 1] = self.u_aux.real
        out[:, :, 2 * m + 2] = self.u_aux.imag
        return out.reshape(h.n_triplets, 2 * m + 3)

    def to_csv(self, path_or_buf=None):
        m = self.header.aperture.sensor_count
        cols = [f"u_{part}_{i}" for i in range(m) for part in ("re", "im")] + ["phi", "aux_re", "aux_im"]
        buf = io.StringIO()
        buf.write(",".join(cols) + "\n")
        for row in self.triplet_matrix():
            buf.write(",".join(f"{v:.17g}" for v in row) + "\n")
        text = buf.getvalue()
        if path_or_buf is None:
            return text
        if hasattr(path_or_buf, "write"):
            path_or_buf.write(text)
        else:
            with open(path_or_buf, "w") as fh:
                fh.write(text)
        return None


def gen_config(gen: np.random.Generator, n_sources: int, domain=DOMAIN) -> SourceConfig:
    """Uniform positions at least ``BOUNDARY_MARGIN`` inside ``domain`` and
    ``MIN_SEPARATION`` apart (by rejection), amplitudes uniform in [5, 7]."""
    if n_sources < 1:
        raise InvalidInputError("need at least one source")
    x0, x1, y0, y1 = domain
    lo = np.array([x0 + BOUNDARY_MARGIN, y0 + BOUNDARY_MARGIN])
    hi = np.array([x1 - BOUNDARY_MARGIN, y1 - BOUNDARY_MARGIN])
    if np.any(hi <= lo):
        raise InvalidInputError("domain too small for the boundary margin")
    for _ in range(MAX_ATTEMPTS):
        pos = lo + (hi - lo) * gen.random((n_sources, 2))
        diff = pos[:, None, :] - pos[None, :, :]
        dist = np.hypot(diff[..., 0], diff[..., 1])[np.triu_indices(n_sources, 1)]
        if np.all(dist >= MIN_SEPARATION):
            amps = gen.uniform(*AMPLITUDE_RANGE, n_sources)
            return SourceConfig.from_arrays(pos, amps)
    raise GenerationError(f"no valid {n_sources}-source configuration after {MAX_ATTEMPTS} attempts")


def build_dataset(ap: Aperture, k, n_sources, n_cfg, n_aux, noise: NoiseModel = NoiseModel(),
                  seed=None) -> Dataset:
    """``n_cfg * n_aux`` triplets; ``seed`` defaults to the noise model's seed."""
    if n_cfg < 0 or n_aux < 1 or n_sources < 1:
        raise InvalidInputError("need n_cfg >= 0, n_aux >= 1 and n_sources >= 1")
    if not k > 0:
        raise InvalidInputError("wavenumber must be positive")
    seed = noise.seed if seed is None else seed
    noise = NoiseModel(noise.sigma, seed)
    m = ap.sensor_count
    positions = np.zeros((n_cfg, n_sources, 2))
    amplitudes = np.zeros((n_cfg, n_sources))
    u_sen = np.zeros((n_cfg, m), dtype=complex)
    phi = np.zeros((n_cfg, n_aux))
    u_aux = np.zeros((n_cfg, n_aux), dtype=complex)
    for c in range(n_cfg):
        gen = rng.generator(seed, "config", c)
        config = gen_config(gen, n_sources)
        positions[c] = config.positions
        amplitudes[c] = config.amplitudes
        phi[c] = gen.uniform(-ap.half_angle, ap.half_angle, n_aux)
        u_sen[c] = measure(config, ap, k, noise, stream=("sensor", c)).values
        u_aux[c] = field_at(config, ap.points(phi[c]), k)
    header = DatasetHeader(ap, float(k), int(n_sources), int(n_cfg), int(n_aux), float(noise.sigma), int(seed))
    return Dataset(header, positions, amplitudes, u_sen, phi, u_aux)


def _payload(ds: Dataset) -> bytes:
    h = ds.header
    configs = np.concatenate([ds.positions, ds.amplitudes[..., None]], axis=-1).reshape(h.n_cfg, h.n_sources, 3)
    return configs.astype("<f8").tobytes() + ds.triplet_matrix().astype("<f8").tobytes()


def header_bytes(h: DatasetHeader) -> bytes:
    ap = h.aperture
    return _HEADER.pack(DATASET_MAGIC, h.format_version, ap.radius, ap.half_angle, ap.sensor_count,
                        h.k, h.n_sources, h.n_cfg, h.n_aux, h.sigma, h.seed & 0xFFFFFFFFFFFFFFFF)


def save_dataset(ds: Dataset, path):
    payload = _payload(ds)
    with open(path, "wb") as fh:
        fh.write(header_bytes(ds.header))
        fh.write(_CRC.pack(zlib.crc32(payload)))
        fh.write(payload)


def read_header(buf) -> DatasetHeader:
    if len(buf) < _HEADER.size + _CRC.size:
        raise FormatError("truncated dataset header")
    magic, version, radius, half, m, k, n, n_cfg, n_aux, sigma, seed = _HEADER.unpack_from(buf, 0)
    if magic != DATASET_MAGIC:
        raise FormatError("not a HISD dataset file")
    if version != DATASET_VERSION:
        raise FormatError(f"unsupported dataset format version {version}")
    try:
        ap = Aperture(radius, half, m)
    except InvalidInputError as exc:
        raise FormatError(f"invalid aperture in header: {exc}") from exc
    return DatasetHeader(ap, k, n, n_cfg, n_aux, sigma, seed, version)


def load_dataset(path) -> Dataset:
    with open(path, "rb") as fh:
        buf = fh.read()
    h = read_header(buf)
    (crc,) = _CRC.unpack_from(buf, _HEADER.size)
    payload = memoryview(buf)[_HEADER.size + _CRC.size:]
    m = h.aperture.sensor_count
    n_cfg_vals = h.n_cfg * h.n_sources * 3
    n_trip_vals = h.n_triplets * (2 * m + 3)
    expected = 8 * (n_cfg_vals + n_trip_vals)
    if len(payload) < expected:
        raise FormatError(f"truncated dataset: payload has {len(payload)} of {expected} bytes")
    if len(payload) > expected:
        raise FormatError("trailing bytes after dataset payload")
    if zlib.crc32(payload) != crc:
        raise FormatError("dataset checksum mismatch")
    configs = np.frombuffer(payload, "<f8", n_cfg_vals).reshape(h.n_cfg, h.n_sources, 3).astype(float)
    rows = np.frombuffer(payload, "<f8", n_trip_vals, 8 * n_cfg_vals).reshape(h.n_cfg, h.n_aux, 2 * m + 3)
    u_all = rows[:, :, 0:2 * m:2] + 1j * rows[:, :, 1:2 * m:2]
    if h.n_cfg and not np.array_equal(u_all, np.broadcast_to(u_all[:, :1, :], u_all.shape)):
        raise FormatError("triplets of one configuration disagree on the sensor vector")
    u_sen = u_all[:, 0, :] if h.n_aux else np.zeros((h.n_cfg, m), dtype=complex)
    return Dataset(h, configs[..., :2].copy(), configs[..., 2].copy(), u_sen.copy(),
                   rows[:, :, 2 * m].astype(float), rows[:, :, 2 * m + 1] + 1j * rows[:, :, 2 * m + 2])


def ks_statistic_uniform(samples, lo, hi) -> float:
    """Kolmogorov-Smirnov distance of ``samples`` to U(lo, hi)."""
    from scipy.stats import kstest
    x = np.asarray(samples, dtype=float).ravel()
    if x.size == 0:
        return math.nan
    return float(kstest(x, "uniform", args=(lo, hi - lo)).statistic)
