"""Scripted reproductions. Each run writes ``out/<experiment>/<seed>/``
(root overridable with ``HELIOS_OUT_DIR``) containing a flat ``key = value``
report.txt and the CSV data behind every table and figure.

Every number in a report is a pure function of the experiment name, its
parameters and the seed: noise and amplitudes come from named Philox streams.
"""
from dataclasses import dataclass, field
import io
import math
import os
from pathlib import Path
import time

import numpy as np

from . import __version__, baselines, dsm, error_bounds, rng
from .dataset import build_dataset
from .errors import ConfigurationError, InvalidInputError
from .forward import (Aperture, NoiseModel, PointSource, SourceConfig, Trace, measure, sample_trace,
                      sensor_angles)
from .operator_net import DeepOnetModel, TrainConfig, load_model, train

WAVENUMBER = 4.0
RADIUS = 6.5
NOISE_SIGMA = 0.05
APERTURES = {
    "s1": (math.pi / 2, 10),
    "s2": (math.pi / 3, 8),
    "s3": (math.pi / 4, 6),
}
QUERY_POINTS = 128
MODES = ("raw", "deeponet", "pl", "pq", "poly")

# fixed test configurations per (source count, aperture index)
TEST_POSITIONS = {
    (2, 1): [(1.37, -0.35), (-0.83, -1.24)],
    (2, 2): [(-1.09, -1.91), (-1.92, 0.08)],
    (2, 3): [(-0.26, -1.78), (-1.18, 1.65)],
    (3, 1): [(1.61, 1.59), (0.64, -1.31), (-1.26, 0.63)],
    (3, 2): [(1.20, -0.59), (-0.69, 1.96), (-1.43, -1.73)],
    (3, 3): [(1.05, 1.38), (-0.66, -1.82), (-1.65, 0.38)],
}

SINGLE_SOURCE = (1.0, 0.0)
SINGLE_AMPLITUDE = 5.0
SINGLE_RADIUS = 7.0
SINGLE_SENSORS = 51

MULTI_K_POSITIONS = [(-1.40, 1.05), (0.16, 1.56), (1.97, -0.37)]
MULTI_K_AMPLITUDE = 6.0
WAVENUMBER_SETS = [tuple(4.0 + l for l in range(j)) for j in range(1, 7)]

DESK_SCALE = {"n_cfg": 2000, "n_aux": 128, "batch_size": 8192, "max_iters": 10_000}
FULL_SCALE = {"n_cfg": 10_000, "n_aux": 128, "batch_size": 50_000, "max_iters": 10_000}


def aperture(name_or_index, radius=RADIUS, half_angle=None, sensors=None) -> Aperture:
    """Named aperture (``s1``..``s3`` or 1..3) with optional overrides."""
    key = f"s{name_or_index}" if isinstance(name_or_index, int) else str(name_or_index).lower()
    if key not in APERTURES:
        raise InvalidInputError(f"unknown aperture {name_or_index!r}; use s1, s2 or s3")
    default_half, default_m = APERTURES[key]
    return Aperture(radius, default_half if half_angle is None else half_angle,
                    default_m if sensors is None else sensors)


def aperture_index(name_or_index) -> int:
    key = f"s{name_or_index}" if isinstance(name_or_index, int) else str(name_or_index).lower()
    if key not in APERTURES:
        raise InvalidInputError(f"unknown aperture {name_or_index!r}; use s1, s2 or s3")
    return int(key[1])


def out_root() -> Path:
    return Path(os.environ.get("HELIOS_OUT_DIR", "out"))


def model_dir() -> Path:
    """``HELIOS_MODEL_DIR`` or the ``models/`` directory shipped with the source tree."""
    env = os.environ.get("HELIOS_MODEL_DIR")
    if env:
        return Path(env)
    return Path(__file__).resolve().parents[2] / "models"


def model_filename(n_sources, aperture_idx):
    return f"deeponet_n{n_sources}_s{aperture_idx}.donx"


def default_model_path(n_sources, aperture_idx) -> Path:
    return model_dir() / model_filename(n_sources, aperture_idx)


def _fmt(value):
    if isinstance(value, (bool, np.bool_)):
        return "true" if value else "false"
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    if isinstance(value, (list, tuple, np.ndarray)):
        return ";".join(_fmt(v) for v in np.asarray(value, dtype=object).ravel())
    return str(value)


@dataclass
class ExperimentReport:
    name: str
    seed: int
    parameters: dict = field(default_factory=dict)
    results: dict = field(default_factory=dict)
    tables: dict = field(default_factory=dict)  # file name -> CSV text
    artifacts: list = field(default_factory=list)
    wall_time: float = 0.0

    def report_text(self) -> str:
        lines = [f"experiment = {self.name}", f"version = {__version__}", f"seed = {self.seed}"]
        lines += [f"param.{k} = {_fmt(v)}" for k, v in self.parameters.items()]
        lines += [f"{k} = {_fmt(v)}" for k, v in self.results.items()]
        return "\n".join(lines) + "\n"

    def write(self, root=None) -> Path:
        """Write report.txt and every table under ``root/<name>/<seed>/``."""
        directory = Path(root if root is not None else out_root()) / self.name / str(self.seed)
        directory.mkdir(parents=True, exist_ok=True)
        paths = [directory / "report.txt"]
        paths[0].write_text(self.report_text())
        for fname, text in self.tables.items():
            (directory / fname).write_text(text)
            paths.append(directory / fname)
        self.artifacts = [str(p) for p in paths]
        return directory


def _csv(header, rows, fmt="{:.17g}"):
    buf = io.StringIO()
    buf.write(",".join(header) + "\n")
    for row in rows:
        buf.write(",".join(fmt.format(v) if isinstance(v, (float, np.floating)) else str(v) for v in row) + "\n")
    return buf.getvalue()


def _trace_csv(angles, *columns, names):
    header = ["angle"]
    data = [np.asarray(angles, dtype=float)]
    for name, col in zip(names, columns):
        header += [f"{name}_re", f"{name}_im"]
        data += [np.real(col), np.imag(col)]
    return _csv(header, np.column_stack(data).tolist())


def _peaks_str(peaks):
    return ";".join(f"({x:.3f},{y:.3f})" for x, y in peaks)


# ---------------------------------------------------------------- single source


def run_example_2_1(seed=rng.CANONICAL_SEED, threads=1) -> ExperimentReport:
    """One source of amplitude 5 at (1, 0); 51 sensors on R = 7 arcs of
    half-angle pi/2, pi/3, pi/4; k = 4; 5% noise; h = 0.04."""
    start = time.perf_counter()
    cfg = SourceConfig((PointSource(SINGLE_SOURCE, SINGLE_AMPLITUDE),))
    rep = ExperimentReport("example-2-1", seed, parameters={
        "k": WAVENUMBER, "radius": SINGLE_RADIUS, "sensors": SINGLE_SENSORS, "noise_sigma": NOISE_SIGMA,
        "grid_spacing": 0.04, "source": SINGLE_SOURCE, "amplitude": SINGLE_AMPLITUDE})
    for i, n in enumerate((2, 3, 4), start=1):
        ap = Aperture(SINGLE_RADIUS, math.pi / n, SINGLE_SENSORS)
        tr = measure(cfg, ap, WAVENUMBER, NoiseModel(NOISE_SIGMA, seed), stream=("example-2-1", n))
        fld = dsm.indicator_field({WAVENUMBER: tr}, ap, threads=threads)
        theta, xi = error_bounds.aperture_distances(SINGLE_RADIUS, ap.half_angle, SINGLE_SOURCE)
        bounds = error_bounds.bound_report(WAVENUMBER, xi, theta, SINGLE_AMPLITUDE)
        am = fld.argmax()
        rep.results[f"s{i}.argmax"] = (float(am[0]), float(am[1]))
        rep.results[f"s{i}.argmax_error"] = float(math.hypot(am[0] - SINGLE_SOURCE[0], am[1] - SINGLE_SOURCE[1]))
        rep.results[f"s{i}.Theta"] = theta
        rep.results[f"s{i}.xi"] = xi
        rep.results[f"s{i}.k*Theta"] = bounds["k*Theta"]
        rep.results[f"s{i}.prior_bound"] = bounds["prior_bound"]
        rep.results[f"s{i}.posterior_root"] = bounds["posterior_root"]
        rep.tables[f"indicator_s{i}.csv"] = fld.to_csv()
    rep.wall_time = time.perf_counter() - start
    return rep


# ------------------------------------------------------------ multi frequency


def run_example_2_2_2_3(sensors, seed=rng.CANONICAL_SEED, threads=1) -> ExperimentReport:
    """Three sources of amplitude 6 seen by ``sensors`` sensors on the R = 6.5
    semicircle; DSM error for wavenumber sets {4}, {4,5}, ..., {4,...,9}.

    Sensor noise for wavenumber k uses the stream ``("table-1", k)``, so runs
    with different sensor counts share per-index noise (matched seeds).
    """
    start = time.perf_counter()
    if sensors < 2:
        raise InvalidInputError("need at least 2 sensors")
    truth = np.array(MULTI_K_POSITIONS)
    cfg = SourceConfig.from_arrays(truth, [MULTI_K_AMPLITUDE] * len(truth))
    ap = Aperture(RADIUS, math.pi / 2, sensors)
    all_k = WAVENUMBER_SETS[-1]
    traces = {k: measure(cfg, ap, k, NoiseModel(NOISE_SIGMA, seed), stream=("table-1", k)) for k in all_k}
    rep = ExperimentReport(f"table-1-m{sensors}", seed, parameters={
        "sensors": sensors, "radius": RADIUS, "half_angle": ap.half_angle, "noise_sigma": NOISE_SIGMA,
        "sources": truth, "amplitude": MULTI_K_AMPLITUDE, "grid_spacing": 0.04})
    rows = []
    for j, ks in enumerate(WAVENUMBER_SETS, start=1):
        fld = dsm.indicator_field({k: traces[k] for k in ks}, ap, threads=threads)
        peaks = dsm.find_peaks(fld, len(truth))
        err, complete = dsm.localization_error(peaks, truth)
        rows.append((j, "+".join(f"{k:g}" for k in ks), err, complete, _peaks_str(peaks)))
        rep.results[f"A{j}.mae"] = err
        rep.results[f"A{j}.complete"] = complete
        rep.results[f"A{j}.peaks"] = _peaks_str(peaks)
        rep.tables[f"indicator_A{j}.csv"] = fld.to_csv()
    rep.tables["mae.csv"] = _csv(["set", "wavenumbers", "mae", "complete", "peaks"],
                                 [(j, ks, e, str(c).lower(), f'"{p}"') for j, ks, e, c, p in rows])
    for k in (4.0, 6.0, 8.0):
        rep.tables[f"trace_k{k:g}.csv"] = _trace_csv(traces[k].angles, traces[k].values, names=["measured"])
    rep.wall_time = time.perf_counter() - start
    return rep


def run_table_1(seed=rng.CANONICAL_SEED, sensor_counts=(10, 128), threads=1) -> ExperimentReport:
    start = time.perf_counter()
    parts = {m: run_example_2_2_2_3(m, seed, threads) for m in sensor_counts}
    rep = ExperimentReport("table-1", seed, parameters={"sensor_counts": list(sensor_counts)})
    rows = []
    for m, part in parts.items():
        rows.append([m] + [part.results[f"A{j}.mae"] for j in range(1, 7)])
        for key, value in part.results.items():
            rep.results[f"M{m}.{key}"] = value
        for fname, text in part.tables.items():
            rep.tables[f"M{m}_{fname}"] = text
    rep.tables["table_1.csv"] = _csv(["M"] + [f"A{j}" for j in range(1, 7)], rows)
    rep.wall_time = time.perf_counter() - start
    return rep


# ------------------------------------------------------ operator experiments


def fixed_configuration(n_sources, aperture_idx, seed) -> SourceConfig:
    """Fixed positions; amplitudes from U(5, 7) on a seeded stream."""
    key = (int(n_sources), int(aperture_idx))
    if key not in TEST_POSITIONS:
        raise InvalidInputError("test configurations exist for N in {2, 3} and apertures 1..3")
    amps = rng.generator(seed, "section-3", "amplitudes", *key).uniform(5.0, 7.0, key[0])
    return SourceConfig.from_arrays(TEST_POSITIONS[key], amps)


def query_angles(ap: Aperture, count=QUERY_POINTS) -> np.ndarray:
    return sensor_angles(ap.with_sensors(count))


def _resolve_model(model, n_sources, aperture_idx, ap):
    if isinstance(model, DeepOnetModel):
        loaded = model
    else:
        path = Path(model) if model is not None else default_model_path(n_sources, aperture_idx)
        if not path.is_file():
            raise ConfigurationError(f"model file not found: {path}")
        loaded = load_model(path)
    if loaded.sensor_count != ap.sensor_count:
        raise ConfigurationError(f"model expects {loaded.sensor_count} sensors, aperture has {ap.sensor_count}")
    return loaded


def densify(mode, sensors: Trace, ap: Aperture, angles, model=None) -> Trace:
    """Dense trace at ``angles`` from sparse sensor readings."""
    if mode == "raw":
        return sensors
    if mode == "deeponet":
        if model is None:
            raise ConfigurationError("mode deeponet needs a trained model")
        return Trace(angles, model.predict_dense(sensors.values, angles))
    if mode in ("pl", "pq", "poly"):
        return baselines.dense_trace(mode, sensors, angles)
    raise InvalidInputError(f"unknown mode {mode!r}; use one of {', '.join(MODES)}")


def _section_3_data(n_sources, aperture_idx, seed):
    ap = aperture(aperture_idx)
    cfg = fixed_configuration(n_sources, aperture_idx, seed)
    sensors = measure(cfg, ap, WAVENUMBER, NoiseModel(NOISE_SIGMA, seed),
                      stream=("section-3", n_sources, aperture_idx))
    return ap, cfg, sensors


def run_section_3(n_sources, aperture_idx, mode, seed=rng.CANONICAL_SEED, model=None,
                  n_points=QUERY_POINTS, threads=1) -> ExperimentReport:
    """Localize a fixed test configuration from its sparse sensors after
    densifying them with ``mode``; ``model`` is a path or a loaded model."""
    start = time.perf_counter()
    if mode not in MODES:
        raise InvalidInputError(f"unknown mode {mode!r}; use one of {', '.join(MODES)}")
    aperture_idx = aperture_index(aperture_idx)
    ap, cfg, sensors = _section_3_data(n_sources, aperture_idx, seed)
    net = _resolve_model(model, n_sources, aperture_idx, ap) if mode == "deeponet" else None
    angles = query_angles(ap, n_points)
    dense = densify(mode, sensors, ap, angles, net)
    fld = dsm.indicator_field({WAVENUMBER: dense}, ap, threads=threads)
    peaks = dsm.find_peaks(fld, n_sources)
    err, complete = dsm.localization_error(peaks, cfg.positions)
    rep = ExperimentReport(f"section-3-n{n_sources}-s{aperture_idx}-{mode}", seed, parameters={
        "n_sources": n_sources, "aperture": f"s{aperture_idx}", "half_angle": ap.half_angle,
        "sensors": ap.sensor_count, "mode": mode, "n_points": len(dense), "k": WAVENUMBER,
        "noise_sigma": NOISE_SIGMA, "sources": cfg.positions, "amplitudes": cfg.amplitudes})
    rep.results["peaks"] = _peaks_str(peaks)
    rep.results["mae"] = err
    rep.results["complete"] = complete
    truth = sample_trace(cfg, ap, dense.angles, WAVENUMBER).values
    if mode != "raw":
        rep.results["trace_mean_abs_error"] = float(np.mean(np.abs(dense.values - truth)))
    rep.tables["trace.csv"] = _trace_csv(dense.angles, dense.values, truth, names=[mode, "true"])
    rep.tables["sensors.csv"] = _trace_csv(sensors.angles, sensors.values, names=["measured"])
    rep.tables["indicator.csv"] = fld.to_csv()
    rep.wall_time = time.perf_counter() - start
    return rep


def run_table(n_sources, seed=rng.CANONICAL_SEED, modes=("raw", "deeponet"), models=None,
              threads=1) -> ExperimentReport:
    """Error comparison across the three apertures; ``models`` maps aperture
    index to a model path or model."""
    start = time.perf_counter()
    name = {2: "table-2", 3: "table-3"}.get(n_sources)
    if name is None:
        raise InvalidInputError("tables exist for N = 2 and N = 3")
    models = models or {}
    rep = ExperimentReport(name, seed, parameters={"n_sources": n_sources, "modes": list(modes)})
    rows = []
    for a in (1, 2, 3):
        for mode in modes:
            part = run_section_3(n_sources, a, mode, seed, models.get(a), threads=threads)
            rows.append((f"s{a}", mode, part.results["mae"], str(part.results["complete"]).lower(),
                         f'"{part.results["peaks"]}"'))
            rep.results[f"s{a}.{mode}.mae"] = part.results["mae"]
            rep.results[f"s{a}.{mode}.peaks"] = part.results["peaks"]
            rep.results[f"s{a}.{mode}.complete"] = part.results["complete"]
            rep.tables[f"s{a}_{mode}_indicator.csv"] = part.tables["indicator.csv"]
            rep.tables[f"s{a}_{mode}_trace.csv"] = part.tables["trace.csv"]
        rep.results[f"s{a}.sources"] = _peaks_str(fixed_configuration(n_sources, a, seed).positions)
    rep.tables[f"{name.replace('-', '_')}.csv"] = _csv(["aperture", "mode", "mae", "complete", "peaks"], rows)
    rep.wall_time = time.perf_counter() - start
    return rep


def run_interp_sweep(n_points_list=(16, 32, 48, 62, 80, 96, 112, 128), seed=rng.CANONICAL_SEED,
                     n_sources=3, aperture_idx=1, schemes=("deeponet", "pl", "pq", "poly"), model=None,
                     threads=1) -> ExperimentReport:
    """DSM error after densifying the same sparse sensors to each point count."""
    start = time.perf_counter()
    ap, cfg, sensors = _section_3_data(n_sources, aperture_idx, seed)
    net = _resolve_model(model, n_sources, aperture_idx, ap) if "deeponet" in schemes else None
    rep = ExperimentReport("interp-sweep", seed, parameters={
        "n_sources": n_sources, "aperture": f"s{aperture_idx}", "n_points": list(n_points_list),
        "schemes": list(schemes), "k": WAVENUMBER, "noise_sigma": NOISE_SIGMA})
    rows = []
    for scheme in schemes:
        for n in n_points_list:
            dense = densify(scheme, sensors, ap, query_angles(ap, n), net)
            fld = dsm.indicator_field({WAVENUMBER: dense}, ap, threads=threads)
            err, _ = dsm.localization_error(dsm.find_peaks(fld, n_sources), cfg.positions)
            rows.append((scheme, n, err))
            rep.results[f"{scheme}.{n}"] = err
    rep.tables["interp_sweep.csv"] = _csv(["scheme", "n_points", "mae"], rows)
    rep.wall_time = time.perf_counter() - start
    return rep


# ------------------------------------------------------------------ training


def train_reference(n_sources, aperture_idx, seed=rng.CANONICAL_SEED, n_cfg=2000, n_aux=128,
                    batch_size=8192, max_iters=10_000, dtype=np.float32, progress_every=0):
    """Build the training set and train one operator; returns ``(TrainResult, Dataset)``.

    The training set uses ``seed``; held-out sets use ``seed + 1``.
    """
    ap = aperture(aperture_idx)
    ds = build_dataset(ap, WAVENUMBER, n_sources, n_cfg, n_aux, NoiseModel(NOISE_SIGMA, seed))
    cfg = TrainConfig(batch_size=batch_size, max_iters=max_iters, seed=seed)
    return train(ds, cfg, dtype=dtype, progress_every=progress_every), ds
