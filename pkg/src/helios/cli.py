"""Command-line entry point: ``helios <subcommand> [flags]``.

Exit status is 0 on success, 1 on a usage error and 2 on a runtime error.
Progress and the resolved configuration go to stderr; tables and reports go
to files or stdout.
"""
import argparse
import logging
import math
import os
from pathlib import Path
import sys

import numpy as np

from . import __version__, dataset, dsm, error_bounds, experiments as ex, operator_net, rng
from .errors import ConfigurationError, HeliosError
from .forward import NoiseModel, SourceConfig, Trace, measure

log = logging.getLogger("helios")


class UsageError(Exception):
    pass


class Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(f"{self.prog}: error: {message}")


def _seed(text):
    try:
        return int(text, 0)
    except ValueError:
        raise argparse.ArgumentTypeError(f"invalid seed {text!r}") from None


def _float_list(text):
    try:
        return [float(v) for v in text.replace(";", ",").split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def _int_list(text):
    try:
        return [int(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None


def _sources(text):
    """``x,y,amplitude;x,y,amplitude;...``"""
    rows = []
    for part in text.split(";"):
        vals = _float_list(part)
        if len(vals) != 3:
            raise argparse.ArgumentTypeError("each source needs x,y,amplitude")
        rows.append(vals)
    arr = np.array(rows)
    return SourceConfig.from_arrays(arr[:, :2], arr[:, 2])


def _common(p, seed=True):
    p.add_argument("--config", metavar="FILE", help="flat 'key = value' file; explicit flags win")
    if seed:
        p.add_argument("--seed", type=_seed, default=rng.CANONICAL_SEED,
                       help=f"random seed (default {rng.CANONICAL_SEED:#x})")
    p.add_argument("--threads", type=int, default=os.cpu_count() or 1,
                   help="worker threads for indicator grids (default: available cores)")
    p.add_argument("-q", "--quiet", action="store_true", help="suppress progress on stderr")


def _aperture_flags(p, radius=ex.RADIUS):
    p.add_argument("--aperture", default="s1", choices=sorted(ex.APERTURES),
                   help="s1=(pi/2, 10 sensors), s2=(pi/3, 8), s3=(pi/4, 6)")
    p.add_argument("--half-angle", type=float, help="override the aperture half-angle (radians)")
    p.add_argument("--sensors", type=int, help="override the sensor count")
    p.add_argument("--radius", type=float, default=radius, help=f"measurement radius (default {radius})")


def _out_dir_flag(p):
    p.add_argument("--out-dir", help="output root (default $HELIOS_OUT_DIR or ./out)")


def build_parser():
    parser = Parser(prog="helios", description="Point-source localization from sparse partial-aperture data.")
    parser.add_argument("--version", action="version", version=f"helios {__version__}")
    sub = parser.add_subparsers(dest="command", metavar="COMMAND")

    p = sub.add_parser("gen-data", help="generate a training or test dataset")
    _common(p)
    _aperture_flags(p)
    p.add_argument("--n-sources", type=int, default=2)
    p.add_argument("--k", type=float, default=ex.WAVENUMBER, help="wavenumber")
    p.add_argument("--n-cfg", type=int, default=ex.DESK_SCALE["n_cfg"], help="source configurations")
    p.add_argument("--n-aux", type=int, default=ex.DESK_SCALE["n_aux"], help="auxiliary samples per configuration")
    p.add_argument("--sigma", type=float, default=ex.NOISE_SIGMA, help="relative sensor noise")
    p.add_argument("--out", required=True, help="binary dataset path")
    p.add_argument("--csv", help="also export triplets as CSV")

    p = sub.add_parser("train", help="train a DeepONet on a dataset")
    _common(p)
    _aperture_flags(p)
    p.add_argument("--data", help="dataset file; generated from the flags below when omitted")
    p.add_argument("--n-sources", type=int, default=2)
    p.add_argument("--n-cfg", type=int, default=ex.DESK_SCALE["n_cfg"])
    p.add_argument("--n-aux", type=int, default=ex.DESK_SCALE["n_aux"])
    p.add_argument("--batch-size", type=int, default=ex.DESK_SCALE["batch_size"])
    p.add_argument("--iters", type=int, default=ex.DESK_SCALE["max_iters"])
    p.add_argument("--full-scale", action="store_true",
                   help="10 000 configurations and batches of 50 000 (hours on a CPU)")
    p.add_argument("--lr", type=float, default=1e-3, help="peak learning rate")
    p.add_argument("--lr-min", type=float, default=1e-6)
    p.add_argument("--weight-decay", type=float, default=1e-4)
    p.add_argument("--t0", type=int, default=1000, help="first restart period")
    p.add_argument("--t-mult", type=int, default=2, help="restart period growth")
    p.add_argument("--float64", action="store_true", help="train in double precision (slower)")
    p.add_argument("--out", required=True, help="model file (.donx)")
    p.add_argument("--loss-csv", help="write iteration,loss,lr history here")
    p.add_argument("--progress-every", type=int, default=500)

    p = sub.add_parser("predict", help="evaluate a trained operator on one sensor vector")
    _common(p)
    p.add_argument("--model", required=True)
    p.add_argument("--u", required=True, help="sensor values 're,im;re,im;...'")
    g = p.add_mutually_exclusive_group()
    g.add_argument("--phi", type=_float_list, help="query angles, comma separated")
    g.add_argument("--n-points", type=int, default=ex.QUERY_POINTS, help="equi-angular queries over the aperture")
    p.add_argument("--out", help="CSV path (default stdout)")

    p = sub.add_parser("dsm", help="DSM indicator from traces or simulated sources")
    _common(p)
    _aperture_flags(p)
    p.add_argument("--trace", action="append", help="CSV with angle,re,im columns (one per --k)")
    p.add_argument("--k", type=float, action="append", help="wavenumber(s); default 4")
    p.add_argument("--sources", type=_sources, help="simulate measurements of 'x,y,amp;...' instead")
    p.add_argument("--sigma", type=float, default=ex.NOISE_SIGMA, help="noise for simulated measurements")
    p.add_argument("--n-peaks", type=int, default=1)
    p.add_argument("--spacing", type=float, default=0.04, help="sampling grid spacing")
    p.add_argument("--out", help="indicator CSV path")

    p = sub.add_parser("bounds", help="prior and posterior error bounds for one source")
    _common(p)
    p.add_argument("--k", type=float, required=True, help="wavenumber")
    p.add_argument("--xi", type=float, required=True, help="sensor-to-source distance")
    p.add_argument("--theta", type=float, required=True, help="sensor-to-domain distance")
    p.add_argument("--lam", type=float, default=1.0, help="source amplitude")
    p.add_argument("--tol", type=float, default=1e-7, help="bisection tolerance")

    for name, text in [("example-2-1", "single source with 51 sensors on three apertures"),
                       ("table-1", "multi-frequency DSM error for 10 and 128 sensors")]:
        p = sub.add_parser(name, help=text)
        _common(p)
        _out_dir_flag(p)

    for name, n in [("table-2", 2), ("table-3", 3)]:
        p = sub.add_parser(name, help=f"raw vs densified DSM for {n} sources on s1..s3")
        _common(p)
        _out_dir_flag(p)
        p.add_argument("--modes", default="raw,deeponet", help=f"comma-separated subset of {','.join(ex.MODES)}")
        p.add_argument("--model-dir", help="directory with deeponet_n<N>_s<i>.donx (default: shipped models)")

    p = sub.add_parser("interp-sweep", help="DSM error versus number of densified points")
    _common(p)
    _out_dir_flag(p)
    p.add_argument("--points", type=_int_list, default=[16, 32, 48, 62, 80, 96, 112, 128])
    p.add_argument("--schemes", default="deeponet,pl,pq,poly")
    p.add_argument("--n-sources", type=int, default=3, choices=(2, 3))
    p.add_argument("--aperture", default="s1", choices=sorted(ex.APERTURES))
    p.add_argument("--model", help="model file (default: shipped model)")

    p = sub.add_parser("model-info", help="print a model file header")
    _common(p, seed=False)
    p.add_argument("--model", required=True)
    return parser


def read_config_file(path):
    values = {}
    for lineno, line in enumerate(Path(path).read_text().splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise UsageError(f"{path}:{lineno}: expected 'key = value'")
        key, value = (s.strip() for s in line.split("=", 1))
        values[key.replace("-", "_")] = value
    return values


def _subparser(parser, command):
    for action in parser._actions:
        if isinstance(action, argparse._SubParsersAction):
            return action.choices[command]
    raise KeyError(command)


def parse(argv):
    parser = build_parser()
    if not argv:
        parser.print_usage(sys.stderr)
        raise UsageError("helios: error: a subcommand is required")
    pre = argparse.ArgumentParser(add_help=False)
    pre.add_argument("--config")
    pre_args, rest = pre.parse_known_args(argv)
    command = next((a for a in rest if not a.startswith("-")), None)
    if pre_args.config and command in COMMANDS and not {"-h", "--help"} & set(rest):
        _apply_config(parser, command, pre_args.config)
    args = parser.parse_args(argv)
    if args.command is None:
        parser.print_usage(sys.stderr)
        raise UsageError("helios: error: a subcommand is required")
    return args


def _apply_config(parser, command, path):
    sp = _subparser(parser, command)
    known = {a.dest: a for a in sp._actions}
    if "config" not in known:
        raise UsageError(f"{command} does not take --config")
    try:
        values = read_config_file(path)
    except OSError as exc:
        raise UsageError(f"cannot read config file: {exc}") from exc
    defaults = {}
    for key, raw in values.items():
        action = known.get(key)
        if action is None or key in ("help", "config"):
            raise UsageError(f"{path}: unknown key {key!r} for {command}")
        if isinstance(action, (argparse._StoreTrueAction, argparse._StoreFalseAction)):
            defaults[key] = raw.lower() in ("1", "true", "yes", "on")
        else:
            try:
                defaults[key] = action.type(raw) if action.type else raw
            except (argparse.ArgumentTypeError, ValueError) as exc:
                raise UsageError(f"{path}: bad value for {key}: {exc}") from exc
            if action.choices is not None and defaults[key] not in action.choices:
                raise UsageError(f"{path}: {key} must be one of {sorted(action.choices)}")
            if isinstance(action, argparse._AppendAction):
                defaults[key] = [defaults[key]]
    sp.set_defaults(**defaults)
    # required flags satisfied by the file
    for key in defaults:
        known[key].required = False


def _emit(lines, out=None):
    text = "".join(f"{line}\n" for line in lines)
    if out:
        Path(out).write_text(text)
    else:
        sys.stdout.write(text)


def _resolved(args):
    skip = {"command", "quiet"}
    return {k: v for k, v in sorted(vars(args).items()) if k not in skip and not callable(v)}


def _aperture(args):
    return ex.aperture(args.aperture, radius=args.radius, half_angle=args.half_angle, sensors=args.sensors)


def _read_trace(path):
    data = np.genfromtxt(path, delimiter=",", names=True)
    names = data.dtype.names
    if not names or len(names) < 3:
        raise ConfigurationError(f"{path}: expected columns angle,re,im")
    return Trace(np.atleast_1d(data[names[0]]), np.atleast_1d(data[names[1]] + 1j * data[names[2]]))


def _write_report(rep, args):
    directory = rep.write(args.out_dir)
    log.info("wrote %d files to %s (%.1fs)", len(rep.artifacts), directory, rep.wall_time)
    sys.stdout.write(rep.report_text())


def cmd_gen_data(args):
    ap = _aperture(args)
    ds = dataset.build_dataset(ap, args.k, args.n_sources, args.n_cfg, args.n_aux,
                               NoiseModel(args.sigma, args.seed))
    dataset.save_dataset(ds, args.out)
    if args.csv:
        ds.to_csv(args.csv)
    _emit([f"seed = {args.seed}", f"triplets = {len(ds)}", f"out = {args.out}"])


def cmd_train(args):
    if args.full_scale:
        args.n_cfg, args.batch_size = ex.FULL_SCALE["n_cfg"], ex.FULL_SCALE["batch_size"]
    if args.data:
        ds = dataset.load_dataset(args.data)
    else:
        ds = dataset.build_dataset(_aperture(args), ex.WAVENUMBER, args.n_sources, args.n_cfg, args.n_aux,
                                   NoiseModel(ex.NOISE_SIGMA, args.seed))
    cfg = operator_net.TrainConfig(lr_max=args.lr, weight_decay=args.weight_decay, T0=args.t0, T_mult=args.t_mult,
                                   lr_min=args.lr_min, batch_size=args.batch_size, max_iters=args.iters,
                                   seed=args.seed)
    dtype = np.float64 if args.float64 else np.float32
    res = operator_net.train(ds, cfg, dtype=dtype, progress_every=0 if args.quiet else args.progress_every)
    operator_net.save_model(res.model, args.out)
    if args.loss_csv:
        lines = ["iteration,loss,lr"] + [f"{i},{l:.9e},{r:.9e}" for i, (l, r)
                                          in enumerate(zip(res.loss_history, res.lr_history))]
        _emit(lines, args.loss_csv)
    h = res.loss_history
    _emit([f"seed = {args.seed}", f"iterations = {len(h)}", f"initial_loss = {h[0]!r}", f"final_loss = {h[-1]!r}",
           f"loss_ratio = {h[-1] / h[0]!r}", f"wall_time = {res.wall_time:.1f}", f"out = {args.out}"])


def cmd_predict(args):
    model = operator_net.load_model(args.model)
    vals = []
    for part in args.u.split(";"):
        re_im = _float_list(part)
        if len(re_im) != 2:
            raise UsageError("--u expects 're,im' pairs separated by ';'")
        vals.append(complex(*re_im))
    if args.phi is not None:
        phis = np.array(args.phi)
    else:
        phis = np.linspace(-model.half_angle, model.half_angle, args.n_points)
        phis[-1] = model.half_angle
    if np.any(np.abs(phis) > model.half_angle):
        raise UsageError("query angles must lie within the model's aperture")
    out = model.predict_dense(np.array(vals), phis)
    _emit([f"# seed = {args.seed}", "angle,re,im"] + [f"{p:.17g},{v.real:.17g},{v.imag:.17g}" for p, v in zip(phis, out)],
          args.out)


def cmd_dsm(args):
    ap = _aperture(args)
    ks = args.k or [ex.WAVENUMBER]
    if args.trace:
        if len(args.trace) != len(ks):
            raise UsageError("give one --k per --trace")
        traces = {k: _read_trace(p) for k, p in zip(ks, args.trace)}
    elif args.sources is not None:
        traces = {k: measure(args.sources, ap, k, NoiseModel(args.sigma, args.seed), stream=("cli-dsm", k))
                  for k in ks}
    else:
        raise UsageError("dsm needs --trace files or --sources")
    grid = dsm.SamplingGrid(spacing=args.spacing)
    fld = dsm.indicator_field(traces, ap, grid, threads=args.threads)
    if args.out:
        fld.to_csv(args.out)
    peaks = dsm.find_peaks(fld, args.n_peaks)
    lines = [f"seed = {args.seed}", f"argmax = {fld.argmax()[0]:.6g},{fld.argmax()[1]:.6g}"]
    lines += [f"peak_{i} = {x:.6g},{y:.6g}" for i, (x, y) in enumerate(peaks)]
    if args.sources is not None:
        err, complete = dsm.localization_error(peaks, args.sources.positions) if len(peaks) else (math.inf, False)
        lines += [f"mae = {err!r}", f"complete = {str(complete).lower()}"]
    _emit(lines)


def cmd_bounds(args):
    rep = error_bounds.bound_report(args.k, args.xi, args.theta, args.lam, args.tol)
    lines = [f"seed = {args.seed}"]
    for key, value in rep.items():
        if isinstance(value, bool):
            value = str(value).lower()
        lines.append(f"{key} = {value}")
    _emit(lines)


def cmd_example(args):
    if args.command == "example-2-1":
        rep = ex.run_example_2_1(args.seed, args.threads)
    else:
        rep = ex.run_table_1(args.seed, threads=args.threads)
    _write_report(rep, args)


def cmd_table(args):
    n = 2 if args.command == "table-2" else 3
    modes = [m.strip() for m in args.modes.split(",") if m.strip()]
    bad = [m for m in modes if m not in ex.MODES]
    if bad:
        raise UsageError(f"unknown mode(s) {bad}; choose from {list(ex.MODES)}")
    models = {}
    if args.model_dir:
        models = {a: Path(args.model_dir) / ex.model_filename(n, a) for a in (1, 2, 3)}
    rep = ex.run_table(n, args.seed, modes, models, args.threads)
    _write_report(rep, args)


def cmd_interp_sweep(args):
    schemes = tuple(s.strip() for s in args.schemes.split(",") if s.strip())
    rep = ex.run_interp_sweep(args.points, args.seed, args.n_sources, ex.aperture_index(args.aperture),
                              schemes, args.model, args.threads)
    _write_report(rep, args)


def cmd_model_info(args):
    with open(args.model, "rb") as fh:
        info, _ = operator_net.read_model_header(fh.read())
    _emit([f"{k} = {','.join(map(str, v)) if isinstance(v, list) else v}" for k, v in info.items()])


COMMANDS = {
    "gen-data": cmd_gen_data, "train": cmd_train, "predict": cmd_predict, "dsm": cmd_dsm,
    "bounds": cmd_bounds, "example-2-1": cmd_example, "table-1": cmd_example, "table-2": cmd_table,
    "table-3": cmd_table, "interp-sweep": cmd_interp_sweep, "model-info": cmd_model_info,
}


def main(argv=None):
    argv = sys.argv[1:] if argv is None else list(argv)
    try:
        args = parse(argv)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return 1
    except SystemExit as exc:  # --help / --version
        return 0 if exc.code in (0, None) else 1
    level = logging.WARNING if args.quiet else logging.INFO
    logging.basicConfig(level=level, stream=sys.stderr, format="%(message)s", force=True)
    log.info("helios %s %s", __version__, args.command)
    for key, value in _resolved(args).items():
        log.info("  %s = %s", key, value)
    try:
        COMMANDS[args.command](args)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return 1
    except (HeliosError, OSError, ValueError) as exc:
        print(f"helios: error: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
