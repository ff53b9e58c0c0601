"""Command line interface: ``psderiv {fit,simulate,rates,compare}``.

Tabular output is CSV (header row, LF line endings), structured output is
JSON. Floats are written with 17 significant digits. Each command also writes
a ``*manifest.json`` that echoes the merged configuration.
"""

import argparse
import csv
import datetime as _dt
import json
import logging
import math
import os
from pathlib import Path
import sys

import numpy as np

from . import __version__
from .errors import PSplineError
from .experiment import (
    ExperimentConfig,
    compare_oracle,
    estimate_rate,
    generate_data,
    replicate_seed,
    run_sweep,
    test_function,
)
from .model import FitConfig, fit
from .selection import LambdaGrid

logger = logging.getLogger("psderiv")


class CLIError(Exception):
    """Bad input or an output that failed validation; exit code 2."""


# ---------------------------------------------------------------------------
# serialization
# ---------------------------------------------------------------------------


def fmt(v):
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    v = float(v)
    if not math.isfinite(v):
        raise CLIError(f"refusing to write non-finite value {v}")
    return format(v, ".17g")


def to_json(obj, indent=0):
    """JSON text with floats at 17 significant digits."""
    pad = "  " * (indent + 1)
    end = "  " * indent
    if obj is None:
        return "null"
    if isinstance(obj, (bool, np.bool_, int, np.integer, float, np.floating)):
        return fmt(obj)
    if isinstance(obj, str):
        return json.dumps(obj)
    if isinstance(obj, dict):
        if not obj:
            return "{}"
        items = [f"{pad}{json.dumps(str(k))}: {to_json(v, indent + 1)}" for k, v in obj.items()]
        return "{\n" + ",\n".join(items) + "\n" + end + "}"
    if isinstance(obj, (list, tuple, np.ndarray)):
        if len(obj) == 0:
            return "[]"
        items = [pad + to_json(v, indent + 1) for v in obj]
        return "[\n" + ",\n".join(items) + "\n" + end + "]"
    raise TypeError(f"cannot serialize {type(obj).__name__}")


def write_json(path, obj):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(to_json(obj) + "\n")
    return path


def write_csv(path, header, rows):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([v if isinstance(v, str) else fmt(v) for v in row])
    return path


def read_xy_csv(path):
    """Read an ``x,y`` CSV; errors carry the offending line number."""
    xs, ys = [], []
    try:
        fh = open(path, encoding="utf-8", newline="")
    except OSError as exc:
        raise CLIError(f"cannot read {path}: {exc}") from None
    with fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise CLIError(f"{path}: empty file") from None
        if [h.strip().lower() for h in header] != ["x", "y"]:
            raise CLIError(f"{path}:1: expected header 'x,y', got {','.join(header)!r}")
        for row in reader:
            line = reader.line_num
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != 2:
                raise CLIError(f"{path}:{line}: expected 2 fields, got {len(row)}")
            try:
                x, y = float(row[0]), float(row[1])
            except ValueError:
                raise CLIError(f"{path}:{line}: cannot parse {','.join(row)!r}") from None
            if not (math.isfinite(x) and math.isfinite(y)):
                raise CLIError(f"{path}:{line}: non-finite value")
            xs.append(x)
            ys.append(y)
    if not xs:
        raise CLIError(f"{path}: no data rows")
    return np.array(xs), np.array(ys)


def validate_csv(path, header):
    with open(path, encoding="utf-8", newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows or rows[0] != list(header):
        raise CLIError(f"{path}: header mismatch")
    for i, row in enumerate(rows[1:], start=2):
        if len(row) != len(header):
            raise CLIError(f"{path}:{i}: expected {len(header)} fields")
        for cell in row:
            try:
                ok = math.isfinite(float(cell))
            except ValueError:
                ok = True  # text column
            if not ok:
                raise CLIError(f"{path}:{i}: non-finite value")


def validate_json(path, keys):
    with open(path, encoding="utf-8") as fh:
        data = json.load(fh)
    missing = [k for k in keys if k not in data]
    if missing:
        raise CLIError(f"{path}: missing keys {missing}")
    return data


def timestamp():
    # SOURCE_DATE_EPOCH pins the manifest timestamp for reproducible reruns
    epoch = os.environ.get("SOURCE_DATE_EPOCH")
    if epoch is not None:
        t = _dt.datetime.fromtimestamp(int(epoch), tz=_dt.timezone.utc)
    else:
        t = _dt.datetime.now(tz=_dt.timezone.utc)
    return t.strftime("%Y-%m-%dT%H:%M:%SZ")


def write_manifest(path, command, config, seed, outputs):
    manifest = {
        "command": command,
        "config": config,
        "seed": seed,
        "version": __version__,
        "timestamp": timestamp(),
        # relative to the manifest so a moved or re-run directory is identical
        "outputs": [os.path.relpath(p, Path(path).parent) for p in outputs],
    }
    return write_json(path, manifest)


# ---------------------------------------------------------------------------
# configuration merging
# ---------------------------------------------------------------------------


def _load_config(path):
    if path is None:
        return {}
    try:
        with open(path, encoding="utf-8") as fh:
            data = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise CLIError(f"cannot read config {path}: {exc}") from None
    if not isinstance(data, dict):
        raise CLIError(f"config {path} must be a JSON object")
    return {k.replace("-", "_"): v for k, v in data.items()}


def merged(args, defaults):
    """defaults <- config file <- explicitly given flags."""
    out = dict(defaults)
    out.update({k: v for k, v in _load_config(args.config).items() if k in defaults})
    for k in defaults:
        v = getattr(args, k, None)
        if v is not None:
            out[k] = v
    return out


def _int_list(text):
    try:
        vals = [int(v) for v in str(text).split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}")
    return vals


def jobs_from(args):
    if args.jobs is not None:
        return max(1, args.jobs)
    env = os.environ.get("PSDERIV_JOBS")
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            raise CLIError(f"PSDERIV_JOBS must be an integer, got {env!r}") from None
    return 1


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------

FIT_DEFAULTS = {
    "q": 4,
    "m": 2,
    "knots": None,
    "scenario": None,
    "select": "gcv",
    "lam": None,
    "eval_grid": 401,
    "lam_min": 1e-12,
    "lam_max": 1e2,
    "lam_count": 85,
    "unscaled_penalty": False,
    "seed": 0,
}


def cmd_fit(args):
    cfg = merged(args, FIT_DEFAULTS)
    if cfg["knots"] is None and cfg["scenario"] is None:
        cfg["scenario"] = "slow"
    xs, ys = read_xy_csv(args.input)
    if np.any((xs < 0.0) | (xs > 1.0)):
        bad = xs[(xs < 0.0) | (xs > 1.0)][0]
        raise CLIError(f"data error: x={bad!r} outside [0, 1]; rescale x first")
    if cfg["eval_grid"] < 2:
        raise CLIError("--eval-grid must be >= 2")
    config = FitConfig(
        q=cfg["q"],
        m=cfg["m"],
        n_knots=cfg["knots"],
        scenario=None if cfg["knots"] is not None else cfg["scenario"],
        selector=cfg["select"],
        grid=LambdaGrid.log_spaced(cfg["lam_min"], cfg["lam_max"], cfg["lam_count"]),
        lam=cfg["lam"],
        scaled_penalty=not cfg["unscaled_penalty"],
    )
    model = fit(xs, ys, config)

    out = Path(args.out)
    eval_out = Path(args.eval_out) if args.eval_out else out.with_suffix(".csv")
    grid = np.linspace(0.0, 1.0, cfg["eval_grid"])
    orders = list(range(0, min(2, model.q - 2) + 1))
    cols = [grid] + [model.predict_derivative(r, grid) for r in orders]
    header = ["x", "f", "d1", "d2"][: len(orders) + 1]
    write_csv(eval_out, header, zip(*cols))
    report = {
        "lambda": model.lam,
        "selector": model.selector,
        "K": model.K,
        "q": model.q,
        "m": model.m,
        "n": model.n,
        "hat_trace": model.hat_trace,
        "rss": model.rss,
        "ridged": model.ridged,
        "interior_knots": model.knots.interior.tolist(),
        "alpha_hat": model.alpha_hat.tolist(),
        "eval_csv": str(eval_out),
    }
    write_json(out, report)
    manifest = out.with_name(out.stem + ".manifest.json")
    write_manifest(manifest, "fit", {**cfg, "input": str(args.input)}, cfg["seed"], [out, eval_out])
    validate_json(out, ["lambda", "K", "q", "m", "hat_trace", "rss"])
    validate_csv(eval_out, header)
    return [out, eval_out, manifest]


SIM_DEFAULTS = {"fn": "f2", "n": 1000, "sigma": 0.1, "noise_fraction": False, "seed": 0, "rep": 0}


def cmd_simulate(args):
    cfg = merged(args, SIM_DEFAULTS)
    fn = test_function(cfg["fn"])
    sd = cfg["sigma"] * fn.range_span if cfg["noise_fraction"] else cfg["sigma"]
    xs, ys = generate_data(fn, cfg["n"], sd, replicate_seed(cfg["seed"], cfg["n"], cfg["rep"]))
    out = Path(args.out)
    write_csv(out, ["x", "y"], zip(xs, ys))
    manifest = out.with_name(out.stem + ".manifest.json")
    write_manifest(manifest, "simulate", cfg, cfg["seed"], [out])
    validate_csv(out, ["x", "y"])
    return [out, manifest]


EXP_DEFAULTS = {
    "fn": "f2",
    "ns": [250, 500, 1000, 2000, 4000],
    "reps": 100,
    "sigma": 0.1,
    "noise_fraction": False,
    "scenario": "slow",
    "select": "gcv",
    "seed": 0,
    "q": 4,
    "m": 2,
    "c_slow": 8.0,
    "c_fast": 4.0,
    "lam_min": 1e-12,
    "lam_max": 1e2,
    "lam_count": 85,
    "ise_grid": 2001,
}


def _experiment_config(cfg):
    return ExperimentConfig(
        function=cfg["fn"],
        ns=tuple(cfg["ns"]),
        reps=cfg["reps"],
        sigma=cfg["sigma"],
        noise_fraction=cfg["noise_fraction"],
        scenario=cfg["scenario"],
        selector=cfg["select"],
        seed=cfg["seed"],
        q=cfg["q"],
        m=cfg["m"],
        c_slow=cfg["c_slow"],
        c_fast=cfg["c_fast"],
        lam_min=cfg["lam_min"],
        lam_max=cfg["lam_max"],
        lam_count=cfg["lam_count"],
        ise_grid=cfg["ise_grid"],
        targets=tuple(range(0, min(2, cfg["q"] - 2) + 1)),
    )


def cmd_rates(args):
    cfg = merged(args, EXP_DEFAULTS)
    config = _experiment_config(cfg)
    records = run_sweep(config, jobs=jobs_from(args))[config.selector]
    out = Path(args.out)
    outputs = []
    reports = []
    header = ["n", "mean_ise", "sd_ise", "count"]
    for r in config.targets:
        rep = estimate_rate(records, r, p=2 * config.m)
        reports.append(rep.as_dict())
        rows = [
            (n, mu, sd, c)
            for (n, mu), (_, sd), (_, c) in zip(rep.per_n_mean_ise, rep.per_n_sd_ise, rep.per_n_count)
        ]
        outputs.append(write_csv(out / f"rates_r{r}.csv", header, rows))
    summary = {
        "function": config.function,
        "scenario": config.scenario,
        "selector": config.selector,
        "knots": {str(n): config.n_knots(n) for n in config.ns},
        "reports": reports,
    }
    outputs.append(write_json(out / "rates.json", summary))
    manifest = write_manifest(out / "manifest.json", "rates", cfg, cfg["seed"], outputs)
    for r in config.targets:
        validate_csv(out / f"rates_r{r}.csv", header)
    validate_json(out / "rates.json", ["reports", "selector", "scenario"])
    return outputs + [manifest]


def cmd_compare(args):
    cfg = merged(args, {**EXP_DEFAULTS, "ns": [1000]})
    config = _experiment_config(cfg)
    naive = config.selector if config.selector != "oracle" else "gcv"
    gap = compare_oracle(config, jobs=jobs_from(args), naive=naive)
    out = Path(args.out)
    header = ["n", "rep", "r", "ise_naive", "ise_oracle", "gap_percent"]
    paired = write_csv(out / "paired.csv", header, gap.per_replicate)
    summary = {
        "function": config.function,
        "scenario": config.scenario,
        "naive_selector": naive,
        "gap_percent": {str(r): v for r, v in gap.gaps.items()},
        "replicates": len(gap.per_replicate) // len(config.targets),
    }
    gaps = write_json(out / "gaps.json", summary)
    manifest = write_manifest(out / "manifest.json", "compare", cfg, cfg["seed"], [paired, gaps])
    validate_csv(paired, header)
    validate_json(gaps, ["gap_percent"])
    return [paired, gaps, manifest]


# ---------------------------------------------------------------------------
# parser
# ---------------------------------------------------------------------------


def _add_common(p):
    p.add_argument("--config", help="JSON file of options; explicit flags win")
    p.add_argument("--seed", type=int, default=None)


def _add_experiment(p):
    _add_common(p)
    p.add_argument("--fn", choices=["f1", "f2", "f3"], default=None)
    p.add_argument("--ns", type=_int_list, default=None, help="comma-separated sample sizes")
    p.add_argument("--reps", type=int, default=None)
    p.add_argument("--sigma", type=float, default=None)
    p.add_argument("--noise-fraction", action="store_true", default=None,
                   help="treat --sigma as a fraction of the function's range")
    p.add_argument("--scenario", choices=["slow", "fast"], default=None)
    p.add_argument("--select", choices=["gcv", "reml", "oracle"], default=None)
    p.add_argument("--q", type=int, default=None)
    p.add_argument("--m", type=int, default=None)
    p.add_argument("--c-slow", type=float, default=None)
    p.add_argument("--c-fast", type=float, default=None)
    p.add_argument("--lam-min", type=float, default=None)
    p.add_argument("--lam-max", type=float, default=None)
    p.add_argument("--lam-count", type=int, default=None)
    p.add_argument("--ise-grid", type=int, default=None)
    p.add_argument("--jobs", type=int, default=None, help="worker processes (env PSDERIV_JOBS)")
    p.add_argument("--out", required=True, help="output directory")


def build_parser():
    parser = argparse.ArgumentParser(prog="psderiv", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("fit", help="fit a P-spline to x,y data")
    _add_common(p)
    p.add_argument("--in", dest="input", required=True, help="CSV with header x,y")
    p.add_argument("--q", type=int, default=None)
    p.add_argument("--m", type=int, default=None)
    p.add_argument("--knots", type=int, default=None, help="number of interior knots")
    p.add_argument("--scenario", choices=["slow", "fast"], default=None)
    p.add_argument("--select", choices=["gcv", "reml"], default=None)
    p.add_argument("--lambda", dest="lam", type=float, default=None,
                   help="fixed smoothing parameter; skips selection")
    p.add_argument("--eval-grid", type=int, default=None)
    p.add_argument("--lam-min", type=float, default=None)
    p.add_argument("--lam-max", type=float, default=None)
    p.add_argument("--lam-count", type=int, default=None)
    p.add_argument("--unscaled-penalty", action="store_true", default=None)
    p.add_argument("--out", required=True, help="JSON report path")
    p.add_argument("--eval-out", default=None, help="CSV path (default: next to --out)")
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("simulate", help="write one simulated data set as x,y CSV")
    _add_common(p)
    p.add_argument("--fn", choices=["f1", "f2", "f3"], default=None)
    p.add_argument("--n", type=int, default=None)
    p.add_argument("--sigma", type=float, default=None)
    p.add_argument("--noise-fraction", action="store_true", default=None)
    p.add_argument("--rep", type=int, default=None)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("rates", help="Monte-Carlo L2 convergence rates")
    _add_experiment(p)
    p.set_defaults(func=cmd_rates)

    p = sub.add_parser("compare", help="naive vs oracle log-error gap")
    _add_experiment(p)
    p.set_defaults(func=cmd_compare)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        outputs = args.func(args)
    except (CLIError, PSplineError, ValueError) as exc:
        print(f"psderiv {args.command}: error: {exc}", file=sys.stderr)
        return 2
    for path in outputs:
        logger.info("wrote %s", path)
    return 0


if __name__ == "__main__":
    sys.exit(main())
