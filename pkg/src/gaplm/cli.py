"""Command-line interface: fit, select, study, simulate.

Exit codes: 0 success, 2 input error, 3 convergence failure.
"""
from __future__ import annotations

import argparse
import csv
import dataclasses
import json
import logging
import os
import sys

import numpy as np

from .core import ClusterDataset, ConvergenceError, DomainError, FitConfig, GaplmError, validate_dataset
from .qif import QIFProblem, beta_covariance
from .simulate import DESIGNS, generate
from .study import VARIANTS, run_study, summaries_to_csv, summaries_to_json
from .tuning import select_lambda

EXIT_OK, EXIT_INPUT, EXIT_CONVERGENCE = 0, 2, 3
ALPHA_GRID = 101


class InputError(GaplmError):
    pass


# ---------------------------------------------------------------- data files

def read_csv(path) -> ClusterDataset:
    """Read ``cluster,t,y,x1..x{d_x},z1..z{d_z}``; rows sorted by (cluster, t), z1 the intercept."""
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise InputError(f"{path}: empty file")
    header = [h.strip() for h in rows[0]]
    if header[:3] != ["cluster", "t", "y"]:
        raise InputError(f"{path}: header must start with cluster,t,y")
    xs = [h for h in header[3:] if h.startswith("x")]
    zs = [h for h in header[3:] if h.startswith("z")]
    if header[3:] != xs + zs or xs != [f"x{i + 1}" for i in range(len(xs))] \
            or zs != [f"z{i + 1}" for i in range(len(zs))]:
        raise InputError(f"{path}: expected columns x1..x<d_x> then z1..z<d_z>")
    if not zs:
        raise InputError(f"{path}: missing intercept column z1")
    body = [r for r in rows[1:] if r]
    if not body:
        raise InputError(f"{path}: no data rows")
    try:
        arr = np.array([[float(v) for v in r] for r in body])
    except ValueError as exc:
        raise InputError(f"{path}: non-numeric value ({exc})") from None
    if arr.shape[1] != len(header):
        raise InputError(f"{path}: ragged rows")
    cl, t = arr[:, 0], arr[:, 1]
    order = np.lexsort((t, cl))
    if np.any(order != np.arange(len(order))):
        raise InputError(f"{path}: rows must be sorted by (cluster, t)")
    _, sizes = np.unique(cl, return_counts=True)
    # np.unique sorts; rows are sorted, so counts follow cluster order
    ds = ClusterDataset.from_arrays(arr[:, 2], arr[:, 3:3 + len(xs)],
                                    arr[:, 3 + len(xs):], sizes)
    rep = validate_dataset(ds)
    if not rep.ok:
        raise InputError(f"{path}: " + "; ".join(rep.violations))
    return ds


def write_csv(ds: ClusterDataset, path):
    y, x, z = ds.stacked
    cid = np.repeat(np.arange(1, ds.n + 1), ds.sizes)
    t = np.concatenate([np.arange(1, s + 1) for s in ds.sizes])
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["cluster", "t", "y"] + [f"x{l + 1}" for l in range(ds.d_x)]
                   + [f"z{j + 1}" for j in range(ds.d_z)])
        for i in range(len(y)):
            w.writerow([int(cid[i]), int(t[i]), repr(float(y[i]))]
                       + [repr(float(v)) for v in x[i]] + [repr(float(v)) for v in z[i]])


# ---------------------------------------------------------------- config

_FIT_FIELDS = {f.name for f in dataclasses.fields(FitConfig)}


def build_config(args) -> FitConfig:
    """JSON file values first, then explicit flags."""
    values = {}
    if getattr(args, "config", None):
        with open(args.config, encoding="utf-8") as fh:
            raw = json.load(fh)
        if not isinstance(raw, dict):
            raise InputError("config file must hold a JSON object")
        values.update({k: v for k, v in raw.items() if k in _FIT_FIELDS})
    flag_map = {"order": "order", "structure": "structure", "family": "family",
                "penalty": "penalty", "lambdas": "lambdas", "tol": "tol", "eps": "eps",
                "max_iter": "max_iter", "ebic": "ebic", "n_lambda": "n_lambda"}
    for flag, name in flag_map.items():
        v = getattr(args, flag, None)
        if v is not None:
            values[name] = v
    for key in ("lambdas", "unpenalized_z"):
        if key in values and values[key] is not None:
            values[key] = tuple(values[key])
    if getattr(args, "cold_start", False):
        values["warm_start"] = False
    try:
        return FitConfig(**values)
    except (TypeError, DomainError) as exc:
        raise InputError(f"bad configuration: {exc}") from None


def _seed(args):
    if getattr(args, "seed", None) is not None:
        return args.seed
    env = os.environ.get("GAPLM_SEED")
    if env is not None:
        try:
            return int(env)
        except ValueError:
            raise InputError("GAPLM_SEED must be an integer") from None
    return 0


# ---------------------------------------------------------------- outputs

def _names(ds):
    return [f"x{l + 1}" for l in range(ds.d_x)], [f"z{j + 1}" for j in range(ds.d_z)]


def _fit_payload(ds, config, report, records=None, covariance=False):
    xn, zn = _names(ds)
    grid, alpha = report.alpha_grid(ALPHA_GRID, centering="integral")
    out = {
        "lambda": report.lam,
        "beta": report.beta.tolist(),
        "beta_integral_centered": report.beta_integral_centered().tolist(),
        "gamma": {xn[l]: report.gamma(l).tolist() for l in range(ds.d_x)},
        "alpha_grid": grid.tolist(),
        "alpha": {xn[l]: alpha[l].tolist() for l in range(ds.d_x)},
        "active_x": [xn[l] for l in report.active_x],
        "active_z": [zn[j] for j in report.active_z],
        "ebic": report.ebic,
        "Q": report.Q,
        "objective": report.objective,
        "trace": report.trace,
        "n_iter": report.n_iter,
        "converged": report.converged,
        "n_interior_knots": report.splines.n_interior,
        "config": {k: (list(v) if isinstance(v, tuple) else v)
                   for k, v in dataclasses.asdict(config).items()},
    }
    if records is not None:
        out["path"] = [dataclasses.asdict(r) for r in records]
    if covariance:
        out["beta_cov"] = selected_beta_covariance(ds, config, report).tolist()
    return out


def selected_beta_covariance(ds, config, report):
    """Sandwich covariance of beta-hat for the selected model, (d_z x d_z) with zeros elsewhere."""
    xs, zs = list(report.active_x), list(report.active_z)
    sub = ds.subset_columns(xs, zs)
    problem = QIFProblem(sub, report.splines.subset(xs), config.structure, config.family,
                         config.ridge)
    theta = np.concatenate([report.beta[zs]] + [report.gamma(l) for l in xs])
    cov_sub = beta_covariance(problem, theta)
    cov = np.zeros((ds.d_z, ds.d_z))
    cov[np.ix_(zs, zs)] = cov_sub
    return cov


def write_alpha_csv(report, ds, path):
    xn, _ = _names(ds)
    grid, alpha = report.alpha_grid(ALPHA_GRID, centering="integral")
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["covariate", "x", "alpha_hat"])
        for l in range(ds.d_x):
            for g, a in zip(grid, alpha[l]):
                w.writerow([xn[l], repr(float(g)), repr(float(a))])


def _dump(obj, path):
    text = json.dumps(obj, indent=2)
    if path in (None, "-"):
        sys.stdout.write(text + "\n")
    else:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(text + "\n")


# ---------------------------------------------------------------- commands

def cmd_fit(args):
    ds = read_csv(args.data)
    config = build_config(args)
    if config.penalty != "none" and config.lambdas is None:
        config = dataclasses.replace(config, lambdas=(0.0,))
    _, report, _ = select_lambda(ds, config)
    _dump(_fit_payload(ds, config, report, covariance=args.covariance), args.output)
    if args.alpha_csv:
        write_alpha_csv(report, ds, args.alpha_csv)


def cmd_select(args):
    ds = read_csv(args.data)
    config = build_config(args)
    _, report, records = select_lambda(ds, config)
    _dump(_fit_payload(ds, config, report, records, covariance=args.covariance), args.output)
    if args.alpha_csv:
        write_alpha_csv(report, ds, args.alpha_csv)


def cmd_study(args):
    config = build_config(args)
    seed = _seed(args)
    summaries = []
    for n in args.n:
        for structure in args.structures:
            for variant in args.variants:
                summaries.append(run_study(args.design, n, args.R, seed, structure, variant,
                                           config, args.threads))
    text = summaries_to_csv(summaries)
    if args.output in (None, "-"):
        sys.stdout.write(text)
    else:
        with open(args.output, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
    if args.json:
        with open(args.json, "w", encoding="utf-8") as fh:
            fh.write(summaries_to_json(summaries) + "\n")


def cmd_simulate(args):
    ds, truth = generate(args.design, args.n, _seed(args))
    write_csv(ds, args.output)


# ---------------------------------------------------------------- parser

def _fit_flags(p, model=True):
    p.add_argument("--config", help="JSON file with FitConfig fields")
    p.add_argument("--order", type=int, help="spline degree p (1 = linear)")
    if model:
        # studies take the structure from --structures and the family from the design
        p.add_argument("--structure", choices=("IND", "EC", "AR1"))
        p.add_argument("--family", choices=("gaussian", "binomial"))
    p.add_argument("--penalty", choices=("SCAD", "LASSO", "none"))
    p.add_argument("--lambdas", type=float, nargs="+", help="lambda grid")
    p.add_argument("--n-lambda", dest="n_lambda", type=int)
    p.add_argument("--ebic", choices=("auto", "qif", "likelihood"))
    p.add_argument("--tol", type=float)
    p.add_argument("--eps", type=float)
    p.add_argument("--max-iter", dest="max_iter", type=int)
    p.add_argument("--cold-start", action="store_true", help="start every lambda from the unpenalized fit")


def build_parser():
    ap = argparse.ArgumentParser(prog="gaplm", description=__doc__.splitlines()[0])
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    for name, fn, helptext in (("fit", cmd_fit, "fit at one lambda (default 0)"),
                               ("select", cmd_select, "lambda path with EBIC selection")):
        p = sub.add_parser(name, help=helptext)
        p.add_argument("data", help="input CSV")
        p.add_argument("-o", "--output", default="-", help="output JSON (default stdout)")
        p.add_argument("--alpha-csv", help="write the fitted components on a 101-point grid")
        p.add_argument("--covariance", action="store_true", help="include the sandwich covariance of beta")
        _fit_flags(p)
        p.set_defaults(func=fn)

    p = sub.add_parser("study", help="replication study")
    p.add_argument("--design", choices=sorted(DESIGNS), default="example1")
    p.add_argument("--n", type=int, nargs="+", default=[200])
    p.add_argument("--R", type=int, default=100)
    p.add_argument("--seed", type=int)
    p.add_argument("--structures", nargs="+", default=["EC"], choices=("IND", "EC", "AR1"))
    p.add_argument("--variants", nargs="+", default=["SCAD"], choices=VARIANTS)
    p.add_argument("--threads", type=int, default=1)
    p.add_argument("-o", "--output", default="-", help="summary CSV (default stdout)")
    p.add_argument("--json", help="also write summaries and per-replication records as JSON")
    _fit_flags(p, model=False)
    p.set_defaults(func=cmd_study)

    p = sub.add_parser("simulate", help="write one simulated dataset as CSV")
    p.add_argument("--design", choices=sorted(DESIGNS), default="example1")
    p.add_argument("--n", type=int, default=200)
    p.add_argument("--seed", type=int)
    p.add_argument("-o", "--output", required=True)
    p.set_defaults(func=cmd_simulate)
    return ap


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.ERROR,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        args.func(args)
    except ConvergenceError as exc:
        path = _trace_path(args)
        with open(path, "w", encoding="utf-8") as fh:
            json.dump({"error": str(exc), "trace": [float(v) for v in (exc.trace or [])]}, fh)
        print(f"gaplm: convergence failure: {exc} (trace written to {path})", file=sys.stderr)
        return EXIT_CONVERGENCE
    except (GaplmError, OSError, ValueError) as exc:
        print(f"gaplm: input error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    return EXIT_OK


def _trace_path(args):
    out = getattr(args, "output", None)
    if out in (None, "-"):
        return "gaplm-trace.json"
    return out + ".trace.json"


if __name__ == "__main__":
    sys.exit(main())
