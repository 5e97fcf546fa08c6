"""Command-line entry point ``slk``.

Exit codes: 0 success, 1 usage error, 2 data error, 3 non-convergence (the
partial result is still written).  ``SLK_SEED`` overrides ``--seed``.
"""

import argparse
import json
import logging
import math
import os
import sys

import numpy as np

from .adaptive import DyadicGrid, SelectorConfig, run_adaptive
from .conditions import ConeSpec, cone_constant_bracket, sparse_eigenvalues
from .core import C_SQ2, read_csv_matrix, read_csv_vector, slope_weights
from .estimators import (SCHEMA_VERSION, LassoConfig, SlopeConfig, TuningContext,
                         fit_lasso, fit_slope, lasso_tuning_lambda)
from .harness import ExperimentConfig, SCENARIOS, emit_data, simulate

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NONCONV = 0, 1, 2, 3


class UsageError(Exception):
    pass


class DataError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _seed(args):
    env = os.environ.get("SLK_SEED")
    if env is not None and env != "":
        try:
            return int(env)
        except ValueError:
            raise UsageError(f"SLK_SEED must be an integer, got {env!r}") from None
    return args.seed


def _dump(obj, path):
    text = json.dumps(obj, indent=2, sort_keys=True) + "\n"
    if path:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def _read_matrix(path):
    try:
        return read_csv_matrix(path)
    except OSError as exc:
        raise DataError(f"cannot read {path}: {exc.strerror}") from None
    except ValueError as exc:
        raise DataError(str(exc)) from None


def _read_vector(path):
    try:
        return read_csv_vector(path)
    except OSError as exc:
        raise DataError(f"cannot read {path}: {exc.strerror}") from None
    except ValueError as exc:
        raise DataError(str(exc)) from None


def _load_xy(args):
    x = _read_matrix(args.design)
    y = _read_vector(args.response)
    if y.size != x.shape[0]:
        raise DataError(f"response has {y.size} entries but the design has {x.shape[0]} rows")
    if not (np.all(np.isfinite(x)) and np.all(np.isfinite(y))):
        raise DataError("design and response must be finite")
    return x, y


def _positive(name, v):
    if v is None or not (math.isfinite(v) and v > 0):
        raise UsageError(f"{name} must be a positive finite number")


# ---------------------------------------------------------------------------
# subcommands

def cmd_fit(args):
    if args.estimator == "lasso":
        if args.lam is None and None in (args.sigma, args.sparsity, args.gamma):
            raise UsageError("lasso needs --lambda or all of --sigma, --sparsity, --gamma")
    elif args.weights is None and None in (args.sigma, args.a):
        raise UsageError("slope needs --weights or both --sigma and --a")
    x, y = _load_xy(args)
    n, p = x.shape
    if args.estimator == "lasso":
        if args.lam is not None:
            _positive("--lambda", args.lam)
            lam, tuning = args.lam, {"rule": "explicit"}
        else:
            _positive("--sigma", args.sigma)
            try:
                ctx = TuningContext(s=args.sparsity, n=n, p=p, sigma=args.sigma,
                                    gamma=args.gamma, tau=args.tau)
            except ValueError as exc:
                raise UsageError(str(exc)) from None
            lam = lasso_tuning_lambda(ctx, args.multiplier)
            tuning = {"rule": "sparsity-aware", "sigma": args.sigma, "sparsity": args.sparsity,
                      "gamma": args.gamma, "tau": args.tau, "multiplier": args.multiplier}
        cfg = LassoConfig(lam, max_iters=args.max_iters, gap_tol=args.gap_tol,
                          strategy=args.strategy)
        res = fit_lasso(x, y, cfg)
    else:
        if args.weights is not None:
            w = _read_vector(args.weights)
            tuning = {"rule": "explicit"}
        else:
            _positive("--sigma", args.sigma)
            _positive("--a", args.a)
            w = slope_weights(n, p, args.sigma, args.a)
            tuning = {"rule": "recommended", "sigma": args.sigma, "a": args.a}
        try:
            cfg = SlopeConfig(w, max_iters=args.max_iters, gap_tol=args.gap_tol)
        except ValueError as exc:
            raise DataError(f"weights: {exc}") from None
        if cfg.weights.size != p:
            raise DataError(f"{cfg.weights.size} weights for {p} columns")
        res = fit_slope(x, y, cfg)
    res.tuning.update(tuning)
    _dump(res.to_dict(), args.out)
    sys.stderr.write("tuning: " + json.dumps(res.tuning if args.estimator == "lasso"
                                             else {k: v for k, v in res.tuning.items()
                                                   if k != "weights"}, sort_keys=True) + "\n")
    if not res.converged:
        sys.stderr.write(f"solver did not converge (duality gap {res.duality_gap:.3e})\n")
        return EXIT_NONCONV
    return EXIT_OK


def cmd_weights(args):
    if args.n < 1 or args.p < 1:
        raise UsageError("--n and --p must be positive")
    _positive("--sigma", args.sigma)
    _positive("--a", args.a)
    w = slope_weights(args.n, args.p, args.sigma, args.a)
    text = "".join(f"{v:.17g}\n" for v in w)
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)
    return EXIT_OK


def cmd_certify(args):
    if args.s < 1:
        raise UsageError("--s must be >= 1")
    if args.condition != "sparse-eig":
        _positive("--c0", args.c0)
    x = _read_matrix(args.design)
    n, p = x.shape
    if args.s > p:
        raise UsageError(f"--s exceeds the number of columns ({p})")
    seed = _seed(args)
    report = {"schema_version": SCHEMA_VERSION, "condition": args.condition, "s": args.s,
              "seed": seed, "budget": args.budget}
    if args.condition == "sparse-eig":
        try:
            tmin, tmax, wit = sparse_eigenvalues(x, args.s, args.budget, return_witness=True)
        except ValueError as exc:
            raise UsageError(str(exc)) from None
        report.update({"lower": tmin, "upper": tmin, "theta_min": tmin, "theta_max": tmax,
                       "witness": [float(v) for v in wit], "method": "exhaustive"})
    else:
        report["c0"] = args.c0
        weights = None
        if args.condition == "wre":
            if args.weights is not None:
                weights = _read_vector(args.weights)
            else:
                weights = slope_weights(n, p, args.sigma, args.a)
            report["weights"] = [float(v) for v in weights]
        try:
            cone = ConeSpec(args.condition.upper(), args.s, args.c0, weights)
        except ValueError as exc:
            raise DataError(str(exc)) from None
        br = cone_constant_bracket(x, cone, restarts=args.restarts, iters=args.iters,
                                   seed=seed, budget=args.budget,
                                   chain_budget=args.chain_budget)
        report.update(br.to_dict())
    _dump(report, args.out)
    return EXIT_OK


def cmd_adapt(args):
    if args.s_star < 2:
        raise UsageError("--s-star must be at least 2")
    _positive("--sigma", args.sigma)
    theta = args.theta_star
    if theta is None:
        sys.stderr.write("warning: --theta-star not given; using 1\n")
        theta = 1.0
    metric = "prediction" if args.metric == "prediction" else "lq"
    q = {"prediction": 2.0, "l1": 1.0, "l2": 2.0}[args.metric]
    try:
        cfg = SelectorConfig(sigma=args.sigma, metric=metric, q=q, theta_star=theta,
                             c0_constant=args.c0_constant)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    x, y = _load_xy(args)
    if args.s_star > x.shape[1]:
        raise UsageError("--s-star exceeds the number of columns")
    res = run_adaptive(x, y, cfg, DyadicGrid(args.s_star), max_iters=args.max_iters,
                       gap_tol=args.gap_tol)
    out = res.to_dict()
    _dump(out, args.out)
    return EXIT_OK if out["converged"] else EXIT_NONCONV


def cmd_simulate(args):
    conf = {}
    if args.config:
        try:
            with open(args.config, encoding="utf-8") as fh:
                conf = json.load(fh)
        except OSError as exc:
            raise DataError(f"cannot read {args.config}: {exc.strerror}") from None
        except json.JSONDecodeError as exc:
            raise DataError(f"{args.config}: {exc}") from None
        if not isinstance(conf, dict):
            raise DataError("config must be a JSON object")
    conf.pop("schema_version", None)
    conf["scenario"] = args.scenario
    if args.replicates is not None:
        conf["replicates"] = args.replicates
    seed = _seed(args)
    if seed is not None:
        conf["seed"] = seed
    try:
        cfg = ExperimentConfig.from_dict(conf)
    except (TypeError, ValueError) as exc:
        raise UsageError(f"bad config: {exc}") from None
    if args.threads < 1:
        raise UsageError("--threads must be >= 1")
    if args.emit_data:
        emit_data(cfg, args.emit_data)
    try:
        rep = simulate(cfg, threads=args.threads)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    text = rep.to_json() + "\n"
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)
    if args.csv:
        rep.write_csv(args.csv)
    return EXIT_OK


# ---------------------------------------------------------------------------

def build_parser():
    p = _Parser(prog="slk", description="Sparse regression with Lasso and Slope.")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def common(sp, seed=0):
        sp.add_argument("--seed", type=int, default=seed, help="RNG seed (SLK_SEED overrides)")
        sp.add_argument("--out", help="output file (default: stdout)")

    def solver(sp):
        sp.add_argument("--max-iters", type=int, default=100_000)
        sp.add_argument("--gap-tol", type=float, default=None,
                        help="duality-gap tolerance (default 1e-8 (1 + ||y||_n^2))")

    f = sub.add_parser("fit", help="fit Lasso or Slope")
    f.add_argument("--estimator", choices=("lasso", "slope"), required=True)
    f.add_argument("--design", required=True, help="design matrix CSV")
    f.add_argument("--response", required=True, help="response vector CSV")
    f.add_argument("--lambda", dest="lam", type=float, help="Lasso penalty level")
    f.add_argument("--sigma", type=float)
    f.add_argument("--sparsity", type=int)
    f.add_argument("--gamma", type=float)
    f.add_argument("--tau", type=float, default=0.25)
    f.add_argument("--multiplier", type=float, default=1.0)
    f.add_argument("--a", type=float, help="Slope weight constant")
    f.add_argument("--weights", help="Slope weights CSV")
    f.add_argument("--strategy", choices=("fista", "cd"), default="fista")
    solver(f)
    common(f)
    f.set_defaults(func=cmd_fit)

    w = sub.add_parser("weights", help="print the recommended Slope weights")
    w.add_argument("--n", type=int, required=True)
    w.add_argument("--p", type=int, required=True)
    w.add_argument("--sigma", type=float, required=True)
    w.add_argument("--a", type=float, required=True)
    common(w)
    w.set_defaults(func=cmd_weights)

    c = sub.add_parser("certify", help="bracket RE/SRE/WRE or sparse-eigenvalue constants")
    c.add_argument("--design", required=True)
    c.add_argument("--condition", choices=("re", "sre", "wre", "sparse-eig"), required=True)
    c.add_argument("--s", type=int, required=True)
    c.add_argument("--c0", type=float, default=1.0)
    c.add_argument("--budget", type=int, default=1_000_000, help="max supports enumerated")
    c.add_argument("--chain-budget", type=int, default=20_000,
                   help="total supports enumerated for the certified lower bound")
    c.add_argument("--restarts", type=int, default=200)
    c.add_argument("--iters", type=int, default=200)
    c.add_argument("--sigma", type=float, default=1.0, help="for WRE weights")
    c.add_argument("--a", type=float, default=2 * C_SQ2, help="for WRE weights")
    c.add_argument("--weights", help="WRE weights CSV")
    common(c)
    c.set_defaults(func=cmd_certify)

    a = sub.add_parser("adapt", help="adaptive sparsity selection over a dyadic grid")
    a.add_argument("--design", required=True)
    a.add_argument("--response", required=True)
    a.add_argument("--sigma", type=float, required=True)
    a.add_argument("--s-star", type=int, required=True)
    a.add_argument("--metric", choices=("prediction", "l1", "l2"), default="prediction")
    a.add_argument("--theta-star", type=float, default=None)
    a.add_argument("--c0-constant", type=float, default=None)
    solver(a)
    common(a)
    a.set_defaults(func=cmd_adapt)

    s = sub.add_parser("simulate", help="run a Monte-Carlo scenario")
    s.add_argument("--scenario", choices=SCENARIOS, required=True)
    s.add_argument("--config", help="JSON file with experiment settings")
    s.add_argument("--replicates", type=int)
    s.add_argument("--csv", help="per-replicate records as CSV")
    s.add_argument("--threads", type=int, default=1)
    s.add_argument("--emit-data", metavar="DIR",
                   help="also write X.csv, beta.csv, y.csv of replicate 0")
    common(s, seed=None)
    s.set_defaults(func=cmd_simulate)
    return p


def main(argv=None):
    logging.basicConfig(level=logging.WARNING, format="%(levelname)s: %(message)s")
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except UsageError as exc:
        sys.stderr.write(f"slk {args.command}: error: {exc}\n")
        return EXIT_USAGE
    except DataError as exc:
        sys.stderr.write(f"slk {args.command}: data error: {exc}\n")
        return EXIT_DATA
    except (OSError, ValueError) as exc:
        sys.stderr.write(f"slk {args.command}: data error: {exc}\n")
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
