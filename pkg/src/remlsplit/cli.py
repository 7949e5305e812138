"""Command-line interface: ``remlsplit fit | verify | simulate``.

Exit codes
----------
0  success
1  verify: at least one identity check failed
2  configuration error (bad flags, config file, or parameters)
3  data error (missing column, non-numeric cell, rank-deficient X)
4  fit did not converge (max_iter)
5  numerical failure (singular curvature, matrix not positive definite)
6  fit stopped on the boundary of the parameter space
7  I/O error
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
import time

import numpy as np

from . import __version__
from .dataio import (
    SCHEMA_VERSION,
    RunConfig,
    dump_json,
    fit_report,
    parse_dataset,
    write_dataset,
)
from .errors import ConfigError, DataError, InfeasibleParams, RemlError
from .model import CovarianceModel, ThetaVector, indicator_matrix, require_feasible
from .simulate import SimSpec, monte_carlo_information, replicate_rng, sample_many
from .solver import METHODS, default_theta0, fit
from .verify import run_identity_suite

EXIT_OK = 0
EXIT_CHECK_FAILED = 1
EXIT_CONFIG = 2
EXIT_DATA = 3
EXIT_NONCONVERGENCE = 4
EXIT_NUMERICAL = 5
EXIT_BOUNDARY = 6
EXIT_IO = 7

STATUS_EXIT = {
    "converged": EXIT_OK,
    "max_iter": EXIT_NONCONVERGENCE,
    "singular-curvature": EXIT_NUMERICAL,
    "boundary": EXIT_BOUNDARY,
}

log = logging.getLogger("remlsplit")

# design rows are drawn from a stream no replicate index can collide with
_DESIGN_STREAM = 2**62


def _floats(text, what):
    try:
        return [float(t) for t in text.replace(";", ",").split(",") if t.strip()]
    except ValueError:
        raise ConfigError(f"{what}: expected comma-separated numbers, got {text!r}") from None


def _theta(values, model, what):
    values = list(values)
    if len(values) != model.m + 1:
        raise ConfigError(f"{what}: expected {model.m + 1} values (sigma2, {', '.join(model.param_names()) or 'no kappa'}), got {len(values)}")
    th = ThetaVector(values[0], values[1:])
    try:
        require_feasible(model, th)
    except InfeasibleParams as exc:
        raise ConfigError(f"{what}: {exc}") from exc
    return th


def _load_config(args):
    cfg = RunConfig.load(getattr(args, "config", None))
    if getattr(args, "method", None):
        cfg.solver = {**cfg.solver, "method": args.method}
    if getattr(args, "max_iter", None) is not None:
        cfg.solver = {**cfg.solver, "max_iter": args.max_iter}
    if getattr(args, "no_intercept", False):
        cfg.intercept = False
    if getattr(args, "seed", None) is not None:
        cfg.seed = args.seed
    if getattr(args, "replicates", None) is not None:
        cfg.replicates = args.replicates
    cfg.check()
    return cfg


# ---------------------------------------------------------------------------
# fit
# ---------------------------------------------------------------------------


def run_fit(args):
    cfg = _load_config(args)
    solver_cfg = cfg.solver_config()
    parsed = parse_dataset(args.data, cfg)
    data, model = parsed.dataset, parsed.model
    if args.theta0:
        theta0 = _theta(_floats(args.theta0, "--theta0"), model, "--theta0")
    elif cfg.theta0 is not None:
        theta0 = _theta(cfg.theta0, model, "theta0")
    else:
        theta0 = default_theta0(data, model)
    t0 = time.perf_counter()
    result = fit(data, model, theta0, solver_cfg)
    report = fit_report(result, cfg, data, time.perf_counter() - t0)
    dump_json(report, args.out)
    log.info("fit %s after %d iterations (loglik %.10g)", result.status, result.iterations, result.loglik)
    return STATUS_EXIT[result.status]


# ---------------------------------------------------------------------------
# verify
# ---------------------------------------------------------------------------


def run_verify(args):
    fit_rep = None
    if args.from_fit:
        with open(args.from_fit) as fh:
            fit_rep = json.load(fh)
    if args.config:
        cfg = _load_config(args)
    elif fit_rep is not None:
        cfg = RunConfig.from_dict(fit_rep["model"])
    else:
        raise ConfigError("verify needs --config when theta is given with --theta")
    parsed = parse_dataset(args.data, cfg)
    data, model = parsed.dataset, parsed.model
    if args.theta:
        theta = _theta(_floats(args.theta, "--theta"), model, "--theta")
    else:
        th = fit_rep["theta_hat"]
        theta = _theta([th["sigma2"], *th["kappa"]], model, "theta_hat")
    checks, warnings = run_identity_suite(data, model, theta, seed=args.check_seed)
    ok = all(c.passed for c in checks)
    report = {
        "schema_version": SCHEMA_VERSION,
        "kind": "verify",
        "theta": {"sigma2": theta.sigma2, "kappa": [float(k) for k in theta.kappa]},
        "model": cfg.model_description(),
        "checks": [c.to_dict() for c in checks],
        "warnings": warnings,
        "all_passed": ok,
    }
    dump_json(report, args.out)
    for c in checks:
        log.info("%-24s %-5s residual=%s", c.name, "PASS" if c.passed else "FAIL", c.residual)
    return EXIT_OK if ok else EXIT_CHECK_FAILED


# ---------------------------------------------------------------------------
# simulate
# ---------------------------------------------------------------------------


def _design(cfg):
    """Synthetic (X, Z) skeleton from ``cfg.design``.

    ``design = {"n": 40, "group_levels": {"g": 10}}`` assigns each grouping
    column ``L`` contiguous, equally sized levels; every name in ``fixed`` gets
    a standard-normal covariate drawn from the seed's design stream.
    """
    d = cfg.design or {}
    try:
        n = int(d["n"])
    except (KeyError, TypeError, ValueError):
        raise ConfigError("design.n (number of observations) is required without --data") from None
    levels = d.get("group_levels", {})
    if sorted(levels) != sorted(cfg.groups):
        raise ConfigError(f"design.group_levels keys {sorted(levels)} must match groups {sorted(cfg.groups)}")
    rng = replicate_rng(cfg.seed, _DESIGN_STREAM)
    columns = {c: rng.standard_normal(n) for c in cfg.fixed}
    labels = {}
    for g in cfg.groups:
        L = int(levels[g])
        if not 1 <= L <= n:
            raise ConfigError(f"design.group_levels[{g!r}] must be in 1..n")
        labels[g] = [f"{g}{(r * L) // n}" for r in range(n)]
    X = np.column_stack(([np.ones(n)] if cfg.intercept else []) + [columns[c] for c in cfg.fixed])
    Zs = [indicator_matrix(labels[g])[0] for g in cfg.groups]
    return X, Zs, columns, labels


def run_simulate(args):
    cfg = _load_config(args)
    if cfg.seed is None:
        raise ConfigError("a seed is required (--seed or config 'seed')")
    if cfg.replicates is None:
        raise ConfigError("replicates is required (--replicates or config 'replicates')")
    if args.data:
        parsed = parse_dataset(args.data, cfg)
        X, Zs = parsed.dataset.X, list(parsed.model.groups)
        columns, labels = parsed.columns, parsed.group_labels
    else:
        X, Zs, columns, labels = _design(cfg)
    n = X.shape[0]
    model = CovarianceModel(n, groups=Zs, ar1=cfg.ar1)
    if cfg.theta is None:
        raise ConfigError("theta (sigma2 followed by kappa) is required for simulate")
    theta = _theta(cfg.theta, model, "theta")
    tau = np.zeros(X.shape[1]) if cfg.tau is None else np.asarray(cfg.tau, dtype=float)
    if tau.shape != (X.shape[1],):
        raise ConfigError(f"tau must have {X.shape[1]} entries")
    Z = np.hstack(Zs) if Zs else None
    spec = SimSpec(X, Z, model, theta, tau, cfg.seed, cfg.replicates)

    if args.write_datasets:
        os.makedirs(args.write_datasets, exist_ok=True)
        files = []
        width = max(5, len(str(spec.replicates - 1)))
        for start in range(0, spec.replicates, 1000):
            idx = range(start, min(start + 1000, spec.replicates))
            Y = sample_many(spec, idx)
            for k, r in enumerate(idx):
                path = os.path.join(args.write_datasets, f"replicate_{r:0{width}d}.csv")
                write_dataset(path, Y[:, k], cfg, columns, labels)
                files.append(path)
        report = {
            "schema_version": SCHEMA_VERSION,
            "kind": "datasets",
            "seed": spec.seed,
            "replicates": spec.replicates,
            "theta_true": cfg.theta,
            "tau_true": tau.tolist(),
            "files": files,
        }
        dump_json(report, args.out)
        return EXIT_OK

    rep = monte_carlo_information(spec)
    report = {
        "schema_version": SCHEMA_VERSION,
        "kind": "montecarlo",
        "seed": spec.seed,
        "theta_true": {"sigma2": theta.sigma2, "kappa": [float(k) for k in theta.kappa]},
        "model": cfg.model_description(),
        **rep.to_dict(),
    }
    dump_json(report, args.out)
    return EXIT_OK


# ---------------------------------------------------------------------------
# entry point
# ---------------------------------------------------------------------------


def build_parser():
    p = argparse.ArgumentParser(prog="remlsplit", description=__doc__.split("\n")[0])
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    p.add_argument("-v", "--verbose", action="count", default=0)
    sub = p.add_subparsers(dest="command", required=True)

    f = sub.add_parser("fit", help="estimate variance parameters by REML")
    f.add_argument("--data", required=True)
    f.add_argument("--config")
    f.add_argument("--method", choices=sorted(METHODS))
    f.add_argument("--max-iter", type=int)
    f.add_argument("--theta0", help="starting values sigma2,kappa_1,...")
    f.add_argument("--no-intercept", action="store_true")
    f.add_argument("--out", default="-")
    f.set_defaults(func=run_fit)

    v = sub.add_parser("verify", help="check the REML identities on a dataset")
    v.add_argument("--data", required=True)
    v.add_argument("--config")
    g = v.add_mutually_exclusive_group(required=True)
    g.add_argument("--theta", help="sigma2,kappa_1,...")
    g.add_argument("--from-fit", help="fit report whose theta_hat is checked")
    v.add_argument("--no-intercept", action="store_true")
    v.add_argument("--check-seed", type=int, default=0, help="seed for the random probe vector")
    v.add_argument("--out", default="-")
    v.set_defaults(func=run_verify)

    s = sub.add_parser("simulate", help="draw datasets or run the Monte Carlo information check")
    s.add_argument("--config", required=True)
    s.add_argument("--seed", type=int)
    s.add_argument("--replicates", type=int)
    s.add_argument("--data", help="take X and Z from this CSV instead of config 'design'")
    s.add_argument("--write-datasets", metavar="DIR")
    s.add_argument("--no-intercept", action="store_true")
    s.add_argument("--out", default="-")
    s.set_defaults(func=run_simulate)
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    level = logging.WARNING - 10 * min(args.verbose, 2)
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    try:
        return args.func(args)
    except (ConfigError, InfeasibleParams) as exc:
        log.error("config error: %s", exc)
        return EXIT_CONFIG
    except DataError as exc:
        log.error("data error: %s", exc)
        return EXIT_DATA
    except OSError as exc:
        log.error("I/O error: %s", exc)
        return EXIT_IO
    except (ArithmeticError, RemlError) as exc:
        log.error("numerical failure: %s", exc)
        return EXIT_NUMERICAL
    except (KeyError, json.JSONDecodeError) as exc:
        log.error("malformed input: %s", exc)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
