"""CSV datasets, JSON run configuration and JSON reports."""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field, fields
from importlib import resources

import numpy as np

from .errors import ConfigError, MissingColumn, NonNumericValue, RankDeficientX
from .model import CovarianceModel, Dataset, indicator_matrix
from .solver import SolverConfig

SCHEMA_VERSION = "1.0"


@dataclass
class RunConfig:
    """Everything a run needs apart from the command itself.

    Loaded from a JSON file; command-line flags override individual fields.
    """

    response: str = "y"
    fixed: list = field(default_factory=list)
    intercept: bool = True
    groups: list = field(default_factory=list)
    ar1: bool = False
    solver: dict = field(default_factory=dict)
    theta0: list = None
    # simulate
    seed: int = None
    replicates: int = None
    theta: list = None
    tau: list = None
    design: dict = None
    verbosity: int = 0

    @classmethod
    def from_dict(cls, d):
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        cfg = cls(**d)
        cfg.check()
        return cfg

    @classmethod
    def load(cls, path):
        if path is None:
            return cls()
        with open(path) as fh:
            try:
                d = json.load(fh)
            except json.JSONDecodeError as exc:
                raise ConfigError(f"{path}: invalid JSON: {exc}") from exc
        if not isinstance(d, dict):
            raise ConfigError(f"{path}: top level must be an object")
        return cls.from_dict(d)

    def check(self):
        if not isinstance(self.response, str) or not self.response:
            raise ConfigError("response must be a column name")
        for name in ("fixed", "groups"):
            val = getattr(self, name)
            if not isinstance(val, list) or not all(isinstance(c, str) for c in val):
                raise ConfigError(f"{name} must be a list of column names")
        try:
            self.solver_config()
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"solver settings: {exc}") from exc

    def solver_config(self):
        return SolverConfig(**self.solver)

    def model_description(self):
        return {
            "response": self.response,
            "fixed": list(self.fixed),
            "intercept": bool(self.intercept),
            "groups": list(self.groups),
            "ar1": bool(self.ar1),
        }


@dataclass
class ParsedData:
    dataset: Dataset
    model: CovarianceModel
    fixed_names: list
    group_labels: dict
    columns: dict


def _read_rows(path):
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise NonNumericValue(f"{path}: empty file") from None
        header = [h.strip() for h in header]
        rows = [r for r in reader if r and any(c.strip() for c in r)]
    for k, r in enumerate(rows):
        if len(r) != len(header):
            raise NonNumericValue(f"{path}: row {k + 1} has {len(r)} fields, header has {len(header)}", row=k + 1)
    return header, rows


def _numeric(path, rows, j, name):
    out = np.empty(len(rows))
    for k, r in enumerate(rows):
        try:
            v = float(r[j])
        except ValueError:
            raise NonNumericValue(f"{path}: row {k + 1}, column {name!r}: {r[j]!r} is not a number", k + 1, name) from None
        if not math.isfinite(v):
            raise NonNumericValue(f"{path}: row {k + 1}, column {name!r}: non-finite value {r[j]!r}", k + 1, name)
        out[k] = v
    return out


def parse_dataset(path, config):
    """Read a CSV into a ``Dataset`` and the variance-components/AR(1) model it implies."""
    header, rows = _read_rows(path)
    pos = {h: j for j, h in enumerate(header)}
    needed = [config.response, *config.fixed, *config.groups]
    for col in needed:
        if col not in pos:
            raise MissingColumn(f"{path}: column {col!r} not found (have {header})")
    y = _numeric(path, rows, pos[config.response], config.response)
    cols = [_numeric(path, rows, pos[c], c) for c in config.fixed]
    n = len(rows)
    X = np.column_stack(([np.ones(n)] if config.intercept else []) + cols) if (cols or config.intercept) else None
    if X is None:
        raise ConfigError("no fixed effects: give fixed columns or keep the intercept")
    names = (["(intercept)"] if config.intercept else []) + list(config.fixed)
    if np.linalg.matrix_rank(X) < X.shape[1]:
        raise RankDeficientX(f"{path}: fixed-effect columns {names} are linearly dependent")
    labels = {g: [r[pos[g]].strip() for r in rows] for g in config.groups}
    Zs = [indicator_matrix(labels[g])[0] for g in config.groups]
    Z = np.hstack(Zs) if Zs else None
    data = Dataset(y, X, Z)
    model = CovarianceModel(n, groups=Zs, ar1=config.ar1)
    return ParsedData(data, model, names, labels, {c: cols[k] for k, c in enumerate(config.fixed)})


def write_dataset(path, y, config, columns, group_labels):
    """Write a CSV that ``parse_dataset`` reads back to identical arrays."""
    header = [config.response, *config.fixed, *config.groups]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for r in range(len(y)):
            row = [repr(float(y[r]))]
            row += [repr(float(columns[c][r])) for c in config.fixed]
            row += [group_labels[g][r] for g in config.groups]
            w.writerow(row)


# ---------------------------------------------------------------------------
# reports
# ---------------------------------------------------------------------------


def _num(x):
    x = float(x)
    return x if math.isfinite(x) else None


def fit_report(result, config, data, seconds):
    return {
        "schema_version": SCHEMA_VERSION,
        "kind": "fit",
        "method": result.method,
        "status": result.status,
        "theta_hat": {"sigma2": result.theta_hat.sigma2, "kappa": [float(k) for k in result.theta_hat.kappa]},
        "param_names": ["sigma2", *config_param_names(config, data)],
        "std_errors": [_num(s) for s in result.std_errors],
        "loglik": result.loglik,
        "iterations": result.iterations,
        "loglik_trace": [
            {"iteration": int(i), "loglik": float(v), "score_norm": float(g), "halvings": int(h)}
            for i, v, g, h in result.loglik_trace
        ],
        "information": np.asarray(result.information.entries).tolist(),
        "model": config.model_description(),
        "timing_seconds": seconds,
    }


def config_param_names(config, data):
    names = [f"gamma[{g}]" for g in config.groups]
    if config.ar1:
        names.append("phi")
    return names


def load_schema(name):
    text = resources.files("remlsplit").joinpath("schemas", f"{name}.schema.json").read_text()
    return json.loads(text)


def dump_json(obj, path):
    text = json.dumps(obj, indent=2, sort_keys=True, allow_nan=False)
    if path in (None, "-"):
        print(text)
    else:
        with open(path, "w") as fh:
            fh.write(text + "\n")
