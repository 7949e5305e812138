"""Reproducible draws of ``y ~ N(X tau, sigma2 H)`` and Monte Carlo checks of
the expectation identities

    E(observed) = fisher,   E(average) = fisher,   E(remainder) = 0.

Each replicate has its own Philox stream keyed by ``(seed, replicate_index)``
so replicates can be drawn in any order, or in parallel, with identical
results.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import linalg

from . import _kernels
from .errors import NotPositiveDefinite, StatisticalFloor
from .information import fisher_information
from .likelihood import projection_at
from .model import Dataset, require_feasible
from .projection import apply_P, trace_P_times

MIN_REPLICATES = 100
Z_LIMIT = 3.0
Z_SOFT_LIMIT = 4.0


@dataclass(frozen=True)
class SimSpec:
    X: np.ndarray
    Z: np.ndarray
    model: object
    theta_true: object
    tau_true: np.ndarray
    seed: int
    replicates: int

    def __post_init__(self):
        X = np.atleast_2d(np.asarray(self.X, dtype=float))
        tau = np.atleast_1d(np.asarray(self.tau_true, dtype=float))
        if tau.shape != (X.shape[1],):
            raise ValueError(f"tau_true has length {tau.shape[0]}, X has {X.shape[1]} columns")
        if int(self.replicates) < 1:
            raise ValueError("replicates must be at least 1")
        require_feasible(self.model, self.theta_true)
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "tau_true", tau)
        object.__setattr__(self, "seed", int(self.seed))
        object.__setattr__(self, "replicates", int(self.replicates))

    @property
    def n(self):
        return self.X.shape[0]

    def dataset(self, y):
        return Dataset(y, self.X, self.Z)


def replicate_rng(seed, replicate_index):
    ss = np.random.SeedSequence([int(seed) & 0xFFFFFFFFFFFFFFFF, int(replicate_index)])
    return np.random.Generator(np.random.Philox(ss))


def _noise_factor(spec):
    H = spec.model.H(spec.theta_true.kappa)
    try:
        return np.sqrt(spec.theta_true.sigma2) * linalg.cholesky(H, lower=True)
    except linalg.LinAlgError as exc:
        raise NotPositiveDefinite(f"sigma2 * H is not positive definite: {exc}") from exc


def sample_dataset(spec, replicate_index, _L=None):
    """``y = X tau + L w`` with ``L L^T = sigma2 H`` and ``w`` from the replicate's stream."""
    L = _noise_factor(spec) if _L is None else _L
    w = replicate_rng(spec.seed, replicate_index).standard_normal(spec.n)
    return spec.X @ spec.tau_true + L @ w


def sample_many(spec, indices=None):
    """Columns are replicates ``indices`` (default ``0..replicates-1``)."""
    indices = range(spec.replicates) if indices is None else indices
    L = _noise_factor(spec)
    W = np.column_stack([replicate_rng(spec.seed, r).standard_normal(spec.n) for r in indices])
    return (spec.X @ spec.tau_true)[:, None] + L @ W


@dataclass(frozen=True)
class MonteCarloReport:
    replicates: int
    fisher: np.ndarray
    mean: dict
    se: dict
    z: dict
    exact_zero: dict
    target: dict

    def z_entries(self):
        """Upper-triangle z-scores of every tested (kind, i, j) that is not exact."""
        out = []
        for kind in self.z:
            m1 = self.fisher.shape[0]
            for i in range(m1):
                for j in range(i, m1):
                    if not self.exact_zero[kind][i, j]:
                        out.append((kind, i, j, float(self.z[kind][i, j])))
        return out

    def passes(self, limit=Z_LIMIT, soft=Z_SOFT_LIMIT, allowed=1):
        zs = np.abs([e[3] for e in self.z_entries()])
        return bool(np.all(zs <= soft) and np.sum(zs > limit) <= allowed)

    def to_dict(self):
        def mat(a):
            return np.asarray(a, dtype=float).tolist()

        return {
            "replicates": self.replicates,
            "fisher": mat(self.fisher),
            "mean": {k: mat(v) for k, v in self.mean.items()},
            "se": {k: mat(v) for k, v in self.se.items()},
            "z": {k: mat(v) for k, v in self.z.items()},
            "exact_zero": {k: np.asarray(v, dtype=bool).tolist() for k, v in self.exact_zero.items()},
            "target": self.target,
            "passes": self.passes(),
        }


def information_batch(spec, Y):
    """Observed, average and remainder matrices for each column of ``Y``.

    Returns arrays of shape ``(N, m+1, m+1)`` keyed by kind, plus the Fisher
    matrix. The projection is built once since theta is fixed; per-replicate
    work is a batch of quadratic forms.
    """
    model, theta = spec.model, spec.theta_true
    data = spec.dataset(Y[:, 0])
    ctx = projection_at(data, model, theta)
    m, s2 = model.m, theta.sigma2
    dof = data.n - data.nu
    N = Y.shape[1]
    fisher = fisher_information(data, model, theta).entries

    Xi = apply_P(ctx, Y)
    yPy = _kernels.column_dots(Y, Xi)
    dH = model.dH_all(theta.kappa)
    tr_dH = np.array([trace_P_times(ctx, A) for A in dH])
    eta = [A @ Xi for A in dH]
    zeta = [apply_P(ctx, E) for E in eta]
    q1 = np.array([_kernels.column_dots(Xi, E) for E in eta]).reshape(m, N)
    q2 = np.zeros((m, m, N))
    for i in range(m):
        for j in range(i, m):
            q2[i, j] = q2[j, i] = _kernels.column_dots(eta[i], zeta[j])
    tr_d2 = np.zeros((m, m))
    q_d2 = np.zeros((m, m, N))
    for i, j in model.nonzero_hessian_pairs():
        A = model.d2H(theta.kappa, i, j)
        tr_d2[i, j] = tr_d2[j, i] = trace_P_times(ctx, A)
        q_d2[i, j] = q_d2[j, i] = _kernels.column_dots(Xi, A @ Xi)

    out = {k: np.zeros((N, m + 1, m + 1)) for k in ("observed", "average", "remainder")}
    fk = fisher[1:, 1:]
    for k, M in out.items():
        if k == "observed":
            M[:, 0, 0] = yPy / s2**3 - dof / (2 * s2**2)
            row = q1.T / (2 * s2**2)
            kk = 0.5 * (tr_d2[None] - 2 * fk[None]) + (2 * q2 - q_d2).transpose(2, 0, 1) / (2 * s2)
        elif k == "average":
            M[:, 0, 0] = yPy / (2 * s2**3)
            row = q1.T / (2 * s2**2)
            kk = q2.transpose(2, 0, 1) / (2 * s2)
        else:
            row = tr_dH[None] / (4 * s2) - q1.T / (4 * s2**2)
            kk = (tr_d2[None] - q_d2.transpose(2, 0, 1) / s2) / 4.0
        M[:, 0, 1:] = row
        M[:, 1:, 0] = row
        M[:, 1:, 1:] = kk
    return out, fisher


def monte_carlo_information(spec, chunk=2000):
    """Sample means, standard errors and z-scores of the three random matrices."""
    N = spec.replicates
    if N < MIN_REPLICATES:
        raise StatisticalFloor(f"need at least {MIN_REPLICATES} replicates, got {N}")
    m1 = spec.model.m + 1
    sums = {k: np.zeros((m1, m1)) for k in ("observed", "average", "remainder")}
    sq = {k: np.zeros((m1, m1)) for k in sums}
    amin = {k: np.full((m1, m1), np.inf) for k in sums}
    amax = {k: np.full((m1, m1), -np.inf) for k in sums}
    fisher = None
    # fixed chunking and in-order accumulation keep the reduction deterministic
    for start in range(0, N, chunk):
        idx = range(start, min(start + chunk, N))
        try:
            Y = sample_many(spec, idx)
            mats, fisher = information_batch(spec, Y)
        except Exception as exc:
            raise type(exc)(f"replicates {idx.start}..{idx.stop - 1}: {exc}") from exc
        for k, M in mats.items():
            sums[k] += M.sum(axis=0)
            sq[k] += (M * M).sum(axis=0)
            amin[k] = np.minimum(amin[k], M.min(axis=0))
            amax[k] = np.maximum(amax[k], M.max(axis=0))
    target = {"observed": "fisher", "average": "fisher", "remainder": "zero"}
    mean, se, z, exact = {}, {}, {}, {}
    for k in sums:
        mu = sums[k] / N
        var = np.maximum(sq[k] / N - mu * mu, 0.0) * N / max(N - 1, 1)
        s = np.sqrt(var / N)
        goal = fisher if target[k] == "fisher" else np.zeros_like(fisher)
        # entries that are identically zero on every replicate are reported, not tested
        ez = (amin[k] == 0) & (amax[k] == 0) & (goal == 0)
        with np.errstate(divide="ignore", invalid="ignore"):
            zk = np.where(ez, 0.0, (mu - goal) / s)
        mean[k], se[k], z[k], exact[k] = mu, s, zk, ez
    return MonteCarloReport(N, fisher, mean, se, z, exact, target)


def monte_carlo_quadratic_forms(spec, chunk=2000):
    """Means/SEs of ``y'Py``, ``y'P dH_i P y`` and ``y'P dH_i P dH_j P y`` with their
    trace targets ``(n-nu) sigma2``, ``sigma2 tr(P dH_i)`` and ``sigma2 tr(P dH_i P dH_j)``."""
    model, theta = spec.model, spec.theta_true
    s2, m, N = theta.sigma2, model.m, spec.replicates
    values = []
    for start in range(0, N, chunk):
        Y = sample_many(spec, range(start, min(start + chunk, N)))
        ctx = projection_at(spec.dataset(Y[:, 0]), model, theta)
        Xi = apply_P(ctx, Y)
        eta = [A @ Xi for A in model.dH_all(theta.kappa)]
        zeta = [apply_P(ctx, E) for E in eta]
        cols = [_kernels.column_dots(Y, Xi)]
        cols += [_kernels.column_dots(Xi, E) for E in eta]
        cols += [_kernels.column_dots(eta[i], zeta[j]) for i in range(m) for j in range(i, m)]
        values.append(np.column_stack(cols))
    V = np.vstack(values)
    dH = model.dH_all(theta.kappa)
    PdH = [apply_P(ctx, A) for A in dH]
    targets = [(spec.n - spec.X.shape[1]) * s2]
    targets += [s2 * np.trace(A) for A in PdH]
    targets += [s2 * _kernels.trace_product(PdH[i], PdH[j]) for i in range(m) for j in range(i, m)]
    names = ["yPy"] + [f"yPdH{i}Py" for i in range(m)] + [f"yPdH{i}PdH{j}Py" for i in range(m) for j in range(i, m)]
    mean = V.mean(axis=0)
    se = V.std(axis=0, ddof=1) / np.sqrt(N)
    return {nm: (float(mu), float(s), float(t)) for nm, mu, s, t in zip(names, mean, se, targets)}

