"""Newton-type maximization of the REML log-likelihood.

The three methods share one loop and differ only in the curvature matrix:
observed information (Newton-Raphson), Fisher information (Fisher scoring)
or average information. Each iteration solves ``M delta = S`` with a ridge
fallback, projects onto the feasible box and halves the step until the
log-likelihood does not decrease.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
from scipy import linalg

from .errors import DimensionMismatch, SingularCurvature
from .information import InfoMatrix, average_information, fisher_information, observed_information
from .likelihood import reml_loglik, score
from .model import SIGMA2_MIN, ThetaVector, require_feasible

log = logging.getLogger(__name__)

METHODS = {
    "newton-raphson": observed_information,
    "fisher-scoring": fisher_information,
    "average-information": average_information,
}

STATUSES = ("converged", "max_iter", "boundary", "singular-curvature")


@dataclass(frozen=True)
class SolverConfig:
    method: str = "average-information"
    grad_tol: float = 1e-8
    loglik_tol: float = 1e-10
    max_iter: int = 100
    max_halvings: int = 30
    ridge0: float = 1e-8

    def __post_init__(self):
        if self.method not in METHODS:
            raise ValueError(f"unknown method {self.method!r}; choose from {sorted(METHODS)}")
        if self.grad_tol <= 0 or self.loglik_tol <= 0 or self.ridge0 <= 0:
            raise ValueError("tolerances and ridge0 must be positive")
        if self.max_iter < 1 or self.max_halvings < 0:
            raise ValueError("max_iter must be >= 1 and max_halvings >= 0")


@dataclass
class FitResult:
    theta_hat: ThetaVector
    std_errors: np.ndarray
    loglik_trace: list = field(default_factory=list)
    status: str = "max_iter"
    method: str = ""
    information: InfoMatrix = None
    iterations: int = 0

    @property
    def converged(self):
        return self.status == "converged"

    @property
    def loglik(self):
        return self.loglik_trace[-1][1]


def newton_step(curvature, score_vec, ridge=0.0, ridge0=1e-8):
    """Solve ``(M + ridge * D) delta = S`` with ``D = diag(|M|)``.

    If the Cholesky factorization fails the ridge grows tenfold (starting at
    ``ridge0`` when ``ridge == 0``) until it exceeds ``1e6 * ridge0``.
    Zero diagonal entries of ``D`` are replaced by 1.
    """
    M = np.asarray(curvature, dtype=float)
    S = np.asarray(score_vec, dtype=float)
    if M.shape != (S.shape[0], S.shape[0]):
        raise DimensionMismatch(f"curvature {M.shape} does not match score {S.shape}")
    D = np.abs(np.diag(M)).copy()
    D[D == 0] = 1.0
    limit = 1e6 * ridge0
    r = float(ridge)
    while True:
        try:
            cf = linalg.cho_factor(M + r * np.diag(D), lower=True, check_finite=True)
            return linalg.cho_solve(cf, S), r
        except (linalg.LinAlgError, ValueError):
            r = ridge0 if r == 0 else 10.0 * r
            if r > limit * (1 + 1e-12):
                raise SingularCurvature(f"curvature not positive definite with ridge up to {limit:g}") from None


def standard_errors(curvature):
    """Square roots of the diagonal of the inverse curvature."""
    M = np.asarray(curvature, dtype=float)
    try:
        cf = linalg.cho_factor(M, lower=True)
    except linalg.LinAlgError as exc:
        raise SingularCurvature("curvature is singular or indefinite") from exc
    inv = linalg.cho_solve(cf, np.eye(M.shape[0]))
    d = np.diag(inv)
    if np.any(d <= 0) or not np.all(np.isfinite(d)):
        raise SingularCurvature("inverse curvature has a non-positive diagonal")
    return np.sqrt(d)


def _box(model):
    lo = np.concatenate([[SIGMA2_MIN], model.lower_bounds(box=True)])
    hi = np.concatenate([[np.inf], model.upper_bounds()])
    return lo, hi


def _active_lower(x, S, lo, model):
    """Gamma coordinates held at the floor with a score pointing outward."""
    act = np.zeros(x.shape, dtype=bool)
    for i in range(model.n_gamma):
        k = i + 1
        if x[k] <= lo[k] * (1 + 1e-9) and S[k] <= 0:
            act[k] = True
    return act


def fit(data, model, theta0, config=None):
    """Maximize the REML log-likelihood from ``theta0``.

    Raises only for structural problems (infeasible start, bad dimensions);
    numerical outcomes are reported through ``FitResult.status``.
    """
    config = config or SolverConfig()
    require_feasible(model, theta0)
    curvature_fn = METHODS[config.method]
    lo, hi = _box(model)
    x = np.clip(theta0.as_array(), lo, hi)

    def evaluate(x):
        th = ThetaVector.from_array(x)
        ev = reml_loglik(data, model, th)
        return th, ev, score(data, model, th, ev)

    theta, ev, S = evaluate(x)
    trace = []
    status = "max_iter"
    halvings = 0
    it = 0
    for it in range(config.max_iter + 1):
        active = _active_lower(x, S, lo, model)
        S_free = np.where(active, 0.0, S)
        gnorm = float(np.max(np.abs(S_free)))
        trace.append((it, ev.value, gnorm, halvings))
        log.debug("iter %d loglik %.12g |S| %.3e halvings %d", it, ev.value, gnorm, halvings)
        if gnorm < config.grad_tol:
            status = "boundary" if active.any() else "converged"
            break
        if it == config.max_iter:
            break
        info = curvature_fn(data, model, theta)
        free = ~active
        M = info.entries[np.ix_(free, free)]
        try:
            step_free, _ = newton_step(M, S[free], 0.0, config.ridge0)
        except SingularCurvature:
            if curvature_fn is fisher_information:
                status = "singular-curvature"
                break
            # observed information can be indefinite far from the optimum; the
            # expected curvature still gives an ascent direction
            fallback = fisher_information(data, model, theta).entries[np.ix_(free, free)]
            try:
                step_free, _ = newton_step(fallback, S[free], 0.0, config.ridge0)
            except SingularCurvature:
                status = "singular-curvature"
                break
            log.debug("iter %d: %s curvature not positive definite, took a Fisher step", it, config.method)
        delta = np.zeros_like(x)
        delta[free] = step_free
        alpha = 1.0
        accepted = False
        for halvings in range(config.max_halvings + 1):
            x_new = np.clip(x + alpha * delta, lo, hi)
            try:
                cand = evaluate(x_new)
            except (ArithmeticError, ValueError):
                cand = None
            if cand is not None and np.isfinite(cand[1].value) and cand[1].value >= ev.value:
                accepted = True
                break
            alpha *= 0.5
        if not accepted:
            # no representable ascent along delta: the likelihood has stalled
            status = "boundary" if active.any() else "converged"
            break
        rel_change = abs(cand[1].value - ev.value) / max(1.0, abs(ev.value))
        x = x_new
        theta, ev, S = cand
        if halvings > 0 and rel_change < config.loglik_tol:
            # the full step could not raise l_R: changes are below its rounding level
            trace.append((it + 1, ev.value, float(np.max(np.abs(np.where(_active_lower(x, S, lo, model), 0.0, S)))), halvings))
            status = "converged"
            it += 1
            break
    at_floor = np.array([x[i + 1] <= lo[i + 1] * (1 + 1e-9) for i in range(model.n_gamma)], dtype=bool)
    if status == "converged" and at_floor.any():
        status = "boundary"

    final_info = curvature_fn(data, model, theta)
    se = np.full(model.m + 1, np.nan)
    if status in ("converged", "boundary"):
        free = np.concatenate([[True], ~at_floor, np.ones(model.m - model.n_gamma, dtype=bool)]).astype(bool)
        try:
            se[free] = standard_errors(final_info.entries[np.ix_(free, free)])
        except SingularCurvature:
            if status == "converged":
                status = "singular-curvature"
    return FitResult(theta, se, trace, status, config.method, final_info, it)


def default_theta0(data, model, gamma0=0.5):
    """Moment-matched start: gamma_i = gamma0, phi = 0, sigma2 from the OLS residual variance.

    ``sigma2`` is scaled so that ``sigma2 * mean(diag(H))`` matches the residual
    variance of an ordinary least-squares fit.
    """
    X, y = data.X, data.y
    beta, *_ = np.linalg.lstsq(X, y, rcond=None)
    r = y - X @ beta
    s2 = max(float(r @ r) / (data.n - data.p), SIGMA2_MIN * 10)
    kappa = np.zeros(model.m)
    kappa[: model.n_gamma] = gamma0
    scale = float(np.mean(np.diag(model.H(kappa))))
    return ThetaVector(s2 / scale, kappa)
