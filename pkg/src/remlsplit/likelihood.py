"""Residual log-likelihood, analytic scores and a finite-difference oracle."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InfeasibleParams, InvalidStep
from .model import ThetaVector, require_feasible, validate_params
from .projection import apply_P, build_projection, trace_P_times

LOG_2PI = float(np.log(2.0 * np.pi))


def projection_at(data, model, theta):
    """Feasibility check followed by the projection context for ``H(kappa)``."""
    require_feasible(model, theta)
    return build_projection(data, model.H(theta.kappa))


@dataclass(frozen=True)
class LikelihoodEval:
    value: float
    yPy: float
    ctx: object
    theta: ThetaVector
    Py: np.ndarray


def reml_loglik(data, model, theta, ctx=None):
    """REML log-likelihood with constant ``-(n - nu)/2 * log(2 pi)``.

        l_R = -(n-nu)/2 log(2 pi)
              - 1/2 [(n-nu) log sigma2 + log|H| + log|X^T H^-1 X| + y^T P y / sigma2]
    """
    if ctx is None:
        ctx = projection_at(data, model, theta)
    dof = data.n - data.nu
    Py = apply_P(ctx, data.y)
    # P is PSD; clip rounding noise for y in the column span of X
    yPy = max(float(data.y @ Py), 0.0)
    s2 = theta.sigma2
    value = -0.5 * dof * LOG_2PI - 0.5 * (dof * np.log(s2) + ctx.logdet_H + ctx.logdet_XtHinvX + yPy / s2)
    return LikelihoodEval(float(value), yPy, ctx, theta, Py)


def profile_sigma2(data, model, kappa):
    """Closed-form maximizer of l_R in sigma2 for fixed kappa: y^T P y / (n - nu)."""
    ev = reml_loglik(data, model, ThetaVector(1.0, kappa))
    return ev.yPy / (data.n - data.nu)


def score(data, model, theta, ev=None):
    """Gradient of l_R in theta-ordering ``(sigma2, kappa_1, ..., kappa_m)``."""
    if ev is None:
        ev = reml_loglik(data, model, theta)
    ctx, xi, s2 = ev.ctx, ev.Py, theta.sigma2
    dof = data.n - data.nu
    out = np.empty(model.m + 1)
    out[0] = -0.5 * (dof / s2 - ev.yPy / s2**2)
    for i, dH in enumerate(model.dH_all(theta.kappa)):
        quad = float(xi @ (dH @ xi))
        out[i + 1] = -0.5 * (trace_P_times(ctx, dH) - quad / s2)
    return out


def default_steps(theta, rel=1e-5, model=None):
    """``rel * max(1, |theta_k|)``, shrunk near the edge of the feasible region.

    With ``model`` given, a step that would leave the region is reduced to
    ``rel * sigma2`` for sigma2 and to half the distance to the bound for the
    structure parameters; a parameter sitting exactly on its bound raises
    ``InfeasibleParams``.
    """
    x = theta.as_array()
    h = rel * np.maximum(1.0, np.abs(x))
    if model is None:
        return h
    if x[0] - h[0] <= 0:
        h[0] = rel * x[0]
    lo, hi = model.lower_bounds(), model.upper_bounds()
    for i in range(model.m):
        k = i + 1
        room = min(x[k] - lo[i], hi[i] - x[k])
        if room <= 0:
            raise InfeasibleParams(f"{model.param_names()[i]} is on its bound; no central difference possible", index=k)
        h[k] = min(h[k], 0.5 * room)
    return h


def _shifted(theta, k, delta):
    x = theta.as_array()
    x[k] += delta
    return ThetaVector.from_array(x)


def _check_steps(model, theta, h, which=None):
    h = np.broadcast_to(np.asarray(h, dtype=float), (model.m + 1,)).copy()
    which = range(model.m + 1) if which is None else which
    if np.any(~np.isfinite(h[list(which)])) or np.any(h[list(which)] <= 0):
        raise InvalidStep(f"finite-difference steps must be positive, got {h}")
    for k in which:
        for sign in (1.0, -1.0):
            if not validate_params(model, _shifted(theta, k, sign * h[k])).feasible:
                raise InfeasibleParams(f"theta {'+' if sign > 0 else '-'} h*e_{k} leaves the feasible region", index=k)
    return h


def fd_score(data, model, theta, h=None, which=None):
    """Central-difference gradient of ``reml_loglik`` (verification only).

    ``which`` restricts the computation to some theta positions; the other
    entries are NaN.
    """
    if h is None:
        h = default_steps(theta, 1e-5, model if which is None else None)
    h = _check_steps(model, theta, h, which)
    out = np.full(model.m + 1, np.nan)
    for k in range(model.m + 1) if which is None else which:
        up = reml_loglik(data, model, _shifted(theta, k, h[k])).value
        dn = reml_loglik(data, model, _shifted(theta, k, -h[k])).value
        out[k] = (up - dn) / (2.0 * h[k])
    return out


def fd_hessian(data, model, theta, h=None):
    """Central second differences of ``reml_loglik`` (no analytic derivatives used)."""
    h = _check_steps(model, theta, default_steps(theta, 1e-4, model) if h is None else h)
    d = model.m + 1
    f0 = reml_loglik(data, model, theta).value

    def f(k, a, l=None, b=0.0):
        x = theta.as_array()
        x[k] += a
        if l is not None:
            x[l] += b
        return reml_loglik(data, model, ThetaVector.from_array(x)).value

    Hm = np.empty((d, d))
    for k in range(d):
        Hm[k, k] = (f(k, h[k]) - 2.0 * f0 + f(k, -h[k])) / h[k] ** 2
        for l in range(k + 1, d):
            val = (f(k, h[k], l, h[l]) - f(k, h[k], l, -h[l]) - f(k, -h[k], l, h[l]) + f(k, -h[k], l, -h[l])) / (
                4.0 * h[k] * h[l]
            )
            Hm[k, l] = Hm[l, k] = val
    return Hm
