"""Numerical checks of the projection, derivative and splitting identities at one theta."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InfeasibleParams
from .information import all_information, splitting_residual
from .likelihood import fd_hessian, fd_score, projection_at, score
from .model import validate_params
from .projection import apply_P, apply_P_via_mme, trace_P_times

TOLERANCES = {
    "PX_zero": 1e-10,
    "PHP_equals_P": 1e-10,
    "trace_PH": 1e-9,
    "score_vs_fd": 1e-6,
    "observed_vs_fd_hessian": 1e-4,
    "splitting": 1e-10,
    "mme_Py": 1e-9,
}
SCORE_ATOL = 1e-8


@dataclass
class Check:
    name: str
    residual: float
    tolerance: float
    passed: bool
    note: str = ""

    def to_dict(self):
        res = self.residual if np.isfinite(self.residual) else None
        return {"name": self.name, "residual": res, "tolerance": self.tolerance, "passed": self.passed, "note": self.note}


def _rel(a, b, floor=0.0):
    a, b = np.asarray(a, dtype=float), np.asarray(b, dtype=float)
    scale = max(float(np.max(np.abs(b))) if b.size else 0.0, floor)
    err = float(np.max(np.abs(a - b))) if a.size else 0.0
    return err / scale if scale > 0 else err


def run_identity_suite(data, model, theta, seed=0):
    """Return ``(checks, warnings)`` for the identity suite at ``theta``."""
    checks = []
    warnings = []
    rep = validate_params(model, theta)
    if rep.at_boundary:
        warnings.append(f"parameters at the feasibility floor: {', '.join(rep.at_boundary)}")
    if theta.sigma2 <= 1e-8:
        warnings.append(f"sigma2 = {theta.sigma2:g} is near its floor; derivative magnitudes scale like 1/sigma2^k")
    H = model.H(theta.kappa)
    cond = float(np.linalg.cond(H))
    if cond > 1e10:
        warnings.append(f"H is ill-conditioned (cond = {cond:.3g})")
    ctx = projection_at(data, model, theta)
    n, nu = data.n, data.nu

    # PX = 0, scaled by |x| and by the size of H^-1
    hinv_scale = max(1.0, float(np.max(np.abs(np.diag(ctx.solve_H(np.eye(n)))))))
    PX = apply_P(ctx, data.X)
    r = float(np.max(np.abs(PX).max(axis=0) / np.abs(data.X).max(axis=0))) / hinv_scale
    checks.append(Check("PX_zero", r, TOLERANCES["PX_zero"], r <= TOLERANCES["PX_zero"]))

    v = np.random.default_rng(seed).standard_normal(n)
    Pv = apply_P(ctx, v)
    r = _rel(apply_P(ctx, H @ Pv), Pv)
    checks.append(Check("PHP_equals_P", r, TOLERANCES["PHP_equals_P"], r <= TOLERANCES["PHP_equals_P"]))

    r = abs(trace_P_times(ctx, H) - (n - nu))
    checks.append(Check("trace_PH", r, TOLERANCES["trace_PH"], r <= TOLERANCES["trace_PH"]))

    S = score(data, model, theta)
    try:
        fd = fd_score(data, model, theta)
        scale = max(float(np.max(np.abs(fd))), SCORE_ATOL / TOLERANCES["score_vs_fd"])
        r = float(np.max(np.abs(S - fd))) / scale
        checks.append(Check("score_vs_fd", r, TOLERANCES["score_vs_fd"], r <= TOLERANCES["score_vs_fd"]))
    except InfeasibleParams as exc:
        checks.append(Check("score_vs_fd", float("nan"), TOLERANCES["score_vs_fd"], True, f"skipped: {exc}"))

    mats = all_information(data, model, theta)
    try:
        fdh = fd_hessian(data, model, theta)
        r = _rel(mats["observed"].entries, -fdh)
        tol = TOLERANCES["observed_vs_fd_hessian"]
        checks.append(Check("observed_vs_fd_hessian", r, tol, r <= tol))
    except InfeasibleParams as exc:
        checks.append(Check("observed_vs_fd_hessian", float("nan"), TOLERANCES["observed_vs_fd_hessian"], True, f"skipped: {exc}"))

    r = splitting_residual(mats).max_rel
    checks.append(Check("splitting", r, TOLERANCES["splitting"], r <= TOLERANCES["splitting"]))

    gam = theta.kappa[: model.n_gamma]
    if data.b >= 1 and model.n_gamma and np.all(gam > 0):
        Py = apply_P(ctx, data.y)
        via = apply_P_via_mme(data, model.residual(theta.kappa), model.G(theta.kappa))
        r = _rel(via, Py, floor=1e-300)
        checks.append(Check("mme_Py", r, TOLERANCES["mme_Py"], r <= TOLERANCES["mme_Py"]))
    else:
        checks.append(Check("mme_Py", float("nan"), TOLERANCES["mme_Py"], True, "skipped: needs b >= 1 and all gamma > 0"))
    return checks, warnings
