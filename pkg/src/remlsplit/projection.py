"""Cholesky-based applications of the REML projection

    P = H^-1 - H^-1 X (X^T H^-1 X)^-1 X^T H^-1

and the mixed-model-equations route to ``P y``. ``P`` itself is never formed.
"""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass, field

import numpy as np
from scipy import linalg

from . import _kernels
from .errors import DimensionMismatch, NotPositiveDefinite, SingularCoefficientMatrix


def _cho(M, what):
    try:
        return linalg.cho_factor(M, lower=True, check_finite=True)
    except (linalg.LinAlgError, ValueError) as exc:
        raise NotPositiveDefinite(f"{what} is not positive definite: {exc}") from exc


def _logdet(cf):
    return 2.0 * float(np.sum(np.log(np.diag(cf[0]))))


@dataclass(frozen=True)
class ProjectionContext:
    data: object
    H_chol: tuple
    HinvX: np.ndarray
    C_chol: tuple
    logdet_H: float
    logdet_XtHinvX: float
    # instrumentation: number of vectors P has been applied to, keyed by op
    counter: Counter = field(default_factory=Counter, compare=False, repr=False)

    @property
    def n(self):
        return self.HinvX.shape[0]

    def solve_H(self, B):
        return linalg.cho_solve(self.H_chol, B, check_finite=False)


def build_projection(data, H):
    H = np.asarray(H, dtype=float)
    n = data.n
    if H.shape != (n, n):
        raise DimensionMismatch(f"H has shape {H.shape}, expected ({n}, {n})")
    H_chol = _cho(H, "H")
    HinvX = linalg.cho_solve(H_chol, data.X, check_finite=False)
    C = data.X.T @ HinvX
    C = 0.5 * (C + C.T)
    C_chol = _cho(C, "X^T H^-1 X")
    ld_H = _logdet(H_chol)
    ld_C = _logdet(C_chol)
    if not (np.isfinite(ld_H) and np.isfinite(ld_C)):
        raise NotPositiveDefinite("non-finite log-determinant")
    return ProjectionContext(data, H_chol, HinvX, C_chol, ld_H, ld_C)


def apply_P(ctx, v):
    """``P v`` for a vector or for each column of a matrix."""
    v = np.asarray(v, dtype=float)
    if v.shape[0] != ctx.n or v.ndim > 2:
        raise DimensionMismatch(f"operand has shape {v.shape}, expected leading dimension {ctx.n}")
    ctx.counter["apply_P"] += 1 if v.ndim == 1 else v.shape[1]
    Hv = ctx.solve_H(v)
    coef = linalg.cho_solve(ctx.C_chol, ctx.HinvX.T @ v, check_finite=False)
    return Hv - ctx.HinvX @ coef


def _square(ctx, A):
    A = np.asarray(A, dtype=float)
    if A.shape != (ctx.n, ctx.n):
        raise DimensionMismatch(f"matrix has shape {A.shape}, expected ({ctx.n}, {ctx.n})")
    return A


def trace_P_times(ctx, A):
    """tr(PA) = tr(H^-1 A) - tr((X^T H^-1 X)^-1 X^T H^-1 A H^-1 X)."""
    A = _square(ctx, A)
    first = float(np.trace(ctx.solve_H(A)))
    inner = ctx.HinvX.T @ A @ ctx.HinvX
    second = float(np.trace(linalg.cho_solve(ctx.C_chol, inner, check_finite=False)))
    return first - second


def trace_PA_PB(ctx, A, B=None):
    """tr(PAPB), via ``n`` applications of P to the columns of A (and of B).

    Pass ``B=None`` for ``tr((PA)^2)``.
    """
    PA = apply_P(ctx, _square(ctx, A))
    PB = PA if B is None else apply_P(ctx, _square(ctx, B))
    return _kernels.trace_product(PA, PB)


def P_times_all(ctx, mats):
    """``[P A for A in mats]``; shared by the trace-based information terms."""
    return [apply_P(ctx, _square(ctx, A)) for A in mats]


# ---------------------------------------------------------------------------
# mixed model equations
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class FittedEffects:
    tau_hat: np.ndarray
    u_tilde: np.ndarray
    e: np.ndarray
    Rinv_e: np.ndarray


def solve_mme(data, R, G, y=None):
    """Solve Henderson's mixed model equations for ``(tau_hat, u_tilde)``.

    ``y`` defaults to ``data.y``. The returned ``Rinv_e`` is ``R^-1 e``,
    which equals ``P y`` for ``H = R + Z G Z^T``.
    """
    y = data.y if y is None else np.asarray(y, dtype=float)
    X, Z = data.X, data.Z
    n, p, b = data.n, data.p, data.b
    R = np.asarray(R, dtype=float)
    G = np.asarray(G, dtype=float)
    if b < 1:
        raise DimensionMismatch("mixed model equations need at least one random effect")
    if R.shape != (n, n) or G.shape != (b, b) or y.shape != (n,):
        raise DimensionMismatch(f"R {R.shape}, G {G.shape}, y {y.shape} do not match n={n}, b={b}")
    R_chol = _cho(R, "R")
    G_chol = _cho(G, "G")
    W = np.hstack([X, Z])
    RinvW = linalg.cho_solve(R_chol, W, check_finite=False)
    Rinvy = linalg.cho_solve(R_chol, y, check_finite=False)
    C = W.T @ RinvW
    C[p:, p:] += linalg.cho_solve(G_chol, np.eye(b), check_finite=False)
    C = 0.5 * (C + C.T)
    rhs = W.T @ Rinvy
    try:
        C_chol = linalg.cho_factor(C, lower=True)
    except linalg.LinAlgError as exc:
        try:
            linalg.cholesky(C[:p, :p], lower=True)
            block = "random-effects"
        except linalg.LinAlgError:
            block = "fixed-effects"
        raise SingularCoefficientMatrix(f"MME coefficient matrix singular in the {block} block", block) from exc
    sol = linalg.cho_solve(C_chol, rhs, check_finite=False)
    tau, u = sol[:p], sol[p:]
    e = y - X @ tau - Z @ u
    return FittedEffects(tau, u, e, linalg.cho_solve(R_chol, e, check_finite=False))


def apply_P_via_mme(data, R, G, y=None):
    """``P y`` computed as ``R^-1 e`` from the mixed model equations."""
    return solve_mme(data, R, G, y).Rinv_e
