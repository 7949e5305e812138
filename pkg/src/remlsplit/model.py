"""Linear mixed model data and parametric covariance structures.

The scaled covariance of the response is ``var(y) = sigma2 * H(kappa)`` with

    H(kappa) = R(phi) + sum_i gamma_i * Z_i Z_i^T

where ``R`` is either the identity or an AR(1) correlation matrix and the
``Z_i`` are the column blocks of the random-effects design. The structure
parameters are ordered ``kappa = (gamma_1, ..., gamma_k, phi)`` with ``phi``
present only for AR(1) residuals.

Throughout the package ``kappa`` positions are 0-based; in score vectors and
information matrices position 0 is ``sigma2`` and ``kappa[i]`` sits at
``i + 1``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import linalg

from . import _kernels
from .errors import (
    DimensionMismatch,
    IndexOutOfRange,
    InfeasibleParams,
    NotPositiveDefinite,
    RankDeficientX,
)

# Evaluation needs sigma2 > 0 and gamma >= 0. The solver additionally keeps
# iterates in the box sigma2 >= SIGMA2_MIN, gamma >= GAMMA_FLOOR; values
# below those are flagged as boundary points.
SIGMA2_MIN = 1e-10
GAMMA_MIN = 0.0
GAMMA_FLOOR = 1e-8
PHI_MARGIN = 1e-4

FAMILIES = ("variance-components", "ar1-residual", "composite")


def _frozen(a):
    a = np.array(a, dtype=float)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class Dataset:
    """Response ``y`` with fixed-effects design ``X`` and random-effects design ``Z``."""

    y: np.ndarray
    X: np.ndarray
    Z: np.ndarray = None

    def __post_init__(self):
        y = np.asarray(self.y, dtype=float)
        X = np.asarray(self.X, dtype=float)
        if y.ndim != 1:
            raise DimensionMismatch(f"y must be a vector, got shape {y.shape}")
        n = y.shape[0]
        if X.ndim == 1:
            X = X[:, None]
        if X.ndim != 2 or X.shape[0] != n:
            raise DimensionMismatch(f"X has shape {X.shape}, expected ({n}, p)")
        Z = np.zeros((n, 0)) if self.Z is None else np.asarray(self.Z, dtype=float)
        if Z.ndim == 1:
            Z = Z[:, None]
        if Z.ndim != 2 or Z.shape[0] != n:
            raise DimensionMismatch(f"Z has shape {Z.shape}, expected ({n}, b)")
        if n < 1 or X.shape[1] < 1:
            raise DimensionMismatch("need n >= 1 and p >= 1")
        if not (np.all(np.isfinite(y)) and np.all(np.isfinite(X)) and np.all(np.isfinite(Z))):
            raise ValueError("dataset contains non-finite values")
        rank = np.linalg.matrix_rank(X)
        if rank < X.shape[1]:
            raise RankDeficientX(f"rank(X) = {rank} < p = {X.shape[1]}")
        if n <= rank:
            raise DimensionMismatch(f"n = {n} must exceed rank(X) = {rank}")
        object.__setattr__(self, "y", _frozen(y))
        object.__setattr__(self, "X", _frozen(X))
        object.__setattr__(self, "Z", _frozen(Z))

    @property
    def n(self):
        return self.y.shape[0]

    @property
    def p(self):
        return self.X.shape[1]

    @property
    def b(self):
        return self.Z.shape[1]

    @property
    def nu(self):
        # full column rank is enforced at construction
        return self.p

    def with_y(self, y):
        return Dataset(y, self.X, self.Z)


@dataclass(frozen=True)
class ThetaVector:
    """Variance parameters ``(sigma2, kappa)``."""

    sigma2: float
    kappa: np.ndarray = field(default_factory=lambda: np.zeros(0))

    def __post_init__(self):
        object.__setattr__(self, "sigma2", float(self.sigma2))
        object.__setattr__(self, "kappa", _frozen(np.atleast_1d(np.asarray(self.kappa, dtype=float))))

    @property
    def m(self):
        return self.kappa.shape[0]

    def as_array(self):
        return np.concatenate([[self.sigma2], self.kappa])

    @classmethod
    def from_array(cls, arr):
        arr = np.asarray(arr, dtype=float)
        return cls(arr[0], arr[1:])

    def __eq__(self, other):
        if not isinstance(other, ThetaVector):
            return NotImplemented
        return np.array_equal(self.as_array(), other.as_array())

    def __hash__(self):
        return hash(self.as_array().tobytes())


@dataclass(frozen=True)
class FeasibilityReport:
    feasible: bool
    reasons: dict
    at_boundary: tuple = ()

    def __bool__(self):
        return self.feasible


class CovarianceModel:
    """``H(kappa) = R(phi) + sum_i gamma_i Z_i Z_i^T`` with analytic derivatives.

    Parameters
    ----------
    n : int
        Number of observations.
    groups : sequence of (n, b_i) arrays
        Column blocks of the random-effects design, one variance ratio each.
    ar1 : bool
        Use an AR(1) residual correlation ``R_st = phi**|s-t|`` instead of I.
    phi_margin : float
        AR(1) feasibility requires ``|phi| <= 1 - phi_margin``.
    """

    def __init__(self, n, groups=(), ar1=False, phi_margin=PHI_MARGIN):
        self.n = int(n)
        self.groups = tuple(_frozen(np.atleast_2d(np.asarray(Zi, dtype=float).reshape(self.n, -1))) for Zi in groups)
        self.ar1 = bool(ar1)
        self.phi_margin = float(phi_margin)
        self._ZZt = tuple(_frozen(Zi @ Zi.T) for Zi in self.groups)
        self._eye = _frozen(np.eye(self.n))
        self._zero = _frozen(np.zeros((self.n, self.n)))

    # -- metadata ----------------------------------------------------------

    @property
    def n_gamma(self):
        return len(self.groups)

    @property
    def m(self):
        return self.n_gamma + int(self.ar1)

    @property
    def family(self):
        if self.ar1 and self.groups:
            return "composite"
        if self.ar1:
            return "ar1-residual"
        return "variance-components"

    @property
    def is_linear(self):
        return not self.ar1

    @property
    def group_sizes(self):
        return tuple(Zi.shape[1] for Zi in self.groups)

    @property
    def Z(self):
        if not self.groups:
            return np.zeros((self.n, 0))
        return np.hstack(self.groups)

    @property
    def phi_index(self):
        return self.n_gamma if self.ar1 else None

    def param_names(self):
        names = [f"gamma{i + 1}" for i in range(self.n_gamma)]
        if self.ar1:
            names.append("phi")
        return names

    def lower_bounds(self, box=False):
        lo = [GAMMA_FLOOR if box else GAMMA_MIN] * self.n_gamma
        if self.ar1:
            lo.append(-(1.0 - self.phi_margin))
        return np.array(lo, dtype=float)

    def upper_bounds(self):
        hi = [np.inf] * self.n_gamma
        if self.ar1:
            hi.append(1.0 - self.phi_margin)
        return np.array(hi, dtype=float)

    def __repr__(self):
        return f"CovarianceModel(family={self.family!r}, n={self.n}, group_sizes={self.group_sizes})"

    # -- evaluation ----------------------------------------------------------

    def _check_kappa(self, kappa):
        kappa = np.atleast_1d(np.asarray(kappa, dtype=float))
        if kappa.shape != (self.m,):
            raise DimensionMismatch(f"kappa has shape {kappa.shape}, model expects ({self.m},)")
        for i, (k, lo, hi) in enumerate(zip(kappa, self.lower_bounds(), self.upper_bounds())):
            if not np.isfinite(k) or k < lo or k > hi:
                raise InfeasibleParams(f"{self.param_names()[i]} = {k} outside [{lo}, {hi}]", index=i)
        return kappa

    def _check_index(self, i):
        if not (0 <= i < self.m):
            raise IndexOutOfRange(f"kappa index {i} outside 0..{self.m - 1}")

    def residual(self, kappa):
        """Residual correlation ``R(phi)``."""
        if self.ar1:
            return _kernels.ar1_structure(self.n, kappa[self.phi_index])[0]
        return self._eye.copy()

    def G(self, kappa):
        """Random-effect covariance ``blockdiag(gamma_i I)`` (scaled by sigma2)."""
        return np.diag(np.repeat(kappa[: self.n_gamma], self.group_sizes))

    def H(self, kappa):
        kappa = self._check_kappa(kappa)
        H = self.residual(kappa)
        for g, ZZt in zip(kappa, self._ZZt):
            H += g * ZZt
        return H

    def dH(self, kappa, i):
        kappa = self._check_kappa(kappa)
        self._check_index(i)
        if i < self.n_gamma:
            return self._ZZt[i].copy()
        return _kernels.ar1_structure(self.n, kappa[i])[1]

    def d2H(self, kappa, i, j):
        kappa = self._check_kappa(kappa)
        self._check_index(i)
        self._check_index(j)
        if self.ar1 and i == j == self.phi_index:
            return _kernels.ar1_structure(self.n, kappa[i])[2]
        return self._zero.copy()

    def dH_all(self, kappa):
        """All first derivatives at once (one AR(1) kernel call)."""
        kappa = self._check_kappa(kappa)
        out = [ZZt for ZZt in self._ZZt]
        if self.ar1:
            out.append(_kernels.ar1_structure(self.n, kappa[self.phi_index])[1])
        return out

    def dH_matvec(self, kappa, i, v):
        """``dH_i @ v`` using the factored form ``Z_i (Z_i^T v)`` where available."""
        self._check_index(i)
        if i < self.n_gamma:
            Zi = self.groups[i]
            return Zi @ (Zi.T @ v)
        return self.dH(kappa, i) @ v

    def nonzero_hessian_pairs(self):
        """Index pairs ``(i, j)`` with ``i <= j`` whose second derivative can be nonzero."""
        if self.ar1:
            return [(self.phi_index, self.phi_index)]
        return []


def variance_components(groups, n=None):
    groups = list(groups)
    if n is None:
        if not groups:
            raise ValueError("n is required when there are no groups")
        n = np.asarray(groups[0]).shape[0]
    return CovarianceModel(n, groups=groups, ar1=False)


def ar1_residual(n, phi_margin=PHI_MARGIN):
    return CovarianceModel(n, ar1=True, phi_margin=phi_margin)


def composite(groups, n, phi_margin=PHI_MARGIN):
    return CovarianceModel(n, groups=groups, ar1=True, phi_margin=phi_margin)


def indicator_matrix(labels):
    """One column per distinct label (in order of first appearance)."""
    labels = list(labels)
    levels = list(dict.fromkeys(labels))
    Z = np.zeros((len(labels), len(levels)))
    pos = {lev: k for k, lev in enumerate(levels)}
    for r, lab in enumerate(labels):
        Z[r, pos[lab]] = 1.0
    return Z, levels


# ---------------------------------------------------------------------------
# operation surface
# ---------------------------------------------------------------------------


def cov_matrix(model, kappa):
    """``H(kappa)``; raises ``NotPositiveDefinite`` if Cholesky fails."""
    H = model.H(kappa)
    try:
        linalg.cholesky(H, lower=True, check_finite=True)
    except (linalg.LinAlgError, ValueError) as exc:
        raise NotPositiveDefinite(f"H(kappa) is not positive definite: {exc}") from exc
    return H


def cov_grad(model, kappa, i):
    return model.dH(kappa, i)


def cov_hess(model, kappa, i, j):
    # the only nonzero block (phi, phi) is symmetric in (i, j) by construction
    return model.d2H(kappa, i, j)


def validate_params(model, theta):
    """Feasibility report for ``theta`` under ``model``; never raises."""
    reasons = {}
    boundary = []
    s2 = theta.sigma2
    if not np.isfinite(s2) or s2 <= 0:
        reasons["sigma2"] = "sigma2 must be positive"
    elif s2 <= SIGMA2_MIN:
        boundary.append("sigma2")
    kappa = np.atleast_1d(theta.kappa)
    names = model.param_names()
    if kappa.shape != (model.m,):
        reasons["kappa"] = f"expected {model.m} structure parameters, got {kappa.shape[0]}"
        return FeasibilityReport(False, reasons)
    for i, k in enumerate(kappa):
        name = names[i]
        if not np.isfinite(k):
            reasons[name] = f"{name} must be finite"
        elif i < model.n_gamma:
            if k < GAMMA_MIN:
                reasons[name] = f"{name} must be non-negative"
            elif k < GAMMA_FLOOR:
                boundary.append(name)
        else:
            bound = 1.0 - model.phi_margin
            if abs(k) > bound:
                reasons[name] = f"|phi| must be at most {bound:g}"
    return FeasibilityReport(not reasons, reasons, tuple(boundary))


def require_feasible(model, theta):
    report = validate_params(model, theta)
    if not report.feasible:
        name, why = next(iter(report.reasons.items()))
        names = ["sigma2"] + model.param_names()
        index = names.index(name) if name in names else None
        raise InfeasibleParams(why, index=index)
    return report
