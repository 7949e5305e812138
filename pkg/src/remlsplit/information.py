"""Observed, Fisher, average and remainder information matrices.

All four are (m+1)x(m+1) in theta-ordering and satisfy, for every y,

    (observed + fisher) / 2 == average + remainder

where ``average`` needs only quadratic forms in ``Py`` (no traces) and the
remainder has expectation zero under the model.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import _kernels
from .likelihood import projection_at, reml_loglik
from .projection import P_times_all, apply_P, trace_P_times

KINDS = ("observed", "fisher", "average", "remainder")


@dataclass(frozen=True)
class InfoMatrix:
    kind: str
    entries: np.ndarray
    theta: object

    def __array__(self, dtype=None, copy=None):
        return np.asarray(self.entries, dtype=dtype)

    @property
    def shape(self):
        return self.entries.shape


def _sym(upper):
    """Mirror the upper triangle so the result is exactly symmetric."""
    iu = np.triu_indices_from(upper, 1)
    out = upper.copy()
    out[(iu[1], iu[0])] = upper[iu]
    return out


class _Terms:
    """Quantities shared between the four matrices at one (data, theta)."""

    def __init__(self, data, model, theta, need_y=True):
        self.data, self.model, self.theta = data, model, theta
        self.m = model.m
        self.s2 = theta.sigma2
        self.dof = data.n - data.nu
        if need_y:
            ev = reml_loglik(data, model, theta)
            self.ctx = ev.ctx
            self.xi = ev.Py
            self.yPy = ev.yPy
        else:
            self.ctx = projection_at(data, model, theta)
        self._PdH = None

    # matvec-only pieces
    def eta(self):
        if not self.m:
            return np.zeros((self.data.n, 0))
        return np.column_stack([self.model.dH_matvec(self.theta.kappa, k, self.xi) for k in range(self.m)])

    def eta_zeta(self):
        eta = self.eta()
        zeta = apply_P(self.ctx, eta) if self.m else eta
        return eta, zeta

    def d2H_quad(self):
        """``{(i, j): xi^T d2H_ij xi}`` over the pairs that can be nonzero."""
        return {
            (i, j): float(self.xi @ (self.model.d2H(self.theta.kappa, i, j) @ self.xi))
            for i, j in self.model.nonzero_hessian_pairs()
        }

    # trace pieces
    def PdH(self):
        if self._PdH is None:
            self._PdH = P_times_all(self.ctx, self.model.dH_all(self.theta.kappa))
        return self._PdH

    def tr_PdH(self):
        return np.array([np.trace(A) for A in self.PdH()])

    def tr_PdHPdH(self):
        PdH = self.PdH()
        out = np.zeros((self.m, self.m))
        for i in range(self.m):
            for j in range(i, self.m):
                out[i, j] = _kernels.trace_product(PdH[i], PdH[j])
        return _sym(out)

    def tr_Pd2H(self):
        return {
            (i, j): trace_P_times(self.ctx, self.model.d2H(self.theta.kappa, i, j))
            for i, j in self.model.nonzero_hessian_pairs()
        }


def _block(m, corner, row, kk):
    M = np.zeros((m + 1, m + 1))
    M[0, 0] = corner
    M[0, 1:] = row
    M[1:, 1:] = np.triu(kk)
    return _sym(M)


def _pair_matrix(m, pairs):
    M = np.zeros((m, m))
    for (i, j), v in pairs.items():
        M[i, j] = v
    return M


def _observed(t, eta, zeta):
    s2 = t.s2
    qd = eta.T @ zeta
    trPP = t.tr_PdHPdH()
    trH2 = _pair_matrix(t.m, t.tr_Pd2H())
    qH2 = _pair_matrix(t.m, t.d2H_quad())
    kk = 0.5 * (trH2 - trPP) + (2.0 * qd - qH2) / (2.0 * s2)
    corner = t.yPy / s2**3 - t.dof / (2.0 * s2**2)
    row = (t.xi @ eta) / (2.0 * s2**2)
    return InfoMatrix("observed", _block(t.m, corner, row, kk), t.theta)


def _fisher(t):
    s2 = t.s2
    corner = t.dof / (2.0 * s2**2)
    row = t.tr_PdH() / (2.0 * s2)
    kk = 0.5 * t.tr_PdHPdH()
    return InfoMatrix("fisher", _block(t.m, corner, row, kk), t.theta)


def _average(t, eta, zeta):
    s2 = t.s2
    corner = t.yPy / (2.0 * s2**3)
    row = (t.xi @ eta) / (2.0 * s2**2)
    # entry (i, j) is eta_i^T zeta_j = y^T P dH_i P dH_j P y; a literal reading
    # of the published four-step recipe would return eta_i^T xi instead
    kk = (eta.T @ zeta) / (2.0 * s2)
    return InfoMatrix("average", _block(t.m, corner, row, kk), t.theta)


def _remainder(t, eta):
    s2 = t.s2
    row = t.tr_PdH() / (4.0 * s2) - (t.xi @ eta) / (4.0 * s2**2)
    kk = (_pair_matrix(t.m, t.tr_Pd2H()) - _pair_matrix(t.m, t.d2H_quad()) / s2) / 4.0
    return InfoMatrix("remainder", _block(t.m, 0.0, row, kk), t.theta)


def observed_information(data, model, theta):
    t = _Terms(data, model, theta)
    eta, zeta = t.eta_zeta()
    return _observed(t, eta, zeta)


def fisher_information(data, model, theta):
    """Expected information; depends on ``data`` only through X (and Z via the model)."""
    return _fisher(_Terms(data, model, theta, need_y=False))


def average_information(data, model, theta):
    """Average information from ``m + 1`` applications of P and ``m`` matvecs with dH."""
    t = _Terms(data, model, theta)
    eta, zeta = t.eta_zeta()
    return _average(t, eta, zeta)


def splitting_remainder(data, model, theta):
    t = _Terms(data, model, theta)
    return _remainder(t, t.eta())


def all_information(data, model, theta):
    """The four matrices from one set of shared factorizations, keyed by kind."""
    t = _Terms(data, model, theta)
    eta, zeta = t.eta_zeta()
    return {
        "observed": _observed(t, eta, zeta),
        "fisher": _fisher(t),
        "average": _average(t, eta, zeta),
        "remainder": _remainder(t, eta),
    }


@dataclass(frozen=True)
class SplittingReport:
    max_abs: float
    max_rel: float
    residual: np.ndarray


def splitting_residual(mats):
    lhs = 0.5 * (mats["observed"].entries + mats["fisher"].entries)
    res = lhs - mats["average"].entries - mats["remainder"].entries
    rel = np.abs(res) / (1.0 + np.abs(lhs))
    return SplittingReport(float(np.max(np.abs(res))), float(np.max(rel)), res)


def check_splitting(data, model, theta):
    """Entrywise residual of ``(I_O + I)/2 - I_A - I_Z``; rounding level for any y."""
    return splitting_residual(all_information(data, model, theta))
