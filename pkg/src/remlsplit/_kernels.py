"""Numeric inner loops with a numba path and a pure-numpy path.

The numba kernels are used when numba imports cleanly and the environment
variable ``REMLSPLIT_DISABLE_NUMBA`` is unset (or set to ``0``). Setting it to
any other value forces the numpy implementations, which are also what the
benchmark compares against. Both paths return identical shapes and agree to
rounding.
"""

from __future__ import annotations

import os

import numpy as np

_DISABLED = os.environ.get("REMLSPLIT_DISABLE_NUMBA", "0").strip().lower() not in (
    "",
    "0",
    "false",
    "no",
)

try:
    if _DISABLED:
        raise ImportError("numba disabled by REMLSPLIT_DISABLE_NUMBA")
    from numba import njit

    HAVE_NUMBA = True
except ImportError:
    HAVE_NUMBA = False

BACKEND = "numba" if HAVE_NUMBA else "numpy"


# --------------------------------------------------------------------------
# pure numpy
# --------------------------------------------------------------------------


def ar1_structure_numpy(n, phi):
    """AR(1) correlation matrix and its first two derivatives in ``phi``.

    Entry (s, t) of the three outputs is ``phi**d``, ``d*phi**(d-1)`` and
    ``d*(d-1)*phi**(d-2)`` with ``d = |s - t|``; terms whose power of ``phi``
    would be negative have a zero coefficient and are set to zero, so
    ``phi = 0`` is handled without ``0**-1``.
    """
    idx = np.arange(n)
    d = np.abs(idx[:, None] - idx[None, :])
    # powers of phi for lags 0..n-1, built by repeated multiplication so
    # that phi**0 == 1 even for phi == 0
    pw = np.ones(n + 1)
    for k in range(1, n + 1):
        pw[k] = pw[k - 1] * phi
    R = pw[d]
    dm1 = np.maximum(d - 1, 0)
    dm2 = np.maximum(d - 2, 0)
    dR = np.where(d >= 1, d * pw[dm1], 0.0)
    d2R = np.where(d >= 2, d * (d - 1) * pw[dm2], 0.0)
    return R, dR.astype(float), d2R.astype(float)


def trace_product_numpy(A, B):
    """tr(AB) without forming the product."""
    return float(np.einsum("ij,ji->", A, B))


def column_dots_numpy(A, B):
    """Per-column inner products ``sum_i A[i, k] * B[i, k]``."""
    return np.einsum("ik,ik->k", A, B)


# --------------------------------------------------------------------------
# numba
# --------------------------------------------------------------------------

if HAVE_NUMBA:

    @njit(cache=True)
    def ar1_structure_numba(n, phi):
        pw = np.ones(n + 1)
        for k in range(1, n + 1):
            pw[k] = pw[k - 1] * phi
        R = np.empty((n, n))
        dR = np.zeros((n, n))
        d2R = np.zeros((n, n))
        for s in range(n):
            for t in range(n):
                d = s - t if s >= t else t - s
                R[s, t] = pw[d]
                if d >= 1:
                    dR[s, t] = d * pw[d - 1]
                if d >= 2:
                    d2R[s, t] = d * (d - 1) * pw[d - 2]
        return R, dR, d2R

    @njit(cache=True)
    def trace_product_numba(A, B):
        n = A.shape[0]
        m = A.shape[1]
        acc = 0.0
        for i in range(n):
            for j in range(m):
                acc += A[i, j] * B[j, i]
        return acc

    @njit(cache=True)
    def column_dots_numba(A, B):
        n, k = A.shape
        out = np.zeros(k)
        for i in range(n):
            for c in range(k):
                out[c] += A[i, c] * B[i, c]
        return out


# --------------------------------------------------------------------------
# dispatch
# --------------------------------------------------------------------------


def ar1_structure(n, phi):
    if HAVE_NUMBA:
        return ar1_structure_numba(int(n), float(phi))
    return ar1_structure_numpy(int(n), float(phi))


def trace_product(A, B):
    A = np.ascontiguousarray(A, dtype=float)
    B = np.ascontiguousarray(B, dtype=float)
    if A.shape != B.T.shape:
        raise ValueError(f"shapes {A.shape} and {B.shape} do not chain into a square product")
    if HAVE_NUMBA:
        return float(trace_product_numba(A, B))
    return trace_product_numpy(A, B)


def column_dots(A, B):
    A = np.ascontiguousarray(A, dtype=float)
    B = np.ascontiguousarray(B, dtype=float)
    if A.shape != B.shape:
        raise ValueError(f"shape mismatch {A.shape} vs {B.shape}")
    if A.ndim == 1:
        return float(A @ B)
    if HAVE_NUMBA:
        return column_dots_numba(A, B)
    return column_dots_numpy(A, B)
