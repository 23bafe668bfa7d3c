"""Smallest eigenvalue of ``-Lap_h + V`` and norm-equivalence constants.

Positivity of the discrete operator is the grid proxy for the spectral
condition on ``-Lap + V``. It is certified by inverse iteration with
conjugate-gradient inner solves. If CG meets a direction of non-positive
curvature the operator is not positive definite, and the eigenvalue is then
found by Lanczos on the inverse of a shifted (positive) operator.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np
import scipy.sparse as sp

from .mesh import ScalarField, _check_same

log = logging.getLogger(__name__)


class IndefiniteOperatorError(ArithmeticError):
    """CG found ``p^T A p <= 0``."""


@dataclass
class CGResult:
    x: np.ndarray
    iterations: int
    residual: float
    converged: bool


def conjugate_gradient(A, b: np.ndarray, tol: float = 1e-12, max_iter: int | None = None,
                       x0: np.ndarray | None = None) -> CGResult:
    """Unpreconditioned CG for ``A x = b``; ``tol`` is relative to ``|b|``.

    Raises ``IndefiniteOperatorError`` on breakdown.
    """
    n = b.size
    max_iter = 10 * n if max_iter is None else max_iter
    x = np.zeros(n) if x0 is None else x0.copy()
    r = b - A @ x
    p = r.copy()
    rr = float(r @ r)
    bnorm = float(np.linalg.norm(b)) or 1.0
    if math.sqrt(rr) <= tol * bnorm:
        return CGResult(x, 0, math.sqrt(rr) / bnorm, True)
    for k in range(1, max_iter + 1):
        Ap = A @ p
        curv = float(p @ Ap)
        if curv <= 0.0:
            raise IndefiniteOperatorError(f"non-positive curvature {curv:.3e} at CG step {k}")
        a = rr / curv
        x += a * p
        r -= a * Ap
        rr_new = float(r @ r)
        if math.sqrt(rr_new) <= tol * bnorm:
            return CGResult(x, k, math.sqrt(rr_new) / bnorm, True)
        p = r + (rr_new / rr) * p
        rr = rr_new
    return CGResult(x, max_iter, math.sqrt(rr) / bnorm, False)


@dataclass
class SpectralResult:
    min_eig: float
    eigvec: ScalarField
    iterations: int
    residual: float
    converged: bool
    method: str


def operator_matrix(V: ScalarField) -> sp.csr_matrix:
    return sp.csr_matrix(V.grid.laplacian() + sp.diags(V.values))


def _rayleigh_pair(A, x):
    x = x / np.linalg.norm(x)
    Ax = A @ x
    lam = float(x @ Ax)
    return x, lam, float(np.linalg.norm(Ax - lam * x))


def smallest_eigenvalue(V: ScalarField, tol: float = 1e-8, max_iter: int = 500) -> SpectralResult:
    """Smallest eigenpair of ``-Lap_h + V``.

    Convergence means ``|A x - lam x| <= tol * max(1, |lam|)`` for the unit
    vector ``x``; ``residual`` is the absolute value ``|A x - lam x|``.
    Non-convergence is reported through ``converged`` rather than raised.
    """
    if not tol > 0:
        raise ValueError("tol must be positive")
    A = operator_matrix(V)
    try:
        return _inverse_iteration(A, V, tol, max_iter)
    except IndefiniteOperatorError as exc:
        log.info("inverse iteration broke down (%s); switching to shifted Lanczos", exc)
        return _shift_invert_lanczos(A, V, tol, max_iter)


def _inverse_iteration(A, V: ScalarField, tol: float, max_iter: int) -> SpectralResult:
    x = np.ones(V.grid.size) / math.sqrt(V.grid.size)
    x, lam, res = _rayleigh_pair(A, x)
    y_prev = None
    for it in range(1, max_iter + 1):
        cg = conjugate_gradient(A, x, tol=1e-13, x0=y_prev)
        y = cg.x
        x, lam, res = _rayleigh_pair(A, y)
        # warm start: next solve has rhs x, and A^{-1}x ~ x / lam
        y_prev = x / lam if lam > 0 else None
        if res <= tol * max(1.0, abs(lam)):
            return SpectralResult(lam, ScalarField(V.grid, x), it, res, True, "inverse-iteration")
    return SpectralResult(lam, ScalarField(V.grid, x), max_iter, res, False, "inverse-iteration")


def _shift_invert_lanczos(A, V: ScalarField, tol: float, max_iter: int,
                          krylov_dim: int = 40) -> SpectralResult:
    n = V.grid.size
    # -Lap_h >= 0, so A - sigma I >= I with this shift
    sigma = float(V.values.min()) - 1.0
    B = sp.csr_matrix(A - sigma * sp.identity(n))
    m = min(krylov_dim, n)
    rng = np.random.default_rng(0)
    start = np.ones(n) + 0.01 * rng.standard_normal(n)
    lam, x, res = float("nan"), start / np.linalg.norm(start), float("inf")
    total = 0
    for _ in range(max_iter):
        Q = np.zeros((n, m + 1))
        alpha = np.zeros(m)
        beta = np.zeros(m)
        Q[:, 0] = x
        k_used = m
        for k in range(m):
            w = conjugate_gradient(B, Q[:, k], tol=1e-13).x
            total += 1
            alpha[k] = Q[:, k] @ w
            w -= Q[:, : k + 1] @ (Q[:, : k + 1].T @ w)
            w -= Q[:, : k + 1] @ (Q[:, : k + 1].T @ w)
            beta[k] = np.linalg.norm(w)
            if beta[k] < 1e-14:
                k_used = k + 1
                break
            Q[:, k + 1] = w / beta[k]
        T = np.diag(alpha[:k_used]) + np.diag(beta[: k_used - 1], 1) + np.diag(beta[: k_used - 1], -1)
        theta, S = np.linalg.eigh(T)
        x = Q[:, :k_used] @ S[:, -1]
        x, lam, res = _rayleigh_pair(A, x)
        if res <= tol * max(1.0, abs(lam)):
            return SpectralResult(lam, ScalarField(V.grid, x), total, res, True, "shift-invert-lanczos")
    return SpectralResult(lam, ScalarField(V.grid, x), total, res, False, "shift-invert-lanczos")


class NormBounds(NamedTuple):
    """``c1 |u| <= |u|_n <= c2 |u|`` for every grid function ``u``."""

    c1: float
    c2: float

    @property
    def certified(self) -> bool:
        return self.c1 > 0.0


def norm_equivalence_bounds(V: ScalarField, K_n: ScalarField, min_eig: float | None = None) -> NormBounds:
    """Equivalence constants between the ``V`` and ``V + K_n`` energy norms.

    Uses ``int K u^2 <= |K^+|_inf |u|_2^2 <= |K^+|_inf / lam_1 |u|^2`` with
    ``lam_1`` the smallest eigenvalue of ``-Lap_h + V`` (and the same for
    ``K^-``). ``c1 == 0`` means no certificate.
    """
    _check_same(V.grid, K_n.grid)
    lam = smallest_eigenvalue(V).min_eig if min_eig is None else min_eig
    if not lam > 0:
        raise ValueError(f"-Lap_h + V is not positive definite (min eigenvalue {lam:.6g})")
    k_plus = float(np.max(np.maximum(K_n.values, 0.0)))
    k_minus = float(np.max(np.maximum(-K_n.values, 0.0)))
    c1 = math.sqrt(max(0.0, 1.0 - k_minus / lam))
    c2 = math.sqrt(1.0 + k_plus / lam)
    return NormBounds(c1, c2)
