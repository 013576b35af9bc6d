"""Krylov basis builders.

All three builders return a :class:`KrylovDecomposition` satisfying

    A @ W[:, :m] = W @ Rbar

with ``W`` of shape ``(n, m + 1)`` and ``Rbar`` upper Hessenberg of shape
``(m + 1, m)``.  After a happy breakdown at step ``k`` the decomposition
is truncated to ``m = k``; its last basis column and the last row of
``Rbar`` are then zero.
"""

from __future__ import annotations

import os
from dataclasses import dataclass

import numpy as np

from . import instrument
from .errors import ParameterError, ShapeError
from .sketch import SketchOperator, sketch_apply
from .sparse import SparseMatrix, spmv

__all__ = ["KrylovDecomposition", "arnoldi", "incomplete_arnoldi", "randomized_arnoldi"]

BREAKDOWN_RTOL = 1e-14

ORTHONORMAL = "orthonormal"
SKETCHED = "sketched-orthonormal"
INCOMPLETE = "incomplete"


@dataclass(frozen=True, eq=False)
class KrylovDecomposition:
    W: np.ndarray
    Rbar: np.ndarray
    start_norm: float
    kind: str
    k_trunc: int | None = None
    U: np.ndarray | None = None
    breakdown_at: int | None = None

    @property
    def m(self) -> int:
        return self.Rbar.shape[1]

    @property
    def n(self) -> int:
        return self.W.shape[0]

    @property
    def Wm(self) -> np.ndarray:
        return self.W[:, : self.m]

    @property
    def R(self) -> np.ndarray:
        """Square Hessenberg block ``Rbar[:m, :m]``."""
        return self.Rbar[: self.m, :]

    @property
    def r_next(self) -> float:
        return float(self.Rbar[self.m, self.m - 1])

    @property
    def w_next(self) -> np.ndarray:
        return self.W[:, self.m]

    def truncated(self, m: int) -> "KrylovDecomposition":
        """Leading order-``m`` decomposition (a prefix of the same run)."""
        if not 1 <= m <= self.m:
            raise ParameterError(f"cannot truncate order {self.m} decomposition to {m}")
        if m == self.m:
            return self
        return KrylovDecomposition(
            W=self.W[:, : m + 1],
            Rbar=self.Rbar[: m + 1, :m],
            start_norm=self.start_norm,
            kind=self.kind,
            k_trunc=self.k_trunc,
            U=None if self.U is None else self.U[:, : m + 1],
            breakdown_at=None,
        )

    def residual(self, A: SparseMatrix) -> float:
        """``||A W_m - W Rbar||_F``."""
        AW = np.column_stack([A._csr @ self.W[:, j] for j in range(self.m)])
        return float(np.linalg.norm(AW - self.W @ self.Rbar))


def _check_inputs(A: SparseMatrix, b, m: int) -> np.ndarray:
    if A.n_rows != A.n_cols:
        raise ShapeError("matrix must be square")
    b = np.asarray(b, dtype=np.float64)
    if b.shape != (A.n_rows,):
        raise ShapeError(f"start vector has shape {b.shape}, matrix is {A.shape}")
    if not np.all(np.isfinite(b)):
        raise ValueError("start vector has non-finite entries")
    if m < 1:
        raise ParameterError("m must be at least 1")
    if m > A.n_rows:
        raise ParameterError(f"m={m} exceeds the dimension n={A.n_rows}")
    _check_memory(A.n_rows, m)
    return b


def _check_memory(n: int, m: int) -> None:
    try:
        phys = os.sysconf("SC_PAGE_SIZE") * os.sysconf("SC_PHYS_PAGES")
    except (ValueError, OSError, AttributeError):
        return
    need = 8 * n * (m + 1)
    if need > phys // 2:
        raise ParameterError(
            f"basis of {m + 1} vectors of length {n} needs {need / 2**30:.1f} GiB; "
            "reduce m or use restarting"
        )


def _truncate(W, Rbar, k, U=None):
    # keep k columns plus a zero trailing vector
    W = W[:, : k + 1].copy(order="F")
    W[:, k] = 0.0
    Rbar = Rbar[: k + 1, :k].copy()
    Rbar[k, k - 1] = 0.0
    if U is not None:
        U = U[:, : k + 1].copy(order="F")
        U[:, k] = 0.0
    return W, Rbar, U


def _mgs_arnoldi(A: SparseMatrix, b, m: int, window: int | None):
    b = _check_inputs(A, b, m)
    beta = float(np.linalg.norm(b))
    if beta == 0.0:
        raise ValueError("zero start vector")
    ops = instrument.current()
    tol = BREAKDOWN_RTOL * A.norm1()
    n = A.n_rows
    V = np.zeros((n, m + 1), order="F")
    H = np.zeros((m + 1, m))
    V[:, 0] = b / beta
    for k in range(m):
        u = spmv(A, V[:, k])
        first = 0 if window is None else max(0, k - window + 1)
        for i in range(first, k + 1):
            h = V[:, i] @ u
            ops.dot_n += 1
            u -= h * V[:, i]
            H[i, k] = h
        h = float(np.linalg.norm(u))
        H[k + 1, k] = h
        ops.note_basis(k + 2)
        if h <= tol:
            V, H, _ = _truncate(V, H, k + 1)
            return V, H, beta, k + 1
        V[:, k + 1] = u / h
    return V, H, beta, None


def arnoldi(A: SparseMatrix, b, m: int) -> KrylovDecomposition:
    """Arnoldi with one modified Gram-Schmidt sweep per step."""
    V, H, beta, bd = _mgs_arnoldi(A, b, m, None)
    return KrylovDecomposition(V, H, beta, ORTHONORMAL, breakdown_at=bd)


def incomplete_arnoldi(A: SparseMatrix, b, m: int, k_trunc: int) -> KrylovDecomposition:
    """Arnoldi where each new vector sees only the ``k_trunc`` most recent ones.

    With ``k_trunc >= m`` this is exactly :func:`arnoldi`.
    """
    if k_trunc < 1:
        raise ParameterError("k_trunc must be at least 1")
    V, H, beta, bd = _mgs_arnoldi(A, b, m, k_trunc)
    kind = ORTHONORMAL if k_trunc >= m else INCOMPLETE
    return KrylovDecomposition(V, H, beta, kind, k_trunc=k_trunc, breakdown_at=bd)


def randomized_arnoldi(A: SparseMatrix, S: SketchOperator, b, m: int) -> KrylovDecomposition:
    """Arnoldi with randomized Gram-Schmidt.

    Orthogonalization happens between sketches ``u_i = S w_i`` only; the
    full-length vector receives a single block update per step.  The
    result is sketched-orthonormal: ``S W`` has orthonormal columns.
    """
    b = _check_inputs(A, b, m)
    n = A.n_rows
    if S.n != n:
        raise ShapeError(f"sketch acts on length {S.n}, matrix is {A.shape}")
    if S.d < min(m + 1, n):
        raise ParameterError(f"sketch dimension d={S.d} must be at least m+1={m + 1}")
    ops = instrument.current()
    sb = sketch_apply(S, b)
    alpha = float(np.linalg.norm(sb))
    if alpha == 0.0:
        raise ValueError("zero start vector (S b = 0)")
    tol = BREAKDOWN_RTOL * A.norm1()
    W = np.zeros((n, m + 1), order="F")
    U = np.zeros((S.d, m + 1), order="F")
    R = np.zeros((m + 1, m))
    W[:, 0] = b / alpha
    U[:, 0] = sb / alpha
    for k in range(m):
        w = spmv(A, W[:, k])
        p = sketch_apply(S, w)
        for i in range(k + 1):
            r = U[:, i] @ p
            ops.dot_d += 1
            p -= r * U[:, i]
            R[i, k] = r
        w -= W[:, : k + 1] @ R[: k + 1, k]
        ops.basis_updates += 1
        # re-sketch the updated vector so that U stays equal to S W; the
        # orthogonalized p alone drifts away from it on non-normal problems
        s = sketch_apply(S, w)
        r = float(np.linalg.norm(s))
        R[k + 1, k] = r
        ops.note_basis(k + 2)
        if r <= tol:
            W, R, U = _truncate(W, R, k + 1, U)
            return KrylovDecomposition(W, R, alpha, SKETCHED, U=U, breakdown_at=k + 1)
        W[:, k + 1] = w / r
        U[:, k + 1] = s / r
    return KrylovDecomposition(W, R, alpha, SKETCHED, U=U)
