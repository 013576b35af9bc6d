"""One-shot Krylov approximations of ``f(A) b``.

Each function takes a finished :class:`~randkrylov.basis.KrylovDecomposition`
and extracts an approximation from it:

========  ==========================================================
fom       ``beta W_m f(H_m) e_1`` (orthonormal or incomplete basis)
rand_fom  ``alpha W_m f(R_m) e_1`` (sketched-orthonormal basis)
rand_ls   ``eta W_m f(Y_m) e_1`` with the last column of ``R_m``
          corrected by a least-squares solve, ``Y_m = pinv(W_m) A W_m``
sfom      ``||S b|| W_m T_m^-1 f(X_m) e_1`` after whitening ``S W = Q T``
========  ==========================================================
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import solve_triangular

from .basis import INCOMPLETE, ORTHONORMAL, SKETCHED, KrylovDecomposition
from .densefun import FunctionSpec, funm, thin_qr
from .errors import ParameterError, ShapeError, WhiteningBreakdown
from .leastsq import lsmr, sketch_precondition_lsq
from .sketch import SketchOperator, sketch_apply
from .sparse import SparseMatrix

__all__ = ["Approximant", "fom", "rand_fom", "rand_ls", "sfom", "ritz_values"]


@dataclass
class Approximant:
    value: np.ndarray
    method: str
    m: int
    diagnostics: dict = field(default_factory=dict)


def ritz_values(dec: KrylovDecomposition) -> np.ndarray:
    """Eigenvalues of ``R_m`` sorted by real part, then imaginary part."""
    lam = np.linalg.eigvals(dec.R)
    return lam[np.lexsort((lam.imag, lam.real))]


def _diagnostics(dec: KrylovDecomposition, with_kappa: bool) -> dict:
    return {
        "kappa_W": float(np.linalg.cond(dec.Wm)) if with_kappa else float("nan"),
        "ritz_values": ritz_values(dec),
        "matvecs": dec.m,
    }


def _galerkin(dec: KrylovDecomposition, H: np.ndarray, f: FunctionSpec) -> np.ndarray:
    F = funm(H, f)
    return dec.start_norm * (dec.Wm @ F[:, 0])


def fom(dec: KrylovDecomposition, f: FunctionSpec, with_kappa: bool = True) -> Approximant:
    if dec.kind not in (ORTHONORMAL, INCOMPLETE):
        raise ParameterError(f"fom expects an orthonormal or incomplete basis, got {dec.kind}")
    method = "arnoldi" if dec.kind == ORTHONORMAL else "incomplete"
    return Approximant(_galerkin(dec, dec.R, f), method, dec.m, _diagnostics(dec, with_kappa))


def rand_fom(dec: KrylovDecomposition, f: FunctionSpec, with_kappa: bool = True) -> Approximant:
    if dec.kind != SKETCHED:
        raise ParameterError(f"rand_fom expects a sketched-orthonormal basis, got {dec.kind}")
    return Approximant(_galerkin(dec, dec.R, f), "rand", dec.m, _diagnostics(dec, with_kappa))


def projected_matrix(dec: KrylovDecomposition, S: SketchOperator | None = None,
                     use_precond: bool = False) -> tuple[np.ndarray, object]:
    """``Y_m = R_m + r_{m+1,m} y e_m^T`` with ``y = pinv(W_m) w_{m+1}``."""
    Y = dec.R.copy()
    if dec.r_next == 0.0:
        return Y, None
    if use_precond:
        if S is None:
            raise ParameterError("preconditioned solve needs a sketch")
        rep = sketch_precondition_lsq(dec.Wm, dec.w_next, S)
    else:
        rep = lsmr(dec.Wm, dec.w_next)
    Y[:, -1] += dec.r_next * rep.solution
    return Y, rep


def rand_ls(dec: KrylovDecomposition, A: SparseMatrix, S: SketchOperator, f: FunctionSpec,
            use_precond: bool = False, with_kappa: bool = True) -> Approximant:
    """Least-squares corrected extraction.

    ``use_precond`` switches from plain LSMR (fine for well-conditioned
    randomized bases) to sketch-and-precondition, needed for incomplete
    bases; the latter raises :class:`WhiteningBreakdown` once the basis is
    numerically rank deficient.
    """
    if A.shape != (dec.n, dec.n):
        raise ShapeError("matrix does not match the decomposition")
    Y, rep = projected_matrix(dec, S, use_precond)
    diag = _diagnostics(dec, with_kappa)
    if rep is not None:
        diag["lsq_iterations"] = rep.iterations
        diag["lsq_converged"] = rep.converged
    return Approximant(_galerkin(dec, Y, f), "rand-ls", dec.m, diag)


def whitened_hessenberg(dec: KrylovDecomposition, S: SketchOperator):
    """Whitening of the sketched basis.

    Returns ``(X_m, Q, T)`` where ``S W_{m+1} = Q T`` and
    ``X_m = T_m R_m T_m^-1 + (r_{m+1,m} / t_m) t e_m^T``.
    """
    m = dec.m
    if S.n != dec.n:
        raise ShapeError("sketch does not match the basis length")
    Q, T = thin_qr(S.apply_block(dec.W))
    Tm = T[:m, :m]
    if np.abs(np.diag(Tm)).min() < 1e-14 * np.abs(Tm).max():
        raise WhiteningBreakdown("triangular factor of the sketched basis is singular")
    TR = Tm @ dec.R
    X = solve_triangular(Tm, TR.T, trans="T").T
    X[:, -1] += (dec.r_next / Tm[-1, -1]) * T[:m, m]
    return X, Q, T


def sfom(dec: KrylovDecomposition, S: SketchOperator, b, f: FunctionSpec,
         with_kappa: bool = True) -> Approximant:
    """Sketched FOM with basis whitening (any basis kind is accepted)."""
    X, _, T = whitened_hessenberg(dec, S)
    F = funm(X, f)
    coef = solve_triangular(T[: dec.m, : dec.m], F[:, 0])
    norm_sb = float(np.linalg.norm(sketch_apply(S, np.asarray(b, dtype=np.float64))))
    value = norm_sb * (dec.Wm @ coef)
    return Approximant(value, "sfom", dec.m, _diagnostics(dec, with_kappa))
