"""LSMR and a sketch-and-precondition least-squares driver.

The LSMR recurrences follow Fong & Saunders (2011) without damping.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import solve_triangular
from scipy.sparse.linalg import LinearOperator, aslinearoperator

from .densefun import thin_qr
from .errors import ShapeError, WhiteningBreakdown
from .sketch import SketchOperator

__all__ = ["LsqReport", "lsmr", "sketch_precondition_lsq"]


@dataclass
class LsqReport:
    solution: np.ndarray
    iterations: int
    residual_norm: float
    normal_residual_norm: float
    converged: bool
    history: list[float] = field(default_factory=list)


def _sym_ortho(a: float, b: float):
    if b == 0.0:
        return math.copysign(1.0, a), 0.0, abs(a)
    if a == 0.0:
        return 0.0, math.copysign(1.0, b), abs(b)
    r = math.hypot(a, b)
    return a / r, b / r, r


def lsmr(B, rhs, atol: float = 1e-12, btol: float = 1e-12, max_iter: int | None = None,
         x0=None, record_history: bool = False) -> LsqReport:
    """Solve ``min ||B x - rhs||``.

    ``B`` is a dense array or anything :func:`scipy.sparse.linalg.aslinearoperator`
    accepts.  Stopping follows the usual LSMR tests: ``||r|| <= btol ||rhs|| +
    atol ||B|| ||x||`` (consistent systems) or ``||B^T r|| <= atol ||B|| ||r||``.
    Hitting ``max_iter`` (default ``4 * cols``) is reported, not raised.

    With ``record_history`` the true ``||B^T r_k||`` is recomputed after
    every iteration (two extra products per step).
    """
    op = aslinearoperator(B)
    nrow, ncol = op.shape
    rhs = np.asarray(rhs, dtype=np.float64)
    if rhs.shape != (nrow,):
        raise ShapeError(f"rhs has shape {rhs.shape}, operator is {op.shape}")
    if max_iter is None:
        max_iter = 4 * ncol
    x = np.zeros(ncol) if x0 is None else np.array(x0, dtype=np.float64)

    def true_normar(xk):
        return float(np.linalg.norm(op.rmatvec(rhs - op.matvec(xk))))

    history = [true_normar(x)] if record_history else []
    normb = float(np.linalg.norm(rhs))
    u = rhs - op.matvec(x) if x0 is not None else rhs.copy()
    beta = float(np.linalg.norm(u))
    if beta > 0:
        u = u / beta
        v = op.rmatvec(u)
        alpha = float(np.linalg.norm(v))
    else:
        v = np.zeros(ncol)
        alpha = 0.0
    if alpha > 0:
        v = v / alpha

    itn = 0
    converged = alpha * beta == 0.0
    zetabar = alpha * beta
    alphabar = alpha
    rho = rhobar = cbar = 1.0
    sbar = 0.0
    h = v.copy()
    hbar = np.zeros(ncol)
    betadd, betad = beta, 0.0
    rhodold, tautildeold, thetatilde, zeta, d = 1.0, 0.0, 0.0, 0.0, 0.0
    normA2 = alpha * alpha
    maxrbar, minrbar = 0.0, 1e100
    normb = normb if normb > 0 else 1.0

    while not converged and itn < max_iter:
        itn += 1
        u = op.matvec(v) - alpha * u
        beta = float(np.linalg.norm(u))
        if beta > 0:
            u /= beta
            v = op.rmatvec(u) - beta * v
            alpha = float(np.linalg.norm(v))
            if alpha > 0:
                v /= alpha

        rhoold = rho
        c, s, rho = _sym_ortho(alphabar, beta)
        thetanew = s * alpha
        alphabar = c * alpha

        rhobarold, zetaold = rhobar, zeta
        thetabar = sbar * rho
        rhotemp = cbar * rho
        cbar, sbar, rhobar = _sym_ortho(cbar * rho, thetanew)
        zeta = cbar * zetabar
        zetabar = -sbar * zetabar

        hbar = h - (thetabar * rho / (rhoold * rhobarold)) * hbar
        x = x + (zeta / (rho * rhobar)) * hbar
        h = v - (thetanew / rho) * h

        # residual-norm estimate
        betahat = c * betadd
        betadd = -s * betadd
        thetatildeold = thetatilde
        ctildeold, stildeold, rhotildeold = _sym_ortho(rhodold, thetabar)
        thetatilde = stildeold * rhobar
        rhodold = ctildeold * rhobar
        betad = -stildeold * betad + ctildeold * betahat
        tautildeold = (zetaold - thetatildeold * tautildeold) / rhotildeold
        taud = (zeta - thetatilde * tautildeold) / rhodold
        normr = math.sqrt(d + (betad - taud) ** 2 + betadd**2)

        normA2 += beta * beta
        normA = math.sqrt(normA2)
        normA2 += alpha * alpha
        maxrbar = max(maxrbar, rhobarold)
        if itn > 1:
            minrbar = min(minrbar, rhobarold)

        normar = abs(zetabar)
        normx = float(np.linalg.norm(x))
        if record_history:
            history.append(true_normar(x))

        test1 = normr / normb
        test2 = normar / (normA * normr) if normA * normr > 0 else math.inf
        rtol = btol + atol * normA * normx / normb
        if test1 <= rtol or test2 <= atol or normar == 0.0:
            converged = True

    r = rhs - op.matvec(x)
    return LsqReport(
        solution=x,
        iterations=itn,
        residual_norm=float(np.linalg.norm(r)),
        normal_residual_norm=float(np.linalg.norm(op.rmatvec(r))),
        converged=converged,
        history=history,
    )


def sketch_precondition_lsq(W, w_next, S: SketchOperator, atol: float = 1e-12,
                            btol: float = 1e-12, max_iter: int | None = None) -> LsqReport:
    """Approximate ``pinv(W) @ w_next`` with a sketch-derived preconditioner.

    The triangular factor of ``S W = Q T`` whitens the basis: LSMR runs on
    ``W T^-1``, warm-started from the sketched solution
    ``argmin ||S W x - S w_next||``.
    """
    W = np.asarray(W, dtype=np.float64)
    w_next = np.asarray(w_next, dtype=np.float64)
    n, m = W.shape
    if S.n != n or w_next.shape != (n,):
        raise ShapeError("sketch, basis and right-hand side disagree in length")
    if S.d < m + 1:
        raise ShapeError(f"sketch dimension {S.d} too small for {m} columns")
    Q, T = thin_qr(S.apply_block(W))
    diag = np.abs(np.diag(T))
    if diag.min() < 1e-14 * np.abs(T).max():
        raise WhiteningBreakdown("sketched basis is numerically rank deficient")

    y0 = solve_triangular(T, Q.T @ (S @ w_next))
    r0 = w_next - W @ y0

    pre = LinearOperator(
        (n, m),
        matvec=lambda z: W @ solve_triangular(T, np.ravel(z)),
        rmatvec=lambda r: solve_triangular(T, W.T @ np.ravel(r), trans="T"),
        dtype=np.float64,
    )
    rep = lsmr(pre, r0, atol=atol, btol=btol, max_iter=4 * m if max_iter is None else max_iter)
    y = y0 + solve_triangular(T, rep.solution)
    r = w_next - W @ y
    return LsqReport(
        solution=y,
        iterations=rep.iterations,
        residual_norm=float(np.linalg.norm(r)),
        normal_residual_norm=float(np.linalg.norm(W.T @ r)),
        converged=rep.converged,
    )
