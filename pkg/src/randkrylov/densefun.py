"""Dense kernels: thin QR, matrix functions of small matrices, and the
spectral reference evaluator.

Supported functions (:class:`FunctionSpec`):

* ``exp_neg(t)``      f(z) = exp(-t z)
* ``phi1_neg(t)``     f(z) = phi1(-t z),   phi1(w) = (e^w - 1)/w
* ``cos_sqrt(nu, t)`` f(z) = cos(nu t sqrt(z))   (entire in z)
* ``scalar_table(fn)`` any scalar callable, evaluated by Schur-Parlett
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import Callable, NamedTuple

import numpy as np
import scipy.linalg as sla
from scipy.linalg import lapack

from .errors import DefectiveMatrixError, FunctionOverflow, ShapeError

__all__ = [
    "FunctionSpec", "ThinQR", "thin_qr", "expm", "phi1m", "cossqrtm",
    "schur_parlett", "funm", "dense_eig_oracle", "dense_reference",
]


# -- function descriptors -----------------------------------------------------

@dataclass(frozen=True)
class FunctionSpec:
    kind: str
    t: float = 0.0
    nu: float = 1.0
    fn: Callable | None = None
    derivs: Callable | None = None
    name: str = ""

    def __post_init__(self):
        if self.kind not in ("exp_neg", "phi1_neg", "cos_sqrt", "scalar_table"):
            raise ValueError(f"unknown function kind '{self.kind}'")
        if self.t < 0:
            raise ValueError("t must be nonnegative")
        if self.nu <= 0:
            raise ValueError("nu must be positive")
        if self.kind == "scalar_table" and self.fn is None:
            raise ValueError("scalar_table needs a callable")

    @classmethod
    def exp_neg(cls, t: float) -> "FunctionSpec":
        return cls("exp_neg", t=float(t))

    @classmethod
    def phi1_neg(cls, t: float) -> "FunctionSpec":
        return cls("phi1_neg", t=float(t))

    @classmethod
    def cos_sqrt(cls, nu: float, t: float) -> "FunctionSpec":
        return cls("cos_sqrt", t=float(t), nu=float(nu))

    @classmethod
    def scalar_table(cls, fn, derivs=None, name: str = "") -> "FunctionSpec":
        """``fn`` maps complex arrays elementwise.  ``derivs(z, k)`` (optional)
        returns the k-th derivative and is only needed when eigenvalues cluster."""
        return cls("scalar_table", fn=fn, derivs=derivs, name=name)

    def scalar(self, z) -> np.ndarray:
        """Elementwise value at complex points."""
        z = np.asarray(z, dtype=complex)
        if self.kind == "exp_neg":
            return np.exp(-self.t * z)
        if self.kind == "phi1_neg":
            return _phi1_scalar(-self.t * z)
        if self.kind == "cos_sqrt":
            return np.cos(self.nu * self.t * np.sqrt(z))
        return np.asarray(self.fn(z), dtype=complex)

    def to_dict(self) -> dict:
        if self.kind == "scalar_table":
            raise ValueError("scalar_table functions are not serialisable")
        d = {"kind": self.kind, "t": self.t}
        if self.kind == "cos_sqrt":
            d["nu"] = self.nu
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "FunctionSpec":
        kind = d["kind"]
        if kind == "cos_sqrt":
            return cls.cos_sqrt(d.get("nu", 1.0), d["t"])
        if kind in ("exp_neg", "phi1_neg"):
            return cls(kind, t=float(d["t"]))
        raise ValueError(f"unknown function kind '{kind}'")


def _phi1_scalar(w: np.ndarray) -> np.ndarray:
    w = np.asarray(w, dtype=complex)
    out = np.empty_like(w)
    small = np.abs(w) < 1e-3
    ws = w[small]
    out[small] = 1 + ws / 2 * (1 + ws / 3 * (1 + ws / 4 * (1 + ws / 5 * (1 + ws / 6))))
    wl = w[~small]
    out[~small] = np.expm1(wl) / wl
    return out


# -- QR -----------------------------------------------------------------------

class ThinQR(NamedTuple):
    Q: np.ndarray
    T: np.ndarray

    def rank_deficient(self, rtol: float = 1e-14) -> bool:
        d = np.abs(np.diag(self.T))
        return bool(d.size and d.min() <= rtol * max(np.abs(self.T).max(), 1e-300))


def thin_qr(B) -> ThinQR:
    """Householder QR (LAPACK) normalised so ``diag(T) >= 0``."""
    B = np.asarray(B, dtype=np.float64)
    if B.ndim != 2 or B.shape[0] < B.shape[1]:
        raise ShapeError("thin_qr needs a tall (rows >= cols) matrix")
    Q, T = np.linalg.qr(B, mode="reduced")
    sgn = np.where(np.diag(T) < 0, -1.0, 1.0)
    return ThinQR(Q * sgn, T * sgn[:, None])


# -- exponential --------------------------------------------------------------

_PADE13 = (
    64764752532480000.0, 32382376266240000.0, 7771770303897600.0,
    1187353796428800.0, 129060195264000.0, 10559470521600.0,
    670442572800.0, 33522128640.0, 1323241920.0, 40840800.0,
    960960.0, 16380.0, 182.0, 1.0,
)
_THETA13 = 5.371920351148152


def _square_check(X) -> np.ndarray:
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2 or X.shape[0] != X.shape[1]:
        raise ShapeError("matrix must be square")
    if not np.all(np.isfinite(X)):
        raise FunctionOverflow("non-finite input")
    return X


def _scaling(norm1: float) -> int:
    if norm1 <= _THETA13:
        return 0
    return int(math.ceil(math.log2(norm1 / _THETA13)))


def _pade13(Y: np.ndarray):
    """Return ``(U', V)`` with ``U = Y @ U'`` the odd part of the [13/13] Pade numerator."""
    b = _PADE13
    ident = np.eye(Y.shape[0])
    Y2 = Y @ Y
    Y4 = Y2 @ Y2
    Y6 = Y4 @ Y2
    Uq = Y6 @ (b[13] * Y6 + b[11] * Y4 + b[9] * Y2) + b[7] * Y6 + b[5] * Y4 + b[3] * Y2 + b[1] * ident
    V = Y6 @ (b[12] * Y6 + b[10] * Y4 + b[8] * Y2) + b[6] * Y6 + b[4] * Y4 + b[2] * Y2 + b[0] * ident
    return Uq, V


def _finite(F: np.ndarray) -> np.ndarray:
    if not np.all(np.isfinite(F)):
        raise FunctionOverflow("function overflow")
    return F


def expm(X) -> np.ndarray:
    """Matrix exponential by [13/13] Pade scaling and squaring."""
    X = _square_check(X)
    if X.size == 0:
        return X.copy()
    s = _scaling(np.linalg.norm(X, 1))
    Y = X / 2.0**s
    Uq, V = _pade13(Y)
    U = Y @ Uq
    with np.errstate(over="ignore", invalid="ignore"):
        E = np.linalg.solve(V - U, V + U)
        for _ in range(s):
            E = E @ E
    return _finite(E)


def phi1m(X) -> np.ndarray:
    """``phi1(X)`` as the top-right block of ``exp([[X, I], [0, 0]])``.

    The augmented exponential is evaluated without forming the doubled
    matrix: every power of the augmented matrix is ``[[Y^k, c Y^(k-1)], [0, 0]]``,
    so the Pade quotient and the squarings reduce to operations on
    ``n x n`` blocks.
    """
    X = _square_check(X)
    n = X.shape[0]
    if n == 0:
        return X.copy()
    s = _scaling(max(np.linalg.norm(X, 1), 1.0))
    c = 2.0**-s
    Y = X * c
    Uq, V = _pade13(Y)
    U = Y @ Uq
    with np.errstate(over="ignore", invalid="ignore"):
        lu = sla.lu_factor(V - U, check_finite=False)
        E1 = sla.lu_solve(lu, V + U, check_finite=False)
        E2 = sla.lu_solve(lu, (2.0 * c) * Uq, check_finite=False)
        for _ in range(s):
            E2 = E1 @ E2 + E2
            E1 = E1 @ E1
    return _finite(E2)


# -- cosine of the square root -------------------------------------------------

_COS_TERMS = 10  # Taylor degree 9 in z; truncation below 1/20! for ||z|| <= 1


def cossqrtm(X, tau: float) -> np.ndarray:
    """``cos(tau * sqrt(X))`` via its power series in ``X``.

    ``g(Y) = sum (-1)^k Y^k / (2k)!`` with ``Y = tau^2 X`` is entire and
    even in ``sqrt(Y)``, so no square root is ever formed.  The argument is
    scaled by ``4^-s`` until ``||Y||_1 <= 1`` and the result recovered with
    ``cos(2a) = 2 cos(a)^2 - 1``.
    """
    X = _square_check(X)
    n = X.shape[0]
    if n == 0:
        return X.copy()
    Y = (tau * tau) * X
    nrm = np.linalg.norm(Y, 1)
    s = 0 if nrm <= 1.0 else int(math.ceil(math.log(nrm, 4.0)))
    Z = Y / 4.0**s
    coef = [(-1.0) ** k / math.factorial(2 * k) for k in range(_COS_TERMS)]
    ident = np.eye(n)
    Z2 = Z @ Z
    Z3 = Z2 @ Z
    # Paterson-Stockmeyer in blocks of three
    C = coef[9] * ident
    for j in (2, 1, 0):
        C = Z3 @ C + coef[3 * j] * ident + coef[3 * j + 1] * Z + coef[3 * j + 2] * Z2
    with np.errstate(over="ignore", invalid="ignore"):
        for _ in range(s):
            C = 2.0 * (C @ C) - ident
    return _finite(C)


# -- Schur-Parlett -------------------------------------------------------------

def _clusters(lam: np.ndarray, delta: float) -> np.ndarray:
    """Transitive closure of ``|l_i - l_j| <= delta``; returns cluster ids."""
    n = len(lam)
    ids = np.arange(n)
    close = np.abs(lam[:, None] - lam[None, :]) <= delta
    # union-find over the closeness graph
    parent = list(range(n))

    def find(i):
        while parent[i] != i:
            parent[i] = parent[parent[i]]
            i = parent[i]
        return i

    for i, j in zip(*np.nonzero(np.triu(close, 1))):
        ri, rj = find(i), find(j)
        if ri != rj:
            parent[max(ri, rj)] = min(ri, rj)
    roots = np.array([find(i) for i in range(n)])
    _, ids = np.unique(roots, return_inverse=True)
    return ids


def _reorder(T: np.ndarray, Z: np.ndarray, ids: np.ndarray):
    """Make clusters contiguous with unitary swaps (LAPACK ztrexc)."""
    ids = list(ids)
    order = sorted(set(ids), key=ids.index)
    pos = 0
    for c in order:
        for _ in range(ids.count(c)):
            src = ids.index(c, pos)
            if src != pos:
                T, Z, info = lapack.ztrexc(T, Z, src + 1, pos + 1)
                if info != 0:
                    raise ArithmeticError("Schur reordering failed")
                ids.insert(pos, ids.pop(src))
            pos += 1
    blocks, start = [], 0
    for i in range(1, len(ids) + 1):
        if i == len(ids) or ids[i] != ids[start]:
            blocks.append((start, i))
            start = i
    return T, Z, blocks


def _taylor_block(Tb: np.ndarray, derivs: Callable, max_terms: int = 200) -> np.ndarray:
    m = Tb.shape[0]
    sigma = np.trace(Tb) / m
    N = Tb - sigma * np.eye(m)
    F = np.zeros_like(Tb)
    P = np.eye(m, dtype=complex)
    fact = 1.0
    for k in range(max_terms):
        term = derivs(sigma, k) / fact * P
        F = F + term
        if k > m and np.abs(term).max() <= 1e-17 * max(np.abs(F).max(), 1e-300):
            return F
        P = P @ N
        fact *= k + 1
    raise ArithmeticError("Taylor series on a Schur block did not converge")


def schur_parlett(X, f: Callable, derivs: Callable | None = None,
                  block_fn: Callable | None = None, delta: float = 0.1) -> np.ndarray:
    """Blocked Schur-Parlett evaluation of ``f(X)``.

    ``f`` acts elementwise on complex arrays.  Eigenvalues within ``delta``
    of each other (transitively) are grouped into one diagonal block, which
    is evaluated by ``block_fn`` (a matrix function) if given, otherwise by
    a Taylor series about the block mean using ``derivs(z, k)``.  The
    off-diagonal blocks follow from the block Parlett recurrence, each a
    triangular Sylvester equation.
    """
    X = _square_check(X)
    n = X.shape[0]
    if n == 0:
        return X.copy()
    T, Z = sla.schur(X.astype(complex), output="complex")
    ids = _clusters(np.diag(T).copy(), delta)
    T, Z, blocks = _reorder(T, Z, ids)

    F = np.zeros_like(T)
    for a, b in blocks:
        Tb = T[a:b, a:b]
        if b - a == 1:
            F[a, a] = np.asarray(f(np.array([Tb[0, 0]])), dtype=complex)[0]
        elif block_fn is not None:
            F[a:b, a:b] = block_fn(Tb)
        elif derivs is not None:
            F[a:b, a:b] = _taylor_block(Tb, derivs)
        else:
            raise ArithmeticError(
                "clustered eigenvalues: Schur-Parlett needs derivatives or a block function"
            )
    for jb in range(1, len(blocks)):
        c0, c1 = blocks[jb]
        for ib in range(jb - 1, -1, -1):
            r0, r1 = blocks[ib]
            rhs = F[r0:r1, r0:r1] @ T[r0:r1, c0:c1] - T[r0:r1, c0:c1] @ F[c0:c1, c0:c1]
            if r1 < c0:
                rhs = rhs + F[r0:r1, r1:c0] @ T[r1:c0, c0:c1] - T[r0:r1, r1:c0] @ F[r1:c0, c0:c1]
            sol, scale, info = lapack.ztrsyl(T[r0:r1, r0:r1], T[c0:c1, c0:c1], rhs, isgn=-1)
            if info < 0:
                raise ArithmeticError("triangular Sylvester solve failed")
            F[r0:r1, c0:c1] = sol / scale
    out = Z @ F @ Z.conj().T
    if not np.all(np.isfinite(out)):
        raise FunctionOverflow("function overflow")
    return out.real if np.isrealobj(X) else out


def _cossqrtm_complex(X: np.ndarray, tau: float) -> np.ndarray:
    n = X.shape[0]
    Y = (tau * tau) * X
    nrm = np.linalg.norm(Y, 1)
    s = 0 if nrm <= 1.0 else int(math.ceil(math.log(nrm, 4.0)))
    Z = Y / 4.0**s
    ident = np.eye(n, dtype=complex)
    C = np.zeros_like(Z)
    P = ident.copy()
    for k in range(_COS_TERMS):
        C = C + ((-1.0) ** k / math.factorial(2 * k)) * P
        P = P @ Z
    for _ in range(s):
        C = 2.0 * (C @ C) - ident
    return C


# -- dispatch ------------------------------------------------------------------

def funm(X, f: FunctionSpec, method: str = "auto") -> np.ndarray:
    """Evaluate ``f(X)`` for a small dense matrix.

    ``method="schur-parlett"`` forces the Schur-Parlett route for
    ``cos_sqrt`` (the default uses the scaled power series).
    """
    X = _square_check(X)
    if f.kind == "exp_neg":
        F = expm(-f.t * X)
    elif f.kind == "phi1_neg":
        F = phi1m(-f.t * X)
    elif f.kind == "cos_sqrt":
        tau = f.nu * f.t
        if method == "schur-parlett":
            F = schur_parlett(
                X, lambda z: np.cos(tau * np.sqrt(z)), block_fn=lambda Tb: _cossqrtm_complex(Tb, tau)
            )
        else:
            F = cossqrtm(X, tau)
    else:
        F = schur_parlett(X, f.fn, derivs=f.derivs)
    if np.any(np.isnan(F)):
        raise FunctionOverflow("NaN in matrix function")
    return F


# -- spectral reference --------------------------------------------------------

def dense_eig_oracle(X, f: FunctionSpec, b) -> np.ndarray:
    """``f(X) b = Z f(Lambda) Z^{-1} b`` from a dense eigendecomposition.

    Symmetric input takes the real orthogonal path.  Warns when the
    eigenvector matrix has condition above 1e8; refuses above 1e12.
    """
    X = np.asarray(X, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if X.ndim != 2 or X.shape[0] != X.shape[1] or b.shape != (X.shape[0],):
        raise ShapeError("oracle needs a square X and matching b")
    if np.array_equal(X, X.T):
        lam, Q = np.linalg.eigh(X)
        return (Q @ (f.scalar(lam) * (Q.T @ b))).real
    lam, V = np.linalg.eig(X)
    cond = np.linalg.cond(V)
    if cond > 1e12:
        raise DefectiveMatrixError(f"eigenvector condition {cond:.2e} exceeds 1e12")
    if cond > 1e8:
        warnings.warn(f"eigenvector condition {cond:.2e}; oracle accuracy degraded",
                      RuntimeWarning, stacklevel=2)
    y = np.linalg.solve(V, b.astype(complex))
    return (V @ (f.scalar(lam) * y)).real


def dense_reference(X, f: FunctionSpec, b, method: str = "auto") -> np.ndarray:
    """Reference ``f(X) b`` for desk-scale problems.

    ``method="auto"`` uses :func:`dense_eig_oracle` when the eigenvector
    basis is usable and falls back to the full dense ``funm(X) @ b``
    otherwise (strongly non-normal operators, e.g. convection-dominated
    transport).  ``"eig"`` and ``"funm"`` force one route.
    """
    if method not in ("auto", "eig", "funm"):
        raise ValueError(f"unknown method {method!r}")
    if method == "eig":
        return dense_eig_oracle(X, f, b)
    if method == "auto":
        with warnings.catch_warnings():
            warnings.simplefilter("error", RuntimeWarning)
            try:
                return dense_eig_oracle(X, f, b)
            except (DefectiveMatrixError, RuntimeWarning):
                pass
    X = np.asarray(X, dtype=np.float64)
    return funm(X, f) @ np.asarray(b, dtype=np.float64)
