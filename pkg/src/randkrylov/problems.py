"""Desk-scale test problems.

``gen_conv_diff``
    Convection-diffusion on a structured grid over the unit square/cube.
    The semi-discrete system ``u' = -L u + g`` with constant load has the
    solution ``u(t) = u0 + t phi1(-t L) b`` with ``b = g - L u0``.
    Face ``x = 0`` holds ``u = 0``, face ``x = 1`` holds ``u = 1``; the
    remaining faces are homogeneous Neumann (mirror stencil).  Dirichlet
    nodes are ordered last and carry identity rows, so
    ``L = [[L11, L12], [0, I]]``.

``gen_membrane``
    Vibrating unit-disk membrane ``u'' = -nu^2 L u`` with ``u(0) = b``,
    ``u'(0) = 0``; the solution is ``cos(nu t sqrt(L)) b``.  ``L`` is the
    5-point Laplacian on grid nodes inside the disk, with identity rows for
    the exterior neighbours that carry ``u = 0``.
"""

from __future__ import annotations

import math
import os
from dataclasses import dataclass, field
from decimal import Decimal, localcontext

import numpy as np

from .densefun import FunctionSpec
from .errors import ParameterError, ShapeError
from .sparse import SparseMatrix, load_matrix_market, save_matrix_market, spmv

__all__ = [
    "ProblemInstance", "gen_conv_diff", "gen_membrane", "bessel_j", "bessel_zero",
    "load_problem", "load_vector", "save_vector",
]


@dataclass(eq=False)
class ProblemInstance:
    L: SparseMatrix
    b: np.ndarray
    f: FunctionSpec
    u0: np.ndarray
    kind: str                      # "conv_diff" | "membrane" | "external"
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.L.n_rows != self.L.n_cols:
            raise ShapeError("operator must be square")
        if self.b.shape != (self.L.n_rows,):
            raise ShapeError(f"b has length {len(self.b)}, operator has n={self.L.n_rows}")

    @property
    def n(self) -> int:
        return self.L.n_rows

    def solution(self, fb: np.ndarray) -> np.ndarray:
        """Map ``f(L) b`` to the state ``u(t)``."""
        if self.kind == "conv_diff":
            return self.u0 + self.f.t * fb
        return fb


# -- convection-diffusion ------------------------------------------------------

def gen_conv_diff(nx: int, ny: int, nz: int = 1, alpha: float = 0.1, beta: float = 0.01,
                  t: float = 1.0, seed: int = 0, neumann: bool = True) -> ProblemInstance:
    """Structured-grid convection-diffusion operator and data.

    ``nz = 1`` gives the 2-D problem.  With ``neumann=False`` every face
    other than ``x = 1`` holds ``u = 0`` (all-Dirichlet variant).
    Interior initial values are drawn from a normal distribution with mean
    0.5 and variance 0.25 using the PCG64 generator seeded with ``seed``.
    """
    if nx < 3 or ny < 3 or nz < 1:
        raise ParameterError("grid must have nx, ny >= 3 and nz >= 1")
    if alpha < 0 or beta < 0 or (alpha == 0 and beta == 0):
        raise ParameterError("need alpha, beta >= 0, not both zero")
    dims = [nx, ny] + ([nz] if nz > 1 else [])
    h = [1.0 / (k - 1) for k in dims]
    grid = np.stack(np.meshgrid(*[np.arange(k) for k in dims], indexing="ij"), -1).reshape(-1, len(dims))
    # row-major node numbering (last axis fastest), matching ``grid``
    strides = np.array([int(np.prod(dims[ax + 1:])) for ax in range(len(dims))])
    N = grid.shape[0]
    ids = grid @ strides

    gamma_c = grid[:, 0] == nx - 1
    gamma_a = grid[:, 0] == 0
    if not neumann:
        for ax in range(1, len(dims)):
            gamma_a |= (grid[:, ax] == 0) | (grid[:, ax] == dims[ax] - 1)
        gamma_a &= ~gamma_c
    free = ~(gamma_a | gamma_c)
    if not free.any():
        raise ParameterError("degenerate grid: no free nodes")

    rows, cols, vals = [], [], []

    def add(r, c, v):
        rows.append(r)
        cols.append(c)
        vals.append(v)

    fr = np.nonzero(free)[0]
    diag = np.zeros(len(fr))
    for ax, (dim, hax) in enumerate(zip(dims, h)):
        idx = grid[fr, ax]
        w = alpha / hax**2
        lo = idx > 0
        hi = idx < dim - 1
        # neighbours; mirror stencil doubles the inward neighbour on a Neumann face
        wlo = np.where(hi, w, 2 * w) * lo
        whi = np.where(lo, w, 2 * w) * hi
        diag += 2 * w
        add(fr[lo], ids[fr[lo]] - strides[ax], -wlo[lo])
        add(fr[hi], ids[fr[hi]] + strides[ax], -whi[hi])
        if ax == 0 and beta:
            # -beta du/dx, centred; x-faces are Dirichlet so both neighbours exist
            c = beta / (2 * hax)
            add(fr, ids[fr] + strides[0], np.full(len(fr), -c))
            add(fr, ids[fr] - strides[0], np.full(len(fr), c))
    add(fr, ids[fr], diag)
    bd = np.nonzero(~free)[0]
    add(bd, ids[bd], np.ones(len(bd)))

    L_nat = SparseMatrix.from_coo(
        np.concatenate(rows), np.concatenate(cols), np.concatenate(vals), (N, N)
    )
    # order: free nodes, then gamma_A, then gamma_C
    perm = np.concatenate([np.nonzero(free)[0], np.nonzero(gamma_a)[0], np.nonzero(gamma_c)[0]])
    Lsp = L_nat.to_scipy()[perm][:, perm]
    L = SparseMatrix.from_scipy(Lsp)

    n_free = int(free.sum())
    n_a = int(gamma_a.sum())
    rng = np.random.Generator(np.random.PCG64(seed))
    u0 = np.zeros(N)
    u0[:n_free] = rng.normal(0.5, 0.5, size=n_free)
    u0[n_free + n_a:] = 1.0
    g = np.zeros(N)
    g[n_free + n_a:] = 1.0
    b = g - spmv(L, u0)

    coords = grid[perm] * np.asarray(h)
    meta = {
        "grid": dims, "alpha": alpha, "beta": beta, "t": t, "seed": seed,
        "n_free": n_free, "n_gamma_a": n_a, "n_gamma_c": N - n_free - n_a,
        "neumann": neumann, "coords": coords, "g": g,
    }
    return ProblemInstance(L, b, FunctionSpec.phi1_neg(t), u0, "conv_diff", meta)


# -- Bessel functions -------------------------------------------------------------

def bessel_j(p: int, x: float) -> float:
    """``J_p(x)`` from its power series.

    Terms are accumulated in decimal arithmetic with enough guard digits to
    absorb the cancellation between large alternating terms, so the result
    is correctly rounded to double precision in the supported range
    ``0 <= x <= 60``, ``0 <= p <= 20``.
    """
    if not (0 <= p <= 20) or int(p) != p:
        raise ParameterError("order p must be an integer in [0, 20]")
    if not (0.0 <= x <= 60.0):
        raise ParameterError("x must lie in [0, 60]")
    if x == 0.0:
        return 1.0 if p == 0 else 0.0
    with localcontext() as ctx:
        ctx.prec = 30 + int(0.5 * x)
        half = Decimal(float(x)) / 2
        sq = -(half * half)
        term = half**p / math.factorial(p)
        total = term
        k = 0
        while True:
            k += 1
            term = term * sq / (k * (k + p))
            total += term
            if k > x and abs(term) < Decimal("1e-18") * abs(total):
                break
            if k > 1000:
                raise ArithmeticError("Bessel series did not converge")
        return float(total)


def _mcmahon(p: int, k: int) -> float:
    b = (k + p / 2 - 0.25) * math.pi
    mu = 4.0 * p * p
    return b - (mu - 1) / (8 * b) - 4 * (mu - 1) * (7 * mu - 31) / (3 * (8 * b) ** 3)


def bessel_zero(p: int, k: int) -> float:
    """k-th positive zero of ``J_p`` (bracketing scan plus bisection to 1e-12)."""
    if not 1 <= k <= 20:
        raise ParameterError("zero index k must lie in [1, 20]")
    hi_lim = min(_mcmahon(p, k) + math.pi, 60.0)
    xs = np.arange(max(p, 0.05), hi_lim, 0.05)
    vals = [bessel_j(p, float(x)) for x in xs]
    count = 0
    for i in range(1, len(xs)):
        if vals[i - 1] == 0.0 or vals[i - 1] * vals[i] < 0:
            count += 1
            if count == k:
                a, b = float(xs[i - 1]), float(xs[i])
                fa = vals[i - 1]
                if fa == 0.0:
                    return a
                while b - a > 1e-12:
                    mid = 0.5 * (a + b)
                    fm = bessel_j(p, mid)
                    if fm == 0.0:
                        return mid
                    if (fm < 0) == (fa < 0):
                        a, fa = mid, fm
                    else:
                        b = mid
                return 0.5 * (a + b)
    raise ArithmeticError(f"could not bracket zero {k} of J_{p}")


# -- membrane ----------------------------------------------------------------------

def gen_membrane(n_r: int, nu: float = 1.0, t: float = 1.0, p: int = 4,
                 zero_index: int = 4) -> ProblemInstance:
    """Unit-disk membrane with Bessel initial displacement ``J_p(eta r)``.

    ``n_r`` is the number of grid spacings across the radius.  Exterior
    nodes adjacent to the disk are Dirichlet nodes; their data uses the
    radius projected onto the rim, where ``J_p(eta) = 0``.
    """
    if n_r < 8:
        raise ParameterError("n_r must be at least 8")
    if nu <= 0 or t < 0:
        raise ParameterError("need nu > 0 and t >= 0")
    h = 1.0 / n_r
    span = np.arange(-n_r - 1, n_r + 2)
    I, J = np.meshgrid(span, span, indexing="ij")
    r2 = (I**2 + J**2).astype(np.int64)
    inside = r2 < n_r * n_r
    nbr_inside = np.zeros_like(inside)
    for di, dj in ((1, 0), (-1, 0), (0, 1), (0, -1)):
        nbr_inside |= np.roll(np.roll(inside, di, 0), dj, 1)
    rim = nbr_inside & ~inside

    interior = np.flatnonzero(inside)
    boundary = np.flatnonzero(rim)
    n_int = len(interior)
    index = -np.ones(I.size, dtype=np.int64)
    index[interior] = np.arange(n_int)
    index[boundary] = n_int + np.arange(len(boundary))
    shape = I.shape

    rows, cols, vals = [np.arange(n_int)], [np.arange(n_int)], [np.full(n_int, 4.0 / h**2)]
    ii, jj = np.unravel_index(interior, shape)
    for di, dj in ((1, 0), (-1, 0), (0, 1), (0, -1)):
        nb = np.ravel_multi_index((ii + di, jj + dj), shape)
        rows.append(np.arange(n_int))
        cols.append(index[nb])
        vals.append(np.full(n_int, -1.0 / h**2))
    nb_count = len(boundary)
    rows.append(n_int + np.arange(nb_count))
    cols.append(n_int + np.arange(nb_count))
    vals.append(np.ones(nb_count))
    N = n_int + nb_count
    L = SparseMatrix.from_coo(np.concatenate(rows), np.concatenate(cols), np.concatenate(vals), (N, N))

    eta = bessel_zero(p, zero_index)
    r2_nodes = np.concatenate([r2.ravel()[interior], np.full(nb_count, n_r * n_r)])
    uniq, inv = np.unique(r2_nodes, return_inverse=True)
    jv = np.array([bessel_j(p, eta * math.sqrt(v) * h) for v in uniq])
    b = jv[inv]
    coords = np.column_stack([I.ravel(), J.ravel()])[np.concatenate([interior, boundary])] * h
    meta = {
        "n_r": n_r, "nu": nu, "t": t, "p": p, "zero_index": zero_index, "eta": eta,
        "n_interior": n_int, "n_boundary": nb_count, "coords": coords,
    }
    return ProblemInstance(L, b, FunctionSpec.cos_sqrt(nu, t), b.copy(), "membrane", meta)


# -- external operators ------------------------------------------------------------

def load_vector(path: str | os.PathLike) -> np.ndarray:
    """Read one decimal value per line (blank lines and ``#`` comments skipped)."""
    out = []
    with open(path, "r", encoding="ascii") as fh:
        for lineno, line in enumerate(fh, 1):
            text = line.strip()
            if not text or text.startswith("#"):
                continue
            try:
                out.append(float(text))
            except ValueError:
                raise ValueError(f"{path}: line {lineno}: not a number: '{text}'") from None
    return np.array(out, dtype=np.float64)


def save_vector(v, path: str | os.PathLike) -> None:
    with open(path, "w", encoding="ascii") as fh:
        for x in np.asarray(v, dtype=np.float64):
            fh.write(f"{x:.17g}\n")


def load_problem(matrix_path, b_path, f: FunctionSpec) -> ProblemInstance:
    L = load_matrix_market(matrix_path)
    b = load_vector(b_path)
    if L.n_rows != L.n_cols:
        raise ShapeError("operator must be square")
    if b.shape != (L.n_rows,):
        raise ShapeError(f"vector has {len(b)} entries, operator has n={L.n_rows}")
    meta = {"matrix_path": str(matrix_path), "b_path": str(b_path)}
    return ProblemInstance(L, b, f, np.zeros_like(b), "external", meta)


def save_problem(problem: ProblemInstance, prefix: str | os.PathLike) -> dict:
    """Write ``<prefix>.mtx`` and ``<prefix>_b.txt``; returns the paths."""
    prefix = os.fspath(prefix)
    paths = {"matrix": prefix + ".mtx", "b": prefix + "_b.txt", "u0": prefix + "_u0.txt"}
    save_matrix_market(problem.L, paths["matrix"])
    save_vector(problem.b, paths["b"])
    save_vector(problem.u0, paths["u0"])
    return paths
