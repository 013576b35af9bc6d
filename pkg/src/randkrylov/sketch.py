"""Sparse-sign subspace embeddings.

A sketch ``S`` of shape ``(d, n)`` stores, for each of its ``n`` columns,
``zeta`` distinct row coordinates and a random sign for each.  All
entries share one positive ``scale``.  Random numbers come from numpy's
PCG64 bit generator seeded with the user's integer seed, so the same
``(d, n, zeta, seed)`` always reproduces the same operator.

The default scale is ``1/sqrt(zeta)``, which makes every column of ``S``
a unit vector and ``E[S.T @ S] = I``.  Every Krylov approximant in this
package is invariant under a global rescaling of ``S``.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from . import instrument
from .errors import ParameterError, ShapeError

__all__ = ["SketchOperator", "make_sketch", "sketch_apply", "estimate_distortion",
           "subspace_distortion", "distortion_bounds"]

RNG_ALGORITHM = "PCG64"


@dataclass(frozen=True, eq=False)
class SketchOperator:
    d: int
    n: int
    rows: np.ndarray     # (n, zeta) int, distinct within each column
    signs: np.ndarray    # (n, zeta) float, entries +-1
    scale: float
    seed: int | None = None
    _mat: sp.csr_matrix = field(init=False, repr=False)

    def __post_init__(self):
        rows = np.ascontiguousarray(self.rows, dtype=np.int64)
        signs = np.ascontiguousarray(self.signs, dtype=np.float64)
        if rows.ndim != 2 or rows.shape != signs.shape or rows.shape[0] != self.n:
            raise ShapeError("rows/signs must both have shape (n, zeta)")
        if not self.scale > 0:
            raise ParameterError("scale must be positive")
        if rows.size and (rows.min() < 0 or rows.max() >= self.d):
            raise ParameterError("row coordinate out of range")
        if not np.all(np.abs(signs) == 1.0):
            raise ParameterError("signs must be +1 or -1")
        srt = np.sort(rows, axis=1)
        if np.any(srt[:, 1:] == srt[:, :-1]):
            raise ParameterError("row coordinates within a column must be distinct")
        rows.setflags(write=False)
        signs.setflags(write=False)
        object.__setattr__(self, "rows", rows)
        object.__setattr__(self, "signs", signs)
        zeta = rows.shape[1]
        mat = sp.csr_matrix(
            (self.scale * signs.ravel(), (rows.ravel(), np.repeat(np.arange(self.n), zeta))),
            shape=(self.d, self.n),
        )
        object.__setattr__(self, "_mat", mat)

    @property
    def zeta(self) -> int:
        return self.rows.shape[1]

    @property
    def shape(self) -> tuple[int, int]:
        return (self.d, self.n)

    def rescaled(self, factor: float) -> "SketchOperator":
        return dataclasses.replace(self, scale=self.scale * factor)

    def to_dense(self) -> np.ndarray:
        return self._mat.toarray()

    def apply_block(self, X: np.ndarray) -> np.ndarray:
        """``S @ X`` for a 2-D array with ``n`` rows."""
        X = np.asarray(X, dtype=np.float64)
        if X.ndim != 2 or X.shape[0] != self.n:
            raise ShapeError(f"expected ({self.n}, k) block, got {X.shape}")
        return np.asarray(self._mat @ X)

    def __matmul__(self, x):
        x = np.asarray(x)
        return sketch_apply(self, x) if x.ndim == 1 else self.apply_block(x)


def _distinct_rows(rng: np.random.Generator, d: int, n: int, zeta: int) -> np.ndarray:
    # Floyd's sampling, vectorised over the n columns: zeta draws per column.
    out = np.empty((n, zeta), dtype=np.int64)
    for i, j in enumerate(range(d - zeta, d)):
        t = rng.integers(0, j + 1, size=n)
        if i:
            taken = np.any(out[:, :i] == t[:, None], axis=1)
            t = np.where(taken, j, t)
        out[:, i] = t
    return out


def make_sketch(d: int, n: int, zeta: int, seed: int) -> SketchOperator:
    """Draw a ``d x n`` sparse-sign embedding with ``zeta`` nonzeros per column."""
    if not (1 <= zeta <= d <= n):
        raise ParameterError(f"need 1 <= zeta <= d <= n, got zeta={zeta}, d={d}, n={n}")
    rng = np.random.Generator(np.random.PCG64(seed))
    rows = _distinct_rows(rng, d, n, zeta)
    signs = np.where(rng.integers(0, 2, size=(n, zeta)) == 1, 1.0, -1.0)
    return SketchOperator(d, n, rows, signs, 1.0 / np.sqrt(zeta), seed)


def sketch_apply(S: SketchOperator, x) -> np.ndarray:
    """``S @ x`` by scatter-add over the stored coordinates."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 1 or x.shape[0] != S.n:
        raise ShapeError(f"sketch has n={S.n}, vector has shape {x.shape}")
    instrument.current().sketches += 1
    contrib = S.signs * x[:, None]
    return S.scale * np.bincount(S.rows.ravel(), weights=contrib.ravel(), minlength=S.d)


def _check_orthonormal(basis: np.ndarray) -> np.ndarray:
    basis = np.asarray(basis, dtype=np.float64)
    if basis.ndim == 1:
        basis = basis[:, None]
    gram = basis.T @ basis
    if np.max(np.abs(gram - np.eye(basis.shape[1]))) > 1e-8:
        raise ParameterError("basis columns are not orthonormal")
    return basis


def estimate_distortion(S: SketchOperator, basis, trials: int, seed: int = 0) -> float:
    """Largest ``| ||Sx||^2/||x||^2 - 1 |`` over random ``x`` in ``span(basis)``.

    Trial directions are drawn from a fixed-seed Gaussian, so the result is
    repeatable.  For a one-column basis every trial is the same direction.
    """
    basis = _check_orthonormal(basis)
    if basis.shape[0] != S.n:
        raise ShapeError("basis rows must equal sketch n")
    rng = np.random.default_rng(seed)
    coef = rng.standard_normal((basis.shape[1], trials))
    X = basis @ coef
    SX = S.apply_block(X)
    ratio = np.sum(SX**2, axis=0) / np.sum(X**2, axis=0)
    return float(np.max(np.abs(ratio - 1.0)))


def subspace_distortion(S: SketchOperator, basis) -> float:
    """Exact distortion of ``S`` on ``span(basis)`` (supremum over the subspace).

    Computed from the extreme singular values of ``S @ basis``.
    """
    basis = _check_orthonormal(basis)
    sv = np.linalg.svd(S.apply_block(basis), compute_uv=False)
    if basis.shape[1] > S.d:
        return float(max(sv[0] ** 2 - 1.0, 1.0))
    return float(max(sv[0] ** 2 - 1.0, 1.0 - sv[-1] ** 2))


def distortion_bounds(S: SketchOperator, basis) -> tuple[float, float]:
    """One-sided distortions ``(1 - s_min^2, s_max^2 - 1)`` of ``S`` on ``span(basis)``.

    ``(1 - lo) ||x||^2 <= ||S x||^2 <= (1 + hi) ||x||^2`` for every ``x`` in the
    span, with both constants attained.
    """
    basis = _check_orthonormal(basis)
    sv = np.linalg.svd(S.apply_block(basis), compute_uv=False)
    smin = sv[-1] if basis.shape[1] <= S.d else 0.0
    return float(1.0 - smin**2), float(sv[0] ** 2 - 1.0)
