"""Restarted Krylov approximation of ``f(A) b``.

Every cycle builds a fresh order-``m_r`` decomposition from the last
basis vector of the previous cycle.  The Hessenberg blocks are stacked
into a block lower-bidiagonal matrix ``R_accum``; with
``F = f(R_accum)`` the approximation is updated by

    f_k = f_{k-1} + alpha * W^{(k)} F[rows of cycle k, 0]

so only the current basis has to be kept.  The norm of the update is the
error estimate and the stopping criterion.

The full ``f(R_accum)`` is recomputed every cycle, which costs
``O((k m_r)^3)``; ``budget`` caps ``k_max * m_r``.
"""

from __future__ import annotations

import time
import warnings
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .approximants import fom, rand_fom, rand_ls, sfom
from .basis import KrylovDecomposition, arnoldi, incomplete_arnoldi, randomized_arnoldi
from .densefun import FunctionSpec, funm
from .errors import FunctionOverflow, ParameterError, RestartDivergence
from .sketch import SketchOperator, make_sketch
from .sparse import SparseMatrix

__all__ = [
    "ConvergenceRecord", "RestartState", "RestartResult", "restarted_krylov",
    "MethodSpec", "SweepRecord", "convergence_sweep", "DEFAULT_BUDGET",
]

DEFAULT_BUDGET = 4000
DIVERGENCE_FACTOR = 1e6


@dataclass
class ConvergenceRecord:
    cycle: int
    total_matvecs: int
    update_norm: float
    error_vs_reference: float | None = None
    kappa_W: float = float("nan")
    elapsed: float = 0.0              # seconds spent in this cycle
    leftmost_ritz: float = float("nan")
    alpha_deviation: float = 0.0      # | ||S w_{m+1}|| - 1 | of the restart vector
    phase_times: dict = field(default_factory=dict)   # build / funm / update seconds


@dataclass
class RestartState:
    cycle: int
    m_r: int
    R_accum: np.ndarray
    f_hat: np.ndarray
    last_update_norm: float
    alpha: float
    next_start: np.ndarray
    history: list[ConvergenceRecord] = field(default_factory=list)
    offsets: list[int] = field(default_factory=lambda: [0])


@dataclass
class RestartResult:
    value: np.ndarray
    history: list[ConvergenceRecord]
    state: RestartState
    converged: bool
    reason: str                      # "tolerance" | "k_max" | "breakdown"
    bases: list[np.ndarray] | None = None


def _extend(R_accum: np.ndarray, R_new: np.ndarray, coupling: float) -> np.ndarray:
    k0, m = R_accum.shape[0], R_new.shape[0]
    out = np.zeros((k0 + m, k0 + m))
    out[:k0, :k0] = R_accum
    out[k0:, k0:] = R_new
    if k0:
        out[k0, k0 - 1] = coupling
    return out


def restarted_krylov(A: SparseMatrix, b, f: FunctionSpec, m_r: int, tol: float = 1e-10,
                     k_max: int = 100, builder: str = "classical", S: SketchOperator | None = None,
                     reference=None, budget: int = DEFAULT_BUDGET, keep_bases: bool = False,
                     with_kappa: bool = True,
                     callback: Callable[[ConvergenceRecord], None] | None = None) -> RestartResult:
    """Restarted FOM with a classical or randomized (``S`` required) builder.

    Parameters
    ----------
    m_r : int
        Restart length; at most ``m_r + 1`` basis vectors are alive.
    tol : float
        Stop once ``||f_k - f_{k-1}|| <= tol``.
    k_max : int
        Cycle limit, lowered (with a warning) so that ``k_max * m_r <= budget``.
    reference : array, optional
        If given, each record carries the relative error against it.
    keep_bases : bool
        Retain every cycle's basis (``result.bases``); only useful to check
        the update form against ``alpha * W_{km} f(R_accum) e_1``.

    Raises
    ------
    RestartDivergence
        NaN update or growth beyond ``1e6`` times the first update.
    FunctionOverflow
        Dense function failure; the message names the cycle.
    """
    if m_r < 1 or k_max < 1:
        raise ParameterError("m_r and k_max must be at least 1")
    if not tol > 0:
        raise ParameterError("tol must be positive")
    if builder not in ("classical", "randomized"):
        raise ParameterError(f"unknown builder {builder!r}")
    if builder == "randomized":
        if S is None:
            raise ParameterError("randomized builder needs a sketch")
        if S.d < min(m_r + 1, A.n_rows):
            raise ParameterError(f"sketch dimension d={S.d} must be at least m_r+1={m_r + 1}")
    if k_max * m_r > budget:
        capped = max(1, budget // m_r)
        warnings.warn(
            f"k_max*m_r = {k_max * m_r} exceeds the budget {budget}; each cycle evaluates f on the "
            f"full accumulated matrix (cubic cost), so k_max is capped at {capped}",
            RuntimeWarning, stacklevel=2,
        )
        k_max = capped
    if reference is not None:
        reference = np.asarray(reference, dtype=np.float64)
        ref_norm = float(np.linalg.norm(reference)) or 1.0

    def build(v) -> KrylovDecomposition:
        if builder == "classical":
            return arnoldi(A, v, m_r)
        return randomized_arnoldi(A, S, v, m_r)

    state = None
    matvecs = 0
    bases = [] if keep_bases else None
    first_norm = None
    reason = "k_max"
    v = np.asarray(b, dtype=np.float64)

    for k in range(1, k_max + 1):
        t0 = time.perf_counter()
        dec = build(v)
        t1 = time.perf_counter()
        if state is None:
            alpha = dec.start_norm
            state = RestartState(0, m_r, np.zeros((0, 0)), np.zeros(A.n_rows), np.inf, alpha, v)
            coupling, deviation = 0.0, 0.0
        else:
            coupling = prev_r * dec.start_norm
            deviation = abs(dec.start_norm - 1.0)
        state.R_accum = _extend(state.R_accum, dec.R, coupling)
        try:
            F = funm(state.R_accum, f)
        except (FunctionOverflow, np.linalg.LinAlgError, ValueError) as exc:
            raise FunctionOverflow(f"cycle {k}: {exc}") from exc
        t2 = time.perf_counter()
        lo = state.offsets[-1]
        y = state.alpha * (dec.Wm @ F[lo:lo + dec.m, 0])
        ynorm = float(np.linalg.norm(y))
        if not np.isfinite(ynorm):
            raise RestartDivergence("restart divergence (non-finite update)", k)
        if first_norm is None:
            first_norm = ynorm
        elif ynorm > DIVERGENCE_FACTOR * max(first_norm, np.finfo(float).tiny):
            raise RestartDivergence(
                f"restart divergence (update norm {ynorm:.3e} vs first {first_norm:.3e})", k)
        state.f_hat = state.f_hat + y
        matvecs += dec.m
        state.offsets.append(lo + dec.m)
        state.cycle = k
        state.last_update_norm = ynorm
        if keep_bases:
            bases.append(dec.Wm.copy())
        rec = ConvergenceRecord(
            cycle=k,
            total_matvecs=matvecs,
            update_norm=ynorm,
            kappa_W=float(np.linalg.cond(dec.Wm)) if with_kappa else float("nan"),
            leftmost_ritz=float(np.linalg.eigvals(dec.R).real.min()),
            alpha_deviation=deviation,
        )
        if reference is not None:
            rec.error_vs_reference = float(np.linalg.norm(state.f_hat - reference)) / ref_norm
        t3 = time.perf_counter()
        rec.elapsed = t3 - t0
        rec.phase_times = {"build": t1 - t0, "funm": t2 - t1, "update": t3 - t2}
        state.history.append(rec)
        if callback is not None:
            callback(rec)

        prev_r = dec.r_next
        state.next_start = dec.w_next
        if dec.breakdown_at is not None or prev_r == 0.0:
            reason = "breakdown"
            break
        if ynorm <= tol:
            reason = "tolerance"
            break
        v = dec.w_next

    return RestartResult(state.f_hat, state.history, state, reason != "k_max", reason, bases)


# -- sweeps --------------------------------------------------------------------

ONE_SHOT = ("arnoldi", "incomplete", "rand", "rand-ls", "sfom")
RESTARTED = ("restart", "restart-rand")
METHODS = ONE_SHOT + RESTARTED


@dataclass
class MethodSpec:
    """One method of a sweep.

    ``m`` is the basis size (restart length for restarted methods); when
    ``None`` the sweep's ``m_grid`` is used.
    """

    name: str
    m: int | list[int] | None = None
    k_trunc: int | None = None
    d: int | None = None
    zeta: int = 4
    tol: float = 1e-10
    k_max: int = 100
    seed: int = 0
    use_precond: bool = False
    budget: int = DEFAULT_BUDGET

    def __post_init__(self):
        if self.name not in METHODS:
            raise ParameterError(f"unknown method {self.name!r}; expected one of {METHODS}")
        if self.name == "incomplete" and self.k_trunc is None:
            raise ParameterError("incomplete needs k_trunc")

    @property
    def randomized(self) -> bool:
        return self.name in ("rand", "rand-ls", "sfom", "restart-rand")

    def grid(self, m_grid: Sequence[int]) -> list[int]:
        if self.m is None:
            return list(m_grid)
        return [self.m] if isinstance(self.m, int) else list(self.m)


@dataclass
class SweepRecord:
    method: str
    n: int
    m: int                           # m for one-shot methods, k*m_r for restarted
    cycle: int                       # 0 for one-shot methods
    matvecs: int
    rel_error: float
    update_norm: float = float("nan")
    kappa_W: float = float("nan")
    leftmost_ritz_re: float = float("nan")
    elapsed: float = 0.0
    error: str = ""


def _rel(x, ref, ref_norm) -> float:
    if ref is None:
        return float("nan")
    return float(np.linalg.norm(x - ref)) / ref_norm


def _sketch_for(spec: MethodSpec, n: int, m: int) -> SketchOperator:
    d = spec.d if spec.d is not None else (16 * m if spec.name == "restart-rand" else None)
    if d is None:
        raise ParameterError(f"method {spec.name} needs a sketch dimension d")
    return make_sketch(min(d, n), n, min(spec.zeta, min(d, n)), spec.seed)


def _one_shot(problem, spec: MethodSpec, ms: list[int], ref, ref_norm) -> list[SweepRecord]:
    A, b, f, n = problem.L, problem.b, problem.f, problem.n
    out = []
    ms = sorted(ms)
    try:
        t0 = time.perf_counter()
        S = _sketch_for(spec, n, ms[-1]) if spec.randomized else None
        if spec.name == "arnoldi":
            dec = arnoldi(A, b, ms[-1])
        elif spec.name == "incomplete":
            dec = incomplete_arnoldi(A, b, ms[-1], spec.k_trunc)
        else:
            dec = randomized_arnoldi(A, S, b, ms[-1])
        t_build = time.perf_counter() - t0
    except Exception as exc:  # recorded as failed cells, sweep continues
        return [SweepRecord(spec.name, n, m, 0, 0, float("nan"), error=_describe(exc)) for m in ms]
    for m in ms:
        t0 = time.perf_counter()
        if m > dec.m:
            # happy breakdown: the smaller space is already exact
            sub = dec
        else:
            sub = dec.truncated(m)
        try:
            if spec.name in ("arnoldi", "incomplete"):
                ap = fom(sub, f)
            elif spec.name == "rand":
                ap = rand_fom(sub, f)
            elif spec.name == "rand-ls":
                ap = rand_ls(sub, A, S, f, use_precond=spec.use_precond)
            else:
                ap = sfom(sub, S, b, f)
            ritz = ap.diagnostics["ritz_values"]
            out.append(SweepRecord(
                spec.name, n, m, 0, sub.m, _rel(ap.value, ref, ref_norm),
                kappa_W=ap.diagnostics["kappa_W"],
                leftmost_ritz_re=float(ritz.real.min()) if ritz.size else float("nan"),
                elapsed=t_build * m / ms[-1] + time.perf_counter() - t0,
            ))
        except Exception as exc:
            out.append(SweepRecord(spec.name, n, m, 0, sub.m, float("nan"), error=_describe(exc)))
    return out


def _restarted(problem, spec: MethodSpec, m_r: int, ref) -> list[SweepRecord]:
    n = problem.n
    out = []

    def record(rec: ConvergenceRecord):
        rel = float("nan") if rec.error_vs_reference is None else rec.error_vs_reference
        out.append(SweepRecord(
            spec.name, n, rec.cycle * m_r, rec.cycle, rec.total_matvecs, rel,
            update_norm=rec.update_norm, kappa_W=rec.kappa_W,
            leftmost_ritz_re=rec.leftmost_ritz, elapsed=rec.elapsed,
        ))

    try:
        S = _sketch_for(spec, n, m_r) if spec.randomized else None
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", RuntimeWarning)
            restarted_krylov(
                problem.L, problem.b, problem.f, m_r, tol=spec.tol, k_max=spec.k_max,
                builder="randomized" if spec.randomized else "classical", S=S,
                reference=ref, budget=spec.budget, callback=record,
            )
    except Exception as exc:
        cyc = getattr(exc, "cycle", len(out) + 1)
        out.append(SweepRecord(spec.name, n, cyc * m_r, cyc, 0, float("nan"), error=_describe(exc)))
    return out


def _describe(exc: Exception) -> str:
    return f"{type(exc).__name__}: {exc}"


def convergence_sweep(problem, methods: Sequence[MethodSpec], m_grid: Sequence[int],
                      reference=None) -> list[SweepRecord]:
    """Run every method over the grid and collect error records.

    One-shot methods build a single basis of the largest size and
    evaluate leading prefixes of it.  Restarted methods produce one record
    per cycle for every restart length in their grid.  A failing method
    yields a record with ``rel_error = nan`` and a note in ``error``.
    """
    ref = None if reference is None else np.asarray(reference, dtype=np.float64)
    ref_norm = 1.0 if ref is None else (float(np.linalg.norm(ref)) or 1.0)
    records: list[SweepRecord] = []
    for spec in methods:
        ms = spec.grid(m_grid)
        if not ms:
            continue
        if spec.name in ONE_SHOT:
            records.extend(_one_shot(problem, spec, ms, ref, ref_norm))
        else:
            for m_r in ms:
                records.extend(_restarted(problem, spec, m_r, ref))
    return records
