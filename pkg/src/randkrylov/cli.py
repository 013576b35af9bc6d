"""``randkrylov`` command-line harness.

Subcommands
-----------
generate   write a generated problem as ``<prefix>.mtx``, ``<prefix>_b.txt``
           and ``<prefix>_u0.txt``
run        run a method sweep and write the convergence CSV
spectrum   write the eigenvalues of the problem operator as ``re,im`` rows

All subcommands read a JSON config (``--config``).  Exit status is 0 on
success, 1 for configuration/usage errors and 2 for runtime failures.

Config layout (defaults: tol 1e-10, k_max 100, zeta 4, d = 16 m_r for
restart-rand, seeds 0 or ``--seed``)::

    {
      "problem": {"kind": "conv_diff", "nx": 20, "ny": 20, "nz": 1,
                  "alpha": 0.1, "beta": 0.01, "t": 1.0, "seed": 0},
      "methods": [{"name": "arnoldi", "m": [20, 40]},
                  {"name": "rand", "d": 400, "zeta": 4, "seed": 0},
                  {"name": "restart-rand", "m": 20, "d": 320, "tol": 1e-10,
                   "k_max": 100}],
      "m_grid": [20, 40],
      "reference": {"type": "oracle"},
      "timing": false,
      "spectrum_max_n": 4000
    }

``reference`` may also be ``{"type": "restart-highm", "m_r": 100, "tol": 3e-12}``,
``{"type": "file", "path": ...}`` or ``null``.  ``timing: true`` fills the
``elapsed_ms`` column, which makes the CSV non-reproducible byte for byte.

Other problem kinds: ``{"kind": "membrane", "n_r", "nu", "t", "p", "zero_index"}``
and ``{"kind": "external", "matrix": path, "b": path, "function": {...}}``
where ``function`` is a :meth:`FunctionSpec.to_dict` document.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np
from threadpoolctl import threadpool_limits

from .densefun import FunctionSpec, dense_reference
from .errors import ParameterError
from .instrument import counting
from .problems import ProblemInstance, gen_conv_diff, gen_membrane, load_problem, load_vector, save_problem
from .restart import METHODS, MethodSpec, SweepRecord, convergence_sweep, restarted_krylov

__all__ = ["main", "build_parser", "cmd_generate", "cmd_run", "cmd_spectrum", "ConfigError",
           "CSV_HEADER"]

CSV_HEADER = ["method", "n", "m_or_totalm", "cycle", "matvecs", "rel_error", "update_norm",
              "kappa_W", "leftmost_ritz_re", "elapsed_ms", "error"]

DEFAULTS = {"tol": 1e-10, "k_max": 100, "zeta": 4, "spectrum_max_n": 4000}

_PROBLEM_KEYS = {
    "conv_diff": {"kind", "nx", "ny", "nz", "alpha", "beta", "t", "seed", "neumann"},
    "membrane": {"kind", "n_r", "nu", "t", "p", "zero_index"},
    "external": {"kind", "matrix", "b", "function"},
}
_METHOD_KEYS = {"name", "m", "k_trunc", "d", "zeta", "tol", "k_max", "seed", "use_precond",
                "budget"}
_TOP_KEYS = {"problem", "methods", "m_grid", "reference", "timing", "spectrum_max_n", "output"}


class ConfigError(ValueError):
    """Invalid configuration or command line (exit status 1)."""


# -- configuration -------------------------------------------------------------

def load_config(path) -> dict:
    try:
        with open(path, encoding="utf-8") as fh:
            cfg = json.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config is not valid JSON: {exc}") from exc
    if not isinstance(cfg, dict):
        raise ConfigError("config must be a JSON object")
    unknown = set(cfg) - _TOP_KEYS
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")
    return cfg


def _problem_section(cfg: dict, seed: int | None) -> dict:
    prob = cfg.get("problem")
    if not isinstance(prob, dict) or "kind" not in prob:
        raise ConfigError("config needs a 'problem' object with a 'kind'")
    kind = prob["kind"]
    if kind not in _PROBLEM_KEYS:
        raise ConfigError(f"unknown problem kind {kind!r}; expected one of {sorted(_PROBLEM_KEYS)}")
    unknown = set(prob) - _PROBLEM_KEYS[kind]
    if unknown:
        raise ConfigError(f"unknown keys for {kind}: {sorted(unknown)}")
    prob = dict(prob)
    if kind == "conv_diff" and seed is not None and "seed" not in prob:
        prob["seed"] = seed
    return prob


def make_problem(prob: dict, base: Path = Path(".")) -> ProblemInstance:
    """Instantiate the problem described by a config ``problem`` section."""
    args = {k: v for k, v in prob.items() if k != "kind"}
    kind = prob["kind"]
    try:
        if kind == "conv_diff":
            return gen_conv_diff(**args)
        if kind == "membrane":
            return gen_membrane(**args)
        if "function" not in args or "matrix" not in args or "b" not in args:
            raise ConfigError("external problems need 'matrix', 'b' and 'function'")
        f = FunctionSpec.from_dict(args["function"])
        return load_problem(base / args["matrix"], base / args["b"], f)
    except TypeError as exc:
        raise ConfigError(f"bad problem parameters: {exc}") from exc
    except (ParameterError, KeyError) as exc:
        raise ConfigError(f"bad problem parameters: {exc}") from exc


def parse_methods(cfg: dict, seed: int | None) -> list[MethodSpec]:
    raw = cfg.get("methods", [])
    if not isinstance(raw, list):
        raise ConfigError("'methods' must be a list")
    specs = []
    for i, item in enumerate(raw):
        if not isinstance(item, dict) or "name" not in item:
            raise ConfigError(f"method #{i} needs a 'name'")
        unknown = set(item) - _METHOD_KEYS
        if unknown:
            raise ConfigError(f"method #{i}: unknown keys {sorted(unknown)}")
        if item["name"] not in METHODS:
            raise ConfigError(f"method #{i}: unknown method {item['name']!r}; expected one of {METHODS}")
        kw = dict(item)
        kw.setdefault("tol", DEFAULTS["tol"])
        kw.setdefault("k_max", DEFAULTS["k_max"])
        kw.setdefault("zeta", DEFAULTS["zeta"])
        if seed is not None:
            kw.setdefault("seed", seed)
        try:
            spec = MethodSpec(**kw)
        except (TypeError, ParameterError) as exc:
            raise ConfigError(f"method #{i}: {exc}") from exc
        if spec.name in ("rand", "rand-ls", "sfom") and spec.d is None:
            raise ConfigError(f"method #{i}: {spec.name} needs a sketch dimension 'd'")
        specs.append(spec)
    return specs


def compute_reference(cfg: dict, problem: ProblemInstance, base: Path = Path(".")):
    ref = cfg.get("reference", {"type": "oracle"})
    if ref is None:
        return None
    if not isinstance(ref, dict) or "type" not in ref:
        raise ConfigError("'reference' must be null or an object with a 'type'")
    kind = ref["type"]
    if kind == "oracle":
        return dense_reference(problem.L.to_dense(), problem.f, problem.b)
    if kind == "restart-highm":
        res = restarted_krylov(problem.L, problem.b, problem.f, int(ref.get("m_r", 100)),
                               tol=float(ref.get("tol", 3e-12)), k_max=int(ref.get("k_max", 40)),
                               with_kappa=False)
        return res.value
    if kind == "file":
        vec = load_vector(base / ref["path"])
        if vec.shape != (problem.n,):
            raise ConfigError(f"reference has length {len(vec)}, problem has n={problem.n}")
        return vec
    raise ConfigError(f"unknown reference type {kind!r}")


# -- output --------------------------------------------------------------------

def _fmt(x) -> str:
    if isinstance(x, float):
        if math.isnan(x):
            return "nan"
        return repr(x)
    return str(x)


def format_csv(records: list[SweepRecord], timing: bool = False) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_HEADER)
    for r in records:
        w.writerow([
            r.method, r.n, r.m, r.cycle, r.matvecs, _fmt(r.rel_error), _fmt(r.update_norm),
            _fmt(r.kappa_W), _fmt(r.leftmost_ritz_re),
            f"{1e3 * r.elapsed:.3f}" if timing else "", r.error,
        ])
    return buf.getvalue()


def _write(text: str, output: str | None) -> None:
    if output is None or output == "-":
        sys.stdout.write(text)
    else:
        Path(output).write_text(text, encoding="utf-8")


# -- subcommands ---------------------------------------------------------------

def cmd_generate(cfg: dict, output: str, seed: int | None = None, base: Path = Path(".")) -> dict:
    problem = make_problem(_problem_section(cfg, seed), base)
    if problem.kind == "external":
        raise ConfigError("generate needs a generated problem kind")
    return save_problem(problem, output)


def cmd_run(cfg: dict, seed: int | None = None, threads: int = 1, base: Path = Path(".")) -> str:
    problem = make_problem(_problem_section(cfg, seed), base)
    methods = parse_methods(cfg, seed)
    m_grid = cfg.get("m_grid", [])
    if not isinstance(m_grid, list) or not all(isinstance(m, int) and m >= 1 for m in m_grid):
        raise ConfigError("'m_grid' must be a list of positive integers")
    timing = bool(cfg.get("timing", False))
    reference = compute_reference(cfg, problem, base) if methods else None

    def cell(spec):
        # each cell runs single-threaded; rows come back in config order
        with threadpool_limits(1), counting():
            return convergence_sweep(problem, [spec], m_grid, reference)

    if threads > 1 and len(methods) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            chunks = list(pool.map(cell, methods))
    else:
        chunks = [cell(spec) for spec in methods]
    records = [r for chunk in chunks for r in chunk]
    if timing:
        for spec, chunk in zip(methods, chunks):
            total = sum(r.elapsed for r in chunk)
            print(f"{spec.name}: {len(chunk)} rows, {1e3 * total:.1f} ms", file=sys.stderr)
    return format_csv(records, timing)


def cmd_spectrum(cfg: dict, seed: int | None = None, base: Path = Path(".")) -> str:
    problem = make_problem(_problem_section(cfg, seed), base)
    limit = int(cfg.get("spectrum_max_n", DEFAULTS["spectrum_max_n"]))
    if problem.n > limit:
        raise ConfigError(
            f"n={problem.n} exceeds the dense eigensolver limit {limit}; use a smaller grid "
            "or raise 'spectrum_max_n'"
        )
    X = problem.L.to_dense()
    if np.array_equal(X, X.T):
        lam = np.linalg.eigvalsh(X).astype(complex)
    else:
        lam = np.linalg.eigvals(X)
    lam = lam[np.lexsort((lam.imag, lam.real))]
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["re", "im"])
    for z in lam:
        w.writerow([repr(float(z.real)), repr(float(z.imag))])
    return buf.getvalue()


# -- entry point ---------------------------------------------------------------

class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise ConfigError(message)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="randkrylov", description="Krylov f(A)b benchmark harness")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    for name, help_ in [("generate", "write a generated problem to disk"),
                        ("run", "run a method sweep and write the convergence CSV"),
                        ("spectrum", "write the eigenvalues of the operator")]:
        p = sub.add_parser(name, help=help_)
        p.add_argument("--config", required=True, help="JSON run configuration")
        p.add_argument("--output", help="output path (prefix for generate; '-' for stdout)")
        p.add_argument("--threads", type=int, default=1, help="worker threads for method cells")
        p.add_argument("--seed", type=int, help="default seed for the problem and methods")
    return parser


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
        if args.seed is not None and not 0 <= args.seed < 2**64:
            raise ConfigError("--seed must be an unsigned 64-bit integer")
        if args.threads < 1:
            raise ConfigError("--threads must be at least 1")
        cfg = load_config(args.config)
        base = Path(args.config).resolve().parent
        output = args.output if args.output is not None else cfg.get("output")
        if args.command == "generate":
            if output is None or output == "-":
                raise ConfigError("generate needs --output <prefix>")
            paths = cmd_generate(cfg, output, args.seed, base)
            for p in paths.values():
                print(p)
        elif args.command == "run":
            _write(cmd_run(cfg, args.seed, args.threads, base), output)
        else:
            _write(cmd_spectrum(cfg, args.seed, base), output)
    except ConfigError as exc:
        print(f"randkrylov: config error: {exc}", file=sys.stderr)
        return 1
    except Exception as exc:  # noqa: BLE001 - reported as a runtime failure
        print(f"randkrylov: error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
