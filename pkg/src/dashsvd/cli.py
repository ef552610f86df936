"""Command-line front end.

Exit codes: 0 success, 2 bad arguments, configuration or input, 3 numerical failure.
"""
from __future__ import annotations

import argparse
import csv
import json
import os
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from .analysis import ReferenceSpectrum, eps_pve, eps_res, eps_sigma, eps_spec
from .dense import ORACLE_MAX_DIM, TruncatedSvd
from .errors import DashSvdError, NumericalError
from .rsvd import ALGORITHMS, SolverConfig, solve
from .sparse import SparseMatrix, load_cache, load_matrix_market, read_dense_array, write_dense_array
from .synthetic import parse_synthetic

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_NUMERICAL = 3
METRIC_NAMES = ("eps_pve", "eps_res", "eps_spec", "eps_sigma")


class UsageError(Exception):
    pass


# ---------------------------------------------------------------------------
# shared helpers


def _load(args):
    """Return ``(matrix, label, exact_sigmas_or_None)``."""
    if args.synthetic:
        A, exact = parse_synthetic(args.synthetic, args.matrix_seed)
        return A, f"synthetic:{args.synthetic}:seed={args.matrix_seed}", exact
    if not args.input:
        raise UsageError("one of --input or --synthetic is required")
    path = str(args.input)
    A = load_cache(path) if path.endswith(".dsh") else load_matrix_market(path)
    return A, path, None


def _nnz(A):
    return A.nnz if isinstance(A, SparseMatrix) else int(np.count_nonzero(A))


def _threads(arg):
    if arg is not None:
        return arg
    env = os.environ.get("DASHSVD_THREADS")
    if env:
        try:
            return int(env)
        except ValueError:
            raise UsageError(f"DASHSVD_THREADS must be an integer, got {env!r}") from None
    return None


def _reference(choice, A, exact):
    if choice is None:
        return None
    if choice == "exact":
        if exact is None:
            raise UsageError("--reference exact is only available for dense2 synthetic inputs")
        return ReferenceSpectrum(exact, "file")
    if choice == "oracle":
        if min(A.shape) > ORACLE_MAX_DIM:
            raise UsageError(
                f"oracle reference refused: min dimension {min(A.shape)} exceeds {ORACLE_MAX_DIM}; "
                "pass a spectrum file with --reference"
            )
        return ReferenceSpectrum.from_oracle(A)
    return ReferenceSpectrum.from_file(choice)


def _metrics(A, result, ref, spec_iters):
    return {
        "eps_pve": eps_pve(A, result.U, ref),
        "eps_res": eps_res(A, result, ref),
        "eps_spec": eps_spec(A, result, ref, iters=spec_iters),
        "eps_sigma": eps_sigma(result.S, ref),
    }


def _factor_paths(prefix):
    return {"S": f"{prefix}.S.txt", "U": f"{prefix}.U.mtx", "V": f"{prefix}.V.mtx"}


def write_factors(prefix, result: TruncatedSvd):
    paths = _factor_paths(prefix)
    Path(paths["S"]).parent.mkdir(parents=True, exist_ok=True)
    Path(paths["S"]).write_text("".join(f"{float(x)!r}\n" for x in result.S))
    write_dense_array(paths["U"], result.U)
    write_dense_array(paths["V"], result.V)
    return paths


def read_factors(prefix) -> TruncatedSvd:
    paths = _factor_paths(prefix)
    S = np.array([float(t) for t in Path(paths["S"]).read_text().split()])
    return TruncatedSvd(read_dense_array(paths["U"]), S, read_dense_array(paths["V"]))


def _add_input(p):
    src = p.add_argument_group("input")
    src.add_argument("--input", help="Matrix Market coordinate file (.mtx, .mtx.gz) or .dsh cache")
    src.add_argument("--synthetic", help="built-in matrix: dense1:N (Gaussian) or dense2:N (sigma_i = 1/sqrt(i))")
    src.add_argument("--matrix-seed", type=int, default=0, help="seed for --synthetic (default 0)")


def _add_solver(p):
    p.add_argument("--k", type=int, required=True, help="target rank")
    p.add_argument("--s", type=int, help="oversampling (default k/2, at least 1)")
    p.add_argument("--threads", type=int, help="worker threads (fallback: $DASHSVD_THREADS, then all cores)")
    p.add_argument(
        "--deterministic",
        action=argparse.BooleanOptionalAction,
        default=True,
        help="reproducible results independent of thread count",
    )


# ---------------------------------------------------------------------------
# commands


def cmd_run(args):
    t_start = time.perf_counter()
    if args.p is not None and (args.tol is not None or args.pmax is not None):
        raise UsageError("--p conflicts with --tol/--pmax: give a fixed power count or a tolerance, not both")
    if args.alg == "dash" and args.p is not None:
        raise UsageError("dash stops by tolerance; use --tol/--pmax instead of --p")
    if args.alg != "dash" and (args.tol is not None or args.pmax is not None):
        raise UsageError(f"{args.alg} runs a fixed number of steps; use --p")

    A, label, exact = _load(args)
    t_loaded = time.perf_counter()
    ref = _reference(args.reference, A, exact)
    cfg = SolverConfig(
        k=args.k,
        s=args.s,
        p=args.p,
        p_max=args.pmax if args.pmax is not None else 1000,
        tol=args.tol if args.tol is not None else 1e-2,
        seed=args.seed,
        algorithm=args.alg,
        threads=_threads(args.threads),
        deterministic=args.deterministic,
    )
    result, trace = solve(A, cfg)
    outputs = write_factors(args.out_prefix, result) if args.out_prefix else {}
    metrics = _metrics(A, result, ref, args.spec_iters) if ref is not None else None
    report = {
        "matrix": {"id": label, "rows": A.shape[0], "cols": A.shape[1], "nnz": _nnz(A)},
        "config": {
            "k": cfg.k,
            "s": cfg.s,
            "p": cfg.p,
            "p_max": cfg.p_max,
            "tol": cfg.tol,
            "seed": cfg.seed,
            "algorithm": cfg.algorithm,
            "orthonormalizer": cfg.orthonormalizer,
            "threads": cfg.threads,
            "deterministic": cfg.deterministic,
        },
        "timings": {
            "load": t_loaded - t_start,
            "iterate": trace.timings["iterate"],
            "finalize": trace.timings["finalize"],
            "total": time.perf_counter() - t_start,
        },
        "n_p": trace.stopped_at,
        "stop_reason": trace.stop_reason,
        "alphas": trace.alphas.tolist(),
        "singular_values": result.S.tolist(),
        "outputs": outputs,
        "metrics": metrics,
    }
    json.dump(report, sys.stdout, indent=2)
    sys.stdout.write("\n")
    return EXIT_OK


def cmd_metrics(args):
    A, _, exact = _load(args)
    ref = _reference(args.reference, A, exact)
    result = read_factors(args.factors)
    values = _metrics(A, result, ref, args.spec_iters)
    writer = csv.writer(sys.stdout, lineterminator="\n")
    writer.writerow(METRIC_NAMES)
    writer.writerow([repr(values[name]) for name in METRIC_NAMES])
    return EXIT_OK


def cmd_bench(args):
    A, _, exact = _load(args)
    algs = args.alg
    if any(a != "dash" for a in algs) and not args.p_list:
        raise UsageError("basic/shifted need --p-list")
    if "dash" in algs and not args.tol_list:
        raise UsageError("dash needs --tol-list")
    choice = args.reference or ("exact" if exact is not None else "oracle")
    ref = _reference(choice, A, exact)
    threads = _threads(args.threads)
    writer = csv.writer(sys.stdout, lineterminator="\n")
    writer.writerow(("alg", "p", "tol", "seed", "time", "n_p") + METRIC_NAMES)
    for alg in algs:
        settings = [(None, t) for t in args.tol_list] if alg == "dash" else [(p, None) for p in args.p_list]
        for p, tol in settings:
            for rep in range(args.repeats):
                seed = args.seed + rep
                cfg = SolverConfig(
                    k=args.k, s=args.s, p=p, p_max=args.pmax, tol=tol if tol is not None else 1e-2,
                    seed=seed, algorithm=alg, threads=threads, deterministic=args.deterministic,
                )
                t0 = time.perf_counter()
                result, trace = solve(A, cfg)
                elapsed = time.perf_counter() - t0
                values = _metrics(A, result, ref, args.spec_iters)
                writer.writerow(
                    [alg, "" if p is None else p, "" if tol is None else repr(tol), seed, f"{elapsed:.6f}", trace.stopped_at]
                    + [repr(values[name]) for name in METRIC_NAMES]
                )
                sys.stdout.flush()
    return EXIT_OK


# ---------------------------------------------------------------------------
# parser


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="dashsvd", description="Randomized truncated SVD with shifted power iteration.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="compute a truncated SVD and print a JSON run report")
    _add_input(run)
    _add_solver(run)
    run.add_argument("--p", type=int, help="fixed power count (basic, shifted)")
    run.add_argument("--tol", type=float, help="stopping tolerance for dash (default 1e-2)")
    run.add_argument("--pmax", type=int, help="iteration cap for dash (default 1000)")
    run.add_argument("--alg", choices=ALGORITHMS, default="dash")
    run.add_argument("--seed", type=int, default=0)
    run.add_argument("--out-prefix", help="write PREFIX.S.txt, PREFIX.U.mtx and PREFIX.V.mtx")
    run.add_argument("--reference", help="also report metrics against a spectrum file, 'oracle' or 'exact'")
    run.add_argument("--spec-iters", type=int, default=300, help=argparse.SUPPRESS)
    run.set_defaults(func=cmd_run)

    met = sub.add_parser("metrics", help="evaluate saved factors; prints a CSV row")
    _add_input(met)
    met.add_argument("--factors", required=True, help="prefix used with run --out-prefix")
    met.add_argument("--reference", required=True, help="spectrum file (one value per line), 'oracle' or 'exact'")
    met.add_argument("--spec-iters", type=int, default=300, help="power steps for the spectral-norm estimate")
    met.set_defaults(func=cmd_metrics)

    bench = sub.add_parser("bench", help="sweep algorithms and parameters; prints long-format CSV")
    _add_input(bench)
    _add_solver(bench)
    bench.add_argument("--alg", nargs="+", choices=ALGORITHMS, default=["basic", "shifted"])
    bench.add_argument("--p-list", nargs="+", type=int, default=[], help="power counts for basic/shifted")
    bench.add_argument("--tol-list", nargs="+", type=float, default=[], help="tolerances for dash")
    bench.add_argument("--pmax", type=int, default=1000)
    bench.add_argument("--repeats", type=int, default=1, help="runs per setting, with seeds seed, seed+1, ...")
    bench.add_argument("--seed", type=int, default=1)
    bench.add_argument("--reference", help="spectrum file, 'oracle' or 'exact' (default: exact for dense2, else oracle)")
    bench.add_argument("--spec-iters", type=int, default=300)
    bench.set_defaults(func=cmd_bench)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except NumericalError as exc:
        print(f"dashsvd: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except (UsageError, DashSvdError, ValueError, OSError) as exc:
        print(f"dashsvd: error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
