"""Command-line entry point: ``gpcmrh solve | lotkin | sandwich``."""

from __future__ import annotations

import argparse
import logging
import sys
from typing import Optional, Sequence

from .gpmr import sandwich_verify, write_sandwich_csv
from .harness import (
    SOLVERS,
    ConfigError,
    ExperimentConfig,
    format_summary,
    lotkin_conditioning,
    random_block_system,
    run_experiment,
    write_lotkin_csv,
)
from .linalg import MatrixMarketError
from .operators import SetupError


def _solver_list(text: str):
    names = [s.strip() for s in text.split(",") if s.strip()]
    bad = [s for s in names if s not in SOLVERS]
    if bad or not names:
        raise argparse.ArgumentTypeError(f"unknown solver(s) {bad}; choose from {','.join(SOLVERS)}")
    return names


def _shape(text: str):
    try:
        m, n = (int(v) for v in text.lower().split("x"))
    except ValueError:
        raise argparse.ArgumentTypeError("expected MxN, e.g. 60x40") from None
    if m < 1 or n < 1:
        raise argparse.ArgumentTypeError("block sizes must be positive")
    return m, n


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="gpcmrh", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("solve", help="compare solvers on one block system")
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--matrix", help="Matrix Market file with the full square matrix")
    src.add_argument("--synthetic", type=_shape, metavar="MxN",
                     help="random [[lam I, A], [B, mu I]] instance instead of a file")
    part = p.add_mutually_exclusive_group()
    part.add_argument("--split", type=int, metavar="M", help="first block is rows/cols 0..M-1")
    part.add_argument("--partition-file", metavar="PATH",
                      help="row indices of the first block (or METIS part labels)")
    p.add_argument("--partition-format", choices=("indices", "metis"), default="indices")
    p.add_argument("--solvers", type=_solver_list, default=list(SOLVERS))
    p.add_argument("--tol", type=float, default=1e-10)
    p.add_argument("--maxit", type=int, default=600)
    p.add_argument("--precond", choices=("none", "block_direct"), default="block_direct")
    p.add_argument("--out", metavar="DIR", help="directory for CSV histories and the summary")
    p.add_argument("--true-residual", action="store_true",
                   help="also record the true residual at every iteration")
    p.add_argument("--abs-tol", action="store_true", help="tol is absolute, not relative")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--lam", type=float, default=1.0, help="synthetic instances only")
    p.add_argument("--mu", type=float, default=1.0, help="synthetic instances only")
    p.add_argument("--density", type=float, default=1.0, help="synthetic instances only")

    p = sub.add_parser("lotkin", help="basis conditioning on the Lotkin matrix")
    p.add_argument("--n", type=int, default=1000)
    p.add_argument("--kmax", type=int, default=50)
    p.add_argument("--out", metavar="FILE", help="CSV path (default: stdout)")
    p.add_argument("--projector", action="store_true",
                   help="add a column for the all-at-once elimination variant")

    p = sub.add_parser("sandwich", help="GPMR vs GP-CMRH residuals on a random system")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--m", type=int, default=40)
    p.add_argument("--n", type=int, default=30)
    p.add_argument("--kmax", type=int, default=12)
    p.add_argument("--lam", type=float, default=1.0)
    p.add_argument("--mu", type=float, default=1.0)
    p.add_argument("--density", type=float, default=1.0)
    p.add_argument("--out", metavar="FILE", help="CSV path (default: stdout)")
    return parser


def _cmd_solve(args) -> int:
    if args.matrix is not None and args.split is None and args.partition_file is None:
        raise ConfigError("--matrix needs --split or --partition-file")
    cfg = ExperimentConfig(
        matrix_path=args.matrix,
        partition=args.split if args.partition_file is None else args.partition_file,
        partition_format=args.partition_format,
        lam=args.lam,
        mu=args.mu,
        tol=args.tol,
        maxit=args.maxit,
        solvers=args.solvers,
        precond=args.precond,
        seed=args.seed,
        track_true_residual=args.true_residual,
        abs_tol=args.abs_tol,
        out_dir=args.out,
        synthetic=args.synthetic,
        density=args.density,
    )
    rows, _ = run_experiment(cfg)
    print(format_summary(rows))
    for r in rows:
        if r.error:
            print(f"{r.solver}: {r.error}", file=sys.stderr)
    return 0 if all(r.status == "converged" for r in rows) else 1


def _cmd_lotkin(args) -> int:
    rows = lotkin_conditioning(args.n, args.kmax, include_projector=args.projector)
    write_lotkin_csv(rows, args.out if args.out else sys.stdout)
    return 0


def _cmd_sandwich(args) -> int:
    system = random_block_system(args.m, args.n, seed=args.seed, density=args.density,
                                 lam=args.lam, mu=args.mu)
    checks = sandwich_verify(system, args.kmax)
    write_sandwich_csv(checks, args.out if args.out else sys.stdout)
    failed = [c.k for c in checks if not (c.lower_ok and c.upper_ok)]
    if failed:
        print(f"sandwich violated at k={failed}", file=sys.stderr)
    return 1 if failed else 0


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    handler = {"solve": _cmd_solve, "lotkin": _cmd_lotkin, "sandwich": _cmd_sandwich}[args.command]
    try:
        return handler(args)
    except (ConfigError, SetupError, MatrixMarketError, OSError) as exc:
        print(f"gpcmrh {args.command}: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
