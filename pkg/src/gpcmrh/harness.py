"""Experiment plumbing: partitioning, solver runs, CSV output, diagnostics.

A square sparse matrix ``K`` is split symmetrically into ``[[M, A], [B, N]]``,
the right-hand side is ``K @ ones`` so the exact solution is known, and the
block-diagonal part is used as a right preconditioner (``block_direct``).
"""

from __future__ import annotations

import csv
import logging
import math
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence, Union

import numpy as np
import scipy.sparse as sp

from .baselines import MonolithicOperator, cmrh_solve, gmres_solve
from .gpmr import gpmr_solve
from .hessenberg import SimultaneousHessenberg, basis_condition
from .linalg import ContractError, CSRMatrix, read_matrix_market, spmv
from .operators import BlockSystem, SetupError, preconditioned_system
from .solver import SolveReport, gpcmrh_solve

__all__ = [
    "ConfigError",
    "SOLVERS",
    "ExperimentConfig",
    "SummaryRow",
    "read_partition_file",
    "partition_permutation",
    "partition_system",
    "run_experiment",
    "format_summary",
    "write_summary_csv",
    "write_convergence_csv",
    "lotkin_matrix",
    "lotkin_conditioning",
    "write_lotkin_csv",
    "random_block_system",
    "synthetic_matrix",
]

log = logging.getLogger(__name__)

SOLVERS = ("gpcmrh", "gpmr", "gmres", "cmrh")
PRECONDITIONERS = ("none", "block_direct")


class ConfigError(ValueError):
    """Invalid experiment configuration (bad split, empty block, ...)."""


# ---------------------------------------------------------------- partitions

def read_partition_file(path, size: int, fmt: str = "indices") -> np.ndarray:
    """Row indices of the first block, sorted.

    ``fmt="indices"``: whitespace-separated 0-based row indices, ``#``
    starts a comment. ``fmt="metis"``: one part label per row (the output
    format of METIS ``gpmetis``); rows labelled 0 form the first block.
    """
    tokens = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            tokens.extend(line.split("#", 1)[0].split())
    try:
        values = np.array([int(t) for t in tokens], dtype=np.int64)
    except ValueError as exc:
        raise ConfigError(f"{path}: non-integer entry ({exc})") from None
    if fmt == "metis":
        if len(values) != size:
            raise ConfigError(f"{path}: {len(values)} part labels for {size} rows")
        return np.flatnonzero(values == 0)
    if fmt != "indices":
        raise ConfigError(f"unknown partition format {fmt!r}")
    if len(values) and (values.min() < 0 or values.max() >= size):
        raise ConfigError(f"{path}: row index out of range [0, {size})")
    if len(np.unique(values)) != len(values):
        raise ConfigError(f"{path}: repeated row index")
    return np.sort(values)


def partition_permutation(size: int, split) -> tuple[np.ndarray, int]:
    """Symmetric permutation putting the first block first, and its size.

    ``split`` is either the block size ``m`` (contiguous split, identity
    permutation) or a sequence of row indices for the first block. Both
    blocks keep their rows in ascending order.
    """
    if isinstance(split, (int, np.integer)):
        m = int(split)
        perm = np.arange(size)
    else:
        first = np.sort(np.asarray(split, dtype=np.int64))
        if len(first) and (first[0] < 0 or first[-1] >= size):
            raise ConfigError(f"partition index out of range [0, {size})")
        if np.any(np.diff(first) == 0):
            raise ConfigError("repeated partition index")
        mask = np.zeros(size, dtype=bool)
        mask[first] = True
        perm = np.concatenate([first, np.flatnonzero(~mask)])
        m = len(first)
    if not 0 < m < size:
        raise ConfigError(f"split {m} leaves an empty block (size {size})")
    return perm, m


def partition_system(K_full: CSRMatrix, split, rhs) -> tuple:
    """Split ``K_full`` into ``(M, A, B, N, b, c)``.

    With an index list the symmetric permutation from
    :func:`partition_permutation` is applied to ``K_full`` and ``rhs`` first.
    Blocks are returned as :class:`CSRMatrix`.
    """
    if K_full.nrows != K_full.ncols:
        raise ConfigError(f"matrix is not square: {K_full.shape}")
    rhs = np.asarray(rhs, dtype=np.float64)
    if rhs.shape != (K_full.nrows,):
        raise ContractError(f"rhs has shape {rhs.shape}, matrix is {K_full.shape}")
    perm, m = partition_permutation(K_full.nrows, split)
    first, second = perm[:m], perm[m:]
    return (
        K_full.submatrix(first, first),
        K_full.submatrix(first, second),
        K_full.submatrix(second, first),
        K_full.submatrix(second, second),
        rhs[first],
        rhs[second],
    )


# ---------------------------------------------------------------- experiments

@dataclass
class ExperimentConfig:
    """Inputs of one solver comparison.

    Exactly one of ``matrix_path`` and ``synthetic`` (an ``(m, n)`` pair) is
    given. ``partition`` is the split index or a partition-file path; a
    synthetic instance is always split at ``m``. ``lam`` and ``mu`` only shape
    synthetic instances, since block preconditioning normalizes both to 1.
    """

    matrix_path: Optional[str] = None
    partition: Union[int, str, None] = None
    partition_format: str = "indices"
    lam: float = 1.0
    mu: float = 1.0
    tol: float = 1e-10
    maxit: int = 600
    solvers: Sequence[str] = SOLVERS
    precond: str = "block_direct"
    seed: int = 0
    track_true_residual: bool = False
    abs_tol: bool = False
    out_dir: Optional[str] = None
    synthetic: Optional[tuple] = None
    density: float = 1.0

    def __post_init__(self):
        if not self.tol > 0:
            raise ConfigError("tol must be positive")
        if self.maxit < 1:
            raise ConfigError("maxit must be >= 1")
        unknown = set(self.solvers) - set(SOLVERS)
        if unknown or not self.solvers:
            raise ConfigError(f"solvers must be a nonempty subset of {SOLVERS}, got {list(self.solvers)}")
        if self.precond not in PRECONDITIONERS:
            raise ConfigError(f"precond must be one of {PRECONDITIONERS}")
        if (self.matrix_path is None) == (self.synthetic is None):
            raise ConfigError("give exactly one of matrix_path and synthetic")
        if self.matrix_path is not None and self.partition is None:
            raise ConfigError("a split index or partition file is required")


@dataclass
class SummaryRow:
    name: str
    size: int
    nnz: int
    solver: str
    iterations: int
    runtime_seconds: float
    final_relative_residual: float
    setup_seconds: float = 0.0
    status: str = ""
    error: str = ""


SUMMARY_FIELDS = ("name", "size", "nnz", "solver", "iterations", "runtime_seconds",
                  "final_relative_residual", "setup_seconds", "status")


def synthetic_matrix(m: int, n: int, seed: int, lam: float = 1.0, mu: float = 1.0,
                     density: float = 1.0, scale: float = 0.5) -> CSRMatrix:
    """``[[lam I, A], [B, mu I]]`` with Gaussian off-diagonal blocks.

    Entries are scaled by ``scale / sqrt(max(m, n))`` so the blocks have
    spectral norm around ``2 * scale`` and the system stays well conditioned.
    """
    rng = np.random.default_rng(seed)
    sys = random_block_system(m, n, seed=rng, density=density, lam=lam, mu=mu, scale=scale)
    A = sys.A @ np.eye(n)
    B = sys.B @ np.eye(m)
    K = sp.bmat([[lam * sp.eye(m), sp.csr_array(A)], [sp.csr_array(B), mu * sp.eye(n)]])
    return CSRMatrix.from_scipy(K)


def random_block_system(m: int, n: int, seed=0, density: float = 1.0, lam: float = 1.0,
                        mu: float = 1.0, scale: float = 0.5) -> BlockSystem:
    """Random block system with Gaussian ``A``, ``B``, ``b``, ``c``.

    ``density < 1`` keeps that fraction of the off-diagonal entries;
    ``seed`` may be an int or a :class:`numpy.random.Generator`.
    """
    rng = np.random.default_rng(seed)
    s = scale / math.sqrt(max(m, n))
    A = rng.standard_normal((m, n)) * s
    B = rng.standard_normal((n, m)) * s
    if density < 1.0:
        # rescale so the spectral size does not shrink with the density
        A *= (rng.random((m, n)) < density) / math.sqrt(density)
        B *= (rng.random((n, m)) < density) / math.sqrt(density)
    b = rng.standard_normal(m)
    c = rng.standard_normal(n)
    return BlockSystem(A, B, b, c, lam, mu)


def _scalar_diagonal(X: CSRMatrix, name: str) -> float:
    """``alpha`` if ``X == alpha * I``; otherwise a configuration error."""
    S = X.to_scipy()
    d = S.diagonal()
    off = S - sp.diags_array(d)
    if off.count_nonzero() or not np.all(d == d[0]):
        raise ConfigError(f"{name} block is not a multiple of the identity; use --precond block_direct")
    return float(d[0])


def _solve_one(name: str, sys: BlockSystem, cfg: ExperimentConfig) -> SolveReport:
    kw = dict(tol=cfg.tol, maxit=cfg.maxit, track_true_residual=cfg.track_true_residual,
              abs_tol=cfg.abs_tol)
    if name == "gpcmrh":
        return gpcmrh_solve(sys, **kw)
    if name == "gpmr":
        return gpmr_solve(sys, **kw)
    op = MonolithicOperator(sys)
    if name == "gmres":
        return gmres_solve(op, sys.rhs, **kw)
    return cmrh_solve(op, sys.rhs, **kw)


def run_experiment(cfg: ExperimentConfig) -> tuple[list[SummaryRow], dict]:
    """Run every selected solver on one instance.

    Returns the summary rows and a dict of written files (``"summary_txt"``,
    ``"summary_csv"`` and one entry per solver) when ``cfg.out_dir`` is set.
    Runtimes cover the solve call only; preconditioner factorization is
    reported separately in ``setup_seconds``. A failing solver gets a row with
    ``status="error"`` and the run continues.
    """
    if cfg.synthetic is not None:
        m_syn, n_syn = (int(v) for v in cfg.synthetic)
        K = synthetic_matrix(m_syn, n_syn, cfg.seed, cfg.lam, cfg.mu, cfg.density)
        name = f"synthetic-{m_syn}x{n_syn}-seed{cfg.seed}"
        split = m_syn
    else:
        K = read_matrix_market(cfg.matrix_path)
        name = Path(cfg.matrix_path).stem
        split = cfg.partition
        if isinstance(split, str) and not split.lstrip("-").isdigit():
            split = read_partition_file(split, K.nrows, cfg.partition_format)
        elif isinstance(split, str):
            split = int(split)

    rhs = spmv(K, np.ones(K.ncols))
    M, A, B, N, b, c = partition_system(K, split, rhs)

    setup_error = ""
    t0 = time.perf_counter()
    try:
        if cfg.precond == "block_direct":
            sys = preconditioned_system(M, N, A, B, b, c)
        else:
            sys = BlockSystem(A, B, b, c, _scalar_diagonal(M, "M"), _scalar_diagonal(N, "N"))
    except (SetupError, ConfigError) as exc:
        sys, setup_error = None, str(exc)
    setup = time.perf_counter() - t0

    out = Path(cfg.out_dir) if cfg.out_dir is not None else None
    if out is not None:
        out.mkdir(parents=True, exist_ok=True)
    files: dict = {}
    rows: list[SummaryRow] = []
    rhs_norm = float(np.linalg.norm(np.concatenate([b, c])))
    for solver in cfg.solvers:
        row = SummaryRow(name, K.nrows, K.nnz, solver, 0, 0.0, float("nan"), setup)
        if sys is None:
            row.status, row.error = "error", setup_error
            rows.append(row)
            continue
        try:
            t0 = time.perf_counter()
            report = _solve_one(solver, sys, cfg)
            row.runtime_seconds = time.perf_counter() - t0
        except Exception as exc:  # recorded per row; the other solvers still run
            log.exception("solver %s failed on %s", solver, name)
            row.status, row.error = "error", f"{type(exc).__name__}: {exc}"
            rows.append(row)
            continue
        row.iterations = report.iterations
        row.status = report.status.value
        # recomputed against the unpreconditioned blocks
        x, y = report.x, report.y
        r = np.concatenate([b - spmv(M, x) - spmv(A, y), c - spmv(B, x) - spmv(N, y)])
        row.final_relative_residual = float(np.linalg.norm(r) / rhs_norm)
        rows.append(row)
        if out is not None:
            path = out / f"{name}_{solver}.csv"
            write_convergence_csv(report, path)
            files[solver] = path
    if out is not None:
        files["summary_txt"] = out / "summary.txt"
        files["summary_csv"] = out / "summary.csv"
        header = (f"# matrix={name} seed={cfg.seed} tol={cfg.tol:g} maxit={cfg.maxit} "
                  f"precond={cfg.precond}\n")
        files["summary_txt"].write_text(header + format_summary(rows) + "\n", encoding="utf-8")
        write_summary_csv(rows, files["summary_csv"])
    return rows, files


def format_summary(rows: Sequence[SummaryRow]) -> str:
    """Aligned plain-text table of the summary rows."""
    head = ["name", "size", "nnz", "solver", "iter", "time(s)", "rel.res", "setup(s)", "status"]
    body = [[r.name, str(r.size), str(r.nnz), r.solver, str(r.iterations),
             f"{r.runtime_seconds:.3f}", f"{r.final_relative_residual:.2e}",
             f"{r.setup_seconds:.3f}", r.status] for r in rows]
    widths = [max(len(x) for x in col) for col in zip(head, *body)]
    lines = ["  ".join(c.ljust(w) if i in (0, 3, 8) else c.rjust(w)
                       for i, (c, w) in enumerate(zip(line, widths)))
             for line in [head, *body]]
    return "\n".join(s.rstrip() for s in lines)


def _open(target):
    if hasattr(target, "write"):
        return target, False
    return open(target, "w", newline="", encoding="utf-8"), True


def write_summary_csv(rows: Sequence[SummaryRow], target) -> None:
    fh, own = _open(target)
    try:
        w = csv.writer(fh)
        w.writerow(SUMMARY_FIELDS)
        for r in rows:
            w.writerow([r.name, r.size, r.nnz, r.solver, r.iterations,
                        f"{r.runtime_seconds:.6f}", f"{r.final_relative_residual:.6e}",
                        f"{r.setup_seconds:.6f}", r.status])
    finally:
        if own:
            fh.close()


def write_convergence_csv(report: SolveReport, target) -> None:
    """``k,rho_bound,quasi_residual`` plus ``true_residual`` when tracked."""
    fh, own = _open(target)
    tracked = report.true_residual_history is not None
    try:
        w = csv.writer(fh)
        w.writerow(["k", "rho_bound", "quasi_residual"] + (["true_residual"] if tracked else []))
        for k in range(report.iterations):
            row = [k + 1, f"{report.rho_history[k]:.16e}", f"{report.quasi_history[k]:.16e}"]
            if tracked:
                row.append(f"{report.true_residual_history[k]:.16e}")
            w.writerow(row)
    finally:
        if own:
            fh.close()


# ---------------------------------------------------------------- Lotkin probe

def lotkin_matrix(n: int) -> np.ndarray:
    """Hilbert matrix ``1/(i+j-1)`` (1-based) with the first row set to ones."""
    i = np.arange(1, n + 1)
    T = 1.0 / (i[:, None] + i[None, :] - 1.0)
    T[0, :] = 1.0
    return T


@dataclass
class _Track:
    process: Optional[SimultaneousHessenberg]
    conds: list = field(default_factory=list)


def lotkin_conditioning(n: int, kmax: int, include_projector: bool = False) -> list[tuple]:
    """``kappa(D_k)`` for ``k = 1..kmax`` on the Lotkin pair.

    ``A`` is the Lotkin matrix, ``B = A^T``, ``b = c = ones``. Each row is
    ``(k, cond_pivoted, cond_unpivoted)``, plus the pivoted run with all
    coefficients of a step solved at once from the triangular block when
    ``include_projector`` is set. Only exact zero pivots stop a run here
    (the Krylov space is numerically rank deficient well before ``k = 50``
    at ``n = 1000``); NaN marks steps after a run terminated.
    """
    if not 2 <= kmax <= n:
        raise ConfigError("need n >= kmax >= 2")
    T = lotkin_matrix(n)
    ones = np.ones(n)
    variants = [dict(pivoted=True), dict(pivoted=False)]
    if include_projector:
        variants.append(dict(pivoted=True, elimination="projector"))
    tracks = [_Track(SimultaneousHessenberg(T, T.T, ones, ones, capacity=kmax,
                                          breakdown_scale=0.0, **kw))
              for kw in variants]
    for k in range(1, kmax + 1):
        for tr in tracks:
            proc = tr.process
            if proc is not None and len(proc.D) < k and proc.breakdown is None:
                proc.step()
            if proc is not None and len(proc.D) >= k:
                tr.conds.append(basis_condition(proc.D, k))
            else:
                tr.conds.append(float("nan"))
    return [(k, *(tr.conds[k - 1] for tr in tracks)) for k in range(1, kmax + 1)]


def write_lotkin_csv(rows, target) -> None:
    fh, own = _open(target)
    try:
        w = csv.writer(fh)
        header = ["k", "cond_pivoted", "cond_unpivoted"]
        if rows and len(rows[0]) == 4:
            header.append("cond_pivoted_projector")
        w.writerow(header)
        for row in rows:
            w.writerow([row[0], *(f"{v:.16e}" for v in row[1:])])
    finally:
        if own:
            fh.close()
