"""GPMR baseline and the GPMR / GP-CMRH residual comparison.

GPMR minimizes the true residual over the same block subspace as GP-CMRH
by using orthonormal bases; the QR update is shared with
:func:`gpcmrh.solver.block_qmr`.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from .hessenberg import OrthogonalHessenberg, SimultaneousHessenberg
from .operators import BlockSystem
from .solver import SolveReport, block_qmr, gpcmrh_solve

__all__ = ["ROUNDOFF_FLOOR", "SandwichCheck", "gpmr_solve", "interleaved_basis", "sandwich_verify",
           "write_sandwich_csv"]


def gpmr_solve(sys: BlockSystem, tol: float = 1e-10, maxit: int = 600,
               track_true_residual: bool = False, abs_tol: bool = False) -> SolveReport:
    process = OrthogonalHessenberg(sys.A, sys.B, sys.b, sys.c,
                                   capacity=min(maxit, max(sys.m, sys.n)) + 1)
    return block_qmr(sys, process, "gpmr", lambda k: 1.0, tol, maxit,
                     track_true_residual, abs_tol)


@dataclass(frozen=True)
class SandwichCheck:
    """Residuals of both methods at step ``k`` and ``kappa(W_{k+1})``.

    ``floor`` is an absolute allowance added to both inequalities. It is 0
    for the raw comparison; :func:`sandwich_verify` sets it to the roundoff
    level of the right-hand side, below which the two residuals carry no
    ordering information.
    """

    k: int
    r_gpmr: float
    r_gpcmrh: float
    kappa_W: float
    floor: float = 0.0

    @property
    def lower_ok(self) -> bool:
        return self.r_gpmr <= self.r_gpcmrh * (1 + 1e-10) + self.floor

    @property
    def upper_ok(self) -> bool:
        return self.r_gpcmrh <= self.kappa_W * self.r_gpmr * (1 + 1e-8) + self.floor

    @property
    def ratio(self) -> float:
        return self.r_gpcmrh / self.r_gpmr if self.r_gpmr > 0 else float("inf")


ROUNDOFF_FLOOR = 1e3 * np.finfo(float).eps


def interleaved_basis(D: np.ndarray, L: np.ndarray) -> np.ndarray:
    """``blkdiag(D, L)`` with columns ordered d_1, l_1, d_2, l_2, ...

    When one side has more columns its extras come last, in order.
    """
    m, kd = D.shape
    n, kl = L.shape
    cols = []
    for i in range(max(kd, kl)):
        if i < kd:
            cols.append(np.concatenate([D[:, i], np.zeros(n)]))
        if i < kl:
            cols.append(np.concatenate([np.zeros(m), L[:, i]]))
    return np.column_stack(cols) if cols else np.zeros((m + n, 0))


def sandwich_verify(sys: BlockSystem, kmax: int) -> list[SandwichCheck]:
    """Compare true residuals of both methods at each k up to ``kmax``.

    Both solvers run without early stopping. The returned list is shorter
    than ``kmax`` if either one terminates first. Each check carries
    ``floor = ROUNDOFF_FLOOR * ||[b; c]||``.
    """
    floor = ROUNDOFF_FLOOR * float(np.linalg.norm(sys.rhs))
    gp = gpmr_solve(sys, tol=0.0, maxit=kmax, track_true_residual=True)
    cm = gpcmrh_solve(sys, tol=0.0, maxit=kmax, track_true_residual=True)
    kk = min(gp.iterations, cm.iterations)
    proc = SimultaneousHessenberg(sys.A, sys.B, sys.b, sys.c, pivoted=True)
    for _ in range(kk):
        if proc.breakdown is not None:
            break
        proc.step()
    checks = []
    for k in range(1, kk + 1):
        nd, nl = min(k + 1, len(proc.D)), min(k + 1, len(proc.L))
        W = interleaved_basis(proc.D.matrix(nd), proc.L.matrix(nl))
        s = np.linalg.svd(W, compute_uv=False)
        kappa = float(s[0] / s[-1]) if s[-1] > 0 else float("inf")
        checks.append(SandwichCheck(k, float(gp.true_residual_history[k - 1]),
                                    float(cm.true_residual_history[k - 1]), kappa, floor))
    return checks


def write_sandwich_csv(checks, target) -> None:
    """CSV ``k,r_gpmr,r_gpcmrh,kappa_W,ratio``."""
    own = not hasattr(target, "write")
    fh = open(target, "w", newline="", encoding="utf-8") if own else target
    try:
        w = csv.writer(fh)
        w.writerow(["k", "r_gpmr", "r_gpcmrh", "kappa_W", "ratio"])
        for c in checks:
            w.writerow([c.k, f"{c.r_gpmr:.16e}", f"{c.r_gpcmrh:.16e}",
                        f"{c.kappa_W:.16e}", f"{c.ratio:.16e}"])
    finally:
        if own:
            fh.close()
