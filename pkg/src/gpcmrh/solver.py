"""GP-CMRH: quasi-minimal residual solver over the simultaneous Hessenberg basis.

The iterate after ``k`` steps is ``W_k z_k`` where ``W_k`` interleaves the
columns ``[d_i; 0]`` and ``[0; l_i]`` and ``z_k`` minimizes
``||beta e1 + gamma e2 - S_{k+1,k} z||``. ``S`` is block upper Hessenberg
with 2x2 blocks, so its QR factorization is updated with one block of four
plane rotations per step. GPMR (:mod:`gpcmrh.gpmr`) runs the same driver
over the orthonormal basis.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Callable, Optional

import numpy as np

from .hessenberg import SimultaneousHessenberg
from .linalg import PackedUpperTriangular, back_substitute
from .operators import BlockSystem

__all__ = [
    "Status",
    "RotationBlock",
    "QrState",
    "SolveReport",
    "givens4",
    "qr_block",
    "assemble_s_column",
    "residual_bound",
    "true_residual",
    "gpcmrh_solve",
]


class Status(str, Enum):
    CONVERGED = "converged"
    MAXIT = "maxit"
    BREAKDOWN_D = "breakdown_d"
    BREAKDOWN_L = "breakdown_l"
    # both sides at once, or the single basis of GMRES/CMRH
    BREAKDOWN = "breakdown"


@dataclass(frozen=True)
class RotationBlock:
    """Four plane rotations acting on rows (1,4), (1,2), (2,4), (2,3) in that order."""

    c1: float = 1.0
    c2: float = 1.0
    c3: float = 1.0
    c4: float = 1.0
    s1: float = 0.0
    s2: float = 0.0
    s3: float = 0.0
    s4: float = 0.0

    def matrix(self) -> np.ndarray:
        """The 4x4 orthogonal factor ``G4 G3 G2 G1`` (tests only)."""
        Q = np.eye(4)
        for (i, j), c, s in (((0, 3), self.c1, self.s1), ((0, 1), self.c2, self.s2),
                             ((1, 3), self.c3, self.s3), ((1, 2), self.c4, self.s4)):
            G = np.eye(4)
            G[i, i] = G[j, j] = c
            G[i, j], G[j, i] = s, -s
            Q = G @ Q
        return Q


def givens4(block: RotationBlock, x1, x2, x3, x4):
    """Apply a rotation block to a 4-vector."""
    c1, c2, c3, c4 = block.c1, block.c2, block.c3, block.c4
    s1, s2, s3, s4 = block.s1, block.s2, block.s3, block.s4
    y1 = c1 * x1 + s1 * x4
    y4 = c1 * x4 - s1 * x1
    t = c2 * y1 + s2 * x2
    y2 = c2 * x2 - s2 * y1
    y1 = t
    t = c3 * y2 + s3 * y4
    y4 = c3 * y4 - s3 * y2
    y2 = t
    t = c4 * y2 + s4 * x3
    y3 = c4 * x3 - s4 * y2
    y2 = t
    return y1, y2, y3, y4


def _rotation(a: float, b: float):
    """(c, s, r) with ``[c s; -s c] [a; b] = [r; 0]``, identity when a = b = 0."""
    r = math.hypot(a, b)
    if r == 0.0:
        return 1.0, 0.0, 0.0
    return a / r, b / r, r


def qr_block(rt11: float, rt12: float, rt21: float, rt22: float, h: float, f: float):
    """Triangularize the trailing 4x2 block of ``S_{k+1,k}``.

    The block is ``[[rt11, rt12], [rt21, rt22], [0, h], [f, 0]]`` after all
    earlier rotation blocks have been applied. Returns the rotation block and
    ``r11, r12, r22`` of the new 2x2 upper triangle (``r11, r22 >= 0``).
    """
    # zero f against rt11; fills row 4 of the second column
    c1, s1, rh11 = _rotation(rt11, f)
    rh12 = c1 * rt12
    fill = -s1 * rt12
    # zero rt21
    c2, s2, r11 = _rotation(rh11, rt21)
    r12 = c2 * rh12 + s2 * rt22
    rh22 = c2 * rt22 - s2 * rh12
    # zero the fill
    c3, s3, ro22 = _rotation(rh22, fill)
    # zero h
    c4, s4, r22 = _rotation(ro22, h)
    return RotationBlock(c1, c2, c3, c4, s1, s2, s3, s4), r11, r12, r22


def assemble_s_column(process, k: int, lam: float, mu: float):
    """Columns ``2k-1`` and ``2k`` of ``S_{k+1,k}``, each of length ``2k+2``.

    Odd rows carry the D-side coefficients (h), even rows the L-side ones (f),
    following the interleaving of ``W``; the diagonal block adds lam and mu.
    """
    hcol = process.hcols[k - 1]
    fcol = process.fcols[k - 1]
    col_a = np.zeros(2 * k + 2)
    col_b = np.zeros(2 * k + 2)
    col_a[1::2] = fcol
    col_b[0::2] = hcol
    col_a[2 * k - 2] += lam
    col_b[2 * k - 1] += mu
    return col_a, col_b


def residual_bound(t1: float, t2: float, m: int, n: int, k: int) -> float:
    """Upper bound on the true residual from the trailing transformed rhs pair."""
    if k < 1:
        raise ValueError("k must be >= 1")
    factor = math.sqrt(max(2 * max(m, n) - k, 0) * (k + 1) / 2.0)
    return factor * math.hypot(t1, t2)


def true_residual(sys: BlockSystem, x, y) -> float:
    """``||[b; c] - K [x; y]||`` in the variables of ``sys``."""
    return float(np.linalg.norm(sys.rhs - sys.apply(np.concatenate([x, y]))))


@dataclass
class QrState:
    R: PackedUpperTriangular = field(default_factory=PackedUpperTriangular)
    rotations: list = field(default_factory=list)
    tau: list = field(default_factory=list)
    tau_tilde: tuple = (0.0, 0.0)

    @property
    def quasi_residual(self) -> float:
        return math.hypot(*self.tau_tilde)

    def update(self, col_a: np.ndarray, col_b: np.ndarray) -> None:
        """Fold two new columns of ``S`` into ``R`` and the transformed rhs."""
        k = len(self.rotations) + 1
        for j, blk in enumerate(self.rotations):
            rows = slice(2 * j, 2 * j + 4)
            col_a[rows] = givens4(blk, *col_a[rows])
            col_b[rows] = givens4(blk, *col_b[rows])
        i = 2 * k - 2
        blk, r11, r12, r22 = qr_block(col_a[i], col_b[i], col_a[i + 1], col_b[i + 1],
                                      col_b[i + 2], col_a[i + 3])
        self.rotations.append(blk)
        head_a = col_a[:i].copy()
        head_b = col_b[:i].copy()
        self.R.append_column(np.append(head_a, r11))
        self.R.append_column(np.concatenate([head_b, [r12, r22]]))
        t1, t2, t3, t4 = givens4(blk, self.tau_tilde[0], self.tau_tilde[1], 0.0, 0.0)
        self.tau.extend((t1, t2))
        self.tau_tilde = (t3, t4)

    def close(self, coef, dead_side: str, lam: float, mu: float) -> None:
        """Append the final column after one side of the basis terminated.

        With the ``l`` side dead the new basis vector is ``[d_{k+1}; 0]``,
        whose image is ``lam`` times itself plus ``sum coef_i [0; l_i]``; the
        dead row ``2k+2`` is uncoupled from the rotations and is dropped,
        leaving a square triangular system. The ``d`` side is symmetric.
        """
        k = len(self.rotations)
        col = np.zeros(2 * k + 2)
        if dead_side == "l":
            col[1:2 * k:2] = coef
            col[2 * k] = lam
        else:
            col[0:2 * k:2] = coef
            col[2 * k + 1] = mu
        for j, blk in enumerate(self.rotations):
            rows = slice(2 * j, 2 * j + 4)
            col[rows] = givens4(blk, *col[rows])
        if dead_side == "l":
            self.R.append_column(col[: 2 * k + 1])
            self.tau.append(self.tau_tilde[0])
        else:
            self.R.append_column(np.append(col[: 2 * k], col[2 * k + 1]))
            self.tau.append(self.tau_tilde[1])
        self.tau_tilde = (0.0, 0.0)

    def solve(self) -> np.ndarray:
        return back_substitute(self.R, np.asarray(self.tau))


@dataclass
class SolveReport:
    """Outcome of one solve.

    ``x``, ``y`` are in the original unknowns (back-mapped through the
    preconditioner when there is one). ``rho_history`` holds the residual
    estimate used for stopping, ``quasi_history`` the coefficient-space
    residual. ``true_residual_history`` and ``z_norm_history`` are filled only
    when tracking is requested; residuals are in the solved system's variables.
    """

    solver: str
    iterations: int
    status: Status
    x: np.ndarray
    y: np.ndarray
    rho_history: np.ndarray
    quasi_history: np.ndarray
    rhs_norm: float
    true_residual_history: Optional[np.ndarray] = None
    z_norm_history: Optional[np.ndarray] = None

    @property
    def converged(self) -> bool:
        return self.status is Status.CONVERGED

    def write_history_csv(self, target) -> None:
        """CSV ``k,rho_bound,quasi_residual[,true_residual]``."""
        from .harness import write_convergence_csv

        write_convergence_csv(self, target)


def _breakdown_status(side: str | None) -> Status:
    return {"d": Status.BREAKDOWN_D, "l": Status.BREAKDOWN_L}.get(side, Status.BREAKDOWN)


def block_qmr(sys: BlockSystem, process, name: str, bound_factor: Callable[[int], float],
              tol: float, maxit: int, track_true_residual: bool, abs_tol: bool) -> SolveReport:
    """Driver shared by GP-CMRH and GPMR; ``process`` supplies the basis."""
    if maxit < 1:
        raise ValueError("maxit must be >= 1")
    g_norm = float(np.linalg.norm(sys.rhs))
    threshold = tol if abs_tol else tol * g_norm
    qr = QrState(tau_tilde=(process.beta, process.gamma))
    left, right = process.left, process.right
    rhos, quasis, trues, znorms = [], [], [], []
    status = Status.MAXIT

    closed = None

    def iterate():
        z = qr.solve()
        kk = 2 * (len(z) // 2)
        zd, zl = z[0:kk:2], z[1:kk:2]
        if closed == "l":
            zd = z[0::2]
        elif closed == "d":
            zl = np.append(zl, z[-1])
        return z, left.combine(zd), right.combine(zl)

    for k in range(1, maxit + 1):
        process.step()
        col_a, col_b = assemble_s_column(process, k, sys.lam, sys.mu)
        qr.update(col_a, col_b)
        quasi = qr.quasi_residual
        rho = bound_factor(k) * quasi
        rhos.append(rho)
        quasis.append(quasi)
        if track_true_residual:
            z, x, y = iterate()
            trues.append(true_residual(sys, x, y))
            znorms.append(float(np.linalg.norm(z)))
        if rho <= threshold:
            status = Status.CONVERGED
            break
        if process.breakdown is not None:
            status = _breakdown_status(process.breakdown)
            coef = process.closing_column()
            if coef is not None:
                closed = process.breakdown
                qr.close(coef, closed, sys.lam, sys.mu)
                rhos.append(0.0)
                quasis.append(0.0)
                if track_true_residual:
                    z, x, y = iterate()
                    trues.append(true_residual(sys, x, y))
                    znorms.append(float(np.linalg.norm(z)))
                status = Status.CONVERGED
            break

    _, x, y = iterate()
    x, y = sys.recover(x, y)
    return SolveReport(
        solver=name,
        iterations=len(rhos),
        status=status,
        x=np.asarray(x),
        y=np.asarray(y),
        rho_history=np.array(rhos),
        quasi_history=np.array(quasis),
        rhs_norm=g_norm,
        true_residual_history=np.array(trues) if track_true_residual else None,
        z_norm_history=np.array(znorms) if track_true_residual else None,
    )


def gpcmrh_solve(sys: BlockSystem, tol: float = 1e-10, maxit: int = 600,
                 track_true_residual: bool = False, abs_tol: bool = False) -> SolveReport:
    """Solve a block two-by-two system with GP-CMRH.

    Stops when the residual bound drops below ``tol * ||[b; c]||`` (or below
    ``tol`` with ``abs_tol``), after ``maxit`` steps, or when the basis
    process terminates; in the last case the current least-squares iterate is
    returned.
    """
    process = SimultaneousHessenberg(sys.A, sys.B, sys.b, sys.c, pivoted=True,
                                     capacity=min(maxit, max(sys.m, sys.n)) + 1)
    m, n = sys.m, sys.n
    factor = lambda k: residual_bound(1.0, 0.0, m, n, k)  # noqa: E731
    return block_qmr(sys, process, "gpcmrh", factor, tol, maxit, track_true_residual, abs_tol)
