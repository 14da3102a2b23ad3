"""Full-memory GMRES and CMRH on the assembled block operator K."""

from __future__ import annotations

import math

import numpy as np

from .linalg import DenseColumnStore, Permutation
from .hessenberg import BREAKDOWN_SCALE
from .operators import BlockSystem
from .solver import SolveReport, Status, true_residual

__all__ = ["MonolithicOperator", "gmres_solve", "cmrh_solve"]


class MonolithicOperator:
    """View of a :class:`BlockSystem` as a single operator on R^(m+n)."""

    def __init__(self, sys: BlockSystem):
        self.system = sys
        self.m, self.n = sys.m, sys.n
        self.shape = (sys.m + sys.n, sys.m + sys.n)

    def apply(self, u) -> np.ndarray:
        return self.system.apply(u)

    matvec = apply


def _givens(a, b):
    r = math.hypot(a, b)
    if r == 0.0:
        return 1.0, 0.0, 0.0
    return a / r, b / r, r


class _HessenbergQR:
    """Incremental QR of a (k+1) x k Hessenberg matrix by 2x2 rotations."""

    def __init__(self, rhs0: float, capacity: int):
        self.R = np.zeros((capacity, capacity))
        self.cs: list[tuple[float, float]] = []
        self.tau = [rhs0]

    def update(self, hcol: np.ndarray) -> float:
        k = len(self.cs)
        col = hcol.copy()
        for i, (c, s) in enumerate(self.cs):
            col[i], col[i + 1] = c * col[i] + s * col[i + 1], c * col[i + 1] - s * col[i]
        c, s, r = _givens(col[k], col[k + 1])
        col[k], col[k + 1] = r, 0.0
        self.cs.append((c, s))
        self.R[: k + 1, k] = col[: k + 1]
        t = self.tau[k]
        self.tau[k] = c * t
        self.tau.append(-s * t)
        return abs(self.tau[k + 1])

    def solve(self) -> np.ndarray:
        k = len(self.cs)
        z = np.array(self.tau[:k])
        for j in range(k - 1, -1, -1):
            z[j] /= self.R[j, j]
            z[:j] -= z[j] * self.R[:j, j]
        return z


def _report(name, op, basis, qr, rhos, quasis, trues, status, g_norm):
    z = qr.solve()
    u = basis.combine(z)
    x, y = op.system.recover(u[: op.m], u[op.m:])
    return SolveReport(
        solver=name,
        iterations=len(rhos),
        status=status,
        x=np.asarray(x),
        y=np.asarray(y),
        rho_history=np.array(rhos),
        quasi_history=np.array(quasis),
        rhs_norm=g_norm,
        true_residual_history=None if trues is None else np.array(trues),
    )


def gmres_solve(op: MonolithicOperator, g, tol: float = 1e-10, maxit: int = 600,
                track_true_residual: bool = False, abs_tol: bool = False) -> SolveReport:
    """Unrestarted GMRES with modified Gram-Schmidt Arnoldi."""
    g = np.asarray(g, dtype=np.float64)
    g_norm = float(np.linalg.norm(g))
    if g_norm == 0.0:
        raise ValueError("right-hand side must be nonzero")
    N = op.shape[0]
    maxit = min(maxit, N)
    threshold = tol if abs_tol else tol * g_norm
    V = DenseColumnStore(N, maxit + 1)
    V.append(g / g_norm)
    qr = _HessenbergQR(g_norm, maxit + 1)
    rhos, trues = [], [] if track_true_residual else None
    status = Status.MAXIT
    for k in range(1, maxit + 1):
        w = op.apply(V[k - 1]).astype(np.float64, copy=True)
        w_scale = np.linalg.norm(w)
        hcol = np.zeros(k + 1)
        for i in range(k):
            hcol[i] = V[i] @ w
            w -= hcol[i] * V[i]
        hn = np.linalg.norm(w)
        dead = k >= N or hn <= BREAKDOWN_SCALE * max(w_scale, 1.0)
        hcol[k] = 0.0 if dead else hn
        res = qr.update(hcol)
        rhos.append(res)
        if track_true_residual:
            u = V.combine(qr.solve())
            trues.append(true_residual(op.system, u[: op.m], u[op.m:]))
        if res <= threshold:
            status = Status.CONVERGED
            break
        if dead:
            status = Status.BREAKDOWN
            break
        V.append(w / hn)
    return _report("gmres", op, V, qr, rhos, rhos, trues, status, g_norm)


def cmrh_solve(op: MonolithicOperator, g, tol: float = 1e-10, maxit: int = 600,
               track_true_residual: bool = False, abs_tol: bool = False) -> SolveReport:
    """CMRH: pivoted Hessenberg basis of K's Krylov space, quasi-minimal residual.

    Stops on the residual bound ``sqrt((k+1)(2N-k)/2) * |quasi residual|``,
    the single-basis analogue of the GP-CMRH bound.
    """
    g = np.asarray(g, dtype=np.float64)
    g_norm = float(np.linalg.norm(g))
    if g_norm == 0.0:
        raise ValueError("right-hand side must be nonzero")
    N = op.shape[0]
    maxit = min(maxit, N)
    threshold = tol if abs_tol else tol * g_norm
    p = Permutation(N)
    i0 = int(np.argmax(np.abs(g)))
    beta = float(g[i0])
    Lb = DenseColumnStore(N, maxit + 1)
    Lb.append(g / beta)
    p.swap(0, i0)
    qr = _HessenbergQR(beta, maxit + 1)
    rhos, quasis, trues = [], [], [] if track_true_residual else None
    status = Status.MAXIT
    for k in range(1, maxit + 1):
        u = op.apply(Lb[k - 1]).astype(np.float64, copy=True)
        u_tol = BREAKDOWN_SCALE * max(np.max(np.abs(u)), 1.0)
        hcol = np.zeros(k + 1)
        for i in range(k):
            hcol[i] = u[p[i]]
            u -= hcol[i] * Lb[i]
        if k < N:
            piv = k + int(np.argmax(np.abs(u[p.map[k:]])))
            h = u[p[piv]]
        else:
            piv, h = None, 0.0
        dead = abs(h) <= u_tol
        hcol[k] = 0.0 if dead else h
        quasi = qr.update(hcol)
        rho = math.sqrt((k + 1) * (2 * N - k) / 2.0) * quasi
        rhos.append(rho)
        quasis.append(quasi)
        if track_true_residual:
            w = Lb.combine(qr.solve())
            trues.append(true_residual(op.system, w[: op.m], w[op.m:]))
        if rho <= threshold:
            status = Status.CONVERGED
            break
        if dead:
            status = Status.BREAKDOWN
            break
        Lb.append(u / h)
        p.swap(k, piv)
    return _report("cmrh", op, Lb, qr, rhos, quasis, trues, status, g_norm)
