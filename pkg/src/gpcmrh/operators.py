"""Block two-by-two operators ``[[lam*I, A], [B, mu*I]]`` and right preconditioning.

Off-diagonal blocks are held as :class:`scipy.sparse.linalg.LinearOperator`
so explicit matrices and composed preconditioned blocks go through the same
solver code.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import LinearOperator, aslinearoperator, splu

from .linalg import ContractError, CSRMatrix

__all__ = [
    "SetupError",
    "as_operator",
    "BlockPreconditioner",
    "BlockSystem",
    "apply_block",
    "preconditioned_system",
    "direct_solver",
]


class SetupError(RuntimeError):
    """Preconditioner construction failed (e.g. a singular diagonal block)."""


def as_operator(X) -> LinearOperator:
    if isinstance(X, LinearOperator):
        return X
    if isinstance(X, CSRMatrix):
        return aslinearoperator(X.to_scipy())
    if isinstance(X, np.ndarray) and X.ndim == 2:
        return aslinearoperator(np.asarray(X, dtype=np.float64))
    return aslinearoperator(X)


def _to_sparse(X):
    if isinstance(X, CSRMatrix):
        return X.to_scipy()
    if sp.issparse(X):
        return X
    return sp.csr_array(np.atleast_2d(np.asarray(X, dtype=np.float64)))


def direct_solver(M, name: str = "block") -> Callable[[np.ndarray], np.ndarray]:
    """Sparse LU of a square block, returned as ``v -> M^{-1} v``."""
    Ms = _to_sparse(M)
    if Ms.shape[0] != Ms.shape[1]:
        raise SetupError(f"{name} block is not square: {Ms.shape}")
    try:
        lu = splu(sp.csc_matrix(Ms))
    except RuntimeError as exc:
        raise SetupError(f"{name} block is singular: {exc}") from exc
    # splu only rejects exact zero pivots
    diag = np.abs(lu.U.diagonal())
    if diag.size and (not np.all(np.isfinite(diag)) or diag.min() <= np.finfo(float).eps * diag.max()):
        raise SetupError(f"{name} block is numerically singular")
    return lu.solve


@dataclass(frozen=True)
class BlockPreconditioner:
    """Inverse actions of the diagonal blocks M (m x m) and N (n x n)."""

    M_solver: Callable[[np.ndarray], np.ndarray]
    N_solver: Callable[[np.ndarray], np.ndarray]


@dataclass(frozen=True, eq=False)
class BlockSystem:
    """``[[lam*I, A], [B, mu*I]] [x; y] = [b; c]``.

    When ``preconditioner`` is set the system is the right-preconditioned one
    and :meth:`recover` maps its solution back to the original unknowns.
    """

    A: LinearOperator
    B: LinearOperator
    b: np.ndarray
    c: np.ndarray
    lam: float = 1.0
    mu: float = 1.0
    preconditioner: Optional[BlockPreconditioner] = None

    def __post_init__(self):
        A, B = as_operator(self.A), as_operator(self.B)
        b = np.array(self.b, dtype=np.float64).ravel()
        c = np.array(self.c, dtype=np.float64).ravel()
        m, n = len(b), len(c)
        if A.shape != (m, n) or B.shape != (n, m):
            raise ContractError(f"A {A.shape}, B {B.shape} incompatible with len(b)={m}, len(c)={n}")
        b.setflags(write=False)
        c.setflags(write=False)
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "B", B)
        object.__setattr__(self, "b", b)
        object.__setattr__(self, "c", c)
        object.__setattr__(self, "lam", float(self.lam))
        object.__setattr__(self, "mu", float(self.mu))

    @property
    def m(self) -> int:
        return len(self.b)

    @property
    def n(self) -> int:
        return len(self.c)

    @property
    def rhs(self) -> np.ndarray:
        return np.concatenate([self.b, self.c])

    def apply(self, u) -> np.ndarray:
        return apply_block(self, u)

    def recover(self, x, y):
        """Map an iterate of this system to the original unknowns."""
        if self.preconditioner is None:
            return np.asarray(x), np.asarray(y)
        return self.preconditioner.M_solver(x), self.preconditioner.N_solver(y)

    def to_dense(self) -> np.ndarray:
        """Assemble K densely (tests and small diagnostics only)."""
        A = self.A @ np.eye(self.n)
        B = self.B @ np.eye(self.m)
        return np.block([[self.lam * np.eye(self.m), A], [B, self.mu * np.eye(self.n)]])

    def as_linear_operator(self) -> LinearOperator:
        N = self.m + self.n
        return LinearOperator((N, N), matvec=self.apply, dtype=np.float64)


def apply_block(sys: BlockSystem, u) -> np.ndarray:
    """Return ``[lam*u1 + A u2; B u1 + mu*u2]``."""
    u = np.asarray(u, dtype=np.float64)
    m, n = sys.m, sys.n
    if u.shape != (m + n,):
        raise ContractError(f"vector of shape {u.shape}, system has size {m}+{n}")
    u1, u2 = u[:m], u[m:]
    return np.concatenate([sys.lam * u1 + sys.A.matvec(u2), sys.B.matvec(u1) + sys.mu * u2])


def preconditioned_system(M, N, A, B, b, c) -> BlockSystem:
    """Right-precondition ``[[M, A], [B, N]]`` by ``blkdiag(M, N)``.

    The result has ``lam = mu = 1`` and blocks ``A N^{-1}``, ``B M^{-1}``
    applied by composition; M and N are factorized once here.
    """
    M_solve = direct_solver(M, "M")
    N_solve = direct_solver(N, "N")
    A, B = as_operator(A), as_operator(B)
    m, n = A.shape
    if _to_sparse(M).shape != (m, m) or _to_sparse(N).shape != (n, n):
        raise ContractError("diagonal block sizes do not match A and B")
    Ninv = LinearOperator((n, n), matvec=N_solve, dtype=np.float64)
    Minv = LinearOperator((m, m), matvec=M_solve, dtype=np.float64)
    return BlockSystem(
        A=A @ Ninv,
        B=B @ Minv,
        b=b,
        c=c,
        lam=1.0,
        mu=1.0,
        preconditioner=BlockPreconditioner(M_solve, N_solve),
    )
