"""Basis generation for block two-by-two Krylov solvers.

Two processes reduce a pair ``A`` (m x n), ``B`` (n x m) to upper Hessenberg
form at the same time:

* :class:`OrthogonalHessenberg` builds orthonormal ``V``, ``U`` with modified
  Gram-Schmidt so that ``A U_k = V_{k+1} Ht`` and ``B V_k = U_{k+1} Ft``.
* :class:`SimultaneousHessenberg` builds unit lower trapezoidal ``D``, ``L``
  (optionally under row permutations chosen by partial pivoting) without any
  inner products, so that ``A L_k = D_{k+1} H`` and ``B D_k = L_{k+1} F``.

Both expose the same attributes used by the solvers: ``step()``, ``k``,
``breakdown``, ``beta``, ``gamma``, the two column stores and the two
Hessenberg column tables.
"""

from __future__ import annotations

import numpy as np
from scipy.linalg import solve_triangular

from .linalg import ContractError, DenseColumnStore, Permutation
from .operators import as_operator

__all__ = [
    "BREAKDOWN_SCALE",
    "Breakdown",
    "OrthogonalHessenberg",
    "SimultaneousHessenberg",
    "hessenberg_matrix",
    "basis_condition",
    "orth_hess_init",
    "orth_hess_step",
    "sim_hess_init",
    "sim_hess_step",
    "sim_hess_pivoted_step",
]

BREAKDOWN_SCALE = 2.0 ** -44


class Breakdown(RuntimeError):
    """Raised when stepping a process that has already terminated."""


def _check_inputs(A, B, b, c):
    A, B = as_operator(A), as_operator(B)
    b = np.asarray(b, dtype=np.float64).ravel()
    c = np.asarray(c, dtype=np.float64).ravel()
    m, n = len(b), len(c)
    if A.shape != (m, n) or B.shape != (n, m):
        raise ContractError(f"A {A.shape}, B {B.shape} incompatible with len(b)={m}, len(c)={n}")
    if not np.any(b) or not np.any(c):
        raise ValueError("b and c must be nonzero")
    return A, B, b, c


def hessenberg_matrix(columns, k: int | None = None) -> np.ndarray:
    """Dense ``(k+1) x k`` upper Hessenberg matrix from stored columns."""
    k = len(columns) if k is None else k
    Hm = np.zeros((k + 1, k))
    for j in range(k):
        Hm[: j + 2, j] = columns[j]
    return Hm


class _Process:
    """Shared bookkeeping; subclasses fill ``_advance``."""

    m: int
    n: int

    def __init__(self, A, B, b, c):
        self.A, self.B, b, c = _check_inputs(A, B, b, c)
        self.m, self.n = len(b), len(c)
        self.k = 0
        # None, "d", "l" or "both": which side produced a vanishing pivot
        self.breakdown: str | None = None
        self.hcols: list[np.ndarray] = []
        self.fcols: list[np.ndarray] = []
        self._b, self._c = b, c

    def step(self):
        """Advance one step; return the new columns ``(h[:, k], f[:, k])``.

        Both columns have length ``k + 1``. After a vanishing pivot the
        corresponding subdiagonal entry is stored as exactly zero, no new
        basis vector is appended on that side, and ``breakdown`` is set.
        """
        if self.breakdown is not None:
            raise Breakdown(f"process terminated at k={self.k} ({self.breakdown} side)")
        hcol, fcol = self._advance()
        self.hcols.append(hcol)
        self.fcols.append(fcol)
        self.k += 1
        return hcol, fcol

    def _advance(self):  # pragma: no cover - abstract
        raise NotImplementedError

    def _reduce(self, vec, store, perm):  # pragma: no cover - abstract
        raise NotImplementedError

    def closing_column(self):
        """Coefficients closing the basis after a one-sided termination.

        If the ``l`` side stopped at step k while ``d_{k+1}`` exists, expand
        ``B d_{k+1}`` in ``l_1..l_k`` (symmetrically ``A l_{k+1}`` in
        ``d_1..d_k`` when the ``d`` side stopped). Returns the k coefficients
        when the remainder vanishes, i.e. the enlarged space is invariant,
        and None otherwise or when no closing applies.
        """
        k = self.k
        if self.breakdown == "l" and len(self.left) == k + 1:
            vec = self.B.matvec(self.left[k]).astype(np.float64, copy=True)
            store, perm = self.right, getattr(self, "q", None)
        elif self.breakdown == "d" and len(self.right) == k + 1:
            vec = self.A.matvec(self.right[k]).astype(np.float64, copy=True)
            store, perm = self.left, getattr(self, "p", None)
        else:
            return None
        scale = np.max(np.abs(vec), initial=0.0)
        coef = self._reduce(vec, store, perm)
        if np.max(np.abs(vec), initial=0.0) > BREAKDOWN_SCALE * max(scale, 1.0):
            return None
        return coef

    def _mark(self, d_dead: bool, l_dead: bool) -> None:
        if d_dead and l_dead:
            self.breakdown = "both"
        elif d_dead:
            self.breakdown = "d"
        elif l_dead:
            self.breakdown = "l"

    def H(self, k: int | None = None) -> np.ndarray:
        return hessenberg_matrix(self.hcols, k)

    def F(self, k: int | None = None) -> np.ndarray:
        return hessenberg_matrix(self.fcols, k)


class OrthogonalHessenberg(_Process):
    """Orthonormal bases ``V`` (m) and ``U`` (n) by modified Gram-Schmidt.

    ``beta = ||b||`` and ``gamma = ||c||``; ``V`` and ``U`` hold ``v_1..`` and
    ``u_1..``. The breakdown threshold on a new vector norm is
    ``BREAKDOWN_SCALE * max(||A u_k||, 1)``.
    """

    def __init__(self, A, B, b, c, capacity: int = 16):
        super().__init__(A, B, b, c)
        self.beta = float(np.linalg.norm(self._b))
        self.gamma = float(np.linalg.norm(self._c))
        self.V = DenseColumnStore(self.m, capacity)
        self.U = DenseColumnStore(self.n, capacity)
        self.V.append(self._b / self.beta)
        self.U.append(self._c / self.gamma)

    # common names used by the solvers
    @property
    def left(self) -> DenseColumnStore:
        return self.V

    @property
    def right(self) -> DenseColumnStore:
        return self.U

    def _reduce(self, vec, store, perm):
        coef = np.zeros(self.k)
        for i in range(self.k):
            coef[i] = store[i] @ vec
            vec -= coef[i] * store[i]
        return coef

    def _advance(self):
        k = self.k + 1
        v = self.A.matvec(self.U[k - 1]).astype(np.float64, copy=True)
        u = self.B.matvec(self.V[k - 1]).astype(np.float64, copy=True)
        v_scale, u_scale = np.linalg.norm(v), np.linalg.norm(u)
        hcol = np.zeros(k + 1)
        fcol = np.zeros(k + 1)
        for i in range(k):
            vi, ui = self.V[i], self.U[i]
            hcol[i] = vi @ v
            v -= hcol[i] * vi
            fcol[i] = ui @ u
            u -= fcol[i] * ui
        hn, fn = np.linalg.norm(v), np.linalg.norm(u)
        d_dead = k >= self.m or hn <= BREAKDOWN_SCALE * max(v_scale, 1.0)
        l_dead = k >= self.n or fn <= BREAKDOWN_SCALE * max(u_scale, 1.0)
        if not d_dead:
            hcol[k] = hn
            self.V.append(v / hn)
        if not l_dead:
            fcol[k] = fn
            self.U.append(u / fn)
        self._mark(d_dead, l_dead)
        return hcol, fcol


class SimultaneousHessenberg(_Process):
    """Inner-product-free simultaneous Hessenberg process.

    Parameters
    ----------
    A, B : operators of shape (m, n) and (n, m)
    b, c : nonzero starting vectors
    pivoted : bool
        Partial pivoting on the eliminated vectors (default). Without it the
        first ``k`` entries of ``d_k`` and ``l_k`` act as the pivots and the
        process fails on a zero leading entry.
    elimination : {"sequential", "projector"}
        ``"sequential"`` reads each coefficient after the previous
        eliminations and zeroes it in place (production form).
        ``"projector"`` solves for all coefficients at once through the
        leading triangular block and subtracts ``D_k h_k`` in one product;
        it is kept only for conditioning comparisons.

    breakdown_scale : float
        A pivot is treated as zero when ``|pivot| <= breakdown_scale *
        max(||A l_k||_inf, 1)`` (likewise for ``B d_k``). ``0`` keeps only
        exact zeros, which diagnostics on numerically rank-deficient Krylov
        spaces need in order to run past the point where a solver would stop.

    Notes
    -----
    ``beta`` and ``gamma`` are the signed pivot entries of ``b`` and ``c``,
    not their norms.
    """

    def __init__(self, A, B, b, c, pivoted: bool = True,
                 elimination: str = "sequential", capacity: int = 16,
                 breakdown_scale: float = BREAKDOWN_SCALE):
        super().__init__(A, B, b, c)
        self.breakdown_scale = breakdown_scale
        if elimination not in ("sequential", "projector"):
            raise ValueError(f"unknown elimination {elimination!r}")
        self.pivoted = pivoted
        self.elimination = elimination
        self.p = Permutation(self.m)
        self.q = Permutation(self.n)
        self.D = DenseColumnStore(self.m, capacity)
        self.L = DenseColumnStore(self.n, capacity)
        b, c = self._b, self._c
        i0 = int(np.argmax(np.abs(b))) if pivoted else 0
        j0 = int(np.argmax(np.abs(c))) if pivoted else 0
        self.beta = float(b[i0])
        self.gamma = float(c[j0])
        if self.beta == 0.0 or self.gamma == 0.0:
            raise ZeroDivisionError("leading entry of b or c is zero; use pivoting")
        self.D.append(b / self.beta)
        self.L.append(c / self.gamma)
        self.p.swap(0, i0)
        self.q.swap(0, j0)

    @property
    def left(self) -> DenseColumnStore:
        return self.D

    @property
    def right(self) -> DenseColumnStore:
        return self.L

    def _eliminate(self, vec, store, perm, k):
        coef = np.zeros(k + 1)
        if self.elimination == "sequential":
            for i in range(k):
                coef[i] = vec[perm[i]]
                vec -= coef[i] * store[i]
        else:
            Dk = store.matrix(k)
            idx = perm.map[:k]
            coef[:k] = solve_triangular(Dk[idx], vec[idx], lower=True, unit_diagonal=True)
            vec -= Dk @ coef[:k]
        return coef

    def _reduce(self, vec, store, perm):
        return self._eliminate(vec, store, perm, self.k)[: self.k]

    def _pivot(self, vec, perm, k):
        """Position in ``perm`` of the next pivot, or None if none remains."""
        size = len(perm)
        if k >= size:
            return None
        if not self.pivoted:
            return k
        return k + int(np.argmax(np.abs(vec[perm.map[k:]])))

    def _advance(self):
        k = self.k + 1
        d = self.A.matvec(self.L[k - 1]).astype(np.float64, copy=True)
        ell = self.B.matvec(self.D[k - 1]).astype(np.float64, copy=True)
        d_tol = self.breakdown_scale * max(np.max(np.abs(d), initial=0.0), 1.0)
        l_tol = self.breakdown_scale * max(np.max(np.abs(ell), initial=0.0), 1.0)
        hcol = self._eliminate(d, self.D, self.p, k)
        fcol = self._eliminate(ell, self.L, self.q, k)

        i0 = self._pivot(d, self.p, k)
        j0 = self._pivot(ell, self.q, k)
        h = d[self.p[i0]] if i0 is not None else 0.0
        f = ell[self.q[j0]] if j0 is not None else 0.0
        d_dead = abs(h) <= d_tol
        l_dead = abs(f) <= l_tol
        if not d_dead:
            hcol[k] = h
            self.D.append(d / h)
            self.p.swap(k, i0)
        if not l_dead:
            fcol[k] = f
            self.L.append(ell / f)
            self.q.swap(k, j0)
        self._mark(d_dead, l_dead)
        return hcol, fcol


def orth_hess_init(A, B, b, c) -> OrthogonalHessenberg:
    return OrthogonalHessenberg(A, B, b, c)


def orth_hess_step(state: OrthogonalHessenberg) -> OrthogonalHessenberg:
    state.step()
    return state


def sim_hess_init(A, B, b, c, pivoted: bool = True) -> SimultaneousHessenberg:
    return SimultaneousHessenberg(A, B, b, c, pivoted=pivoted)


def sim_hess_step(state: SimultaneousHessenberg) -> SimultaneousHessenberg:
    """One step of the unpivoted process (state must be unpivoted)."""
    if state.pivoted:
        raise ContractError("state is pivoted; use sim_hess_pivoted_step")
    state.step()
    return state


def sim_hess_pivoted_step(state: SimultaneousHessenberg) -> SimultaneousHessenberg:
    if not state.pivoted:
        raise ContractError("state is unpivoted; use sim_hess_step")
    state.step()
    return state


def basis_condition(store, k: int | None = None) -> float:
    """2-norm condition number of the first ``k`` columns (dense SVD).

    Returns ``inf`` when the columns are rank deficient to working precision.
    """
    M = store.matrix(k) if isinstance(store, DenseColumnStore) else np.asarray(store)[:, :k]
    if M.shape[1] == 0:
        raise ContractError("no columns")
    s = np.linalg.svd(M, compute_uv=False)
    if s[-1] <= s[0] * np.finfo(float).eps * max(M.shape) or s[-1] == 0.0:
        return float("inf")
    return float(s[0] / s[-1])
