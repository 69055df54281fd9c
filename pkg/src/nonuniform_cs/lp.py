"""Dense revised primal simplex for standard-form linear programs.

    minimise c @ x   subject to   A x = b,  x >= 0

The basis is held as an LU factorisation plus a product-form eta file, and is
refactorised every ``REFACTOR_EVERY`` pivots. Pricing is Dantzig's rule with
the smallest index on ties; after a long run of degenerate pivots the solver
switches to Bland's rule (smallest improving index, smallest leaving index),
which cannot cycle.

Sparse-recovery LPs are highly primal degenerate, so by default the right-hand
side is perturbed so that the starting basic solution is strictly positive.
After the perturbed problem is solved the true right-hand side is restored
and any basic variable that went negative is repaired by dual simplex pivots,
which keep the reduced costs nonnegative.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field

import numpy as np
from scipy import linalg

from .errors import DomainError

REFACTOR_EVERY = 40
BLAND_AFTER = 200
PERTURB = 1e-7
PIVOT_TOL = 1e-9
OPT_TOL = 1e-9
RANK_TOL = 1e-10


class LpStatus(enum.Enum):
    OPTIMAL = "optimal"
    INFEASIBLE = "infeasible"
    UNBOUNDED = "unbounded"
    ITER_LIMIT = "iter_limit"


@dataclass
class LpProblem:
    c: np.ndarray
    A: np.ndarray
    b: np.ndarray

    def __post_init__(self):
        self.c = np.asarray(self.c, dtype=float)
        self.A = np.atleast_2d(np.asarray(self.A, dtype=float))
        self.b = np.asarray(self.b, dtype=float)
        m, n = self.A.shape
        if self.c.shape != (n,) or self.b.shape != (m,):
            raise DomainError(f"shape mismatch: A {self.A.shape}, b {self.b.shape}, c {self.c.shape}")


@dataclass
class LpSolution:
    x: np.ndarray
    objective: float
    status: LpStatus
    basis: np.ndarray = None
    duals: np.ndarray = None
    reduced_costs: np.ndarray = None
    iterations: int = 0
    kept_rows: np.ndarray = field(default=None, repr=False)

    @property
    def optimal(self):
        return self.status is LpStatus.OPTIMAL


class _Basis:
    """LU of the starting basis matrix plus eta columns for later pivots."""

    def __init__(self, A, cols):
        self.A = A
        self.refactor(cols)

    def refactor(self, cols):
        self.cols = np.array(cols, dtype=int)
        self.lu = linalg.lu_factor(self.A[:, self.cols], check_finite=False)
        self.etas = []

    def ftran(self, a):
        x = linalg.lu_solve(self.lu, a, check_finite=False)
        for r, u in self.etas:
            xr = x[r] / u[r]
            x -= xr * u
            x[r] = xr
        return x

    def btran(self, c):
        z = np.array(c, dtype=float)
        for r, u in reversed(self.etas):
            z[r] = (z[r] - (u @ z - u[r] * z[r])) / u[r]
        return linalg.lu_solve(self.lu, z, trans=1, check_finite=False)

    def pivot(self, r, q, u):
        self.cols[r] = q
        self.etas.append((r, u))


def independent_rows(A, b, tol=RANK_TOL):
    """Indices of a maximal independent row subset, via pivoted QR of A^T.

    Raises ValueError-derived ``RankDeficient`` only through the caller;
    returns ``(rows, consistent)`` where ``consistent`` says whether the
    dropped equations are implied by the kept ones.
    """
    m = A.shape[0]
    if m == 0:
        return np.arange(0), True
    _, R, P = linalg.qr(A.T, mode="economic", pivoting=True, check_finite=False)
    scale = max(np.linalg.norm(A), 1.0)
    diag = np.abs(np.diag(R))
    rank = int(np.count_nonzero(diag > tol * scale))
    rows = np.sort(P[:rank])
    if rank == m:
        return rows, True
    drop = np.setdiff1d(np.arange(m), rows)
    coef, *_ = np.linalg.lstsq(A[rows].T, A[drop].T, rcond=None)
    resid = b[drop] - coef.T @ b[rows]
    return rows, bool(np.linalg.norm(resid) <= 1e-9 * (1.0 + np.linalg.norm(b)))


def _iterate(c, A, b, basis, max_iter, tol, allowed=None):
    """Primal simplex from a feasible basis. Returns (status, iterations)."""
    xB = basis.ftran(b)
    it = 0
    degenerate = 0
    rechecked = False
    while True:
        if len(basis.etas) >= REFACTOR_EVERY:
            basis.refactor(basis.cols)
            xB = basis.ftran(b)
        pi = basis.btran(c[basis.cols])
        d = c - A.T @ pi
        d[basis.cols] = 0.0
        if allowed is not None:
            d[~allowed] = 0.0
        improving = d < -tol
        if not improving.any():
            if basis.etas and not rechecked:
                # confirm on a fresh factorisation before declaring optimality
                basis.refactor(basis.cols)
                xB = basis.ftran(b)
                rechecked = True
                continue
            return LpStatus.OPTIMAL, it, xB
        rechecked = False
        if it >= max_iter:
            return LpStatus.ITER_LIMIT, it, xB
        bland = degenerate >= BLAND_AFTER
        q = int(np.flatnonzero(improving)[0]) if bland else int(np.argmin(d))
        u = basis.ftran(A[:, q])
        pos = u > PIVOT_TOL
        if not pos.any():
            return LpStatus.UNBOUNDED, it, xB
        ratios = np.full(u.shape, np.inf)
        ratios[pos] = np.maximum(xB[pos], 0.0) / u[pos]
        theta = ratios.min()
        ties = np.flatnonzero(ratios <= theta + 1e-12 * (1.0 + theta))
        if bland:
            r = int(ties[np.argmin(basis.cols[ties])])
        else:
            r = int(ties[np.argmax(u[ties])])
        xB = xB - theta * u
        xB[r] = theta
        basis.pivot(r, q, u)
        degenerate = degenerate + 1 if theta <= 1e-12 else 0
        it += 1


def _dual_cleanup(c, A, b, basis, max_iter, tol):
    """Dual simplex from a dual-feasible basis until x_B >= 0."""
    feas = tol * (1.0 + np.linalg.norm(b))
    it = 0
    while True:
        if len(basis.etas) >= REFACTOR_EVERY:
            basis.refactor(basis.cols)
        xB = basis.ftran(b)
        r = int(np.argmin(xB))
        if xB[r] >= -feas:
            return LpStatus.OPTIMAL, it
        if it >= max_iter:
            return LpStatus.ITER_LIMIT, it
        e = np.zeros(b.size)
        e[r] = 1.0
        alpha = basis.btran(e) @ A
        pi = basis.btran(c[basis.cols])
        d = np.maximum(c - A.T @ pi, 0.0)
        cand = alpha < -PIVOT_TOL
        cand[basis.cols] = False
        if not cand.any():
            return LpStatus.INFEASIBLE, it
        idx = np.flatnonzero(cand)
        q = int(idx[np.argmin(d[idx] / -alpha[idx])])
        basis.pivot(r, q, basis.ftran(A[:, q]))
        it += 1


def _finish(c, A, b, basis, status, it, rows):
    basis.refactor(basis.cols)
    xB = basis.ftran(b)
    x = np.zeros(A.shape[1])
    x[basis.cols] = np.maximum(xB, 0.0)
    pi = basis.btran(c[basis.cols])
    d = c - A.T @ pi
    return LpSolution(x, float(c @ x), status, basis.cols.copy(), pi, d, it, rows)


def _phase_one(A, b, max_iter, tol):
    m, n = A.shape
    A1 = np.hstack([A, np.eye(m)])
    c1 = np.concatenate([np.zeros(n), np.ones(m)])
    basis = _Basis(A1, np.arange(n, n + m))
    status, it, xB = _iterate(c1, A1, b, basis, max_iter, tol)
    if status is LpStatus.ITER_LIMIT:
        return None, status, it
    infeas = float(np.sum(xB[basis.cols >= n]))
    if infeas > 1e-9 * (1.0 + np.linalg.norm(b)):
        return None, LpStatus.INFEASIBLE, it
    # drive zero-level artificials out of the basis
    for r in np.flatnonzero(basis.cols >= n):
        e = np.zeros(m)
        e[r] = 1.0
        row = basis.btran(e) @ A
        row[basis.cols[basis.cols < n]] = 0.0
        j = int(np.argmax(np.abs(row)))
        if abs(row[j]) <= PIVOT_TOL:
            raise DomainError("dependent equality rows survived presolve")
        basis.pivot(r, j, basis.ftran(A1[:, j]))
    return _Basis(A, basis.cols), LpStatus.OPTIMAL, it


def solve_lp(problem: LpProblem, start_basis=None, max_iter=None, tol=OPT_TOL, perturb=PERTURB, seed=0) -> LpSolution:
    """Solve a standard-form LP.

    ``start_basis`` may give m column indices of a primal-feasible basis; the
    phase-one artificial problem is skipped in that case. Dependent rows are
    removed first (pivoted QR); inconsistent ones give ``INFEASIBLE``.
    ``perturb`` sets the relative size of the anti-degeneracy shift of b (0
    disables it); the shift is drawn from a fixed ``seed`` so runs repeat.
    """
    c, A, b = problem.c, problem.A, problem.b
    m, n = A.shape
    max_iter = max_iter if max_iter is not None else 50 * (m + n) + 1000
    rows, consistent = independent_rows(A, b)
    if not consistent:
        return LpSolution(np.zeros(n), np.nan, LpStatus.INFEASIBLE, kept_rows=rows)
    if rows.size < m:
        A, b = A[rows], b[rows]
        start_basis = None
    if rows.size == 0:
        x = np.zeros(n)
        status = LpStatus.UNBOUNDED if np.any(c < 0) else LpStatus.OPTIMAL
        return LpSolution(x, 0.0, status, np.arange(0), np.zeros(0), c.copy(), 0, rows)
    if start_basis is not None:
        basis = _Basis(A, start_basis)
        it0 = 0
    else:
        flip = b < 0
        A = np.where(flip[:, None], -A, A)
        b = np.abs(b)
        basis, status, it0 = _phase_one(A, b, max_iter, tol)
        if basis is None:
            return LpSolution(np.zeros(n), np.nan, status, iterations=it0, kept_rows=rows)
    b_run = b
    if perturb > 0:
        rng = np.random.default_rng(seed)
        xB0 = basis.ftran(b)
        shift = perturb * (1.0 + np.abs(xB0)) * rng.uniform(0.5, 1.0, xB0.size)
        b_run = b + A[:, basis.cols] @ shift
    status, it, _ = _iterate(c, A, b_run, basis, max_iter, tol)
    if status is LpStatus.OPTIMAL and perturb > 0:
        status, it2 = _dual_cleanup(c, A, b, basis, max_iter, tol)
        it += it2
    sol = _finish(c, A, b, basis, status, it0 + it, rows)
    if start_basis is None and rows.size:
        sol.duals = np.where(flip, -sol.duals, sol.duals)
    return sol
