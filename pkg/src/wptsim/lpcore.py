"""Dense two-phase primal simplex for the small allocation LPs.

The solver works on a full tableau. Pivots are priced by largest reduced
cost and fall back to Bland's rule after a stretch of degenerate pivots, so it
always terminates and is deterministic for a given input.  Problems here are
tiny (about 50 columns, fewer than 10 rows), so speed comes from running the
tableau loop under numba rather than from a clever algorithm.

Problem form::

    maximize    c @ x
    subject to  A_ub @ x <= b_ub
                A_eq @ x == b_eq
                x_j >= 0  (or free, per ``lower``)
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

import numpy as np
from numba import njit

FEAS_TOL = 1e-9
OPT_TOL = 1e-9
MAX_PIVOTS = 100_000
DEGENERATE_RUN = 25

OPTIMAL = 0
INFEASIBLE = 1
UNBOUNDED = 2
ITERATION_LIMIT = 3


class LpStatus(str, Enum):
    OPTIMAL = "optimal"
    INFEASIBLE = "infeasible"
    UNBOUNDED = "unbounded"
    ITERATION_LIMIT = "iteration_limit"


_STATUS = {
    OPTIMAL: LpStatus.OPTIMAL,
    INFEASIBLE: LpStatus.INFEASIBLE,
    UNBOUNDED: LpStatus.UNBOUNDED,
    ITERATION_LIMIT: LpStatus.ITERATION_LIMIT,
}


@dataclass
class LinearProgram:
    """Container for ``max c@x`` over inequality, equality and sign constraints.

    ``lower`` holds 0.0 (nonnegative variable) or ``-inf`` (free variable) per
    column; it defaults to all zeros.
    """

    objective: np.ndarray
    A_ub: np.ndarray | None = None
    b_ub: np.ndarray | None = None
    A_eq: np.ndarray | None = None
    b_eq: np.ndarray | None = None
    lower: np.ndarray | None = None

    def __post_init__(self):
        self.objective = np.asarray(self.objective, dtype=np.float64).ravel()
        n = self.objective.size
        self.A_ub, self.b_ub = _rows(self.A_ub, self.b_ub, n, "inequality")
        self.A_eq, self.b_eq = _rows(self.A_eq, self.b_eq, n, "equality")
        if self.lower is None:
            self.lower = np.zeros(n)
        else:
            self.lower = np.asarray(self.lower, dtype=np.float64).ravel()
            if self.lower.size != n:
                raise ValueError(f"lower has {self.lower.size} entries, expected {n}")
            bad = ~((self.lower == 0.0) | np.isneginf(self.lower))
            if bad.any():
                raise ValueError("lower bounds must be 0 or -inf")

    @property
    def n_vars(self) -> int:
        return self.objective.size


def _rows(A, b, n, kind):
    if A is None:
        if b is not None and np.size(b):
            raise ValueError(f"{kind} rhs given without a matrix")
        return np.zeros((0, n)), np.zeros(0)
    A = np.atleast_2d(np.asarray(A, dtype=np.float64))
    b = np.asarray(b, dtype=np.float64).ravel()
    if A.shape[1] != n:
        raise ValueError(f"{kind} matrix has {A.shape[1]} columns, expected {n}")
    if A.shape[0] != b.size:
        raise ValueError(f"{kind} matrix has {A.shape[0]} rows but rhs has {b.size}")
    return np.ascontiguousarray(A), b


@dataclass
class LpSolution:
    status: LpStatus
    x: np.ndarray | None
    objective: float | None
    pivots: int = 0

    @property
    def optimal(self) -> bool:
        return self.status is LpStatus.OPTIMAL


@njit(cache=True)
def _pivot(T, row, col):
    ncol = T.shape[1]
    inv = 1.0 / T[row, col]
    for j in range(ncol):
        T[row, j] *= inv
    T[row, col] = 1.0
    for i in range(T.shape[0]):
        if i != row:
            f = T[i, col]
            if f != 0.0:
                for j in range(ncol):
                    T[i, j] -= f * T[row, j]
                T[i, col] = 0.0


@njit(cache=True)
def _run_phase(T, basis, n_enter, pivots):
    """Primal simplex iterations; columns >= n_enter never enter.

    Pricing is Dantzig's (largest reduced cost) until DEGENERATE_RUN
    consecutive degenerate pivots occur, after which Bland's rule is used for
    the rest of the phase; Bland's rule cannot cycle, so the phase terminates.
    """
    m = basis.size
    obj = T.shape[0] - 1
    rhs = T.shape[1] - 1
    bland = False
    degenerate = 0
    while True:
        if pivots >= MAX_PIVOTS:
            return ITERATION_LIMIT, pivots
        enter = -1
        if bland:
            for j in range(n_enter):
                if T[obj, j] > OPT_TOL:
                    enter = j
                    break
        else:
            top = OPT_TOL
            for j in range(n_enter):
                if T[obj, j] > top:
                    top = T[obj, j]
                    enter = j
        if enter < 0:
            return OPTIMAL, pivots
        leave = -1
        best = np.inf
        for i in range(m):
            a = T[i, enter]
            if a > FEAS_TOL:
                r = T[i, rhs] / a
                if r < best - 1e-15:
                    best = r
                    leave = i
                elif r <= best + 1e-15 and basis[i] < basis[leave]:
                    leave = i
        if leave < 0:
            return UNBOUNDED, pivots
        if best <= FEAS_TOL:
            degenerate += 1
            if degenerate >= DEGENERATE_RUN:
                bland = True
        else:
            degenerate = 0
        _pivot(T, leave, enter)
        basis[leave] = enter
        pivots += 1


@njit(cache=True)
def simplex(c, A_ub, b_ub, A_eq, b_eq):
    """Two-phase tableau simplex, all variables nonnegative.

    Returns ``(status, x, objective, pivots)``.
    """
    n = c.size
    m1 = A_ub.shape[0]
    m2 = A_eq.shape[0]
    m = m1 + m2
    n_art = m2
    for i in range(m1):
        if b_ub[i] < 0.0:
            n_art += 1
    n_real = n + m1
    ncol = n_real + n_art
    T = np.zeros((m + 1, ncol + 1))
    basis = np.empty(m, dtype=np.int64)
    a = 0
    for i in range(m1):
        sgn = -1.0 if b_ub[i] < 0.0 else 1.0
        for j in range(n):
            T[i, j] = sgn * A_ub[i, j]
        T[i, n + i] = sgn
        T[i, ncol] = sgn * b_ub[i]
        if sgn < 0.0:
            T[i, n_real + a] = 1.0
            basis[i] = n_real + a
            a += 1
        else:
            basis[i] = n + i
    for i in range(m2):
        r = m1 + i
        sgn = -1.0 if b_eq[i] < 0.0 else 1.0
        for j in range(n):
            T[r, j] = sgn * A_eq[i, j]
        T[r, ncol] = sgn * b_eq[i]
        T[r, n_real + a] = 1.0
        basis[r] = n_real + a
        a += 1

    pivots = 0
    if n_art > 0:
        # phase 1: maximize -(sum of artificials)
        for i in range(m):
            if basis[i] >= n_real:
                for j in range(n_real):
                    T[m, j] += T[i, j]
                T[m, ncol] += T[i, ncol]
        status, pivots = _run_phase(T, basis, n_real, pivots)
        if status == ITERATION_LIMIT:
            return status, np.zeros(n), 0.0, pivots
        if T[m, ncol] > FEAS_TOL:
            return INFEASIBLE, np.zeros(n), 0.0, pivots
        # drive zero-level artificials out of the basis; rows left behind are redundant
        for i in range(m):
            if basis[i] >= n_real:
                for j in range(n_real):
                    if abs(T[i, j]) > FEAS_TOL:
                        _pivot(T, i, j)
                        basis[i] = j
                        pivots += 1
                        break

    # phase 2 reduced costs
    for j in range(ncol + 1):
        T[m, j] = 0.0
    for j in range(n):
        T[m, j] = c[j]
    for i in range(m):
        b = basis[i]
        if b < n:
            cb = c[b]
            if cb != 0.0:
                for j in range(ncol + 1):
                    T[m, j] -= cb * T[i, j]
    status, pivots = _run_phase(T, basis, n_real, pivots)
    x = np.zeros(n)
    for i in range(m):
        if basis[i] < n:
            x[basis[i]] = T[i, ncol]
    obj = 0.0
    for j in range(n):
        obj += c[j] * x[j]
    return status, x, obj, pivots


def solve(lp: LinearProgram) -> LpSolution:
    """Solve ``lp`` to a vertex optimum (or report infeasible/unbounded)."""
    free = np.isneginf(lp.lower)
    if free.any():
        # x_free = x_plus - x_minus, minus parts appended after the originals
        neg = np.flatnonzero(free)
        c = np.concatenate([lp.objective, -lp.objective[neg]])
        A_ub = np.hstack([lp.A_ub, -lp.A_ub[:, neg]])
        A_eq = np.hstack([lp.A_eq, -lp.A_eq[:, neg]])
    else:
        c, A_ub, A_eq = lp.objective, lp.A_ub, lp.A_eq
    status, x, obj, pivots = simplex(
        np.ascontiguousarray(c), np.ascontiguousarray(A_ub), lp.b_ub,
        np.ascontiguousarray(A_eq), lp.b_eq,
    )
    status = _STATUS[int(status)]
    if status is not LpStatus.OPTIMAL:
        return LpSolution(status, None, None, int(pivots))
    if free.any():
        x_full = x
        x = x_full[: lp.n_vars].copy()
        x[neg] -= x_full[lp.n_vars:]
    return LpSolution(status, x, float(obj), int(pivots))
