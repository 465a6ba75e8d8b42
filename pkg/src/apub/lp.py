"""Linear programs in equality standard form and the simplex driver.

``solve_lp`` runs the dense two-phase revised simplex from the kernel
backend. Free variables are split into a difference of two nonnegative
columns before the solve. Large sparse problems (the extensive form with
thousands of bootstrap rows) can be routed to scipy's HiGHS instead via
``method="highs"``.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from apub import _kernels
from apub.errors import NumericalBreakdown

PIVOT_TOL = 1e-9
FEAS_TOL = 1e-7
OPT_TOL = 1e-7
# tighter pricing in phase I so infeasibility certificates are clean to 1e-9
PHASE1_OPT_TOL = 1e-10

# dense simplex refuses problems above this many matrix entries
DENSE_LIMIT = 4_000_000


class LpStatus(str, enum.Enum):
    OPTIMAL = "Optimal"
    INFEASIBLE = "Infeasible"
    UNBOUNDED = "Unbounded"


@dataclass
class LpProblem:
    """min objective'x  s.t.  eq_matrix @ x = eq_rhs,  x >= var_lower.

    ``var_lower`` entries are 0 (constrained) or -inf (free); ``None`` means
    all variables are constrained. ``eq_matrix`` may be a scipy sparse matrix.
    """

    objective: np.ndarray
    eq_matrix: np.ndarray | sp.spmatrix
    eq_rhs: np.ndarray
    var_lower: np.ndarray | None = None

    def __post_init__(self):
        self.objective = np.asarray(self.objective, dtype=np.float64).ravel()
        if sp.issparse(self.eq_matrix):
            self.eq_matrix = sp.csr_matrix(self.eq_matrix, dtype=np.float64)
            data = self.eq_matrix.data
        else:
            self.eq_matrix = np.atleast_2d(np.asarray(self.eq_matrix, dtype=np.float64))
            data = self.eq_matrix
        self.eq_rhs = np.asarray(self.eq_rhs, dtype=np.float64).ravel()
        n = self.objective.size
        if self.var_lower is None:
            self.var_lower = np.zeros(n)
        else:
            self.var_lower = np.asarray(self.var_lower, dtype=np.float64).ravel()
        m_rows, n_cols = self.eq_matrix.shape
        if self.eq_matrix.size == 0 and self.eq_rhs.size == 0:
            m_rows, n_cols = 0, n
        if m_rows != self.eq_rhs.size:
            raise ValueError(f"eq_matrix has {m_rows} rows but eq_rhs has {self.eq_rhs.size} entries")
        if n_cols != n:
            raise ValueError(f"eq_matrix has {n_cols} columns but objective has {n} entries")
        if self.var_lower.size != n:
            raise ValueError("var_lower length must match the number of variables")
        if not (np.isfinite(self.objective).all() and np.isfinite(data).all()
                and np.isfinite(self.eq_rhs).all()):
            raise ValueError("LP coefficients must be finite")
        if not np.all((self.var_lower == 0.0) | (self.var_lower == -np.inf)):
            raise ValueError("var_lower entries must be 0 or -inf")

    @property
    def n_vars(self) -> int:
        return self.objective.size

    @property
    def n_rows(self) -> int:
        return self.eq_rhs.size

    @property
    def free(self) -> np.ndarray:
        return self.var_lower == -np.inf


@dataclass
class LpSolution:
    status: LpStatus
    primal: np.ndarray
    objective_value: float
    duals: np.ndarray | None = None
    certificate: np.ndarray | None = None
    iterations: int = 0
    meta: dict = field(default_factory=dict, repr=False)

    @property
    def optimal(self) -> bool:
        return self.status is LpStatus.OPTIMAL


def _raise_on_breakdown(code, iterations):
    if code == _kernels.BREAKDOWN:
        raise NumericalBreakdown("singular basis during reinversion (pivot below 1e-11)")
    if code == _kernels.ITERATION_LIMIT:
        raise NumericalBreakdown(f"simplex iteration limit reached after {iterations} pivots")


def iteration_limits(m: int, n: int) -> tuple[int, int]:
    """(Bland switch point, hard pivot cap) for an m x n standard-form LP."""
    return 3 * (m + n), 50 * (m + n) + 1000


def solve_standard(A: np.ndarray, b: np.ndarray, c: np.ndarray):
    """Kernel call for min c'x, Ax = b, x >= 0; returns the raw kernel tuple."""
    A = np.ascontiguousarray(A, dtype=np.float64)
    m, n = A.shape
    bland_after, cap = iteration_limits(m, n)
    return _kernels.simplex(A, np.ascontiguousarray(b, dtype=np.float64),
                            np.ascontiguousarray(c, dtype=np.float64),
                            PIVOT_TOL, FEAS_TOL, OPT_TOL, PHASE1_OPT_TOL, bland_after, cap)


def solve_standard_batch(A: np.ndarray, b: np.ndarray, c: np.ndarray):
    """Solve S same-shape standard-form LPs: ``A`` is (S, m, n)."""
    A = np.ascontiguousarray(A, dtype=np.float64)
    _, m, n = A.shape
    bland_after, cap = iteration_limits(m, n)
    return _kernels.simplex_batch(A, np.ascontiguousarray(b, dtype=np.float64),
                                  np.ascontiguousarray(c, dtype=np.float64),
                                  PIVOT_TOL, FEAS_TOL, OPT_TOL, PHASE1_OPT_TOL, bland_after, cap)


def solve_lp(problem: LpProblem, method: str = "simplex") -> LpSolution:
    """Solve ``problem``; duals are returned for every equality row.

    Raises NumericalBreakdown when the basis becomes singular or the pivot
    cap is exhausted even after the switch to Bland's rule.
    """
    if method == "highs":
        return _solve_highs(problem)
    if method != "simplex":
        raise ValueError(f"unknown LP method {method!r}")
    if problem.n_rows == 0:
        return _solve_unconstrained(problem)
    A = problem.eq_matrix
    if sp.issparse(A):
        if A.shape[0] * A.shape[1] > DENSE_LIMIT:
            raise ValueError("problem too large for the dense simplex; use method='highs'")
        A = A.toarray()
    free = problem.free
    if free.any():
        A_std = np.hstack([A, -A[:, free]])
        c_std = np.concatenate([problem.objective, -problem.objective[free]])
    else:
        A_std, c_std = A, problem.objective
    n = problem.n_vars
    code, x_std, y, value, iters = solve_standard(A_std, problem.eq_rhs, c_std)
    _raise_on_breakdown(code, iters)
    x = x_std[:n].copy()
    if free.any():
        x[free] -= x_std[n:]
    if code == _kernels.INFEASIBLE:
        return LpSolution(LpStatus.INFEASIBLE, np.full(n, np.nan), np.nan,
                          certificate=y, iterations=iters, meta={"phase1_value": value})
    if code == _kernels.UNBOUNDED:
        return LpSolution(LpStatus.UNBOUNDED, np.full(n, np.nan), -np.inf, iterations=iters)
    return LpSolution(LpStatus.OPTIMAL, x, float(problem.objective @ x), duals=y, iterations=iters)


def _solve_unconstrained(problem: LpProblem) -> LpSolution:
    n = problem.n_vars
    c = problem.objective
    if (c[problem.free] != 0).any() or (c[~problem.free] < 0).any():
        return LpSolution(LpStatus.UNBOUNDED, np.full(n, np.nan), -np.inf)
    return LpSolution(LpStatus.OPTIMAL, np.zeros(n), 0.0, duals=np.zeros(0))


def _solve_highs(problem: LpProblem) -> LpSolution:
    from scipy.optimize import linprog

    bounds = [(None, None) if f else (0, None) for f in problem.free]
    res = linprog(problem.objective, A_eq=problem.eq_matrix, b_eq=problem.eq_rhs,
                  bounds=bounds, method="highs")
    n = problem.n_vars
    if res.status == 2:
        return LpSolution(LpStatus.INFEASIBLE, np.full(n, np.nan), np.nan)
    if res.status == 3:
        return LpSolution(LpStatus.UNBOUNDED, np.full(n, np.nan), -np.inf)
    if res.status != 0:
        raise NumericalBreakdown(f"HiGHS failed: {res.message}")
    return LpSolution(LpStatus.OPTIMAL, res.x, float(res.fun),
                      duals=np.asarray(res.eqlin.marginals), iterations=int(res.nit))


def solve_phase1_feasibility(recourse_matrix, rhs) -> tuple[float, np.ndarray]:
    """Feasibility LP  min 1'v+ + 1'v-  s.t.  W y + v+ - v- = rhs,  y, v+, v- >= 0.

    Returns the optimal value (zero iff ``W y = rhs, y >= 0`` is feasible)
    and its simplex multipliers, which satisfy ``multipliers @ rhs == value``.
    """
    W = np.atleast_2d(np.asarray(recourse_matrix, dtype=np.float64))
    rhs = np.asarray(rhs, dtype=np.float64).ravel()
    m, k = W.shape
    eye = np.eye(m)
    A = np.hstack([W, eye, -eye])
    c = np.concatenate([np.zeros(k), np.ones(2 * m)])
    code, _, y, value, iters = solve_standard(A, rhs, c)
    _raise_on_breakdown(code, iters)
    if code != _kernels.OPTIMAL:
        raise NumericalBreakdown("phase-I feasibility LP did not reach optimality")
    return float(value), y
