"""Two-stage linear stochastic programs with random recourse.

First stage:  min c'x + risk[Q(x, xi)]  s.t.  Ax = b, x >= 0
Second stage: Q(x, xi) = min q'y  s.t.  W y = h - T x, y >= 0

Scenarios are stored stacked (one array per component with a leading
scenario axis) so that recourse evaluation can go through the batched
simplex kernel.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from apub import _kernels
from apub.errors import ModelInfeasible, ModelUnbounded, NumericalBreakdown
from apub.lp import LpProblem, LpStatus, solve_lp, solve_standard_batch

INFEASIBLE_PENALTY = 1e6
AUTO_DENSE_LIMIT = 400_000
DUALITY_TOL = 1e-7


@dataclass(frozen=True)
class Scenario:
    q: np.ndarray
    h: np.ndarray
    T: np.ndarray
    W: np.ndarray

    def __post_init__(self):
        q = np.asarray(self.q, dtype=np.float64).ravel()
        h = np.asarray(self.h, dtype=np.float64).ravel()
        T = np.atleast_2d(np.asarray(self.T, dtype=np.float64))
        W = np.atleast_2d(np.asarray(self.W, dtype=np.float64))
        if W.shape != (h.size, q.size):
            raise ValueError(f"W must be {h.size}x{q.size}, got {W.shape}")
        if T.shape[0] != h.size:
            raise ValueError("T must have one row per recourse constraint")
        for name, arr in (("q", q), ("h", h), ("T", T), ("W", W)):
            object.__setattr__(self, name, arr)


class ScenarioBatch:
    """N scenarios with shared dimensions, held as stacked arrays.

    q: (N, n2), h: (N, m2), T: (N, m2, n1), W: (N, m2, n2).
    """

    def __init__(self, q, h, T, W):
        self.q = np.ascontiguousarray(q, dtype=np.float64)
        self.h = np.ascontiguousarray(h, dtype=np.float64)
        self.T = np.ascontiguousarray(T, dtype=np.float64)
        self.W = np.ascontiguousarray(W, dtype=np.float64)
        N, m2, n2 = self.W.shape
        if self.q.shape != (N, n2) or self.h.shape != (N, m2) or self.T.shape[:2] != (N, m2):
            raise ValueError("inconsistent scenario dimensions")
        if N < 1:
            raise ValueError("need at least one scenario")
        for arr in (self.q, self.h, self.T, self.W):
            if not np.isfinite(arr).all():
                raise ValueError("scenario data must be finite")

    @classmethod
    def from_scenarios(cls, scenarios) -> "ScenarioBatch":
        scenarios = list(scenarios)
        if not scenarios:
            raise ValueError("need at least one scenario")
        shapes = {(s.q.size, s.h.size, s.T.shape[1]) for s in scenarios}
        if len(shapes) != 1:
            raise ValueError("all scenarios must share dimensions")
        return cls(np.stack([s.q for s in scenarios]), np.stack([s.h for s in scenarios]),
                   np.stack([s.T for s in scenarios]), np.stack([s.W for s in scenarios]))

    def __len__(self):
        return self.q.shape[0]

    def __getitem__(self, i) -> Scenario:
        return Scenario(self.q[i], self.h[i], self.T[i], self.W[i])

    def __iter__(self):
        return (self[i] for i in range(len(self)))

    def subset(self, idx) -> "ScenarioBatch":
        return ScenarioBatch(self.q[idx], self.h[idx], self.T[idx], self.W[idx])

    @property
    def n_first(self) -> int:
        return self.T.shape[2]

    @property
    def shape(self) -> tuple[int, int]:
        """(rows, columns) of the recourse matrix."""
        return self.W.shape[1], self.W.shape[2]


@dataclass
class TwoStageProblem:
    """First-stage data (c, A, b) and the empirical scenario support (equal weights 1/N)."""

    c: np.ndarray
    A: np.ndarray
    b: np.ndarray
    scenarios: ScenarioBatch
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.c = np.asarray(self.c, dtype=np.float64).ravel()
        self.A = np.asarray(self.A, dtype=np.float64).reshape(-1, self.c.size)
        self.b = np.asarray(self.b, dtype=np.float64).ravel()
        if not isinstance(self.scenarios, ScenarioBatch):
            self.scenarios = ScenarioBatch.from_scenarios(self.scenarios)
        if self.A.shape[0] != self.b.size:
            raise ValueError("A and b disagree on the number of first-stage rows")
        if self.scenarios.n_first != self.c.size:
            raise ValueError("T must have one column per first-stage variable")

    @property
    def n_scenarios(self) -> int:
        return len(self.scenarios)

    @property
    def n_first(self) -> int:
        return self.c.size

    def with_scenarios(self, scenarios: ScenarioBatch) -> "TwoStageProblem":
        return TwoStageProblem(self.c, self.A, self.b, scenarios, dict(self.meta))

    # -- JSON ---------------------------------------------------------------

    def to_json(self) -> dict:
        s = self.scenarios
        return {
            "c": self.c.tolist(),
            "A": self.A.tolist(),
            "b": self.b.tolist(),
            "scenarios": [{"q": s.q[i].tolist(), "h": s.h[i].tolist(),
                           "T": s.T[i].tolist(), "W": s.W[i].tolist()} for i in range(len(s))],
            "meta": self.meta,
        }

    @classmethod
    def from_json(cls, data: dict) -> "TwoStageProblem":
        c = np.asarray(data["c"], dtype=np.float64)
        A = np.asarray(data.get("A", []), dtype=np.float64).reshape(-1, c.size)
        scen = [Scenario(np.asarray(d["q"]), np.asarray(d["h"]),
                         np.asarray(d["T"], dtype=np.float64).reshape(len(d["h"]), c.size),
                         np.asarray(d["W"], dtype=np.float64).reshape(len(d["h"]), len(d["q"])))
                for d in data["scenarios"]]
        return cls(c, A, np.asarray(data.get("b", []), dtype=np.float64), scen,
                   dict(data.get("meta", {})))

    def dump(self, path):
        with open(path, "w") as fh:
            json.dump(self.to_json(), fh)

    @classmethod
    def load(cls, path) -> "TwoStageProblem":
        with open(path) as fh:
            return cls.from_json(json.load(fh))


# ---------------------------------------------------------------------------
# recourse evaluation


@dataclass
class RecourseBatch:
    """Second-stage results for a batch of scenarios at one first-stage x."""

    values: np.ndarray      # Q(x, xi_n); nan where infeasible
    duals: np.ndarray       # psi_n, one row per scenario
    feasible: np.ndarray    # bool mask
    solutions: np.ndarray   # optimal y_n

    @property
    def all_feasible(self) -> bool:
        return bool(self.feasible.all())


def recourse_rhs(scenarios: ScenarioBatch, x) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    return scenarios.h - scenarios.T @ x


def evaluate_recourse_batch(scenarios: ScenarioBatch, x, check_duality: bool = True) -> RecourseBatch:
    """Solve Q(x, xi_n) for every scenario in the batch.

    Raises ModelUnbounded if any recourse problem is unbounded below.
    """
    rhs = recourse_rhs(scenarios, x)
    status, y, duals, obj = solve_standard_batch(scenarios.W, rhs, scenarios.q)
    if (status == _kernels.UNBOUNDED).any():
        n = int(np.flatnonzero(status == _kernels.UNBOUNDED)[0])
        raise ModelUnbounded(f"recourse problem for scenario {n} is unbounded below")
    bad = (status == _kernels.BREAKDOWN) | (status == _kernels.ITERATION_LIMIT)
    if bad.any():
        raise NumericalBreakdown(f"recourse LP failed for scenario {int(np.flatnonzero(bad)[0])}")
    feasible = status == _kernels.OPTIMAL
    values = np.where(feasible, obj, np.nan)
    if check_duality and feasible.any():
        dual_obj = np.einsum("ij,ij->i", duals[feasible], rhs[feasible])
        gap = np.abs(dual_obj - values[feasible])
        if (gap > DUALITY_TOL * (1.0 + np.abs(values[feasible]))).any():
            raise NumericalBreakdown(f"strong duality violated by {gap.max():.3g}")
    return RecourseBatch(values, duals, feasible, y)


def evaluate_recourse(problem: TwoStageProblem, scenario_index: int, x):
    """Q(x, xi_n) and its duals psi_n; value is None when the recourse is infeasible."""
    batch = problem.scenarios.subset(slice(scenario_index, scenario_index + 1))
    res = evaluate_recourse_batch(batch, x)
    if not res.feasible[0]:
        return None, None
    return float(res.values[0]), res.duals[0]


def evaluate_out_of_sample(first_stage, x, test_scenarios, penalty: float | None = INFEASIBLE_PENALTY):
    """c'x plus the average recourse cost over ``test_scenarios``.

    ``first_stage`` is a (c, A, b) tuple or a TwoStageProblem. Infeasible test
    scenarios are charged ``penalty``; with ``penalty=None`` they are left out
    of the average. Returns ``(cost, n_infeasible)``.
    """
    c = first_stage.c if isinstance(first_stage, TwoStageProblem) else np.asarray(first_stage[0])
    if not isinstance(test_scenarios, ScenarioBatch):
        test_scenarios = ScenarioBatch.from_scenarios(test_scenarios)
    res = evaluate_recourse_batch(test_scenarios, x, check_duality=False)
    n_bad = int((~res.feasible).sum())
    if penalty is None:
        if n_bad == len(test_scenarios):
            return float("nan"), n_bad
        avg = float(res.values[res.feasible].mean())
    else:
        avg = float(np.where(res.feasible, res.values, penalty).mean())
    return float(c @ np.asarray(x, dtype=np.float64)) + avg, n_bad


# ---------------------------------------------------------------------------
# extensive form


@dataclass
class ExtensiveLayout:
    """Column offsets of the extensive-form LP (x | t | y_1..y_N | s | sigma)."""

    n_first: int
    n_second: int
    n_scen: int
    m_boot: int

    @property
    def x(self) -> slice:
        return slice(0, self.n_first)

    @property
    def t(self) -> int:
        return self.n_first

    def y(self, n: int) -> slice:
        start = self.n_first + 1 + n * self.n_second
        return slice(start, start + self.n_second)

    @property
    def s(self) -> slice:
        start = self.n_first + 1 + self.n_scen * self.n_second
        return slice(start, start + self.m_boot)

    @property
    def sigma(self) -> slice:
        start = self.s.stop
        return slice(start, start + self.m_boot)

    @property
    def n_vars(self) -> int:
        return self.sigma.stop


def weight_matrix(weights, n: int) -> np.ndarray:
    """Normalise a list of BootstrapWeights (or an (M, N) array) to an int matrix."""
    if isinstance(weights, np.ndarray):
        V = weights
    else:
        V = np.stack([np.asarray(getattr(w, "counts", w)) for w in weights])
    V = np.asarray(V, dtype=np.int64)
    if V.ndim != 2 or V.shape[1] != n:
        raise ValueError(f"bootstrap weights must have length N={n}")
    if (V < 0).any() or (V.sum(axis=1) != n).any():
        raise ValueError("each bootstrap weight vector must be nonnegative and sum to N")
    return V


def build_extensive_form(problem: TwoStageProblem, alpha: float, weights) -> tuple[LpProblem, ExtensiveLayout]:
    """Monolithic LP of the bootstrap APUB model.

        min  c'x + t + (1/(alpha M)) sum_m s_m
        s.t. Ax = b
             T_n x + W_n y_n = h_n                                n = 1..N
             s_m + t - (1/N) sum_n V_mn q_n'y_n - sigma_m = 0     m = 1..M
             x, y, s, sigma >= 0,  t free

    The scenario blocks y_n are shared by all M rows. The matrix is sparse.
    """
    if not 0.0 < alpha <= 1.0:
        raise ValueError("alpha must lie in (0, 1]")
    sc = problem.scenarios
    N = len(sc)
    V = weight_matrix(weights, N)
    M = V.shape[0]
    m2, n2 = sc.shape
    n1 = problem.n_first
    lay = ExtensiveLayout(n1, n2, N, M)

    rows, rhs = [], []
    if problem.A.shape[0]:
        rows.append(sp.hstack([sp.csr_matrix(problem.A),
                               sp.csr_matrix((problem.A.shape[0], lay.n_vars - n1))]))
        rhs.append(problem.b)

    # scenario rows: [T_n, 0 (t), ..., W_n at y_n, ...]
    Ts = sp.csr_matrix(sc.T.reshape(N * m2, n1))
    Wblk = sp.block_diag([sp.csr_matrix(sc.W[n]) for n in range(N)], format="csr")
    rows.append(sp.hstack([Ts, sp.csr_matrix((N * m2, 1)), Wblk,
                           sp.csr_matrix((N * m2, 2 * M))], format="csr"))
    rhs.append(sc.h.reshape(-1))

    # bootstrap rows
    # coefficient on y_n[k] in row m is -(V_mn / N) q_n[k]
    Vs = sp.csr_matrix(V.astype(np.float64) / N)
    Qblk = sp.block_diag([sp.csr_matrix(sc.q[n][None, :]) for n in range(N)], format="csr")
    ycoef = -(Vs @ Qblk)
    eye = sp.identity(M, format="csr")
    rows.append(sp.hstack([sp.csr_matrix((M, n1)), sp.csr_matrix(np.ones((M, 1))),
                           ycoef, eye, -eye], format="csr"))
    rhs.append(np.zeros(M))

    A = sp.vstack(rows, format="csr")
    obj = np.zeros(lay.n_vars)
    obj[lay.x] = problem.c
    obj[lay.t] = 1.0
    obj[lay.s] = 1.0 / (alpha * M)
    lower = np.zeros(lay.n_vars)
    lower[lay.t] = -np.inf
    return LpProblem(obj, A, np.concatenate(rhs), lower), lay


def build_saa_extensive_form(problem: TwoStageProblem) -> LpProblem:
    """Deterministic equivalent of the sample-average problem.

    Columns are (x | y_1..y_N); objective c'x + (1/N) sum_n q_n'y_n.
    """
    sc = problem.scenarios
    N = len(sc)
    m2, n2 = sc.shape
    n1 = problem.n_first
    nv = n1 + N * n2
    rows, rhs = [], []
    if problem.A.shape[0]:
        rows.append(sp.hstack([sp.csr_matrix(problem.A), sp.csr_matrix((problem.A.shape[0], nv - n1))]))
        rhs.append(problem.b)
    rows.append(sp.hstack([sp.csr_matrix(sc.T.reshape(N * m2, n1)),
                           sp.block_diag([sp.csr_matrix(sc.W[n]) for n in range(N)])], format="csr"))
    rhs.append(sc.h.reshape(-1))
    obj = np.concatenate([problem.c, sc.q.reshape(-1) / N])
    return LpProblem(obj, sp.vstack(rows, format="csr"), np.concatenate(rhs))


def _solve_monolithic(lp: LpProblem, method: str):
    if method == "auto":
        method = "simplex" if lp.n_rows * lp.n_vars <= AUTO_DENSE_LIMIT else "highs"
    sol = solve_lp(lp, method=method)
    if sol.status is LpStatus.INFEASIBLE:
        raise ModelInfeasible("extensive form is infeasible")
    if sol.status is LpStatus.UNBOUNDED:
        raise ModelUnbounded("extensive form is unbounded")
    return sol


def solve_extensive(problem: TwoStageProblem, alpha: float, weights, method: str = "auto"):
    """Build and solve the APUB extensive form; returns ``(value, x, LpSolution)``.

    ``method="auto"`` uses the dense simplex for small forms and HiGHS otherwise.
    """
    lp, lay = build_extensive_form(problem, alpha, weights)
    sol = _solve_monolithic(lp, method)
    return sol.objective_value, sol.primal[lay.x], sol


def solve_saa_extensive(problem: TwoStageProblem, method: str = "auto"):
    sol = _solve_monolithic(build_saa_extensive_form(problem), method)
    return sol.objective_value, sol.primal[:problem.n_first], sol
