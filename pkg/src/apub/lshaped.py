"""L-shaped decomposition for the bootstrap APUB two-stage model and the
classical single-cut L-shaped method for the sample-average problem.

Both solvers share one loop; they differ only in how the N recourse values
are turned into a risk value and per-scenario cut weights:

* APUB: r_m = (1/N) sum_n V_mn Q_n, sorted ascending; the tail weights of
  ``tail_weights`` on the order statistics give lambda-hat, and pulling the
  weights back through V gives the scenario weights of the cut.
* SAA: plain average, scenario weights 1/N.
"""

from __future__ import annotations

import csv
import enum
import io
import json
import math
import time
from dataclasses import dataclass, field

import numpy as np

from apub.bounds import tail_weights
from apub.errors import (IterationCapExceeded, ModelInfeasible, ModelUnbounded,
                         NumericalBreakdown)
from apub.lp import LpProblem, LpStatus, solve_lp, solve_phase1_feasibility
from apub.model import TwoStageProblem, evaluate_recourse_batch, recourse_rhs, weight_matrix

DEFAULT_TOL = 1e-7


class CutKind(str, enum.Enum):
    FEASIBILITY = "Feasibility"
    OPTIMALITY = "Optimality"


@dataclass(frozen=True)
class Cut:
    """``coeff'x >= rhs`` (feasibility) or ``coeff'x + eta >= rhs`` (optimality)."""

    kind: CutKind
    coeff: np.ndarray
    rhs: float
    x_hat: np.ndarray | None = field(default=None, compare=False, repr=False)
    scenario: int | None = field(default=None, compare=False)
    # u_n(x_hat) for feasibility cuts, lambda-hat for optimality cuts
    generating_value: float = field(default=math.nan, compare=False)

    def __post_init__(self):
        coeff = np.asarray(self.coeff, dtype=np.float64)
        if not (np.isfinite(coeff).all() and math.isfinite(self.rhs)):
            raise ValueError("cut coefficients must be finite")
        object.__setattr__(self, "coeff", coeff)

    def to_dict(self) -> dict:
        return {"kind": self.kind.value, "coeff": self.coeff.tolist(), "rhs": self.rhs,
                "scenario": self.scenario,
                "x_hat": None if self.x_hat is None else np.asarray(self.x_hat).tolist(),
                "generating_value": self.generating_value if math.isfinite(self.generating_value) else None}


@dataclass
class SolveLog:
    iterations: int = 0
    feasibility_cuts: int = 0
    optimality_cuts: int = 0
    wall_time: float = 0.0
    master_objective_trace: list = field(default_factory=list)
    lambda_trace: list = field(default_factory=list)
    final_x: np.ndarray | None = None
    final_value: float = math.nan
    cuts: list = field(default_factory=list, repr=False)
    method: str = "apub"
    alpha: float = 1.0

    def to_dict(self, include_cuts: bool = False) -> dict:
        def num(v):
            return None if v is None or not math.isfinite(v) else float(v)
        d = {
            "method": self.method,
            "alpha": self.alpha,
            "iterations": self.iterations,
            "feasibility_cuts": self.feasibility_cuts,
            "optimality_cuts": self.optimality_cuts,
            "wall_time": self.wall_time,
            "master_objective_trace": [num(v) for v in self.master_objective_trace],
            "lambda_trace": [num(v) for v in self.lambda_trace],
            "final_x": None if self.final_x is None else self.final_x.tolist(),
            "final_value": num(self.final_value),
        }
        if include_cuts:
            d["cuts"] = [c.to_dict() for c in self.cuts]
        return d

    def to_json(self, **kw) -> str:
        return json.dumps(self.to_dict(**kw))

    def trace_rows(self):
        """(iteration, feasibility cuts, optimality cuts, master objective, lambda-hat) per iteration.

        Cut counts are those of the master problem solved in that iteration;
        lambda-hat is nan in iterations that produced a feasibility cut.
        """
        rows = []
        n_f = n_o = 0
        for i, (obj, lam) in enumerate(zip(self.master_objective_trace, self.lambda_trace), 1):
            rows.append((i, n_f, n_o, obj, lam))
            if i <= len(self.cuts):
                if self.cuts[i - 1].kind is CutKind.FEASIBILITY:
                    n_f += 1
                else:
                    n_o += 1
        return rows


TRACE_HEADER = ("iteration", "feasibility_cuts", "optimality_cuts", "master_obj", "lambda_hat")


def write_trace_csv(log: SolveLog, fh) -> None:
    w = csv.writer(fh)
    w.writerow(TRACE_HEADER)
    for row in log.trace_rows():
        w.writerow([row[0], row[1], row[2], repr(float(row[3])), repr(float(row[4]))])


# ---------------------------------------------------------------------------
# risk aggregation of recourse values


class _ApubRisk:
    def __init__(self, V: np.ndarray, alpha: float):
        self.V = V.astype(np.float64)
        self.N = V.shape[1]
        self.alpha = alpha
        self.weights = tail_weights(V.shape[0], alpha)

    def evaluate(self, Q: np.ndarray):
        r = self.V @ Q / self.N
        perm = np.argsort(r, kind="stable")
        value = float(self.weights @ r[perm])
        return value, self.scenario_weights(perm)

    def scenario_weights(self, perm: np.ndarray) -> np.ndarray:
        omega = np.empty_like(self.weights)
        omega[perm] = self.weights
        return omega @ self.V / self.N


class _MeanRisk:
    def __init__(self, n: int):
        self.p = np.full(n, 1.0 / n)

    def evaluate(self, Q: np.ndarray):
        return float(Q.mean()), self.p


def compute_gamma(problem: TwoStageProblem, x, alpha: float, weights):
    """gamma(x) = CVaR_alpha of r_m(x) = (1/N) sum_n V_mn Q(x, xi_n).

    Returns ``(gamma, sorted_perm, lambda_weights)`` where ``sorted_perm``
    orders r ascending (stable by index) and ``lambda_weights`` are the
    weights on the sorted positions.
    """
    V = weight_matrix(weights, problem.n_scenarios)
    res = evaluate_recourse_batch(problem.scenarios, x)
    if not res.all_feasible:
        n = int(np.flatnonzero(~res.feasible)[0])
        raise ModelInfeasible(f"recourse problem for scenario {n} is infeasible at x")
    r = V @ res.values / problem.n_scenarios
    perm = np.argsort(r, kind="stable")
    w = tail_weights(V.shape[0], alpha)
    return float(w @ r[perm]), perm, w


def aggregate_cut(problem: TwoStageProblem, duals: np.ndarray, scen_weights: np.ndarray):
    """(E, e) = (sum_n p_n psi_n'T_n, sum_n p_n psi_n'h_n)."""
    sc = problem.scenarios
    E = np.einsum("n,ni,nij->j", scen_weights, duals, sc.T)
    e = float(np.einsum("n,ni,ni->", scen_weights, duals, sc.h))
    return E, e


def build_optimality_cut(duals, weights, sorted_perm, alpha: float, problem: TwoStageProblem,
                         x_hat=None) -> Cut:
    """Optimality cut E'x + eta >= e from subproblem duals and the sorted order of r."""
    V = weight_matrix(weights, problem.n_scenarios)
    risk = _ApubRisk(V, alpha)
    p = risk.scenario_weights(np.asarray(sorted_perm))
    E, e = aggregate_cut(problem, np.asarray(duals, dtype=np.float64), p)
    return Cut(CutKind.OPTIMALITY, E, e, x_hat=x_hat)


def feasibility_cut(problem: TwoStageProblem, n: int, x_hat) -> Cut:
    """Phase-I cut phi_n'T_n x >= phi_n'h_n for an infeasible scenario n."""
    sc = problem.scenarios
    rhs = sc.h[n] - sc.T[n] @ x_hat
    u, phi = solve_phase1_feasibility(sc.W[n], rhs)
    return Cut(CutKind.FEASIBILITY, phi @ sc.T[n], float(phi @ sc.h[n]),
               x_hat=np.array(x_hat), scenario=n, generating_value=u)


# ---------------------------------------------------------------------------
# master problem


def _solve_master(problem: TwoStageProblem, feas: list, opt: list):
    """min c'x + eta over Ax = b, feasibility and optimality cuts, x >= 0.

    eta is omitted (and reported as None) until the first optimality cut.
    Returns ``(x, eta, objective)``.
    """
    n1 = problem.n_first
    m1 = problem.A.shape[0]
    has_eta = bool(opt)
    n_cut = len(feas) + len(opt)
    nv = n1 + int(has_eta) + n_cut
    A = np.zeros((m1 + n_cut, nv))
    rhs = np.zeros(m1 + n_cut)
    A[:m1, :n1] = problem.A
    rhs[:m1] = problem.b
    row = m1
    for k, cut in enumerate(feas + opt):
        A[row, :n1] = cut.coeff
        if cut.kind is CutKind.OPTIMALITY:
            A[row, n1] = 1.0
        A[row, n1 + int(has_eta) + k] = -1.0
        rhs[row] = cut.rhs
        row += 1
    obj = np.zeros(nv)
    obj[:n1] = problem.c
    lower = np.zeros(nv)
    if has_eta:
        obj[n1] = 1.0
        lower[n1] = -np.inf
    sol = solve_lp(LpProblem(obj, A, rhs, lower))
    if sol.status is LpStatus.INFEASIBLE:
        raise ModelInfeasible("master problem infeasible: the first-stage feasible set is empty")
    if sol.status is LpStatus.UNBOUNDED:
        raise ModelUnbounded("master problem unbounded; the first-stage feasible set must be bounded")
    x = np.maximum(sol.primal[:n1], 0.0)
    eta = float(sol.primal[n1]) if has_eta else None
    return x, eta, sol.objective_value


def _run(problem: TwoStageProblem, risk, tol: float, max_iter: int, log: SolveLog, trace=None):
    t0 = time.perf_counter()
    feas: list[Cut] = []
    opt: list[Cut] = []
    writer = None
    if trace is not None:
        writer = csv.writer(trace)
        writer.writerow(TRACE_HEADER)
    for it in range(1, max_iter + 1):
        x_hat, eta, master_obj = _solve_master(problem, feas, opt)
        counts = (len(feas), len(opt))
        log.iterations = it
        log.master_objective_trace.append(master_obj if eta is not None else -math.inf)
        res = evaluate_recourse_batch(problem.scenarios, x_hat)
        if not res.all_feasible:
            n = int(np.flatnonzero(~res.feasible)[0])
            cut = feasibility_cut(problem, n, x_hat)
            if not cut.generating_value > 0.0:
                raise NumericalBreakdown(f"scenario {n} flagged infeasible but phase-I value is "
                                         f"{cut.generating_value:.3g}")
            feas.append(cut)
            log.cuts.append(cut)
            log.feasibility_cuts += 1
            log.lambda_trace.append(math.nan)
        else:
            lam, p = risk.evaluate(res.values)
            log.lambda_trace.append(lam)
            if eta is not None and eta >= lam - tol * (1.0 + abs(lam)):
                log.final_x = x_hat
                log.final_value = float(problem.c @ x_hat) + lam
                log.wall_time = time.perf_counter() - t0
                if writer is not None:
                    writer.writerow(_trace_row(log, it, counts))
                return log.final_value, x_hat, log
            E, e = aggregate_cut(problem, res.duals, p)
            cut = Cut(CutKind.OPTIMALITY, E, e, x_hat=x_hat, generating_value=lam)
            opt.append(cut)
            log.cuts.append(cut)
            log.optimality_cuts += 1
        if writer is not None:
            writer.writerow(_trace_row(log, it, counts))
    log.wall_time = time.perf_counter() - t0
    raise IterationCapExceeded(f"L-shaped loop did not terminate within {max_iter} iterations")


def _trace_row(log: SolveLog, it: int, counts):
    return [it, counts[0], counts[1],
            repr(float(log.master_objective_trace[-1])), repr(float(log.lambda_trace[-1]))]


def solve_apub_lshaped(problem: TwoStageProblem, alpha: float, weights, tol: float = DEFAULT_TOL,
                       max_iter: int | None = None, trace=None):
    """Solve min c'x + CVaR_alpha of bootstrap means of Q(x, .) by L-shaped decomposition.

    ``weights`` is a list of BootstrapWeights or an (M, N) count matrix.
    ``trace`` may be a text stream that receives one CSV row per iteration.
    Returns ``(value, x, SolveLog)``.
    """
    if not 0.0 < alpha <= 1.0:
        raise ValueError("alpha must lie in (0, 1]")
    V = weight_matrix(weights, problem.n_scenarios)
    if max_iter is None:
        max_iter = 10 * (problem.n_scenarios + V.shape[0])
    log = SolveLog(method="apub", alpha=alpha)
    return _run(problem, _ApubRisk(V, alpha), tol, max_iter, log, trace)


def solve_saa_lshaped(problem: TwoStageProblem, tol: float = DEFAULT_TOL, max_iter: int | None = None,
                      trace=None):
    """Classical single-cut L-shaped method for min c'x + (1/N) sum_n Q(x, xi_n)."""
    if max_iter is None:
        max_iter = 10 * (problem.n_scenarios + 1)
    log = SolveLog(method="saa", alpha=1.0)
    return _run(problem, _MeanRisk(problem.n_scenarios), tol, max_iter, log, trace)


def trace_csv_text(log: SolveLog) -> str:
    buf = io.StringIO()
    write_trace_csv(log, buf)
    return buf.getvalue()


__all__ = [
    "Cut", "CutKind", "SolveLog", "compute_gamma", "build_optimality_cut", "feasibility_cut",
    "solve_apub_lshaped", "solve_saa_lshaped", "write_trace_csv", "trace_csv_text",
    "recourse_rhs",
]
