"""Monte Carlo experiment harness.

* ``run_replications``: train on N scenarios, solve across a grid of nominal
  levels, score each solution on an independent test set.
* ``run_gamma_bound_study``: coverage of mean upper bounds on Gamma(2, 1) data.
* ``run_m_convergence``: spread of optimal values across bootstrap draws as M grows.

Replication ``r`` draws its training data and bootstrap weights from stream
``(seed, r)`` and its test set from ``(seed, R + r)``, so a replication's
result does not depend on which other replications run with it.
Outputs are CSV files with ``repr``-formatted floats plus a JSON summary,
so reruns with the same seed are byte-identical.
"""

from __future__ import annotations

import csv
import json
import math
import os
from dataclasses import asdict, dataclass, field

import numpy as np

from apub.bounds import cvar_of_samples, normal_ucb, var_of_samples
from apub.errors import ApubError
from apub.instances import make_ev_instance, make_product_mix_instance
from apub.lshaped import solve_apub_lshaped, solve_saa_lshaped
from apub.model import evaluate_out_of_sample
from apub.sampling import bootstrap_means, derive_substream, draw_weight_matrix, sample_gamma

INSTANCE_KINDS = ("ev", "productmix", "gamma")


@dataclass
class ExperimentConfig:
    """Experiment settings.

    ``alpha_grid`` holds nominal levels 1 - alpha in [0, 1); level 0 is the
    sample-average model. ``n_grid`` and ``m_grid`` are used by the Gamma
    and M-convergence studies.
    """

    master_seed: int = 0
    n_train: int = 20
    n_test: int = 10000
    m_bootstrap: int = 2000
    alpha_grid: list = field(default_factory=lambda: [round(0.05 * i, 2) for i in range(20)])
    replications: int = 200
    instance: str = "ev"
    n_products: int = 20
    n_departments: int = 8
    instance_seed: int = 0
    # Gamma-bound study
    n_grid: list = field(default_factory=lambda: [80, 1000, 10000])
    alpha: float = 0.05
    gamma_shape: float = 2.0
    gamma_scale: float = 1.0
    # M-convergence study
    m_grid: list = field(default_factory=lambda: [500, 1000, 2000, 3000, 5000, 8000])
    bootstrap_repeats: int = 5
    # solver
    tol: float = 1e-7

    def __post_init__(self):
        self.alpha_grid = [float(a) for a in self.alpha_grid]
        self.n_grid = [int(n) for n in self.n_grid]
        self.m_grid = [int(m) for m in self.m_grid]
        for name in ("n_train", "m_bootstrap", "replications", "n_products", "n_departments",
                     "bootstrap_repeats"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be positive")
        if self.n_test < 0:
            raise ValueError("n_test must be nonnegative")
        if not self.alpha_grid:
            raise ValueError("alpha_grid must not be empty")
        if any(not 0.0 <= a < 1.0 for a in self.alpha_grid):
            raise ValueError("alpha_grid holds nominal levels 1 - alpha in [0, 1)")
        if self.alpha_grid != sorted(self.alpha_grid) or len(set(self.alpha_grid)) != len(self.alpha_grid):
            raise ValueError("alpha_grid must be strictly increasing")
        if not 0.0 < self.alpha < 1.0:
            raise ValueError("alpha must lie in (0, 1)")
        if any(n < 2 for n in self.n_grid) or any(m < 2 for m in self.m_grid):
            raise ValueError("n_grid entries and m_grid entries must be >= 2")
        if self.instance not in INSTANCE_KINDS:
            raise ValueError(f"instance must be one of {INSTANCE_KINDS}")
        if not self.master_seed >= 0:
            raise ValueError("master_seed must be nonnegative")

    @classmethod
    def from_dict(cls, data: dict) -> "ExperimentConfig":
        known = set(cls.__dataclass_fields__)
        unknown = set(data) - known
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        return cls(**data)

    @classmethod
    def load(cls, path) -> "ExperimentConfig":
        with open(path) as fh:
            return cls.from_dict(json.load(fh))

    def to_dict(self) -> dict:
        return asdict(self)

    def sampler(self):
        if self.instance == "ev":
            return make_ev_instance()
        if self.instance == "productmix":
            return make_product_mix_instance(self.n_products, self.n_departments, self.instance_seed)
        raise ValueError("the gamma instance has no two-stage sampler")


@dataclass
class ReplicationResult:
    level: float                  # nominal level 1 - alpha
    replication: int
    optimal_value: float = math.nan
    x_opt: np.ndarray | None = None
    oos_cost: float = math.nan
    covered: bool | None = None
    n_excluded: int = 0           # infeasible test scenarios left out of oos_cost
    iterations: int = 0
    error: str | None = None

    @property
    def alpha(self) -> float:
        return round(1.0 - self.level, 12)

    @property
    def failed(self) -> bool:
        return self.error is not None


def _num(v: float) -> str:
    return repr(float(v))


# ---------------------------------------------------------------------------
# replications


def _solve_level(problem, level: float, V, tol: float):
    if level == 0.0:
        return solve_saa_lshaped(problem, tol=tol)
    return solve_apub_lshaped(problem, 1.0 - level, V, tol=tol)


def run_replication(config: ExperimentConfig, r: int, sampler=None) -> list[ReplicationResult]:
    """All grid levels for replication ``r``."""
    sampler = sampler if sampler is not None else config.sampler()
    rng = derive_substream(config.master_seed, r)
    problem = sampler.problem(rng, config.n_train)
    V = draw_weight_matrix(config.n_train, config.m_bootstrap, rng)
    test = None
    if config.n_test > 0:
        test = sampler.draw(derive_substream(config.master_seed, config.replications + r), config.n_test)
    oos_cache: dict[bytes, tuple[float, int]] = {}
    out = []
    for level in config.alpha_grid:
        res = ReplicationResult(level, r)
        try:
            value, x, log = _solve_level(problem, level, V, config.tol)
            res.optimal_value, res.x_opt, res.iterations = value, x, log.iterations
            if test is not None:
                key = x.tobytes()
                if key not in oos_cache:
                    oos_cache[key] = evaluate_out_of_sample(problem, x, test, penalty=None)
                res.oos_cost, res.n_excluded = oos_cache[key]
                res.covered = bool(value >= res.oos_cost)
        except ApubError as exc:
            res.error = f"{type(exc).__name__}: {exc}"
        out.append(res)
    return out


def run_replications(config: ExperimentConfig, replications=None, progress=None) -> list[ReplicationResult]:
    """Results for every (replication, level), ordered by replication then level.

    ``replications`` restricts the run to a subset of indices in
    ``range(config.replications)``; each index gives the same results
    whether run alone or with others.
    """
    sampler = config.sampler()
    idx = range(config.replications) if replications is None else replications
    results = []
    for r in idx:
        if not 0 <= r < config.replications:
            raise ValueError(f"replication index {r} out of range")
        results.extend(run_replication(config, r, sampler))
        if progress is not None:
            progress(r)
    return results


def summarize(results: list[ReplicationResult]) -> dict:
    """Per-level statistics of out-of-sample cost, optimal value and coverage.

    p10/p90 are the empirical quantiles inf{t : F(t) >= p}; extreme points
    are all replications whose out-of-sample cost lies outside [p10, p90].
    ``best_level`` is the level with the smallest mean out-of-sample cost.
    """
    levels = sorted({r.level for r in results})
    per_level = []
    for level in levels:
        ok = [r for r in results if r.level == level and not r.failed]
        failed = sum(1 for r in results if r.level == level and r.failed)
        entry = {"level": level, "alpha": round(1.0 - level, 12), "n_ok": len(ok), "n_failed": failed}
        if ok:
            opt = np.array([r.optimal_value for r in ok])
            entry["mean_optval"] = float(opt.mean())
            scored = [r for r in ok if r.covered is not None]
            if scored:
                oos = np.array([r.oos_cost for r in scored])
                p10, p90 = var_of_samples(oos, 0.9), var_of_samples(oos, 0.1)
                entry.update({
                    "mean_oos": float(oos.mean()),
                    "p10": p10,
                    "p90": p90,
                    "extreme_points": [[r.replication, r.oos_cost] for r in scored
                                       if r.oos_cost < p10 or r.oos_cost > p90],
                    "coverage_rate": float(np.mean([r.covered for r in scored])),
                    "n_excluded_test_points": int(sum(r.n_excluded for r in scored)),
                })
        per_level.append(entry)
    scored_levels = [e for e in per_level if "mean_oos" in e]
    best = min(scored_levels, key=lambda e: e["mean_oos"])["level"] if scored_levels else None
    return {"levels": per_level, "best_level": best,
            "failures": [{"replication": r.replication, "level": r.level, "error": r.error}
                         for r in results if r.failed]}


def write_replications_csv(results: list[ReplicationResult], fh) -> None:
    """Columns (alpha, replication, optval, oos, covered); failed rows are omitted
    (they are listed in the summary)."""
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(["alpha", "replication", "optval", "oos", "covered"])
    for r in results:
        if r.failed:
            continue
        covered = "" if r.covered is None else int(r.covered)
        w.writerow([_num(r.alpha), r.replication, _num(r.optimal_value), _num(r.oos_cost), covered])


def _write_json(obj, path):
    with open(path, "w") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True)
        fh.write("\n")


def run_replication_experiment(config: ExperimentConfig, out_dir, name: str) -> dict:
    os.makedirs(out_dir, exist_ok=True)
    results = run_replications(config)
    with open(os.path.join(out_dir, f"{name}.csv"), "w", newline="") as fh:
        write_replications_csv(results, fh)
    summary = summarize(results)
    summary["config"] = config.to_dict()
    _write_json(summary, os.path.join(out_dir, f"{name}_summary.json"))
    return summary


# ---------------------------------------------------------------------------
# Gamma bound study

GAMMA_METHODS = ("normal_ucb", "efron_bootstrap", "apub_bootstrap")


def gamma_bounds_for(config: ExperimentConfig, n: int, r: int) -> dict:
    """Bound values of the three methods for replication ``r`` at sample size ``n``.

    Data and resamples come from stream ``(seed, r)`` spawned by the index of
    ``n`` in the grid. Efron's bound and APUB are computed from the same M
    resampled means.
    """
    rng = derive_substream(config.master_seed, r).spawn(config.n_grid.index(n))
    data = sample_gamma(config.gamma_shape, config.gamma_scale, rng, n)
    means = bootstrap_means(data, config.m_bootstrap, rng)
    return {
        "normal_ucb": normal_ucb(data, config.alpha),
        "efron_bootstrap": var_of_samples(means, config.alpha),
        "apub_bootstrap": cvar_of_samples(means, config.alpha),
    }


def run_gamma_bound_study(config: ExperimentConfig, out_dir=None) -> dict:
    """Coverage of {normal, Efron, APUB} upper bounds for the Gamma mean.

    Returns ``{"rows": [(n, replication, method, bound, covered)], "summary": {...}}``;
    with ``out_dir`` also writes ``gamma_bounds.csv`` and ``gamma_bounds_summary.json``.
    """
    mu = config.gamma_shape * config.gamma_scale
    rows = []
    for n in config.n_grid:
        for r in range(config.replications):
            b = gamma_bounds_for(config, n, r)
            for m in GAMMA_METHODS:
                rows.append((n, r, m, b[m], b[m] >= mu))
    summary = {"mu": mu, "alpha": config.alpha, "m_bootstrap": config.m_bootstrap, "results": []}
    for n in config.n_grid:
        for m in GAMMA_METHODS:
            vals = np.array([row[3] for row in rows if row[0] == n and row[2] == m])
            summary["results"].append({
                "n": n, "method": m,
                "coverage": float(np.mean(vals >= mu)),
                "mean_bound": float(vals.mean()),
                "sd_bound": float(vals.std(ddof=1)) if vals.size > 1 else 0.0,
                "p10": var_of_samples(vals, 0.9) if vals.size else math.nan,
                "p90": var_of_samples(vals, 0.1) if vals.size else math.nan,
            })
    if out_dir is not None:
        os.makedirs(out_dir, exist_ok=True)
        with open(os.path.join(out_dir, "gamma_bounds.csv"), "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["n", "replication", "method", "bound", "covered"])
            for n, r, m, v, c in rows:
                w.writerow([n, r, m, _num(v), int(c)])
        summary_out = dict(summary, config=config.to_dict())
        _write_json(summary_out, os.path.join(out_dir, "gamma_bounds_summary.json"))
    return {"rows": rows, "summary": summary}


# ---------------------------------------------------------------------------
# M-convergence study


def run_m_convergence(config: ExperimentConfig, out_dir=None) -> dict:
    """Optimal values of the bootstrap model at level ``alpha_grid[-1]`` as M varies.

    For each of ``replications`` training sets (stream ``(seed, r)``) and each
    M in ``m_grid``, the model is solved with ``bootstrap_repeats`` independent
    weight draws (stream ``(seed, r)`` spawned by ``(M index, repeat)``).
    The reported ``sd`` of an M is the mean over training sets of the
    standard deviation across weight draws.
    """
    level = config.alpha_grid[-1]
    if level == 0.0:
        raise ValueError("the M study needs a positive nominal level")
    alpha = 1.0 - level
    sampler = config.sampler()
    rows = []
    for r in range(config.replications):
        rng = derive_substream(config.master_seed, r)
        problem = sampler.problem(rng, config.n_train)
        for k, m in enumerate(config.m_grid):
            for rep in range(config.bootstrap_repeats):
                wrng = rng.spawn(k * config.bootstrap_repeats + rep)
                V = draw_weight_matrix(config.n_train, m, wrng)
                value, _, _ = solve_apub_lshaped(problem, alpha, V, tol=config.tol)
                rows.append((m, r, rep, value))
    summary = {"level": level, "alpha": alpha, "results": []}
    for m in config.m_grid:
        per_set = []
        vals = []
        for r in range(config.replications):
            v = np.array([row[3] for row in rows if row[0] == m and row[1] == r])
            vals.extend(v)
            per_set.append(v.std(ddof=1) if v.size > 1 else 0.0)
        summary["results"].append({"m": m, "mean": float(np.mean(vals)), "sd": float(np.mean(per_set))})
    if out_dir is not None:
        os.makedirs(out_dir, exist_ok=True)
        with open(os.path.join(out_dir, "m_convergence.csv"), "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["m", "training_set", "draw", "optval"])
            for m, r, rep, v in rows:
                w.writerow([m, r, rep, _num(v)])
        _write_json(dict(summary, config=config.to_dict()), os.path.join(out_dir, "m_convergence_summary.json"))
    return {"rows": rows, "summary": summary}


__all__ = [
    "ExperimentConfig", "ReplicationResult", "run_replication", "run_replications", "summarize",
    "write_replications_csv", "run_replication_experiment", "run_gamma_bound_study",
    "gamma_bounds_for", "run_m_convergence", "GAMMA_METHODS",
]
