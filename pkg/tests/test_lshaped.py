import io
import itertools
import json

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from apub.bounds import cvar_of_samples, tail_index, tail_weights
from apub.errors import IterationCapExceeded, ModelInfeasible, ModelUnbounded
from apub.instances import make_ev_instance, make_random_instance
from apub.lp import solve_phase1_feasibility
from apub.lshaped import (CutKind, build_optimality_cut, compute_gamma, solve_apub_lshaped,
                          solve_saa_lshaped, trace_csv_text, write_trace_csv)
from apub.model import (Scenario, TwoStageProblem, evaluate_recourse_batch, solve_extensive,
                        solve_saa_extensive)
from apub.sampling import RngStream, draw_weight_matrix

from oracles import gamma_by_combinations


def random_case(seed, max_n=10, max_m=20):
    rng = RngStream(seed, 31)
    gen = make_random_instance(rng)
    n = 1 + rng.integers(max_n, 1)[0]
    m = 1 + rng.integers(max_m, 1)[0]
    alpha = float([0.05, 0.1, 0.25, 0.5, 0.75, 0.9, 1.0][rng.integers(7, 1)[0]])
    return gen, gen.problem(rng, int(n)), draw_weight_matrix(int(n), int(m), rng), alpha


def fixed_value_problem(values):
    """Scenarios with recourse value Q_n = values[n] >= 0 independent of x (x in [0, 1])."""
    scen = [Scenario([1.0], [v], [[0.0, 0.0]], [[1.0]]) for v in values]
    return TwoStageProblem([0.0, 0.0], [[1.0, 1.0]], [1.0], scen)


def ordered_resample_weights(n):
    """All n**n ordered resamples as count rows (the exact bootstrap distribution)."""
    rows = []
    for idx in itertools.product(range(n), repeat=n):
        rows.append(np.bincount(idx, minlength=n))
    return np.array(rows)


# --- agreement with the extensive form --------------------------------------------


@settings(max_examples=40)
@given(st.integers(0, 10 ** 6))
def test_matches_extensive_form(seed):
    _, p, V, alpha = random_case(seed)
    value, x, log = solve_apub_lshaped(p, alpha, V)
    ref, _, _ = solve_extensive(p, alpha, V)
    assert abs(value - ref) <= 1e-6 * (1 + abs(ref))
    assert log.iterations <= 10 * (p.n_scenarios + V.shape[0])
    assert abs(value - (p.c @ x + compute_gamma(p, x, alpha, V)[0])) <= 1e-9 * (1 + abs(value))


def test_single_deterministic_scenario():
    ev = make_ev_instance()
    p = ev.problem(RngStream(1, 5), 1)
    value, _, _ = solve_apub_lshaped(p, 0.3, np.array([[1]]))
    assert value == pytest.approx(solve_saa_extensive(p)[0], abs=1e-9)


def test_first_cut_is_feasibility_cut_for_scenario_three():
    # x in [0, 5] with cost -1 so the initial master picks x = 5;
    # recourse capacity h_n - x >= 0 fails first for scenario index 2 (h = 2)
    hs = [10.0, 9.0, 2.0, 1.0, 8.0]
    scen = [Scenario([1.0, 0.0], [h], [[1.0, 0.0]], [[0.0, 1.0]]) for h in hs]
    p = TwoStageProblem([-1.0, 0.0], [[1.0, 1.0]], [5.0], scen)
    value, x, log = solve_apub_lshaped(p, 0.5, np.ones((5, 5), dtype=int))
    first = log.cuts[0]
    assert first.kind is CutKind.FEASIBILITY and first.scenario == 2
    u, phi = solve_phase1_feasibility(p.scenarios.W[2], p.scenarios.h[2] - p.scenarios.T[2] @ first.x_hat)
    assert first.generating_value == pytest.approx(u) and u == pytest.approx(3.0)
    assert first.rhs - first.coeff @ first.x_hat == pytest.approx(u, abs=1e-8)
    assert x[0] == pytest.approx(1.0)
    assert log.master_objective_trace[0] == -np.inf


# --- gamma and lambda weights --------------------------------------------------------


def test_gamma_example():
    p = fixed_value_problem([1.0, 2.0, 3.0, 4.0])
    V = 4 * np.eye(4, dtype=int)           # resample m puts all mass on scenario m
    gamma, perm, w = compute_gamma(p, [0.5, 0.5], 0.5, V)
    assert gamma == pytest.approx(3.5)
    assert w.tolist() == [0, 0, 0.5, 0.5]
    assert perm.tolist() == [0, 1, 2, 3]


def test_gamma_alpha_one_is_mean():
    p = fixed_value_problem([3.0, 0.5, 2.0])
    V = draw_weight_matrix(3, 9, RngStream(2))
    gamma, _, w = compute_gamma(p, [1.0, 0.0], 1.0, V)
    assert gamma == pytest.approx((V @ np.array([3.0, 0.5, 2.0]) / 3).mean())
    assert np.allclose(w, 1 / 9)


@pytest.mark.parametrize("alpha", [0.3, 0.5, 0.8])
def test_gamma_equals_max_over_combinations(alpha):
    for seed in range(5):
        gen, p, _, _ = random_case(seed)
        V = draw_weight_matrix(p.n_scenarios, 5, RngStream(seed, 99))
        x = np.zeros(p.n_first)
        x[gen.cost.size:] = gen.upper
        res = evaluate_recourse_batch(p.scenarios, x)
        r = V @ res.values / p.n_scenarios
        assert abs(compute_gamma(p, x, alpha, V)[0] - gamma_by_combinations(r, alpha)) <= 1e-10


@given(st.integers(1, 200), st.floats(0.001, 1.0))
def test_lambda_weight_support(m, alpha):
    w = tail_weights(m, alpha)
    j = tail_index(m, alpha)
    assert (w >= 0).all() and abs(w.sum() - 1) < 1e-12
    assert np.count_nonzero(w) <= m - j + 1


def test_gamma_propagates_infeasibility():
    p = TwoStageProblem([0.0], np.zeros((0, 1)), [], [Scenario([1.0], [-1.0], [[0.0]], [[1.0]])])
    with pytest.raises(ModelInfeasible):
        compute_gamma(p, [0.0], 0.5, np.array([[1]]))


# --- optimality cuts --------------------------------------------------------------


def _duals_at(p, x):
    res = evaluate_recourse_batch(p.scenarios, x)
    assert res.all_feasible
    return res


def test_cut_single_weight_vector_is_benders_cut():
    rng = RngStream(4, 4)
    p = make_random_instance(rng).problem(rng, 3)
    x = np.zeros(p.n_first)
    res = _duals_at(p, x)
    V = np.array([[3, 0, 0]])
    _, perm, _ = compute_gamma(p, x, 0.5, V)
    cut = build_optimality_cut(res.duals, V, perm, 0.5, p)
    psi, sc = res.duals[0], p.scenarios
    assert np.allclose(cut.coeff, psi @ sc.T[0]) and cut.rhs == pytest.approx(psi @ sc.h[0])


def test_cut_alpha_one_balanced_weights_is_saa_cut():
    rng = RngStream(5, 5)
    p = make_random_instance(rng).problem(rng, 4)
    x = np.zeros(p.n_first)
    res = _duals_at(p, x)
    v = draw_weight_matrix(4, 1, rng)[0]
    V = np.stack([np.roll(v, k) for k in range(4)])
    _, perm, _ = compute_gamma(p, x, 1.0, V)
    cut = build_optimality_cut(res.duals, V, perm, 1.0, p)
    sc = p.scenarios
    E = np.mean([res.duals[n] @ sc.T[n] for n in range(4)], axis=0)
    e = np.mean([res.duals[n] @ sc.h[n] for n in range(4)])
    assert np.allclose(cut.coeff, E) and cut.rhs == pytest.approx(e)


@settings(max_examples=25)
@given(st.integers(0, 10 ** 6))
def test_cuts_tight_and_valid(seed):
    gen, p, V, alpha = random_case(seed)
    _, _, log = solve_apub_lshaped(p, alpha, V)
    rng = RngStream(seed, 77)
    points = []
    while len(points) < 20:
        u = rng.uniform(gen.cost.size) * gen.upper
        x = np.concatenate([u, gen.upper - u])
        if evaluate_recourse_batch(p.scenarios, x).all_feasible:
            points.append(x)
        if rng.counter > 10000:
            break
    gammas = [compute_gamma(p, x, alpha, V)[0] for x in points]
    for cut in log.cuts:
        if cut.kind is CutKind.OPTIMALITY:
            assert abs(cut.rhs - cut.coeff @ cut.x_hat - cut.generating_value) <= 1e-7 * (1 + abs(cut.rhs))
            for x, g in zip(points, gammas):
                assert g >= cut.rhs - cut.coeff @ x - 1e-7 * (1 + abs(g))


# --- loop invariants ------------------------------------------------------------------


@settings(max_examples=40)
@given(st.integers(0, 10 ** 6))
def test_loop_invariants(seed):
    _, p, V, alpha = random_case(seed)
    _, _, log = solve_apub_lshaped(p, alpha, V)
    trace = [v for v in log.master_objective_trace if np.isfinite(v)]
    assert all(b >= a - 1e-9 * (1 + abs(a)) for a, b in zip(trace, trace[1:]))
    seen = []
    for cut in log.cuts:
        for kind, coeff, rhs in seen:
            assert not (kind is cut.kind and np.allclose(coeff, cut.coeff, rtol=0, atol=1e-9)
                        and abs(rhs - cut.rhs) <= 1e-9)
        seen.append((cut.kind, cut.coeff, cut.rhs))
        if cut.kind is CutKind.FEASIBILITY:
            assert abs(cut.rhs - cut.coeff @ cut.x_hat - cut.generating_value) <= 1e-8
    assert log.feasibility_cuts + log.optimality_cuts == len(log.cuts) == log.iterations - 1


# --- SAA ------------------------------------------------------------------------------


def test_saa_deterministic():
    p = fixed_value_problem([2.5])
    assert solve_saa_lshaped(p)[0] == pytest.approx(2.5)


@settings(max_examples=30)
@given(st.integers(0, 10 ** 6))
def test_saa_matches_extensive(seed):
    _, p, _, _ = random_case(seed)
    value, _, log = solve_saa_lshaped(p)
    ref = solve_saa_extensive(p)[0]
    assert abs(value - ref) <= 1e-6 * (1 + abs(ref))
    assert log.method == "saa"


@pytest.mark.parametrize("n", [1, 2, 3, 4])
def test_apub_alpha_one_with_exact_resamples_equals_saa(n):
    rng = RngStream(n, 12)
    p = make_random_instance(rng).problem(rng, n)
    V = ordered_resample_weights(n)
    a = solve_apub_lshaped(p, 1.0, V)[0]
    b = solve_saa_lshaped(p)[0]
    assert abs(a - b) <= 1e-6 * (1 + abs(b))


# --- errors ------------------------------------------------------------------------------


def test_empty_feasible_set():
    p = TwoStageProblem([1.0], np.zeros((0, 1)), [], [Scenario([1.0], [-1.0], [[0.0]], [[1.0]])])
    with pytest.raises(ModelInfeasible):
        solve_apub_lshaped(p, 0.5, np.array([[1]]))


def test_unbounded_master():
    p = TwoStageProblem([-1.0], np.zeros((0, 1)), [], [Scenario([1.0], [1.0], [[0.0]], [[1.0]])])
    with pytest.raises(ModelUnbounded):
        solve_saa_lshaped(p)


def test_iteration_cap():
    _, p, V, alpha = random_case(3)
    with pytest.raises(IterationCapExceeded):
        solve_apub_lshaped(p, alpha, V, max_iter=1)


def test_alpha_validation():
    _, p, V, _ = random_case(1)
    with pytest.raises(ValueError):
        solve_apub_lshaped(p, 0.0, V)


# --- log serialisation ---------------------------------------------------------------------


def test_log_json_and_trace():
    gen, p, V, alpha = random_case(11)
    buf = io.StringIO()
    value, x, log = solve_apub_lshaped(p, alpha, V, trace=buf)
    d = json.loads(log.to_json(include_cuts=True))
    assert d["final_value"] == pytest.approx(value) and len(d["cuts"]) == len(log.cuts)
    assert d["iterations"] == log.iterations
    assert all(v is None or np.isfinite(v) for v in d["master_objective_trace"])
    streamed = buf.getvalue()
    assert streamed == trace_csv_text(log)
    lines = streamed.strip().splitlines()
    assert lines[0] == "iteration,feasibility_cuts,optimality_cuts,master_obj,lambda_hat"
    assert len(lines) == log.iterations + 1
    last = lines[-1].split(",")
    assert int(last[1]) == log.feasibility_cuts and int(last[2]) == log.optimality_cuts
    assert float(last[4]) == pytest.approx(log.final_value - p.c @ x)
    assert cvar_of_samples(V @ evaluate_recourse_batch(p.scenarios, x).values / p.n_scenarios, alpha) \
        == pytest.approx(float(last[4]))


def test_deterministic_repeat():
    _, p, V, alpha = random_case(21)
    a = solve_apub_lshaped(p, alpha, V)
    b = solve_apub_lshaped(p, alpha, V)
    assert a[0] == b[0] and np.array_equal(a[1], b[1])
    assert a[2].master_objective_trace == b[2].master_objective_trace
    out = io.StringIO()
    write_trace_csv(a[2], out)
    assert out.getvalue().count("\n") == a[2].iterations + 1
