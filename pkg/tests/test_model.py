import json

import numpy as np
import pytest

from apub.errors import ModelUnbounded
from apub.instances import make_ev_instance, make_random_instance
from apub.lp import LpProblem, solve_lp
from apub.model import (Scenario, ScenarioBatch, TwoStageProblem, build_extensive_form,
                        build_saa_extensive_form, evaluate_out_of_sample, evaluate_recourse,
                        evaluate_recourse_batch, solve_extensive, solve_saa_extensive, weight_matrix)
from apub.sampling import RngStream, draw_weight_matrix

from oracles import recourse_by_scipy


def one_by_one(h):
    return TwoStageProblem([0.0], np.zeros((0, 1)), [], [Scenario([1.0], [h], [[1.0]], [[1.0]])])


def test_scenario_validation():
    with pytest.raises(ValueError):
        Scenario([1, 2], [1], [[1]], [[1]])
    with pytest.raises(ValueError):
        Scenario([1], [1], [[1], [2]], [[1]])
    with pytest.raises(ValueError):
        ScenarioBatch.from_scenarios([Scenario([1], [1], [[1]], [[1]]),
                                      Scenario([1, 1], [1], [[1]], [[1, 1]])])
    with pytest.raises(ValueError):
        TwoStageProblem([1, 2], [[1, 1]], [1], [Scenario([1], [1], [[1]], [[1]])])


def test_one_by_one_recourse():
    value, duals = evaluate_recourse(one_by_one(4.0), 0, [1.0])
    assert value == pytest.approx(3.0) and duals.tolist() == pytest.approx([1.0])
    assert evaluate_recourse(one_by_one(-1.0), 0, [0.0]) == (None, None)


def test_unbounded_recourse_is_model_error():
    p = TwoStageProblem([0.0], np.zeros((0, 1)), [], [Scenario([-1.0, 0.0], [1.0], [[0.0]], [[1.0, -1.0]])])
    with pytest.raises(ModelUnbounded):
        evaluate_recourse(p, 0, [0.0])


def test_ev_recourse_hand_value():
    ev = make_ev_instance()
    # x = 12 covers demand D = 10, real-time price 1: no purchase, no shortfall
    sc = ScenarioBatch(q=[[1.0, 2.5, 0, 0]], h=[[10.0, 12.0]], T=[[[1, 0], [1, 0]]],
                       W=[[[1, 1, -1, 0], [1.0, 0, 0, 1]]])
    p = TwoStageProblem(ev.c, ev.A, ev.b, sc)
    assert evaluate_recourse(p, 0, [12.0, 0.0])[0] == pytest.approx(0.0, abs=1e-12)
    # x = 4, D = 10, W = 1: buy 6 in real time (budget 12 - 4 = 8 >= 6)
    assert evaluate_recourse(p, 0, [4.0, 8.0])[0] == pytest.approx(6.0)


def test_batch_matches_scipy_per_scenario():
    seed = 0
    while True:
        rng = RngStream(77, seed)
        gen = make_random_instance(rng, n_first=3)
        if gen.n_capacity > 0:
            break
        seed += 1
    p = gen.problem(rng, 40)
    seen = set()
    for frac in (0.0, 0.3, 0.6, 1.0):
        x = np.concatenate([gen.upper * frac, gen.upper * (1 - frac)])
        res = evaluate_recourse_batch(p.scenarios, x)
        for n in range(40):
            sc = p.scenarios[n]
            ref = recourse_by_scipy(sc.q, sc.W, sc.h - sc.T @ x)
            seen.add(ref is None)
            if ref is None:
                assert not res.feasible[n]
            else:
                assert res.feasible[n] and res.values[n] == pytest.approx(ref, abs=1e-9)
                assert res.duals[n] @ (sc.h - sc.T @ x) == pytest.approx(ref, abs=1e-7)
    assert seen == {True, False}


def test_out_of_sample_accounting():
    ev = make_ev_instance()
    test = ev.draw(RngStream(5, 0), 300)
    x = np.array([0.0, 12.0])
    cost, bad = evaluate_out_of_sample(ev.first_stage, x, test)
    ref = np.mean([recourse_by_scipy(s.q, s.W, s.h - s.T @ x) for s in test])
    assert bad == 0 and cost == pytest.approx(ref, abs=1e-9)
    single = test.subset(slice(0, 1))
    c1, _ = evaluate_out_of_sample(ev.first_stage, np.array([5.0, 7.0]), single)
    assert c1 == pytest.approx(5.0 + evaluate_recourse(ev.problem(RngStream(5, 0), 1), 0, [5.0, 7.0])[0])


def test_out_of_sample_zero_recourse():
    p = one_by_one(0.0)
    assert evaluate_out_of_sample(p, [0.0], p.scenarios) == (0.0, 0)


def test_out_of_sample_penalty_and_exclusion():
    sc = ScenarioBatch.from_scenarios([Scenario([1.0], [4.0], [[1.0]], [[1.0]]),
                                       Scenario([1.0], [-1.0], [[1.0]], [[1.0]])])
    first = (np.array([2.0]), np.zeros((0, 1)), np.zeros(0))
    assert evaluate_out_of_sample(first, [1.0], sc) == (pytest.approx(2.0 + (3.0 + 1e6) / 2), 1)
    assert evaluate_out_of_sample(first, [1.0], sc, penalty=None) == (pytest.approx(5.0), 1)


def test_json_roundtrip(tmp_path):
    rng = RngStream(1, 0)
    p = make_random_instance(rng).problem(rng, 4)
    p.meta = {"name": "rt", "seed": 1}
    path = tmp_path / "p.json"
    p.dump(path)
    q = TwoStageProblem.load(path)
    assert json.loads(path.read_text())["meta"] == {"name": "rt", "seed": 1}
    for attr in ("q", "h", "T", "W"):
        assert np.array_equal(getattr(p.scenarios, attr), getattr(q.scenarios, attr))
    assert np.array_equal(p.c, q.c) and np.array_equal(p.A, q.A) and np.array_equal(p.b, q.b)


def test_weight_matrix_validation():
    with pytest.raises(ValueError):
        weight_matrix(np.array([[2, 0, 0]]), 3)
    with pytest.raises(ValueError):
        weight_matrix(np.array([[1, 1]]), 3)


# --- extensive form -------------------------------------------------------------


def test_single_scenario_equals_deterministic_lp():
    ev = make_ev_instance()
    p = ev.problem(RngStream(4, 0), 1)
    value, x, _ = solve_extensive(p, 0.3, np.array([[1]]))
    s = p.scenarios[0]
    # deterministic LP over (x, y) directly
    A = np.zeros((3, 6))
    A[0, :2] = ev.A[0]
    A[1:, :2] = s.T
    A[1:, 2:] = s.W
    det = solve_lp(LpProblem(np.concatenate([ev.c, s.q]), A, [12, *s.h]))
    assert value == pytest.approx(det.objective_value, abs=1e-9)


@pytest.mark.parametrize("seed", range(6))
def test_balanced_weights_reproduce_saa(seed):
    rng = RngStream(seed, 9)
    p = make_random_instance(rng).problem(rng, 6)
    saa, _, _ = solve_saa_extensive(p)
    # all cyclic shifts of one draw: every scenario has average weight 1
    v = draw_weight_matrix(6, 1, rng)[0]
    V = np.stack([np.roll(v, k) for k in range(6)])
    assert solve_extensive(p, 1.0, V)[0] == pytest.approx(saa, abs=1e-7 * (1 + abs(saa)))
    assert solve_extensive(p, 0.4, np.ones((1, 6), dtype=int))[0] == pytest.approx(saa, abs=1e-7 * (1 + abs(saa)))


def test_extensive_highs_matches_simplex():
    rng = RngStream(3, 3)
    p = make_random_instance(rng).problem(rng, 8)
    V = draw_weight_matrix(8, 15, rng)
    a = solve_extensive(p, 0.35, V, method="simplex")[0]
    b = solve_extensive(p, 0.35, V, method="highs")[0]
    assert a == pytest.approx(b, abs=1e-7 * (1 + abs(a)))


def test_extensive_layout_dimensions():
    rng = RngStream(2, 2)
    p = make_random_instance(rng, n_first=2).problem(rng, 5)
    V = draw_weight_matrix(5, 8, rng)
    lp, lay = build_extensive_form(p, 0.4, V)
    m2, n2 = p.scenarios.shape
    assert lay.n_vars == lp.n_vars == 4 + 1 + 5 * n2 + 2 * 8
    assert lp.n_rows == p.A.shape[0] + 5 * m2 + 8
    assert lp.free[lay.t] and lp.free.sum() == 1
    saa = build_saa_extensive_form(p)
    assert saa.n_vars == 4 + 5 * n2


def test_extensive_detects_empty_first_stage():
    from apub.errors import ModelInfeasible

    p = TwoStageProblem([1.0], [[1.0]], [-1.0], [Scenario([1.0], [1.0], [[0.0]], [[1.0]])])
    with pytest.raises(ModelInfeasible):
        solve_saa_extensive(p)


def test_alpha_one_weights_scenarios_by_average_count():
    """At alpha = 1 the model is the SAA problem reweighted by mean bootstrap counts."""
    rng = RngStream(8, 1)
    p = make_random_instance(rng).problem(rng, 5)
    V = draw_weight_matrix(5, 4, rng)
    value = solve_extensive(p, 1.0, V)[0]
    w = V.mean(axis=0)
    reweighted = TwoStageProblem(p.c, p.A, p.b, ScenarioBatch(p.scenarios.q * w[:, None], p.scenarios.h,
                                                              p.scenarios.T, p.scenarios.W))
    assert value == pytest.approx(solve_saa_extensive(reweighted)[0], abs=1e-7 * (1 + abs(value)))
