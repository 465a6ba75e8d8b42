import numpy as np
import pytest
import scipy.sparse as sp
from hypothesis import given, strategies as st
from scipy.optimize import linprog

from apub.errors import NumericalBreakdown
from apub.lp import LpProblem, LpStatus, solve_lp, solve_phase1_feasibility

from oracles import lp_by_vertex_enumeration


def check_optimal(problem, sol):
    A, b, c = problem.eq_matrix, problem.eq_rhs, problem.objective
    x, y = sol.primal, sol.duals
    assert np.abs(A @ x - b).max(initial=0) <= 1e-7 * (1 + np.abs(b).max(initial=0))
    assert (x[~problem.free] >= -1e-9).all()
    reduced = c - A.T @ y
    assert (reduced[~problem.free] >= -1e-7).all()
    assert np.abs(reduced[problem.free]).max(initial=0) <= 1e-7
    assert np.abs(x * reduced).max(initial=0) <= 1e-8
    assert abs(c @ x - y @ b) <= 1e-7 * (1 + abs(c @ x))


def check_certificate(problem, sol):
    y = sol.certificate
    A, b = problem.eq_matrix, problem.eq_rhs
    assert y @ b > 0
    assert (y @ A <= 1e-9).all()


# --- examples ----------------------------------------------------------------


def test_one_constraint_lp():
    p = LpProblem([1, 1], [[1, 1]], [1])
    sol = solve_lp(p)
    assert sol.status is LpStatus.OPTIMAL and sol.objective_value == pytest.approx(1.0, abs=1e-12)
    assert sol.duals.tolist() == pytest.approx([1.0])
    check_optimal(p, sol)


def test_sign_infeasible_equality():
    p = LpProblem([0], [[1]], [-1])
    sol = solve_lp(p)
    assert sol.status is LpStatus.INFEASIBLE
    assert sol.certificate.tolist() == pytest.approx([-1.0])
    check_certificate(p, sol)


def test_bounded_ray():
    p = LpProblem([-1, 0], [[1, 1]], [2])
    sol = solve_lp(p)
    assert sol.objective_value == pytest.approx(-2.0)
    assert sol.primal[0] == pytest.approx(2.0)


def test_unbounded():
    sol = solve_lp(LpProblem([-1, 0], [[1, -1]], [1]))
    assert sol.status is LpStatus.UNBOUNDED and sol.objective_value == -np.inf


def test_free_variable():
    # min x1 s.t. x1 - x2 = -3 with x1 free, x2 >= 0 and x2 <= 5 via slack
    p = LpProblem([1, 0, 0], [[1, -1, 0], [0, 1, 1]], [-3, 5], var_lower=[-np.inf, 0, 0])
    sol = solve_lp(p)
    assert sol.primal[0] == pytest.approx(-3.0)
    check_optimal(p, sol)


def test_free_variable_unbounded():
    sol = solve_lp(LpProblem([1.0], np.zeros((1, 1)), [0.0], var_lower=[-np.inf]))
    assert sol.status is LpStatus.UNBOUNDED


def test_zero_row_problem():
    assert solve_lp(LpProblem([1.0, 2.0], np.zeros((0, 2)), [])).objective_value == 0.0
    assert solve_lp(LpProblem([-1.0], np.zeros((0, 1)), [])).status is LpStatus.UNBOUNDED


def test_degenerate_cycling_example():
    """Beale's cycling example in equality form: Bland fallback must terminate."""
    A = np.array([[0.25, -8, -1, 9, 1, 0, 0], [0.5, -12, -0.5, 3, 0, 1, 0], [0, 0, 1, 0, 0, 0, 1]])
    c = np.array([-0.75, 20, -0.5, 6, 0, 0, 0])
    p = LpProblem(c, A, [0, 0, 1])
    sol = solve_lp(p)
    assert sol.objective_value == pytest.approx(-1.25)
    check_optimal(p, sol)


def test_redundant_rows():
    p = LpProblem([1, 2, 0], [[1, 1, 1], [2, 2, 2]], [4, 8])
    sol = solve_lp(p)
    assert sol.objective_value == pytest.approx(0.0, abs=1e-12)
    assert np.allclose(p.eq_matrix @ sol.primal, p.eq_rhs)


def test_validation():
    with pytest.raises(ValueError):
        LpProblem([1, 2], [[1, 2, 3]], [1])
    with pytest.raises(ValueError):
        LpProblem([1], [[np.nan]], [1])
    with pytest.raises(ValueError):
        LpProblem([1], [[1]], [1, 2])
    with pytest.raises(ValueError):
        LpProblem([1], [[1]], [1], var_lower=[-1])
    with pytest.raises(ValueError):
        solve_lp(LpProblem([1], [[1]], [1]), method="nope")


def test_sparse_input_and_highs_agree():
    rng = np.random.default_rng(0)
    A = rng.integers(0, 4, size=(6, 12)).astype(float)
    b = A @ rng.uniform(0, 1, 12)
    c = rng.uniform(0.5, 2, 12)
    p = LpProblem(c, sp.csr_matrix(A), b)
    s1, s2 = solve_lp(p), solve_lp(p, method="highs")
    assert s1.objective_value == pytest.approx(s2.objective_value, rel=1e-9)


def test_determinism():
    rng = np.random.default_rng(3)
    A = rng.integers(-5, 6, size=(4, 7)).astype(float)
    b = A @ np.abs(rng.integers(0, 3, 7))
    p = LpProblem(rng.integers(-5, 6, 7), A, b)
    a, b2 = solve_lp(p), solve_lp(p)
    assert a.status == b2.status and np.array_equal(a.primal, b2.primal, equal_nan=True)


def test_breakdown_is_reported(monkeypatch):
    from apub import _kernels, lp

    monkeypatch.setattr(lp._kernels, "simplex", lambda *a: (_kernels.BREAKDOWN, None, None, 0.0, 3))
    with pytest.raises(NumericalBreakdown):
        solve_lp(LpProblem([1], [[1]], [1]))


# --- phase I -----------------------------------------------------------------


def test_phase1_examples():
    assert solve_phase1_feasibility([[1]], [3])[0] == pytest.approx(0.0)
    value, phi = solve_phase1_feasibility([[1]], [-2])
    assert value == pytest.approx(2.0)
    assert phi.tolist() == pytest.approx([-1.0])
    assert solve_phase1_feasibility([[1, 1]], [0])[0] == pytest.approx(0.0)


@given(seed=st.integers(0, 10 ** 6))
def test_phase1_consistency(seed):
    rng = np.random.default_rng(seed)
    m, k = rng.integers(1, 4), rng.integers(1, 5)
    W = rng.integers(-3, 4, size=(m, k)).astype(float)
    rhs = rng.integers(-4, 5, size=m).astype(float)
    value, phi = solve_phase1_feasibility(W, rhs)
    assert value >= -1e-12
    assert phi @ rhs == pytest.approx(value, abs=1e-9)
    status = solve_lp(LpProblem(np.zeros(k), W, rhs)).status
    assert (value <= 1e-9) == (status is LpStatus.OPTIMAL)


# --- random oracle comparison -----------------------------------------------


def random_lp(rng):
    n = int(rng.integers(2, 7))
    m = int(rng.integers(1, min(4, n - 1) + 1))
    A = rng.integers(-5, 6, size=(m, n)).astype(float)
    b = rng.integers(-5, 6, size=m).astype(float)
    c = rng.integers(-5, 6, size=n).astype(float)
    return A, b, c


def compare_with_oracle(A, b, c):
    """Returns the status label; asserts agreement with vertex enumeration/HiGHS."""
    p = LpProblem(c, A, b)
    sol = solve_lp(p)
    ref = linprog(c, A_eq=A, b_eq=b, bounds=[(0, None)] * len(c), method="highs")
    if np.linalg.matrix_rank(A) < A.shape[0]:
        # vertex enumeration needs full row rank; HiGHS alone decides
        if ref.status == 0:
            assert sol.status is LpStatus.OPTIMAL
            assert abs(sol.objective_value - ref.fun) <= 1e-8 * (1 + abs(ref.fun))
        return sol.status
    if ref.status == 3:
        assert sol.status is LpStatus.UNBOUNDED
        return sol.status
    kind, value = lp_by_vertex_enumeration(A, b, c)
    if kind == "infeasible":
        assert sol.status is LpStatus.INFEASIBLE
        check_certificate(p, sol)
    else:
        assert sol.status is LpStatus.OPTIMAL
        assert abs(sol.objective_value - value) <= 1e-8
        check_optimal(p, sol)
    return sol.status


def test_random_lps_against_vertex_enumeration():
    rng = np.random.default_rng(20240101)
    seen = set()
    for _ in range(300):
        seen.add(compare_with_oracle(*random_lp(rng)))
    assert seen == {LpStatus.OPTIMAL, LpStatus.INFEASIBLE, LpStatus.UNBOUNDED}


@given(seed=st.integers(0, 2 ** 32 - 1))
def test_random_lp_property(seed):
    compare_with_oracle(*random_lp(np.random.default_rng(seed)))
