"""Instance generators: the EV charging example, a product-mix planning
model with Gumbel-copula labor uncertainty, and small random two-stage LPs
for testing.

A generator holds the first-stage data and draws scenario batches from an
``RngStream``; ``problem(rng, n)`` wraps a draw into a ``TwoStageProblem``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from apub.model import ScenarioBatch, TwoStageProblem
from apub.sampling import GumbelMixtureSpec, RngStream, sample_scenario_mixture


class ScenarioSampler:
    c: np.ndarray
    A: np.ndarray
    b: np.ndarray
    name: str = "instance"

    def draw(self, rng: RngStream, count: int) -> ScenarioBatch:
        raise NotImplementedError

    def problem(self, rng: RngStream, count: int) -> TwoStageProblem:
        return TwoStageProblem(self.c, self.A, self.b, self.draw(rng, count), {"instance": self.name})

    @property
    def first_stage(self):
        return self.c, self.A, self.b


# ---------------------------------------------------------------------------
# EV charging


@dataclass
class EvChargingSampler(ScenarioSampler):
    """Buy x units of power in advance at unit price ``price`` (capacity
    ``capacity``); in operation, demand D is met by discounted purchases y
    at cost W per unit, limited by W y <= capacity - x, or by shortfall u at
    unit penalty ``shortage``.

    First stage (x, x_slack): x + x_slack = capacity.
    Second stage (y, u, s1, s2):  y + u - s1 = D - x,  W y + s2 = capacity - x.

    On a regular day (probability ``p_regular``) D ~ U(5, 15) and
    W ~ U(0.5, 1.2); otherwise both are doubled. Each scenario consumes
    three uniforms: regime, D, W.
    """

    price: float = 1.0
    capacity: float = 12.0
    shortage: float = 2.5
    p_regular: float = 0.7
    demand_range: tuple = (5.0, 15.0)
    cost_range: tuple = (0.5, 1.2)
    worst_factor: float = 2.0
    name: str = "ev"

    def __post_init__(self):
        self.c = np.array([self.price, 0.0])
        self.A = np.array([[1.0, 1.0]])
        self.b = np.array([self.capacity])

    def draw_parameters(self, rng: RngStream, count: int):
        """(D, W, regular) arrays of length ``count``."""
        u = rng.uniform(3 * count).reshape(count, 3)
        regular = u[:, 0] < self.p_regular
        scale = np.where(regular, 1.0, self.worst_factor)
        d_lo, d_hi = self.demand_range
        w_lo, w_hi = self.cost_range
        D = scale * (d_lo + (d_hi - d_lo) * u[:, 1])
        W = scale * (w_lo + (w_hi - w_lo) * u[:, 2])
        return D, W, regular

    def draw(self, rng: RngStream, count: int) -> ScenarioBatch:
        D, Wc, _ = self.draw_parameters(rng, count)
        q = np.zeros((count, 4))
        q[:, 0] = Wc
        q[:, 1] = self.shortage
        h = np.stack([D, np.full(count, self.capacity)], axis=1)
        T = np.broadcast_to(np.array([[1.0, 0.0], [1.0, 0.0]]), (count, 2, 2))
        W = np.zeros((count, 2, 4))
        W[:, 0, :3] = (1.0, 1.0, -1.0)
        W[:, 1, 0] = Wc
        W[:, 1, 3] = 1.0
        return ScenarioBatch(q, h, T, W)


def make_ev_instance(rng: RngStream | None = None, **params) -> EvChargingSampler:
    """EV charging sampler; ``rng`` is accepted for interface symmetry and unused
    because the instance itself has no random parameters."""
    return EvChargingSampler(**params)


# ---------------------------------------------------------------------------
# product mix


PRODUCT_MIX_STREAM = 0x5052_4F44  # stream id reserved for instance parameters


@dataclass
class ProductMixSampler(ScenarioSampler):
    """Contract production x_i <= upper_i at unit cost c_i (negative profit).

    Operations for a labor scenario xi = (h1, h2, q, w):

        min  sum_j q_j y_j
        s.t. w_j y_j + z_j >= sum_i t_ij x_i     (department j)
             sum_j z_j = h1                      (permanent staff)
             sum_j y_j <= h2                     (temporary staff)
             y, z >= 0

    Equality form: columns (y_1..J, z_1..J, surplus_1..J, temp slack), rows
    (J department rows, staff row, temp row), so h = (0, .., 0, h1, h2) and
    T = (-t', 0, 0). Scenario components are drawn as the vector
    (h1, h2, q_1..J, w_1..J) from a two-regime Gumbel-copula mixture.
    """

    cost: np.ndarray
    labor: np.ndarray          # t, shape (I, J)
    upper: np.ndarray
    spec: GumbelMixtureSpec
    name: str = "productmix"

    def __post_init__(self):
        n_i = self.cost.size
        self.c = np.concatenate([self.cost, np.zeros(n_i)])
        self.A = np.hstack([np.eye(n_i), np.eye(n_i)])
        self.b = self.upper.copy()

    @property
    def n_products(self) -> int:
        return self.labor.shape[0]

    @property
    def n_departments(self) -> int:
        return self.labor.shape[1]

    def recourse_shape(self) -> tuple[int, int]:
        J = self.n_departments
        return J + 2, 3 * J + 1

    def draw(self, rng: RngStream, count: int) -> ScenarioBatch:
        xi = sample_scenario_mixture(self.spec, rng, count)
        return self.scenarios_from_vectors(xi)

    def scenarios_from_vectors(self, xi: np.ndarray) -> ScenarioBatch:
        xi = np.atleast_2d(xi)
        count = xi.shape[0]
        I, J = self.labor.shape
        h1, h2 = xi[:, 0], xi[:, 1]
        qj, wj = xi[:, 2:2 + J], xi[:, 2 + J:2 + 2 * J]
        m2, n2 = self.recourse_shape()
        q = np.zeros((count, n2))
        q[:, :J] = qj
        h = np.zeros((count, m2))
        h[:, J], h[:, J + 1] = h1, h2
        T1 = np.zeros((m2, 2 * I))
        T1[:J, :I] = -self.labor.T
        T = np.broadcast_to(T1, (count, m2, 2 * I))
        W = np.zeros((count, m2, n2))
        dj = np.arange(J)
        W[:, dj, dj] = wj
        W[:, dj, J + dj] = 1.0
        W[:, dj, 2 * J + dj] = -1.0
        W[:, J, J:2 * J] = 1.0
        W[:, J + 1, :J] = 1.0
        W[:, J + 1, 3 * J] = 1.0
        return ScenarioBatch(q, h, T, W)


def make_product_mix_instance(n_products: int = 20, n_departments: int = 8, seed: int = 0,
                              **overrides) -> ProductMixSampler:
    """Deterministic product-mix generator.

    Parameters drawn from stream ``(seed, PRODUCT_MIX_STREAM)`` in this order:
    labor t_ij ~ U(0.1, 1.0) (I*J words, row-major), profit ~ U(20, 60)
    (I words), upper bound ~ U(5, 15) (I words). Scenario ranges scale with
    the total labor at the upper bounds, L = sum_ij t_ij u_i:

    ============  ===================  =====================
    component     regular (p = 0.8)    worst case
    ============  ===================  =====================
    h1            [0.30 L, 0.50 L]     [0.15 L, 0.30 L]
    h2            [2.2 L, 2.6 L]       [2.1 L, 2.4 L]
    q_j           [8, 14]              [14, 24]
    w_j           [0.8, 1.2]           [0.5, 0.9]
    Gumbel        lambda = 1.5         lambda = 3.0
    ============  ===================  =====================

    h2 >= 2.1 L > L / min(w) keeps every x with x_i <= u_i recourse-feasible.
    """
    if n_products < 1 or n_departments < 1:
        raise ValueError("dimensions must be positive")
    rng = RngStream(seed, PRODUCT_MIX_STREAM)
    I, J = n_products, n_departments
    labor = 0.1 + 0.9 * rng.uniform(I * J).reshape(I, J)
    profit = 20.0 + 40.0 * rng.uniform(I)
    upper = 5.0 + 10.0 * rng.uniform(I)
    L = float(upper @ labor.sum(axis=1))

    def bounds(h1, h2, q, w):
        return np.array([np.multiply(h1, L), np.multiply(h2, L)] + [q] * J + [w] * J)

    spec = GumbelMixtureSpec(
        p_regular=overrides.pop("p_regular", 0.8),
        lambda_regular=overrides.pop("lambda_regular", 1.5),
        lambda_worst=overrides.pop("lambda_worst", 3.0),
        bounds_regular=bounds((0.30, 0.50), (2.2, 2.6), (8.0, 14.0), (0.8, 1.2)),
        bounds_worst=bounds((0.15, 0.30), (2.1, 2.4), (14.0, 24.0), (0.5, 0.9)),
    )
    if overrides:
        raise TypeError(f"unknown parameters: {sorted(overrides)}")
    return ProductMixSampler(-profit, labor, upper, spec)


# ---------------------------------------------------------------------------
# random small instances


@dataclass
class RandomInstanceSampler(ScenarioSampler):
    """Small random two-stage LP with random recourse, used for testing.

    First stage: 0 <= x <= upper (box written with slacks), cost ``cost``.
    Second stage, per scenario:
      demand rows   W_d y - s = h_d - T_d x   (W_d > 0, q > 0: always feasible)
      capacity rows       s' = h_c - T_c x   (pure conditions on x, h_c > 0)
    Capacity rows make some first-stage points recourse-infeasible, so the
    decomposition has to generate feasibility cuts; x = 0 is always feasible.
    """

    cost: np.ndarray
    upper: np.ndarray
    n_demand: int
    n_capacity: int
    n_recourse: int
    name: str = "random"

    def __post_init__(self):
        d = self.cost.size
        self.c = np.concatenate([self.cost, np.zeros(d)])
        self.A = np.hstack([np.eye(d), np.eye(d)])
        self.b = self.upper.copy()

    def draw(self, rng: RngStream, count: int) -> ScenarioBatch:
        d = self.cost.size
        md, mc, k = self.n_demand, self.n_capacity, self.n_recourse
        m2, n2 = md + mc, k + md + mc
        q = np.zeros((count, n2))
        q[:, :k] = 0.5 + 2.0 * rng.uniform(count * k).reshape(count, k)
        W = np.zeros((count, m2, n2))
        W[:, :md, :k] = 0.2 + 1.8 * rng.uniform(count * md * k).reshape(count, md, k)
        W[:, np.arange(md), k + np.arange(md)] = -1.0
        W[:, md + np.arange(mc), k + md + np.arange(mc)] = 1.0
        h = np.empty((count, m2))
        h[:, :md] = rng.uniform(count * md).reshape(count, md)
        h[:, md:] = 1.0 + 5.0 * rng.uniform(count * mc).reshape(count, mc)
        T = np.zeros((count, m2, 2 * d))
        T[:, :md, :d] = -2.0 + 2.5 * rng.uniform(count * md * d).reshape(count, md, d)
        T[:, md:, :d] = 1.5 * rng.uniform(count * mc * d).reshape(count, mc, d)
        return ScenarioBatch(q, h, T, W)


def make_random_instance(rng: RngStream, n_first: int | None = None) -> RandomInstanceSampler:
    """Random instance shape and first-stage data drawn from ``rng``."""
    u = rng.uniform(4)
    d = n_first if n_first is not None else 1 + int(u[0] * 4)
    n_demand = 1 + int(u[1] * 2)
    n_capacity = int(u[2] * 3)
    n_recourse = 1 + int(u[3] * 3)
    cost = -3.0 + 6.0 * rng.uniform(d)
    upper = 1.0 + 4.0 * rng.uniform(d)
    return RandomInstanceSampler(cost, upper, n_demand, n_capacity, n_recourse)
