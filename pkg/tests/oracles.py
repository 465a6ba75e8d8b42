"""Independent reference computations used as test oracles.

Each oracle recomputes a quantity from its mathematical definition without
going through the code under test.
"""

from __future__ import annotations

import itertools
import math
from fractions import Fraction

import numpy as np


def cvar_by_minimization(values, alpha):
    """min_t t + sum((v - t)_+) / (alpha M), minimising over t in the sample (exact for a
    piecewise-linear convex function with breakpoints at the sample points)."""
    v = np.asarray(values, dtype=np.float64)
    m = v.size
    return min(t + np.maximum(v - t, 0.0).sum() / (alpha * m) for t in v)


def quantile_by_cdf_scan(values, alpha):
    """inf{t : #{v <= t} / M >= 1 - alpha}, scanning candidate t in sorted order with
    exact rational arithmetic for the level."""
    v = sorted(values)
    m = len(v)
    level = 1 - Fraction(alpha).limit_denominator(10 ** 12)
    for t in v:
        if Fraction(sum(1 for w in v if w <= t), m) >= level:
            return t
    return v[-1]


def exact_bootstrap_distribution(sample):
    """Atoms (resample means) and probabilities of the exact bootstrap distribution,
    enumerating all N**N ordered resamples (tiny N only)."""
    n = len(sample)
    atoms = {}
    for idx in itertools.product(range(n), repeat=n):
        mean = sum(sample[i] for i in idx) / n
        atoms[mean] = atoms.get(mean, 0) + 1
    keys = sorted(atoms)
    total = n ** n
    return np.array(keys), np.array([atoms[k] / total for k in keys])


def cvar_discrete_by_minimization(atoms, probs, alpha):
    return min(t + float(probs @ np.maximum(atoms - t, 0.0)) / alpha for t in atoms)


def gamma_by_combinations(r, alpha):
    """max over combination sets: one element i1 with weight 1 - (M-J)/(alpha M) plus
    M - J other elements with weight 1/(alpha M) each."""
    r = np.asarray(r, dtype=np.float64)
    m = r.size
    j = math.ceil((1 - alpha) * m - 1e-9)
    lead = 1 - (m - j) / (alpha * m)
    best = -np.inf
    count = 0
    for i1 in range(m):
        others = [i for i in range(m) if i != i1]
        for subset in itertools.combinations(others, m - j):
            count += 1
            best = max(best, lead * r[i1] + r[list(subset)].sum() / (alpha * m))
    assert count == m * math.comb(m - 1, m - j)
    return best


def lp_by_vertex_enumeration(A, b, c, tol=1e-9):
    """min c'x s.t. Ax = b, x >= 0 by enumerating every basis.

    Returns ("optimal", value) over basic feasible solutions, or ("infeasible", None).
    Boundedness is not decided here (callers pair this with a ray check).
    """
    A = np.asarray(A, dtype=np.float64)
    m, n = A.shape
    best = None
    for cols in itertools.combinations(range(n), m):
        B = A[:, cols]
        if abs(np.linalg.det(B)) < 1e-12:
            continue
        xb = np.linalg.solve(B, b)
        if (xb < -tol).any():
            continue
        value = float(np.asarray(c)[list(cols)] @ xb)
        best = value if best is None else min(best, value)
    return ("infeasible", None) if best is None else ("optimal", best)


def recourse_by_scipy(q, W, rhs):
    """Recourse LP value via scipy HiGHS, or None when infeasible."""
    from scipy.optimize import linprog

    res = linprog(q, A_eq=W, b_eq=rhs, bounds=[(0, None)] * len(q), method="highs")
    return float(res.fun) if res.status == 0 else None
