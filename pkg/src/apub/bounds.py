"""Upper confidence bounds for a mean: the average percentile upper bound
(APUB), Efron's percentile bound and the normal large-sample bound, plus the
finite-sample VaR/CVaR routines they are built on.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np

from apub.errors import EnumerationTooLarge
from apub.sampling import RngStream, bootstrap_means

ENUMERATION_CAP = 8
N_BATCHES = 20


@dataclass(frozen=True)
class SampleSet:
    """Observed costs F(xi_1), ..., F(xi_N)."""

    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=np.float64).ravel()
        if v.size == 0:
            raise ValueError("a sample needs at least one value")
        if not np.isfinite(v).all():
            raise ValueError("sample values must be finite")
        object.__setattr__(self, "values", v)

    @property
    def n(self) -> int:
        return self.values.size

    @property
    def mean(self) -> float:
        return float(self.values.mean())

    @property
    def std(self) -> float:
        """Divide-by-N standard deviation."""
        return float(self.values.std())


@dataclass(frozen=True)
class ApubEstimate:
    value: float
    alpha: float
    n_bootstrap: int
    std_error: float = 0.0

    def to_dict(self) -> dict:
        return {"value": self.value, "alpha": self.alpha,
                "n_bootstrap": self.n_bootstrap, "std_error": self.std_error}


def _as_sample(sample) -> SampleSet:
    return sample if isinstance(sample, SampleSet) else SampleSet(sample)


def _check_alpha(alpha, open_right=False):
    if not (0.0 < alpha < 1.0 if open_right else 0.0 < alpha <= 1.0):
        interval = "(0, 1)" if open_right else "(0, 1]"
        raise ValueError(f"alpha must lie in {interval}, got {alpha}")


def ceil_index(x: float) -> int:
    """Ceiling that ignores float noise just above an integer."""
    return math.ceil(x - 1e-9 * max(1.0, abs(x)))


def tail_index(m: int, alpha: float) -> int:
    """J = ceil((1 - alpha) M), the 1-based position of the percentile cutoff."""
    return min(m, max(0, ceil_index((1.0 - alpha) * m)))


def tail_weights(m: int, alpha: float) -> np.ndarray:
    """Weights on the ascending order statistics r_(1) <= ... <= r_(M).

    Zero below position J, ``1 - (M - J)/(alpha M)`` at J and
    ``1/(alpha M)`` above it. At alpha = 1 (J = 0) all M weights are 1/M.
    """
    _check_alpha(alpha)
    j = tail_index(m, alpha)
    w = np.zeros(m)
    w[j:] = 1.0 / (alpha * m)
    if j > 0:
        w[j - 1] = 1.0 - (m - j) / (alpha * m)
    return w


def cvar_of_samples(values, alpha: float) -> float:
    """CVaR at level alpha of the empirical distribution of ``values``.

    Equal to ``min_t t + sum((values - t)_+) / (alpha M)``.
    """
    _check_alpha(alpha)
    v = np.sort(np.asarray(values, dtype=np.float64).ravel(), kind="stable")
    if v.size == 0:
        raise ValueError("need at least one value")
    w = tail_weights(v.size, alpha)
    nz = w != 0.0
    return float(w[nz] @ v[nz])


def var_of_samples(values, alpha: float) -> float:
    """Empirical (1 - alpha)-quantile: inf{t : F_M(t) >= 1 - alpha}."""
    _check_alpha(alpha, open_right=True)
    v = np.sort(np.asarray(values, dtype=np.float64).ravel())
    if v.size == 0:
        raise ValueError("need at least one value")
    j = max(1, tail_index(v.size, alpha))
    return float(v[j - 1])


def multinomial_pmf(n: int, counts) -> float:
    """P(V = counts) for V ~ Multinomial(n; 1/n, ..., 1/n), via log-gamma."""
    counts = np.asarray(getattr(counts, "counts", counts), dtype=np.int64)
    if counts.size != n or (counts < 0).any() or int(counts.sum()) != n:
        raise ValueError("counts must be n nonnegative integers summing to n")
    log_p = math.lgamma(n + 1) - n * math.log(n) - sum(math.lgamma(int(c) + 1) for c in counts)
    return math.exp(log_p)


def multinomial_support(n: int) -> np.ndarray:
    """All C(2n-1, n) count vectors of the bootstrap multinomial, one per row."""
    rows = []
    for bars in itertools.combinations(range(2 * n - 1), n - 1):
        prev = -1
        row = []
        for b in bars:
            row.append(b - prev - 1)
            prev = b
        row.append(2 * n - 2 - prev)
        rows.append(row)
    return np.asarray(rows, dtype=np.int64)


def weighted_cvar(atoms, probs, alpha: float) -> float:
    """CVaR of a discrete distribution, evaluated at its VaR minimiser."""
    atoms = np.asarray(atoms, dtype=np.float64)
    probs = np.asarray(probs, dtype=np.float64)
    order = np.argsort(atoms, kind="stable")
    atoms, probs = atoms[order], probs[order]
    cum = np.cumsum(probs)
    k = int(np.searchsorted(cum, (1.0 - alpha) * cum[-1] - 1e-12, side="left"))
    t = atoms[min(k, atoms.size - 1)]
    return float(t + (probs @ np.maximum(atoms - t, 0.0)) / (alpha * cum[-1]))


def apub_exact(sample, alpha: float, cap: int = ENUMERATION_CAP) -> ApubEstimate:
    """APUB by enumerating every bootstrap resample with its multinomial weight."""
    _check_alpha(alpha)
    s = _as_sample(sample)
    n = s.n
    if n > cap:
        raise EnumerationTooLarge(f"N={n} exceeds the enumeration cap {cap} "
                                  f"({math.comb(2 * n - 1, n)} support points)")
    support = multinomial_support(n)
    log_p = (math.lgamma(n + 1) - n * math.log(n)
             - np.array([sum(math.lgamma(int(c) + 1) for c in row) for row in support]))
    probs = np.exp(log_p)
    means = support @ s.values / n
    return ApubEstimate(weighted_cvar(means, probs, alpha), alpha, 0, 0.0)


def _batch_se(r: np.ndarray, stat) -> float:
    m = r.size
    nb = min(N_BATCHES, m // 2)
    if nb < 2:
        return math.inf
    size = m // nb
    vals = np.array([stat(r[i * size:(i + 1) * size]) for i in range(nb)])
    return float(vals.std(ddof=1) / math.sqrt(nb))


def apub_bootstrap(sample, alpha: float, m_bootstrap: int, rng: RngStream) -> ApubEstimate:
    """Bootstrap approximation: CVaR of M resampled means.

    ``std_error`` is a batch-means estimate over 20 equal batches.
    """
    _check_alpha(alpha)
    if m_bootstrap < 2:
        raise ValueError("m_bootstrap must be >= 2")
    s = _as_sample(sample)
    r = bootstrap_means(s.values, m_bootstrap, rng)
    return apub_from_means(r, alpha)


def apub_from_means(r: np.ndarray, alpha: float) -> ApubEstimate:
    value = cvar_of_samples(r, alpha)
    se = _batch_se(r, lambda b: cvar_of_samples(b, alpha))
    return ApubEstimate(value, alpha, r.size, se)


def efron_bootstrap(sample, alpha: float, m_bootstrap: int, rng: RngStream) -> float:
    """Efron's percentile bound: the (1 - alpha)-quantile of M resampled means."""
    _check_alpha(alpha, open_right=True)
    if m_bootstrap < 2:
        raise ValueError("m_bootstrap must be >= 2")
    s = _as_sample(sample)
    return var_of_samples(bootstrap_means(s.values, m_bootstrap, rng), alpha)


# Acklam's rational approximation to the normal quantile
_A = (-3.969683028665376e+01, 2.209460984245205e+02, -2.759285104469687e+02,
      1.383577518672690e+02, -3.066479806614716e+01, 2.506628277459239e+00)
_B = (-5.447609879822406e+01, 1.615858368580409e+02, -1.556989798598866e+02,
      6.680131188771972e+01, -1.328068155288572e+01)
_C = (-7.784894002430293e-03, -3.223964580411365e-01, -2.400758277161838e+00,
      -2.549732539343734e+00, 4.374664141464968e+00, 2.938163982698783e+00)
_D = (7.784695709041462e-03, 3.224671290700398e-01, 2.445134137142996e+00,
      3.754408661907416e+00)
_P_LOW = 0.02425


def normal_quantile(p: float) -> float:
    """Inverse standard normal CDF; rational start plus one Halley step."""
    if not 0.0 < p < 1.0:
        raise ValueError("p must lie in (0, 1)")
    if p < _P_LOW:
        q = math.sqrt(-2.0 * math.log(p))
        x = ((((((_C[0] * q + _C[1]) * q + _C[2]) * q + _C[3]) * q + _C[4]) * q + _C[5])
             / ((((_D[0] * q + _D[1]) * q + _D[2]) * q + _D[3]) * q + 1.0))
    elif p <= 1.0 - _P_LOW:
        q = p - 0.5
        r = q * q
        x = ((((((_A[0] * r + _A[1]) * r + _A[2]) * r + _A[3]) * r + _A[4]) * r + _A[5]) * q
             / (((((_B[0] * r + _B[1]) * r + _B[2]) * r + _B[3]) * r + _B[4]) * r + 1.0))
    else:
        q = math.sqrt(-2.0 * math.log(1.0 - p))
        x = -((((((_C[0] * q + _C[1]) * q + _C[2]) * q + _C[3]) * q + _C[4]) * q + _C[5])
              / ((((_D[0] * q + _D[1]) * q + _D[2]) * q + _D[3]) * q + 1.0))
    e = 0.5 * math.erfc(-x / math.sqrt(2.0)) - p
    u = e * math.sqrt(2.0 * math.pi) * math.exp(0.5 * x * x)
    return x - u / (1.0 + 0.5 * x * u)


def normal_ucb(sample, alpha: float) -> float:
    """mean + z_{1-alpha} * sigma / sqrt(N), sigma with divisor N."""
    _check_alpha(alpha, open_right=True)
    s = _as_sample(sample)
    if s.n < 2:
        raise ValueError("the normal bound needs N >= 2")
    return s.mean + normal_quantile(1.0 - alpha) * s.std / math.sqrt(s.n)
