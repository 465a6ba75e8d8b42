"""Seeded random streams and the samplers built on them.

The generator is SplitMix64 run in counter mode; the exact state layout and
the order in which each sampler consumes stream words is documented in
``docs/rng.md`` so that other implementations can replay the same draws.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from apub import _kernels

MASK64 = (1 << 64) - 1
GOLDEN = 0x9E3779B97F4A7C15
SPAWN_SALT = 0xD1B54A32D192ED03
TWO_M53 = 2.0 ** -53


def mix64(z: int) -> int:
    """SplitMix64 finalizer on a Python int (mod 2**64)."""
    z &= MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK64
    return z ^ (z >> 31)


def stream_key(seed: int, stream_id: int) -> int:
    return mix64(mix64(seed + GOLDEN) + GOLDEN * (stream_id + 1))


class RngStream:
    """Counter-based 64-bit stream identified by ``(seed, stream_id)``.

    Output word ``i`` is ``mix64(key + GOLDEN * (i + 1))``; the counter
    records how many words have been consumed. Streams are owned values and
    must not be shared between threads.
    """

    def __init__(self, seed: int, stream_id: int = 0):
        self.seed = int(seed) & MASK64
        self.stream_id = int(stream_id)
        self.key = stream_key(self.seed, self.stream_id)
        self.counter = 0

    @classmethod
    def _from_key(cls, key: int, seed: int, stream_id: int) -> "RngStream":
        s = cls.__new__(cls)
        s.seed, s.stream_id, s.key, s.counter = seed, stream_id, key, 0
        return s

    def __repr__(self):
        return f"RngStream(seed={self.seed}, stream_id={self.stream_id}, counter={self.counter})"

    def spawn(self, child: int) -> "RngStream":
        """Independent child stream; does not advance this stream."""
        key = mix64(mix64(self.key ^ SPAWN_SALT) + GOLDEN * (int(child) + 1))
        return RngStream._from_key(key, self.seed, self.stream_id)

    def _take(self, count: int) -> int:
        start = self.counter
        self.counter += count
        return start

    def words(self, count: int) -> np.ndarray:
        return _kernels.fill_uint64(self.key, self._take(count), count)

    def uniform(self, count: int) -> np.ndarray:
        """Uniforms on [0, 1) with 53 random bits."""
        return (self.words(count) >> np.uint64(11)).astype(np.float64) * TWO_M53

    def uniform_open(self, count: int) -> np.ndarray:
        """Uniforms on (0, 1): midpoints of the 2**-53 grid."""
        return ((self.words(count) >> np.uint64(11)).astype(np.float64) + 0.5) * TWO_M53

    def integers(self, n: int, count: int) -> np.ndarray:
        k = np.floor(self.uniform(count) * n).astype(np.int64)
        return np.minimum(k, n - 1)

    def normal(self, count: int) -> np.ndarray:
        """Box-Muller, cosine branch only; two words per variate."""
        u = self.words(2 * count)
        u1 = ((u[0::2] >> np.uint64(11)).astype(np.float64) + 0.5) * TWO_M53
        u2 = (u[1::2] >> np.uint64(11)).astype(np.float64) * TWO_M53
        return np.sqrt(-2.0 * np.log(u1)) * np.cos(2.0 * np.pi * u2)

    def exponential(self, count: int) -> np.ndarray:
        return -np.log(self.uniform_open(count))

    def gamma(self, shape: float, scale: float, count: int) -> np.ndarray:
        return sample_gamma(shape, scale, self, count)


def derive_substream(master_seed: int, replication: int) -> RngStream:
    return RngStream(master_seed, replication)


# ---------------------------------------------------------------------------
# bootstrap weights


@dataclass(frozen=True)
class BootstrapWeights:
    """Resample counts (V_1, ..., V_N) of one bootstrap draw."""

    counts: np.ndarray

    def __post_init__(self):
        counts = np.asarray(self.counts, dtype=np.int64)
        if counts.ndim != 1 or counts.size == 0:
            raise ValueError("counts must be a nonempty vector")
        if (counts < 0).any() or int(counts.sum()) != counts.size:
            raise ValueError("bootstrap counts must be nonnegative and sum to N")
        object.__setattr__(self, "counts", counts)

    @property
    def n(self) -> int:
        return self.counts.size


def draw_bootstrap_weights(n: int, rng: RngStream) -> BootstrapWeights:
    """One multinomial(n; 1/n, ..., 1/n) draw: n uniform indices, tallied."""
    if n < 1:
        raise ValueError("n must be >= 1")
    counts = _kernels.bootstrap_counts(rng.key, rng._take(n), n, 1)[0]
    return BootstrapWeights(counts)


def draw_weight_matrix(n: int, m: int, rng: RngStream) -> np.ndarray:
    """M bootstrap draws stacked as an (M, N) count matrix.

    Row ``r`` equals the r-th of M successive ``draw_bootstrap_weights`` calls.
    """
    if n < 1 or m < 1:
        raise ValueError("n and m must be >= 1")
    return _kernels.bootstrap_counts(rng.key, rng._take(n * m), n, m)


def bootstrap_means(values, m: int, rng: RngStream) -> np.ndarray:
    """Means of M resamples of ``values``; same stream use as ``draw_weight_matrix``."""
    values = np.ascontiguousarray(values, dtype=np.float64)
    n = values.size
    return _kernels.bootstrap_means(rng.key, rng._take(n * m), values, m)


# ---------------------------------------------------------------------------
# continuous distributions


def sample_gamma(shape: float, scale: float, rng: RngStream, count: int | None = None):
    """Marsaglia-Tsang squeeze sampler, vectorised in rounds.

    Each round draws, for every still-pending variate in index order, one
    normal (two words) and then one acceptance uniform. Shapes below one use
    the boost ``G(a) = G(a + 1) * U**(1/a)`` with one extra word per variate.
    """
    if shape <= 0 or scale <= 0:
        raise ValueError("shape and scale must be positive")
    if count is None:
        return float(sample_gamma(shape, scale, rng, 1)[0])
    a = shape + 1.0 if shape < 1.0 else float(shape)
    d = a - 1.0 / 3.0
    c = 1.0 / math.sqrt(9.0 * d)
    out = np.empty(count)
    pending = np.arange(count)
    while pending.size:
        p = pending.size
        z = rng.normal(p)
        u = rng.uniform_open(p)
        v = (1.0 + c * z) ** 3
        ok = v > 0
        logv = np.log(np.where(ok, v, 1.0))
        accept = ok & (np.log(u) < 0.5 * z * z + d - d * v + d * logv)
        out[pending[accept]] = d * v[accept]
        pending = pending[~accept]
    if shape < 1.0:
        out *= rng.uniform_open(count) ** (1.0 / shape)
    return out * scale


def _positive_stable(index: float, u_angle: np.ndarray, u_exp: np.ndarray) -> np.ndarray:
    """Positive stable variates with Laplace transform exp(-s**index), 0 < index < 1.

    Chambers-Mallows-Stuck in Kanter's form from one angle uniform and one
    exponential.
    """
    theta = np.pi * u_angle
    e = -np.log(u_exp)
    a = index
    return (np.sin(a * theta) / np.sin(theta) ** (1.0 / a)) * \
        (np.sin((1.0 - a) * theta) / e) ** ((1.0 - a) / a)


def _gumbel_from_uniforms(u: np.ndarray, lam: np.ndarray) -> np.ndarray:
    """Marshall-Olkin construction on a (k, dim + 2) block of open uniforms.

    Columns 0 and 1 drive the stable frailty, the rest the exponentials.
    Rows with ``lam == 1`` return columns 2.. unchanged (independence copula).
    """
    lam = np.broadcast_to(np.asarray(lam, dtype=np.float64), (u.shape[0],))
    out = u[:, 2:].copy()
    dep = lam > 1.0
    for value in np.unique(lam[dep]):
        rows = lam == value
        s = _positive_stable(1.0 / value, u[rows, 0], u[rows, 1])
        e = -np.log(u[rows, 2:])
        out[rows] = np.exp(-(e / s[:, None]) ** (1.0 / value))
    return out


def sample_gumbel_copula(dim: int, lam: float, rng: RngStream, count: int | None = None) -> np.ndarray:
    """Draw points of the Gumbel copula with parameter ``lam >= 1``.

    Returns shape ``(count, dim)``, or a single ``(dim,)`` vector when
    ``count`` is None. Each draw consumes ``dim + 2`` words
    (the first two are ignored when ``lam == 1``).
    """
    if lam < 1.0:
        raise ValueError("Gumbel copula parameter must be >= 1")
    k = 1 if count is None else count
    u = rng.uniform_open(k * (dim + 2)).reshape(k, dim + 2)
    out = _gumbel_from_uniforms(u, lam)
    return out[0] if count is None else out


@dataclass(frozen=True)
class GumbelMixtureSpec:
    """Two-regime distribution with Gumbel-copula dependence inside each regime.

    ``bounds_regular`` and ``bounds_worst`` are ``(dim, 2)`` arrays of
    per-coordinate (lower, upper) pairs for the concatenated (h, q, w).
    """

    p_regular: float
    lambda_regular: float
    lambda_worst: float
    bounds_regular: np.ndarray = field(repr=False)
    bounds_worst: np.ndarray = field(repr=False)

    def __post_init__(self):
        br = np.asarray(self.bounds_regular, dtype=np.float64)
        bw = np.asarray(self.bounds_worst, dtype=np.float64)
        if br.ndim != 2 or br.shape[1] != 2 or br.shape != bw.shape:
            raise ValueError("bounds must be matching (dim, 2) arrays")
        if not (br[:, 0] < br[:, 1]).all() or not (bw[:, 0] < bw[:, 1]).all():
            raise ValueError("lower bound must be below upper bound")
        if not 0.0 <= self.p_regular <= 1.0:
            raise ValueError("p_regular must lie in [0, 1]")
        if self.lambda_regular < 1.0 or self.lambda_worst < 1.0:
            raise ValueError("Gumbel parameters must be >= 1")
        object.__setattr__(self, "bounds_regular", br)
        object.__setattr__(self, "bounds_worst", bw)

    @property
    def dim(self) -> int:
        return self.bounds_regular.shape[0]


def sample_scenario_mixture(spec: GumbelMixtureSpec, rng: RngStream, count: int | None = None,
                            return_regime: bool = False):
    """Draw (h, q, w) vectors from the two-regime mixture.

    Word layout: ``count`` regime uniforms, then a ``(count, dim + 2)`` block
    of copula uniforms. With ``count=None`` a single vector is returned.
    """
    if count is None:
        draws, regular = sample_scenario_mixture(spec, rng, 1, return_regime=True)
        return (draws[0], bool(regular[0])) if return_regime else draws[0]
    regular = rng.uniform(count) < spec.p_regular
    u = rng.uniform_open(count * (spec.dim + 2)).reshape(count, spec.dim + 2)
    lam = np.where(regular, spec.lambda_regular, spec.lambda_worst)
    cop = _gumbel_from_uniforms(u, lam)
    lo = np.where(regular[:, None], spec.bounds_regular[:, 0], spec.bounds_worst[:, 0])
    hi = np.where(regular[:, None], spec.bounds_regular[:, 1], spec.bounds_worst[:, 1])
    draws = lo + cop * (hi - lo)
    if return_regime:
        return draws, regular
    return draws
