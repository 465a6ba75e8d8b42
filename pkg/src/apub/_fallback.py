"""Pure numpy versions of the kernels in ``_core.pyx``.

Same signatures and the same algorithms. Integer outputs (raw stream words,
bootstrap counts) agree bit for bit with the compiled core; floating point
results agree up to summation order.
"""

import numpy as np

GOLDEN = np.uint64(0x9E3779B97F4A7C15)
MIX1 = np.uint64(0xBF58476D1CE4E5B9)
MIX2 = np.uint64(0x94D049BB133111EB)
TWO_M53 = 2.0 ** -53

OPTIMAL, INFEASIBLE, UNBOUNDED, BREAKDOWN, ITERATION_LIMIT = range(5)
REINVERT_EVERY = 64

_CHUNK = 1 << 20


def _mix64(z):
    z = (z ^ (z >> np.uint64(30))) * MIX1
    z = (z ^ (z >> np.uint64(27))) * MIX2
    return z ^ (z >> np.uint64(31))


def fill_uint64(key, counter, count):
    pos = np.arange(1, count + 1, dtype=np.uint64) + np.uint64(counter)
    return _mix64(np.uint64(key) + GOLDEN * pos)


def _indices(words, n):
    k = np.floor((words >> np.uint64(11)).astype(np.float64) * TWO_M53 * n).astype(np.int64)
    np.minimum(k, n - 1, out=k)
    return k


def bootstrap_counts(key, counter, n, m):
    out = np.zeros(m * n, dtype=np.int64)
    rows_per_chunk = max(1, _CHUNK // max(n, 1))
    for start in range(0, m, rows_per_chunk):
        rows = min(rows_per_chunk, m - start)
        words = fill_uint64(key, counter + start * n, rows * n)
        flat = _indices(words, n) + np.repeat(np.arange(start, start + rows) * n, n)
        out += np.bincount(flat, minlength=m * n)
    return out.reshape(m, n)


def bootstrap_means(key, counter, values, m):
    values = np.asarray(values, dtype=np.float64)
    n = values.shape[0]
    out = np.empty(m)
    rows_per_chunk = max(1, _CHUNK // max(n, 1))
    for start in range(0, m, rows_per_chunk):
        rows = min(rows_per_chunk, m - start)
        words = fill_uint64(key, counter + start * n, rows * n)
        out[start:start + rows] = values[_indices(words, n)].reshape(rows, n).sum(axis=1) / n
    return out


class _Breakdown(Exception):
    pass


class _Tableau:
    """Working state of one revised-simplex solve (basis inverse kept explicitly)."""

    def __init__(self, A, b):
        m, n = A.shape
        self.m, self.n = m, n
        self.sgn = np.where(b < 0, -1.0, 1.0)
        self.bw = np.abs(b)
        # columns of [sgn*A | I]
        self.cols = np.hstack([self.sgn[:, None] * A, np.eye(m)])
        self.basis = np.arange(n, n + m)
        self.isbasic = np.zeros(n + m, dtype=bool)
        self.isbasic[n:] = True
        self.cost = np.concatenate([np.zeros(n), np.ones(m)])
        self.reinvert()

    def reinvert(self):
        m = self.m
        B = self.cols[:, self.basis].copy()
        inv = np.eye(m)
        for k in range(m):
            p = k + int(np.argmax(np.abs(B[k:, k])))
            if abs(B[p, k]) < 1e-11:
                raise _Breakdown
            if p != k:
                B[[k, p]] = B[[p, k]]
                inv[[k, p]] = inv[[p, k]]
            f = B[k, k]
            B[k] /= f
            inv[k] /= f
            col = B[:, k].copy()
            col[k] = 0.0
            B -= np.outer(col, B[k])
            inv -= np.outer(col, inv[k])
        self.Binv = inv
        self.xB = inv @ self.bw

    def duals(self):
        return self.cost[self.basis] @ self.Binv

    def pivot(self, r, q, alpha):
        th = self.xB[r] / alpha[r]
        self.xB -= th * alpha
        self.xB[r] = th
        self.Binv[r] /= alpha[r]
        f = alpha.copy()
        f[r] = 0.0
        self.Binv -= np.outer(f, self.Binv[r])
        self.isbasic[self.basis[r]] = False
        self.basis[r] = q
        self.isbasic[q] = True

    def run_phase(self, opt_tol, piv_tol, bland_after, max_iter, iters):
        n = self.n
        A = self.cols[:, :n]
        since = 0
        while True:
            if iters[0] >= max_iter:
                return ITERATION_LIMIT
            if since >= REINVERT_EVERY:
                self.reinvert()
                since = 0
            y = self.duals()
            d = self.cost[:n] - y @ A
            d[self.isbasic[:n]] = 0.0
            bland = iters[0] >= bland_after
            cand = np.flatnonzero(d < -opt_tol)
            if cand.size == 0:
                return OPTIMAL
            q = int(cand[0]) if bland else int(np.argmin(d))
            alpha = self.Binv @ A[:, q]
            r = -1
            theta = np.inf
            for i in np.flatnonzero(alpha > piv_tol):
                ratio = max(self.xB[i], 0.0) / alpha[i]
                if r < 0 or ratio < theta - 1e-12 * (1.0 + theta):
                    r, theta = i, ratio
                elif ratio <= theta + 1e-12 * (1.0 + theta):
                    if bland:
                        if self.basis[i] < self.basis[r]:
                            r, theta = i, ratio
                    elif alpha[i] > alpha[r]:
                        r, theta = i, ratio
            if r < 0:
                return UNBOUNDED
            if self.xB[r] < 0.0:
                self.xB[r] = 0.0
            self.pivot(r, q, alpha)
            iters[0] += 1
            since += 1


def _simplex(A, b, c, piv_tol, feas_tol, opt_tol, phase1_opt_tol, bland_after, max_iter):
    m, n = A.shape
    x = np.zeros(n)
    y = np.zeros(m)
    iters = [0]
    t = _Tableau(A, b)
    status = t.run_phase(phase1_opt_tol, piv_tol, bland_after, max_iter, iters)
    if status != OPTIMAL:
        return (BREAKDOWN if status == UNBOUNDED else status), x, y, 0.0, iters[0]
    t.reinvert()
    infeas = float(t.xB[t.basis >= n].sum())
    bmax = float(t.bw.max()) if m else 0.0
    if infeas > feas_tol * (1.0 + bmax):
        y = t.sgn * t.duals()
        return INFEASIBLE, x, y, infeas, iters[0]

    A_w = t.cols[:, :n]
    for k in range(m):
        if t.basis[k] < n:
            continue
        row = t.Binv[k] @ A_w
        row[t.isbasic[:n]] = 0.0
        j = int(np.argmax(np.abs(row)))
        if abs(row[j]) > piv_tol:
            t.pivot(k, j, t.Binv @ A_w[:, j])
    t.reinvert()

    t.cost = np.concatenate([c, np.zeros(m)])
    status = t.run_phase(opt_tol, piv_tol, bland_after, max_iter, iters)
    if status != OPTIMAL:
        return status, x, y, 0.0, iters[0]
    t.reinvert()
    basic = t.basis < n
    vals = t.xB[basic].copy()
    vals[(vals < 0.0) & (vals > -feas_tol)] = 0.0
    x[t.basis[basic]] = vals
    y = t.sgn * t.duals()
    return OPTIMAL, x, y, float(c @ x), iters[0]


def simplex(A, b, c, piv_tol, feas_tol, opt_tol, phase1_opt_tol, bland_after, max_iter):
    """Solve min c'x s.t. Ax = b, x >= 0; returns ``(status, x, y, value, iterations)``."""
    A = np.asarray(A, dtype=np.float64)
    try:
        return _simplex(A, np.asarray(b, dtype=np.float64), np.asarray(c, dtype=np.float64),
                        piv_tol, feas_tol, opt_tol, phase1_opt_tol, bland_after, max_iter)
    except _Breakdown:
        m, n = A.shape
        return BREAKDOWN, np.zeros(n), np.zeros(m), 0.0, 0


def simplex_batch(A, b, c, piv_tol, feas_tol, opt_tol, phase1_opt_tol, bland_after, max_iter):
    S, m, n = A.shape
    status = np.zeros(S, dtype=np.int32)
    x = np.zeros((S, n))
    y = np.zeros((S, m))
    obj = np.zeros(S)
    for s in range(S):
        status[s], x[s], y[s], obj[s], _ = simplex(
            A[s], b[s], c[s], piv_tol, feas_tol, opt_tol, phase1_opt_tol, bland_after, max_iter)
    return status, x, y, obj
