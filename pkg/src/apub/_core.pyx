# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled kernels: SplitMix64 stream, bootstrap tallies and a dense
two-phase revised simplex.

Every function here has a numpy twin in ``apub._fallback`` with the same
signature and the same algorithm; ``apub._kernels`` picks one at import.
"""

import numpy as np

from libc.math cimport fabs, floor, INFINITY
from libc.stdint cimport uint64_t, int64_t
from libc.stdlib cimport malloc, free

cdef uint64_t GOLDEN = 0x9E3779B97F4A7C15
cdef uint64_t MIX1 = 0xBF58476D1CE4E5B9
cdef uint64_t MIX2 = 0x94D049BB133111EB
cdef double TWO_M53 = 1.1102230246251565e-16  # 2**-53

DEF OPTIMAL = 0
DEF INFEASIBLE = 1
DEF UNBOUNDED = 2
DEF BREAKDOWN = 3
DEF ITERATION_LIMIT = 4
DEF REINVERT_EVERY = 64


cdef inline uint64_t mix64(uint64_t z) noexcept nogil:
    z = (z ^ (z >> 30)) * MIX1
    z = (z ^ (z >> 27)) * MIX2
    return z ^ (z >> 31)


cdef inline int64_t draw_index(uint64_t z, int64_t n) noexcept nogil:
    cdef int64_t k = <int64_t>floor(<double>(z >> 11) * TWO_M53 * n)
    if k >= n:
        k = n - 1
    return k


def fill_uint64(uint64_t key, uint64_t counter, Py_ssize_t count):
    out = np.empty(count, dtype=np.uint64)
    cdef uint64_t[::1] o = out
    cdef Py_ssize_t i
    with nogil:
        for i in range(count):
            o[i] = mix64(key + GOLDEN * (counter + <uint64_t>i + 1))
    return out


def bootstrap_counts(uint64_t key, uint64_t counter, Py_ssize_t n, Py_ssize_t m):
    out = np.zeros((m, n), dtype=np.int64)
    cdef int64_t[:, ::1] o = out
    cdef Py_ssize_t r, k
    cdef uint64_t pos = counter
    with nogil:
        for r in range(m):
            for k in range(n):
                pos += 1
                o[r, draw_index(mix64(key + GOLDEN * pos), n)] += 1
    return out


def bootstrap_means(uint64_t key, uint64_t counter, const double[::1] values, Py_ssize_t m):
    cdef Py_ssize_t n = values.shape[0]
    out = np.empty(m, dtype=np.float64)
    cdef double[::1] o = out
    cdef Py_ssize_t r, k
    cdef uint64_t pos = counter
    cdef double acc
    with nogil:
        for r in range(m):
            acc = 0.0
            for k in range(n):
                pos += 1
                acc += values[draw_index(mix64(key + GOLDEN * pos), n)]
            o[r] = acc / n
    return out


# ---------------------------------------------------------------------------
# dense revised simplex with an explicit basis inverse

cdef struct Work:
    int m
    int n
    double* AwT      # n x m, column j of the sign-normalised matrix at AwT[j*m]
    double* bw       # m, |b|
    double* sgn      # m
    double* Binv     # m x m row-major
    double* Bmat     # m x m scratch for reinversion
    double* xB       # m
    double* cost     # n + m
    double* y        # m
    double* alpha    # m
    int* basis       # m
    char* isbasic    # n + m


cdef struct Params:
    double piv_tol
    double feas_tol
    double opt_tol
    double phase1_opt_tol
    long bland_after
    long max_iter


cdef inline void column(Work* w, int j, double* out) noexcept nogil:
    cdef int i
    if j < w.n:
        for i in range(w.m):
            out[i] = w.AwT[j * w.m + i]
    else:
        for i in range(w.m):
            out[i] = 0.0
        out[j - w.n] = 1.0


cdef int reinvert(Work* w) noexcept nogil:
    cdef int m = w.m
    cdef int i, k, r, p
    cdef double best, v, f
    cdef double* B = w.Bmat
    cdef double* Inv = w.Binv
    for k in range(m):
        column(w, w.basis[k], w.alpha)
        for i in range(m):
            B[i * m + k] = w.alpha[i]
    for i in range(m * m):
        Inv[i] = 0.0
    for i in range(m):
        Inv[i * m + i] = 1.0
    for k in range(m):
        p = k
        best = fabs(B[k * m + k])
        for i in range(k + 1, m):
            v = fabs(B[i * m + k])
            if v > best:
                best = v
                p = i
        if best < 1e-11:
            return BREAKDOWN
        if p != k:
            for r in range(m):
                v = B[k * m + r]; B[k * m + r] = B[p * m + r]; B[p * m + r] = v
                v = Inv[k * m + r]; Inv[k * m + r] = Inv[p * m + r]; Inv[p * m + r] = v
        f = B[k * m + k]
        for r in range(m):
            B[k * m + r] /= f
            Inv[k * m + r] /= f
        for i in range(m):
            if i == k:
                continue
            f = B[i * m + k]
            if f != 0.0:
                for r in range(m):
                    B[i * m + r] -= f * B[k * m + r]
                    Inv[i * m + r] -= f * Inv[k * m + r]
    for i in range(m):
        v = 0.0
        for k in range(m):
            v += Inv[i * m + k] * w.bw[k]
        w.xB[i] = v
    return OPTIMAL


cdef void compute_duals(Work* w) noexcept nogil:
    cdef int m = w.m
    cdef int i, k
    cdef double v
    for i in range(m):
        w.y[i] = 0.0
    for k in range(m):
        v = w.cost[w.basis[k]]
        if v != 0.0:
            for i in range(m):
                w.y[i] += v * w.Binv[k * m + i]


cdef void pivot(Work* w, int r, int q) noexcept nogil:
    cdef int m = w.m
    cdef int i, k
    cdef double piv = w.alpha[r]
    cdef double th = w.xB[r] / piv
    cdef double f
    for i in range(m):
        w.xB[i] -= th * w.alpha[i]
    w.xB[r] = th
    for k in range(m):
        w.Binv[r * m + k] /= piv
    for i in range(m):
        if i == r:
            continue
        f = w.alpha[i]
        if f != 0.0:
            for k in range(m):
                w.Binv[i * m + k] -= f * w.Binv[r * m + k]
    w.isbasic[w.basis[r]] = 0
    w.basis[r] = q
    w.isbasic[q] = 1


cdef int run_phase(Work* w, Params* p, double opt_tol, long* iters) noexcept nogil:
    cdef int m = w.m
    cdef int n = w.n
    cdef int i, j, k, q, r
    cdef long since = 0
    cdef double dj, best, ratio, theta, xi
    cdef bint bland
    while True:
        if iters[0] >= p.max_iter:
            return ITERATION_LIMIT
        if since >= REINVERT_EVERY:
            if reinvert(w) != OPTIMAL:
                return BREAKDOWN
            since = 0
        compute_duals(w)
        bland = iters[0] >= p.bland_after
        q = -1
        best = -opt_tol
        for j in range(n):
            if w.isbasic[j]:
                continue
            dj = w.cost[j]
            for i in range(m):
                dj -= w.y[i] * w.AwT[j * m + i]
            if dj < -opt_tol:
                if bland:
                    q = j
                    break
                if dj < best:
                    best = dj
                    q = j
        if q < 0:
            return OPTIMAL
        for i in range(m):
            xi = 0.0
            for k in range(m):
                xi += w.Binv[i * m + k] * w.AwT[q * m + k]
            w.alpha[i] = xi
        r = -1
        theta = INFINITY
        for i in range(m):
            if w.alpha[i] > p.piv_tol:
                xi = w.xB[i]
                if xi < 0.0:
                    xi = 0.0
                ratio = xi / w.alpha[i]
                if r < 0 or ratio < theta - 1e-12 * (1.0 + theta):
                    r = i
                    theta = ratio
                elif ratio <= theta + 1e-12 * (1.0 + theta):
                    if bland:
                        if w.basis[i] < w.basis[r]:
                            r = i
                            theta = ratio
                    elif w.alpha[i] > w.alpha[r]:
                        r = i
                        theta = ratio
        if r < 0:
            return UNBOUNDED
        if w.xB[r] < 0.0:
            w.xB[r] = 0.0
        pivot(w, r, q)
        iters[0] += 1
        since += 1


cdef int simplex_core(const double* A, const double* b, const double* c, Work* w,
                      Params* p, double* x_out, double* y_out, double* obj_out,
                      long* iters_out) noexcept nogil:
    cdef int m = w.m
    cdef int n = w.n
    cdef int i, j, k, q, status
    cdef double bmax = 0.0
    cdef double infeas, v, best
    cdef long iters = 0

    for i in range(m):
        if b[i] < 0.0:
            w.sgn[i] = -1.0
        else:
            w.sgn[i] = 1.0
        w.bw[i] = fabs(b[i])
        if w.bw[i] > bmax:
            bmax = w.bw[i]
    for j in range(n):
        for i in range(m):
            w.AwT[j * m + i] = w.sgn[i] * A[i * n + j]
    for j in range(n + m):
        w.isbasic[j] = 0
        w.cost[j] = 0.0 if j < n else 1.0
    for i in range(m):
        w.basis[i] = n + i
        w.isbasic[n + i] = 1
    if reinvert(w) != OPTIMAL:
        return BREAKDOWN

    # phase I
    status = run_phase(w, p, p.phase1_opt_tol, &iters)
    iters_out[0] = iters
    if status != OPTIMAL:
        # the phase-I objective is bounded below by zero
        return BREAKDOWN if status == UNBOUNDED else status
    if reinvert(w) != OPTIMAL:
        return BREAKDOWN
    infeas = 0.0
    for k in range(m):
        if w.basis[k] >= n:
            infeas += w.xB[k]
    if infeas > p.feas_tol * (1.0 + bmax):
        compute_duals(w)
        for i in range(m):
            y_out[i] = w.sgn[i] * w.y[i]
        obj_out[0] = infeas
        return INFEASIBLE

    # drive artificial variables out of the basis where possible
    for k in range(m):
        if w.basis[k] < n:
            continue
        q = -1
        best = p.piv_tol
        for j in range(n):
            if w.isbasic[j]:
                continue
            v = 0.0
            for i in range(m):
                v += w.Binv[k * m + i] * w.AwT[j * m + i]
            if fabs(v) > best:
                best = fabs(v)
                q = j
        if q >= 0:
            for i in range(m):
                v = 0.0
                for j in range(m):
                    v += w.Binv[i * m + j] * w.AwT[q * m + j]
                w.alpha[i] = v
            pivot(w, k, q)
    if reinvert(w) != OPTIMAL:
        return BREAKDOWN

    # phase II
    for j in range(n + m):
        w.cost[j] = c[j] if j < n else 0.0
    status = run_phase(w, p, p.opt_tol, &iters)
    iters_out[0] = iters
    if status != OPTIMAL:
        return status
    if reinvert(w) != OPTIMAL:
        return BREAKDOWN
    for j in range(n):
        x_out[j] = 0.0
    for k in range(m):
        j = w.basis[k]
        if j < n:
            v = w.xB[k]
            if v < 0.0 and v > -p.feas_tol:
                v = 0.0
            x_out[j] = v
    v = 0.0
    for j in range(n):
        v += c[j] * x_out[j]
    obj_out[0] = v
    compute_duals(w)
    for i in range(m):
        y_out[i] = w.sgn[i] * w.y[i]
    return OPTIMAL


cdef int alloc_work(Work* w, int m, int n) noexcept nogil:
    w.m = m
    w.n = n
    w.AwT = <double*>malloc(sizeof(double) * (n * m + 1))
    w.bw = <double*>malloc(sizeof(double) * (m + 1))
    w.sgn = <double*>malloc(sizeof(double) * (m + 1))
    w.Binv = <double*>malloc(sizeof(double) * (m * m + 1))
    w.Bmat = <double*>malloc(sizeof(double) * (m * m + 1))
    w.xB = <double*>malloc(sizeof(double) * (m + 1))
    w.cost = <double*>malloc(sizeof(double) * (n + m + 1))
    w.y = <double*>malloc(sizeof(double) * (m + 1))
    w.alpha = <double*>malloc(sizeof(double) * (m + 1))
    w.basis = <int*>malloc(sizeof(int) * (m + 1))
    w.isbasic = <char*>malloc(sizeof(char) * (n + m + 1))
    if (w.AwT == NULL or w.bw == NULL or w.sgn == NULL or w.Binv == NULL
            or w.Bmat == NULL or w.xB == NULL or w.cost == NULL or w.y == NULL
            or w.alpha == NULL or w.basis == NULL or w.isbasic == NULL):
        return -1
    return 0


cdef void free_work(Work* w) noexcept nogil:
    free(w.AwT); free(w.bw); free(w.sgn); free(w.Binv); free(w.Bmat)
    free(w.xB); free(w.cost); free(w.y); free(w.alpha); free(w.basis)
    free(w.isbasic)


cdef Params make_params(double piv_tol, double feas_tol, double opt_tol,
                        double phase1_opt_tol, long bland_after, long max_iter):
    cdef Params p
    p.piv_tol = piv_tol
    p.feas_tol = feas_tol
    p.opt_tol = opt_tol
    p.phase1_opt_tol = phase1_opt_tol
    p.bland_after = bland_after
    p.max_iter = max_iter
    return p


def simplex(const double[:, ::1] A, const double[::1] b, const double[::1] c,
            double piv_tol, double feas_tol, double opt_tol, double phase1_opt_tol,
            long bland_after, long max_iter):
    """Solve min c'x s.t. Ax = b, x >= 0.

    Returns ``(status, x, y, value, iterations)``. For an infeasible
    problem ``y`` holds the phase-I multipliers and ``value`` the phase-I
    optimum.
    """
    cdef int m = A.shape[0]
    cdef int n = A.shape[1]
    x = np.zeros(n)
    y = np.zeros(m)
    cdef double[::1] xv = x
    cdef double[::1] yv = y
    cdef double obj = 0.0
    cdef long iters = 0
    cdef int status
    cdef Work w
    cdef Params p = make_params(piv_tol, feas_tol, opt_tol, phase1_opt_tol,
                                bland_after, max_iter)
    if alloc_work(&w, m, n) != 0:
        free_work(&w)
        raise MemoryError()
    with nogil:
        status = simplex_core(&A[0, 0] if m * n > 0 else NULL, &b[0] if m > 0 else NULL,
                              &c[0] if n > 0 else NULL, &w, &p,
                              &xv[0] if n > 0 else NULL, &yv[0] if m > 0 else NULL,
                              &obj, &iters)
    free_work(&w)
    return status, x, y, obj, iters


def simplex_batch(const double[:, :, ::1] A, const double[:, ::1] b, const double[:, ::1] c,
                  double piv_tol, double feas_tol, double opt_tol, double phase1_opt_tol,
                  long bland_after, long max_iter):
    """Solve S independent standard-form LPs sharing one shape."""
    cdef int S = A.shape[0]
    cdef int m = A.shape[1]
    cdef int n = A.shape[2]
    status = np.zeros(S, dtype=np.int32)
    x = np.zeros((S, n))
    y = np.zeros((S, m))
    obj = np.zeros(S)
    cdef int[::1] sv = status
    cdef double[:, ::1] xv = x
    cdef double[:, ::1] yv = y
    cdef double[::1] ov = obj
    cdef long iters
    cdef int s
    cdef Work w
    cdef Params p = make_params(piv_tol, feas_tol, opt_tol, phase1_opt_tol,
                                bland_after, max_iter)
    if S == 0:
        return status, x, y, obj
    if m == 0 or n == 0:
        raise ValueError("empty LP shape in batch")
    if alloc_work(&w, m, n) != 0:
        free_work(&w)
        raise MemoryError()
    with nogil:
        for s in range(S):
            iters = 0
            sv[s] = simplex_core(&A[s, 0, 0], &b[s, 0], &c[s, 0], &w, &p,
                                 &xv[s, 0], &yv[s, 0], &ov[s], &iters)
    free_work(&w)
    return status, x, y, obj
