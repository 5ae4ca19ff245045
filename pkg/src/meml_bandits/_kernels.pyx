# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled inner loops for OFUL-style episodes.

Same signatures and semantics as ``_kernels_py``. Matrices are small
(d <= 64), so plain loops beat BLAS call overhead here.
"""

import numpy as np
cimport numpy as cnp
from libc.math cimport sqrt, log

cnp.import_array()


cdef int _invert_spd(double[:, ::1] a, double[:, ::1] out) noexcept nogil:
    # Gauss-Jordan on a copy held in ``a``; SPD input so no pivoting.
    cdef Py_ssize_t n = a.shape[0]
    cdef Py_ssize_t i, j, k
    cdef double piv, f
    for i in range(n):
        for j in range(n):
            out[i, j] = 1.0 if i == j else 0.0
    for k in range(n):
        piv = a[k, k]
        if piv <= 0.0:
            return -1
        for j in range(n):
            a[k, j] /= piv
            out[k, j] /= piv
        for i in range(n):
            if i != k:
                f = a[i, k]
                if f != 0.0:
                    for j in range(n):
                        a[i, j] -= f * a[k, j]
                        out[i, j] -= f * out[k, j]
    return 0


def refresh_inverse(double[:, ::1] gram, double lam, double[:, ::1] inv):
    cdef Py_ssize_t d = gram.shape[0]
    cdef Py_ssize_t i, j
    work_arr = np.empty((d, d), dtype=np.float64)
    cdef double[:, ::1] work = work_arr
    for i in range(d):
        for j in range(d):
            work[i, j] = gram[i, j]
        work[i, i] += lam
    if _invert_spd(work, inv) != 0:
        raise np.linalg.LinAlgError("regularized Gram matrix is not positive definite")


cdef void _rank_one(double[:, ::1] gram, double[:, ::1] inv, double[::1] resp,
                    const double[::1] x, double y, double[::1] u) noexcept nogil:
    cdef Py_ssize_t d = gram.shape[0]
    cdef Py_ssize_t i, j
    cdef double denom = 1.0
    cdef double s
    for i in range(d):
        s = 0.0
        for j in range(d):
            s += inv[i, j] * x[j]
        u[i] = s
    for i in range(d):
        denom += x[i] * u[i]
    for i in range(d):
        resp[i] += y * x[i]
        for j in range(d):
            gram[i, j] += x[i] * x[j]
            inv[i, j] -= u[i] * u[j] / denom


def rank_one_update(double[:, ::1] gram, double[:, ::1] inv, double[::1] resp,
                    const double[::1] x, double y):
    """Add (x, y) to the sufficient statistics; Sherman-Morrison on ``inv``."""
    u_arr = np.empty(gram.shape[0], dtype=np.float64)
    cdef double[::1] u = u_arr
    _rank_one(gram, inv, resp, x, y, u)


cdef Py_ssize_t _ucb_argmax(const double[:, ::1] arms, const double[::1] center,
                            const double[:, ::1] inv, double radius,
                            double* best_out) noexcept nogil:
    cdef Py_ssize_t n_arms = arms.shape[0]
    cdef Py_ssize_t d = arms.shape[1]
    cdef Py_ssize_t k, i, j
    cdef Py_ssize_t best = 0
    cdef double best_score = 0.0
    cdef double mean, quad, row, score
    for k in range(n_arms):
        mean = 0.0
        quad = 0.0
        for i in range(d):
            mean += arms[k, i] * center[i]
            row = 0.0
            for j in range(d):
                row += inv[i, j] * arms[k, j]
            quad += arms[k, i] * row
        if quad < 0.0:
            quad = 0.0
        score = mean + radius * sqrt(quad)
        if k == 0 or score > best_score:
            best = k
            best_score = score
    best_out[0] = best_score
    return best


def ucb_argmax(const double[:, ::1] actions, const double[::1] center,
               const double[:, ::1] inv, double radius):
    cdef double best_score = 0.0
    cdef Py_ssize_t idx = _ucb_argmax(actions, center, inv, radius, &best_score)
    return int(idx), best_score


def play_rounds(const double[:, :, ::1] actions, const double[::1] noise,
                const double[::1] theta, const double[::1] bias,
                const cnp.int64_t[::1] forced,
                double[:, ::1] gram, double[:, ::1] inv, double[::1] resp,
                double lam, double R, double L, double delta, double bias_distance,
                long count, long refresh_every,
                cnp.int64_t[::1] chosen, double[::1] rewards, double[::1] regret):
    """Run ``len(noise)`` rounds in place; return the updated sample count."""
    cdef Py_ssize_t n_rounds = actions.shape[0]
    cdef Py_ssize_t n_arms = actions.shape[1]
    cdef Py_ssize_t d = actions.shape[2]
    cdef Py_ssize_t t, k, i, j
    cdef double sqrt_lam = sqrt(lam)
    cdef double radius, s, y, best_exp, e, dummy
    u_arr = np.empty(d, dtype=np.float64)
    c_arr = np.empty(d, dtype=np.float64)
    r_arr = np.empty(d, dtype=np.float64)
    e_arr = np.empty(n_arms, dtype=np.float64)
    work_arr = np.empty((d, d), dtype=np.float64)
    cdef double[::1] u = u_arr
    cdef double[::1] center = c_arr
    cdef double[::1] resid = r_arr
    cdef double[::1] expected = e_arr
    cdef double[:, ::1] work = work_arr
    cdef int status = 0

    with nogil:
        for t in range(n_rounds):
            if forced[t] >= 0:
                k = <Py_ssize_t>forced[t]
            else:
                for i in range(d):
                    s = 0.0
                    for j in range(d):
                        s += gram[i, j] * bias[j]
                    resid[i] = resp[i] - s
                for i in range(d):
                    s = 0.0
                    for j in range(d):
                        s += inv[i, j] * resid[j]
                    center[i] = s + bias[i]
                radius = R * sqrt(d * log((1.0 + count * L * L / lam) / delta)) \
                    + sqrt_lam * bias_distance
                k = _ucb_argmax(actions[t], center, inv, radius, &dummy)
            best_exp = 0.0
            for j in range(n_arms):
                e = 0.0
                for i in range(d):
                    e += actions[t, j, i] * theta[i]
                expected[j] = e
                if j == 0 or e > best_exp:
                    best_exp = e
            y = expected[k] + noise[t]
            _rank_one(gram, inv, resp, actions[t, k], y, u)
            count += 1
            if refresh_every > 0 and count % refresh_every == 0:
                for i in range(d):
                    for j in range(d):
                        work[i, j] = gram[i, j]
                    work[i, i] += lam
                status = _invert_spd(work, inv)
                if status != 0:
                    break
            chosen[t] = k
            rewards[t] = y
            regret[t] = best_exp - expected[k]
    if status != 0:
        raise np.linalg.LinAlgError("regularized Gram matrix is not positive definite")
    return count
