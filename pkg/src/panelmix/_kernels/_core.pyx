# cython: boundscheck=False, wraparound=False, cdivision=True, language_level=3
"""Compiled sweep kernels; semantics mirror panelmix._kernels._py."""

import numpy as np

cimport numpy as cnp
from libc.math cimport exp, fabs, log, sqrt

cnp.import_array()

cdef double LOG_2PI = 1.8378770664093453


cdef inline void _chol_small(const double* A, double* L, Py_ssize_t d) noexcept nogil:
    cdef Py_ssize_t i, j, k
    cdef double s
    for i in range(d):
        for j in range(i + 1):
            s = A[i * d + j]
            for k in range(j):
                s -= L[i * d + k] * L[j * d + k]
            if i == j:
                L[i * d + j] = sqrt(s)
            else:
                L[i * d + j] = s / L[j * d + j]


cdef inline void _forward_solve(const double* L, const double* b, double* y, Py_ssize_t d) noexcept nogil:
    cdef Py_ssize_t i, k
    cdef double s
    for i in range(d):
        s = b[i]
        for k in range(i):
            s -= L[i * d + k] * y[k]
        y[i] = s / L[i * d + i]


cdef inline void _back_solve(const double* L, const double* y, double* x, Py_ssize_t d) noexcept nogil:
    # solves L' x = y with L lower triangular
    cdef Py_ssize_t i, k
    cdef double s
    for i in range(d - 1, -1, -1):
        s = y[i]
        for k in range(i + 1, d):
            s -= L[k * d + i] * x[k]
        x[i] = s / L[i * d + i]


def mixture_loglik(object z_in, object means_in, object chol_in, object logdet_in):
    """Log normal densities of each row of z under each component."""
    cdef cnp.ndarray[double, ndim=2, mode="c"] z = np.ascontiguousarray(z_in, dtype=np.float64)
    cdef cnp.ndarray[double, ndim=3, mode="c"] chol = np.ascontiguousarray(chol_in, dtype=np.float64)
    cdef cnp.ndarray[double, ndim=1, mode="c"] logdet = np.ascontiguousarray(logdet_in, dtype=np.float64)
    cdef Py_ssize_t N = z.shape[0], d = z.shape[1], K = chol.shape[0]
    cdef cnp.ndarray[double, ndim=2, mode="c"] out = np.empty((N, K))
    cdef cnp.ndarray[double, ndim=2, mode="c"] means2
    cdef cnp.ndarray[double, ndim=3, mode="c"] means3
    cdef double dev[32]
    cdef double y[32]
    cdef double quad, base
    cdef Py_ssize_t i, k, j
    means_arr = np.ascontiguousarray(means_in, dtype=np.float64)
    cdef bint per_unit = means_arr.ndim == 3
    base = d * LOG_2PI
    if per_unit:
        means3 = means_arr
        with nogil:
            for i in range(N):
                for k in range(K):
                    for j in range(d):
                        dev[j] = z[i, j] - means3[i, k, j]
                    _forward_solve(&chol[k, 0, 0], dev, y, d)
                    quad = 0.0
                    for j in range(d):
                        quad += y[j] * y[j]
                    out[i, k] = -0.5 * (base + logdet[k] + quad)
    else:
        means2 = means_arr
        with nogil:
            for i in range(N):
                for k in range(K):
                    for j in range(d):
                        dev[j] = z[i, j] - means2[k, j]
                    _forward_solve(&chol[k, 0, 0], dev, y, d)
                    quad = 0.0
                    for j in range(d):
                        quad += y[j] * y[j]
                    out[i, k] = -0.5 * (base + logdet[k] + quad)
    return out


def categorical_rows(object logp_in, object u_in):
    """Rowwise categorical draws from unnormalized log probabilities."""
    cdef cnp.ndarray[double, ndim=2, mode="c"] logp = np.ascontiguousarray(logp_in, dtype=np.float64)
    cdef cnp.ndarray[double, ndim=1, mode="c"] u = np.ascontiguousarray(u_in, dtype=np.float64)
    cdef Py_ssize_t N = logp.shape[0], K = logp.shape[1]
    cdef cnp.ndarray[cnp.int64_t, ndim=1] gamma = np.empty(N, dtype=np.int64)
    cdef Py_ssize_t i, k
    cdef double m, total, target, acc
    cdef bint bad = False
    with nogil:
        for i in range(N):
            m = logp[i, 0]
            for k in range(1, K):
                if logp[i, k] > m:
                    m = logp[i, k]
            total = 0.0
            for k in range(K):
                total += exp(logp[i, k] - m)
            if not total > 0.0:
                bad = True
                break
            target = u[i] * total
            acc = 0.0
            gamma[i] = K - 1
            for k in range(K):
                acc += exp(logp[i, k] - m)
                if acc >= target:
                    gamma[i] = k
                    break
    if bad:
        raise FloatingPointError("membership degenerate: all component masses underflowed")
    return gamma


def lambda_draw(object Sww_in, object Swr_in, object inv_s2_in, object prior_mean_in,
                object prior_prec_in, object gamma_in, object eps_in):
    """Conjugate per-unit draws of the heterogeneous coefficients."""
    cdef cnp.ndarray[double, ndim=3, mode="c"] Sww = np.ascontiguousarray(Sww_in, dtype=np.float64)
    cdef cnp.ndarray[double, ndim=2, mode="c"] Swr = np.ascontiguousarray(Swr_in, dtype=np.float64)
    cdef cnp.ndarray[double, ndim=1, mode="c"] inv_s2 = np.ascontiguousarray(inv_s2_in, dtype=np.float64)
    cdef cnp.ndarray[double, ndim=2, mode="c"] prior_mean = np.ascontiguousarray(prior_mean_in, dtype=np.float64)
    cdef cnp.ndarray[double, ndim=3, mode="c"] prior_prec = np.ascontiguousarray(prior_prec_in, dtype=np.float64)
    cdef cnp.ndarray[cnp.int64_t, ndim=1] gamma = np.ascontiguousarray(gamma_in, dtype=np.int64)
    cdef cnp.ndarray[double, ndim=2, mode="c"] eps = np.ascontiguousarray(eps_in, dtype=np.float64)
    cdef Py_ssize_t N = Sww.shape[0], d = Sww.shape[1]
    cdef cnp.ndarray[double, ndim=2, mode="c"] lam = np.empty((N, d))
    cdef double P[64]
    cdef double L[64]
    cdef double rhs[8]
    cdef double tmp[8]
    cdef double mean[8]
    cdef double shift[8]
    cdef Py_ssize_t i, a, b, g
    with nogil:
        for i in range(N):
            g = gamma[i]
            for a in range(d):
                for b in range(d):
                    P[a * d + b] = prior_prec[g, a, b] + inv_s2[i] * Sww[i, a, b]
            _chol_small(P, L, d)
            for a in range(d):
                rhs[a] = inv_s2[i] * Swr[i, a]
                for b in range(d):
                    rhs[a] += prior_prec[g, a, b] * prior_mean[i, b]
            _forward_solve(L, rhs, tmp, d)
            _back_solve(L, tmp, mean, d)
            for a in range(d):
                tmp[a] = eps[i, a]
            _back_solve(L, tmp, shift, d)
            for a in range(d):
                lam[i, a] = mean[a] + shift[a]
    return lam


def sse_quad(object Syy_in, object Sxy_in, object Sxx_in, object Swy_in, object Swx_in,
             object Sww_in, object beta_in, object lam_in):
    """Per-unit sum of squared residuals of y - beta'x - lambda'w."""
    cdef cnp.ndarray[double, ndim=1, mode="c"] Syy = np.ascontiguousarray(Syy_in, dtype=np.float64)
    cdef cnp.ndarray[double, ndim=2, mode="c"] Sxy = np.ascontiguousarray(Sxy_in, dtype=np.float64)
    cdef cnp.ndarray[double, ndim=3, mode="c"] Sxx = np.ascontiguousarray(Sxx_in, dtype=np.float64)
    cdef cnp.ndarray[double, ndim=2, mode="c"] Swy = np.ascontiguousarray(Swy_in, dtype=np.float64)
    cdef cnp.ndarray[double, ndim=3, mode="c"] Swx = np.ascontiguousarray(Swx_in, dtype=np.float64)
    cdef cnp.ndarray[double, ndim=3, mode="c"] Sww = np.ascontiguousarray(Sww_in, dtype=np.float64)
    cdef cnp.ndarray[double, ndim=1, mode="c"] beta = np.ascontiguousarray(beta_in, dtype=np.float64)
    cdef cnp.ndarray[double, ndim=2, mode="c"] lam = np.ascontiguousarray(lam_in, dtype=np.float64)
    cdef Py_ssize_t N = Syy.shape[0], dx = beta.shape[0], dw = lam.shape[1]
    cdef cnp.ndarray[double, ndim=1, mode="c"] out = np.empty(N)
    cdef Py_ssize_t i, a, b
    cdef double v
    with nogil:
        for i in range(N):
            v = Syy[i]
            for a in range(dx):
                v -= 2.0 * Sxy[i, a] * beta[a]
                for b in range(dx):
                    v += Sxx[i, a, b] * beta[a] * beta[b]
            for a in range(dw):
                v -= 2.0 * Swy[i, a] * lam[i, a]
                for b in range(dx):
                    v += 2.0 * Swx[i, a, b] * beta[b] * lam[i, a]
                for b in range(dw):
                    v += Sww[i, a, b] * lam[i, a] * lam[i, b]
            out[i] = v if v > 0.0 else 0.0
    return out


cdef inline double _sigma2_of_l_scalar(double l, double lo, double hi) noexcept nogil:
    cdef double e
    if l < 0.0:
        e = exp(l)
        return hi * (e + lo) / (e + hi)
    e = exp(-l)
    return hi * (1.0 + lo * e) / (1.0 + hi * e)


def l_rwmh_vec(object l_in, object prior_mean_in, object prior_var_in, object Tn_in,
               object sse_in, double lo, double hi, object log_step_in, object count_in,
               object eps_in, object u_in, double c, double target, double cap):
    """One adaptive RWMH move per unit on the variance transform l.

    l, log_step, count are modified in place; returns (sigma2, accepted).
    """
    cdef cnp.ndarray[double, ndim=1, mode="c"] l = l_in
    cdef cnp.ndarray[double, ndim=1, mode="c"] prior_mean = np.ascontiguousarray(prior_mean_in, dtype=np.float64)
    cdef cnp.ndarray[double, ndim=1, mode="c"] prior_var = np.ascontiguousarray(prior_var_in, dtype=np.float64)
    cdef cnp.ndarray[double, ndim=1, mode="c"] Tn = np.ascontiguousarray(Tn_in, dtype=np.float64)
    cdef cnp.ndarray[double, ndim=1, mode="c"] sse = np.ascontiguousarray(sse_in, dtype=np.float64)
    cdef cnp.ndarray[double, ndim=1, mode="c"] log_step = log_step_in
    cdef cnp.ndarray[cnp.int64_t, ndim=1] count = count_in
    cdef cnp.ndarray[double, ndim=1, mode="c"] eps = np.ascontiguousarray(eps_in, dtype=np.float64)
    cdef cnp.ndarray[double, ndim=1, mode="c"] u = np.ascontiguousarray(u_in, dtype=np.float64)
    cdef Py_ssize_t N = l.shape[0]
    cdef cnp.ndarray[double, ndim=1, mode="c"] sigma2 = np.empty(N)
    cdef cnp.ndarray[cnp.uint8_t, ndim=1, cast=True] accepted = np.zeros(N, dtype=bool)
    cdef Py_ssize_t i
    cdef double prop, s2c, s2p, lp_cur, lp_prop, delta, ar, adj, s
    with nogil:
        for i in range(N):
            prop = l[i] + exp(0.5 * log_step[i]) * eps[i]
            s2c = _sigma2_of_l_scalar(l[i], lo, hi)
            s2p = _sigma2_of_l_scalar(prop, lo, hi)
            lp_cur = -0.5 * (l[i] - prior_mean[i]) ** 2 / prior_var[i] \
                - 0.5 * Tn[i] * log(s2c) - 0.5 * sse[i] / s2c
            lp_prop = -0.5 * (prop - prior_mean[i]) ** 2 / prior_var[i] \
                - 0.5 * Tn[i] * log(s2p) - 0.5 * sse[i] / s2p
            delta = lp_prop - lp_cur
            if delta != delta:  # NaN guard
                ar = 0.0
            elif delta >= 0.0:
                ar = 1.0
            else:
                ar = exp(delta)
            if u[i] < ar:
                l[i] = prop
                sigma2[i] = s2p
                accepted[i] = True
            else:
                sigma2[i] = s2c
            s = count[i] + 1.0
            adj = log_step[i] + s ** (-c) * (ar - target)
            if adj > cap:
                adj = cap
            elif adj < -cap:
                adj = -cap
            log_step[i] = adj
            count[i] = <cnp.int64_t> s
    return sigma2, accepted
