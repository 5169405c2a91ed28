# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled twins of ``_pykernels``; same signatures, same results."""
import numpy as np
cimport numpy as cnp
from libc.math cimport exp, log1p, fabs, sqrt, pow

from ..errors import InputError

cnp.import_array()

cdef double SOFTPLUS_LINEAR_CUTOFF = 30.0


def softmax_masked(scores, active):
    cdef cnp.ndarray[cnp.float64_t, ndim=1] s = np.ascontiguousarray(scores, dtype=np.float64)
    cdef cnp.ndarray[cnp.intp_t, ndim=1] a = np.ascontiguousarray(active, dtype=np.intp)
    cdef Py_ssize_t n = s.shape[0], k = a.shape[0], i, j
    if k == 0:
        raise InputError("softmax_masked needs a nonempty active set")
    for i in range(k):
        if a[i] < 0 or a[i] >= n:
            raise InputError("active index out of range")
    cdef cnp.ndarray[cnp.float64_t, ndim=1] out = np.zeros(n, dtype=np.float64)
    cdef double mx = s[a[0]], tot = 0.0, e
    for i in range(1, k):
        if s[a[i]] > mx:
            mx = s[a[i]]
    for i in range(k):
        e = exp(s[a[i]] - mx)
        out[a[i]] = e
        tot += e
    for i in range(k):
        j = a[i]
        out[j] = out[j] / tot
    return out


cdef inline double _softplus(double u) nogil:
    return (u if u > 0.0 else 0.0) + log1p(exp(-fabs(u)))


def scaled_softplus(double x, double psi):
    cdef double u = x / psi
    if u > SOFTPLUS_LINEAR_CUTOFF:
        return x
    return psi * _softplus(u)


def scaled_softplus_grad(double x, double psi):
    cdef double u = x / psi, sp, sig, e
    if u > SOFTPLUS_LINEAR_CUTOFF:
        return x, 1.0, 0.0
    sp = _softplus(u)
    if u >= 0:
        sig = 1.0 / (1.0 + exp(-u))
    else:
        e = exp(u)
        sig = e / (1.0 + e)
    return psi * sp, sig, sp - u * sig


def attention_row_update(double[::1] vals, Py_ssize_t pos, double b, double bprime,
                         double lam, bint existed):
    cdef Py_ssize_t n = vals.shape[0], w
    cdef double x, total = 0.0
    if not existed:
        x = bprime - b
        for w in range(n):
            if w != pos and vals[w] != 0.0:
                vals[w] -= x
    vals[pos] = b + lam
    for w in range(n):
        if vals[w] < 0.0:
            vals[w] = 0.0
        total += vals[w]
    if total > 0.0:
        for w in range(n):
            vals[w] /= total
    else:
        for w in range(n):
            vals[w] = 1.0 / n


def max_aggregate(W_h, nbr_z, weights):
    # the k x d product goes through BLAS; the weighting, max and argmax are fused
    cdef double[:, ::1] g = np.ascontiguousarray(nbr_z @ W_h.T)
    cdef double[::1] w = np.ascontiguousarray(weights, dtype=np.float64)
    cdef Py_ssize_t k = g.shape[0], d = g.shape[1], r, c, best
    cdef double q, bq
    h = np.empty(d, dtype=np.float64)
    arg = np.empty(d, dtype=np.intp)
    cdef double[::1] hv = h
    cdef cnp.intp_t[::1] av = arg
    for c in range(d):
        best = 0
        bq = w[0] * g[0, c]
        for r in range(1, k):
            q = w[r] * g[r, c]
            if q > bq:
                bq = q
                best = r
        hv[c] = bq
        av[c] = best
    return h, arg


def adam_update(double[::1] param, double[::1] grad, double[::1] m, double[::1] v,
                double lr, double beta1, double beta2, double eps, long t, double clip):
    cdef Py_ssize_t i, n = param.shape[0]
    cdef double g, c1 = 1.0 - pow(beta1, t), c2 = 1.0 - pow(beta2, t), mx = 0.0
    for i in range(n):
        g = grad[i]
        if clip > 0.0:
            if g > clip:
                g = clip
            elif g < -clip:
                g = -clip
        if fabs(g) > mx:
            mx = fabs(g)
        m[i] = beta1 * m[i] + (1.0 - beta1) * g
        v[i] = beta2 * v[i] + (1.0 - beta2) * g * g
        param[i] -= lr * (m[i] / c1) / (sqrt(v[i] / c2) + eps)
    return mx
