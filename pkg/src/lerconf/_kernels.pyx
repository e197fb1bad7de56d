# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled versions of the kernels in ``_kernels_py``; same signatures and semantics."""
import numpy as np

from libc.math cimport sqrt, pow

LOSS_MAE = 0
LOSS_PINBALL = 1


def n_params(shape):
    d, h, o = shape
    return h * d + h + o * h + o


cdef double _batch_grad(
    const double[::1] theta, double[::1] grad, double[::1] zbuf, double[::1] dz,
    double[::1] dout, int d, int h, int o,
    const double[:, ::1] X, const double[::1] r, const double[::1] y,
    const long[::1] idx, Py_ssize_t start, Py_ssize_t stop,
    int loss, double q_lo, double q_hi, double delta,
) noexcept nogil:
    cdef Py_ssize_t nb = stop - start
    cdef Py_ssize_t ow1 = 0, ob1 = h * d, ow2 = h * d + h, ob2 = h * d + h + o * h
    cdef Py_ssize_t p, i, j, k, c, row
    cdef double acc, e, s, u, q, value = 0.0
    cdef double inv_n = 1.0 / nb

    for p in range(grad.shape[0]):
        grad[p] = 0.0

    for i in range(start, stop):
        row = idx[i]
        for j in range(h):
            acc = theta[ob1 + j]
            for k in range(d):
                acc += theta[ow1 + j * d + k] * X[row, k]
            zbuf[j] = acc
        for c in range(o):
            acc = theta[ob2 + c]
            for j in range(h):
                if zbuf[j] > 0:
                    acc += theta[ow2 + c * h + j] * zbuf[j]
            dout[c] = acc + r[row]
        if loss == 0:
            e = dout[0] - y[row]
            s = sqrt(e * e + delta * delta)
            value += s
            dout[0] = e / s * inv_n
        else:
            for c in range(2):
                q = q_lo if c == 0 else q_hi
                u = y[row] - dout[c]
                if u >= 0:
                    value += q * u
                    dout[c] = -q * inv_n
                else:
                    value += (q - 1.0) * u
                    dout[c] = (1.0 - q) * inv_n
        for c in range(o):
            grad[ob2 + c] += dout[c]
        for j in range(h):
            if zbuf[j] > 0:
                acc = 0.0
                for c in range(o):
                    grad[ow2 + c * h + j] += dout[c] * zbuf[j]
                    acc += dout[c] * theta[ow2 + c * h + j]
                dz[j] = acc
            else:
                dz[j] = 0.0
        for j in range(h):
            if dz[j] != 0.0:
                grad[ob1 + j] += dz[j]
                for k in range(d):
                    grad[ow1 + j * d + k] += dz[j] * X[row, k]
    return value * inv_n


def loss_grad(theta, shape, X, r, y, int loss, double q_lo=0.05, double q_hi=0.95, double delta=1e-8):
    cdef int d, h, o
    d, h, o = shape
    theta = np.ascontiguousarray(theta, dtype=np.float64)
    X = np.ascontiguousarray(X, dtype=np.float64)
    r = np.ascontiguousarray(r, dtype=np.float64)
    y = np.ascontiguousarray(y, dtype=np.float64)
    grad = np.empty(n_params(shape))
    idx = np.arange(X.shape[0], dtype=np.int_)
    value = _batch_grad(theta, grad, np.empty(h), np.empty(h), np.empty(max(o, 2)),
                        d, h, o, X, r, y, idx, 0, X.shape[0], loss, q_lo, q_hi, delta)
    return value, grad


def train_epoch(
    double[::1] theta, double[::1] m, double[::1] v, long t, shape,
    const double[:, ::1] X, const double[::1] r, const double[::1] y,
    const long[::1] order, Py_ssize_t batch, const double[::1] lrs,
    int loss, double q_lo, double q_hi, double delta,
    double beta1=0.9, double beta2=0.999, double eps=1e-8,
):
    cdef int d, h, o
    d, h, o = shape
    cdef Py_ssize_t n = order.shape[0], P = theta.shape[0]
    cdef double[::1] grad = np.empty(P)
    cdef double[::1] zbuf = np.empty(h)
    cdef double[::1] dz = np.empty(h)
    cdef double[::1] dout = np.empty(max(o, 2))
    cdef Py_ssize_t start, stop, p, b = 0
    cdef double total = 0.0, value, g, mhat, vhat, c1, c2
    with nogil:
        start = 0
        while start < n:
            stop = start + batch
            if stop > n:
                stop = n
            value = _batch_grad(theta, grad, zbuf, dz, dout, d, h, o, X, r, y,
                                order, start, stop, loss, q_lo, q_hi, delta)
            total += value * (stop - start)
            t += 1
            c1 = 1.0 - pow(beta1, t)
            c2 = 1.0 - pow(beta2, t)
            for p in range(P):
                g = grad[p]
                m[p] = m[p] * beta1 + (1.0 - beta1) * g
                v[p] = v[p] * beta2 + (1.0 - beta2) * g * g
                mhat = m[p] / c1
                vhat = v[p] / c2
                theta[p] -= lrs[b] * mhat / (sqrt(vhat) + eps)
            start = stop
            b += 1
    return total, t


def predict(theta, shape, X, r):
    cdef int d, h, o
    d, h, o = shape
    cdef const double[::1] th = np.ascontiguousarray(theta, dtype=np.float64)
    cdef const double[:, ::1] Xv = np.ascontiguousarray(X, dtype=np.float64)
    cdef const double[::1] rv = np.ascontiguousarray(r, dtype=np.float64)
    out = np.empty((Xv.shape[0], o))
    cdef double[:, ::1] ov = out
    cdef double[::1] zbuf = np.empty(h)
    cdef Py_ssize_t i, j, k, c
    cdef Py_ssize_t ob1 = h * d, ow2 = h * d + h, ob2 = h * d + h + o * h
    cdef double acc
    with nogil:
        for i in range(Xv.shape[0]):
            for j in range(h):
                acc = th[ob1 + j]
                for k in range(d):
                    acc += th[j * d + k] * Xv[i, k]
                zbuf[j] = acc if acc > 0 else 0.0
            for c in range(o):
                acc = th[ob2 + c]
                for j in range(h):
                    acc += th[ow2 + c * h + j] * zbuf[j]
                ov[i, c] = acc + rv[i]
    return out


def detect_rows(sm, Py_ssize_t lo_l, Py_ssize_t hi_l, Py_ssize_t lo_r, Py_ssize_t hi_r):
    cdef const double[:, ::1] s = np.ascontiguousarray(sm, dtype=np.float64)
    cdef Py_ssize_t rows = s.shape[0], width = s.shape[1]
    pos = np.empty((rows, 2))
    peak = np.empty((rows, 2))
    cdef double[:, ::1] pv = pos
    cdef double[:, ::1] kv = peak
    cdef Py_ssize_t i, j, best, lo, hi, c
    cdef double sign, g0, gm, gp, val, den, off
    with nogil:
        for c in range(2):
            if c == 0:
                lo, hi, sign = lo_l, hi_l, 1.0
            else:
                lo, hi, sign = lo_r, hi_r, -1.0
            if lo < 1:
                lo = 1
            if hi > width - 2:
                hi = width - 2
            for i in range(rows):
                best = lo
                g0 = sign * (s[i, lo + 1] - s[i, lo - 1]) * 0.5
                for j in range(lo + 1, hi + 1):
                    val = sign * (s[i, j + 1] - s[i, j - 1]) * 0.5
                    if val > g0:
                        g0 = val
                        best = j
                off = 0.0
                if best > 1 and best < width - 2:
                    gm = sign * (s[i, best] - s[i, best - 2]) * 0.5
                    gp = sign * (s[i, best + 2] - s[i, best]) * 0.5
                    den = gm - 2.0 * g0 + gp
                    if den < 0:
                        off = 0.5 * (gm - gp) / den
                        if off > 0.5:
                            off = 0.5
                        elif off < -0.5:
                            off = -0.5
                pv[i, c] = best + off
                kv[i, c] = g0
    return pos, peak
