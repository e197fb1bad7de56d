"""Pure numpy implementations of the hot kernels.

These define the reference semantics; ``_kernels.pyx`` mirrors them loop by
loop. Both backends expose the same functions with the same signatures.

Network layout
--------------
A one-hidden-layer ReLU network is stored as a flat float64 vector
``[W1 (H*D), b1 (H), W2 (O*H), b2 (O)]`` with ``shape = (D, H, O)``. Every
output receives the additive residual ``r`` (zeros when unused).
"""
from __future__ import annotations

import numpy as np

LOSS_MAE = 0
LOSS_PINBALL = 1


def n_params(shape) -> int:
    d, h, o = shape
    return h * d + h + o * h + o


def unpack(theta: np.ndarray, shape):
    d, h, o = shape
    i = 0
    w1 = theta[i:i + h * d].reshape(h, d)
    i += h * d
    b1 = theta[i:i + h]
    i += h
    w2 = theta[i:i + o * h].reshape(o, h)
    i += o * h
    b2 = theta[i:i + o]
    return w1, b1, w2, b2


def forward(theta, shape, X, r):
    w1, b1, w2, b2 = unpack(theta, shape)
    z = X @ w1.T + b1
    a = np.maximum(z, 0.0)
    out = a @ w2.T + b2 + r[:, None]
    return z, a, out


def loss_grad(theta, shape, X, r, y, loss, q_lo=0.05, q_hi=0.95, delta=1e-8):
    """Mean loss over the rows of ``X`` and its gradient with respect to ``theta``."""
    z, a, out = forward(theta, shape, X, r)
    n = X.shape[0]
    if loss == LOSS_MAE:
        e = out[:, 0] - y
        s = np.sqrt(e * e + delta * delta)
        value = s.sum() / n
        dout = (e / s / n)[:, None]
    elif loss == LOSS_PINBALL:
        value = 0.0
        dout = np.empty_like(out)
        for c, q in ((0, q_lo), (1, q_hi)):
            u = y - out[:, c]
            pos = u >= 0
            value += np.where(pos, q * u, (q - 1.0) * u).sum()
            dout[:, c] = np.where(pos, -q, 1.0 - q) / n
        value /= n
    else:
        raise ValueError(f"unknown loss code {loss}")
    w1, b1, w2, b2 = unpack(theta, shape)
    gw2 = dout.T @ a
    gb2 = dout.sum(axis=0)
    dz = (dout @ w2) * (z > 0)
    gw1 = dz.T @ X
    gb1 = dz.sum(axis=0)
    grad = np.concatenate([gw1.ravel(), gb1, gw2.ravel(), gb2])
    return value, grad


def train_epoch(
    theta, m, v, t, shape, X, r, y, order, batch, lrs,
    loss, q_lo, q_hi, delta, beta1=0.9, beta2=0.999, eps=1e-8,
):
    """One pass of mini-batch Adam over ``order``; updates ``theta, m, v`` in place.

    ``lrs[b]`` is the step size of batch ``b``. Returns ``(sum of per-sample
    losses, new step counter)``.
    """
    n = order.size
    total = 0.0
    for b, start in enumerate(range(0, n, batch)):
        idx = order[start:start + batch]
        value, g = loss_grad(theta, shape, X[idx], r[idx], y[idx], loss, q_lo, q_hi, delta)
        total += value * idx.size
        t += 1
        m *= beta1
        m += (1.0 - beta1) * g
        v *= beta2
        v += (1.0 - beta2) * g * g
        mhat = m / (1.0 - beta1**t)
        vhat = v / (1.0 - beta2**t)
        theta -= lrs[b] * mhat / (np.sqrt(vhat) + eps)
    return total, t


def predict(theta, shape, X, r):
    return forward(theta, shape, X, r)[2]


def detect_rows(sm, lo_l, hi_l, lo_r, hi_r):
    """Per-row gradient peaks inside fixed column windows.

    ``sm`` is a horizontally smoothed ``(rows, width)`` image. The left edge
    is the argmax of the central-difference gradient over columns
    ``lo_l..hi_l`` (inclusive), the right edge the argmax of its negative over
    ``lo_r..hi_r``. Peaks are refined with a three-point parabola. Returns
    subpixel column coordinates ``(rows, 2)`` and peak gradient magnitudes.
    """
    rows, width = sm.shape
    g = np.zeros_like(sm)
    g[:, 1:-1] = (sm[:, 2:] - sm[:, :-2]) * 0.5
    pos = np.empty((rows, 2))
    peak = np.empty((rows, 2))
    for c, (lo, hi, sign) in enumerate(((lo_l, hi_l, 1.0), (lo_r, hi_r, -1.0))):
        lo = max(lo, 1)
        hi = min(hi, width - 2)
        win = sign * g[:, lo:hi + 1]
        j = np.argmax(win, axis=1)
        ar = np.arange(rows)
        g0 = win[ar, j]
        jj = j + lo
        has_nb = (jj > 1) & (jj < width - 2)
        gm = sign * g[ar, np.maximum(jj - 1, 0)]
        gp = sign * g[ar, np.minimum(jj + 1, width - 1)]
        den = gm - 2.0 * g0 + gp
        ok = has_nb & (den < 0)
        off = np.where(ok, 0.5 * (gm - gp) / np.where(ok, den, -1.0), 0.0)
        off = np.clip(off, -0.5, 0.5)
        pos[:, c] = jj + off
        peak[:, c] = g0
    return pos, peak
