"""Base LER regressor, difficulty models and residual quantile networks.

The base regressor is a classical per-row edge detector followed by the LER
of each detected edge. Difficulty models regress ``-ln|y - g(x)|`` on summary
features of the noise image and give ``gamma = exp(-phi)``. Quantile networks
take the base prediction plus one or two difficulty estimates and output a
lower and upper quantile through a residual connection from the prediction.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy import ndimage

from . import kernels
from .imaging import ImageGeometry, SemImage
from .roughness import compute_ler

CHECKPOINT_FORMAT = "lerconf-checkpoint"
CHECKPOINT_VERSION = 1

FEATURE_NAMES = (
    "noise_mean",
    "noise_std",
    "noise_max",
    "left_band_mean",
    "left_band_std",
    "right_band_mean",
    "right_band_std",
    "left_increment_std",
    "right_increment_std",
    "dose_proxy",
    "bias",
)
SEQUENCE_FEATURE_NAMES = (
    "left_increment_std",
    "right_increment_std",
    "left_increment_lag1",
    "right_increment_lag1",
    "left_detected_ler",
    "right_detected_ler",
    "left_curvature_ratio",
    "right_curvature_ratio",
    "bias",
)


class TrainingError(RuntimeError):
    pass


# ------------------------------------------------------------ edge detection


@dataclass(frozen=True, eq=False)
class EdgeDetection:
    left: np.ndarray  # nm, one per row
    right: np.ndarray
    failed: np.ndarray  # (rows, 2) bool
    window: tuple[int, int, int, int]

    @property
    def n_failed(self) -> int:
        return int(self.failed.sum())


@dataclass(frozen=True)
class LerPrediction:
    left_ler: float
    right_ler: float
    n_failed: int = 0


def _impute_nearest(values: np.ndarray, bad: np.ndarray, fallback: float) -> np.ndarray:
    if not bad.any():
        return values
    good = np.flatnonzero(~bad)
    if good.size == 0:
        return np.full_like(values, fallback)
    rows = np.arange(values.size)
    k = np.searchsorted(good, rows).clip(0, good.size - 1)
    prev, nxt = good[np.maximum(k - 1, 0)], good[k]
    nearest = np.where(np.abs(rows - prev) <= np.abs(nxt - rows), prev, nxt)
    out = values.copy()
    out[bad] = values[nearest[bad]]
    return out


def detect_edges(
    img: SemImage | np.ndarray,
    geom: ImageGeometry | None = None,
    smooth_px: float = 1.0,
    half_window_px: int = 16,
    min_contrast: float = 1e-3,
    edge_offset_px: float = 1.25,
    backend=None,
) -> EdgeDetection:
    """Locate the left and right edge in every row (nm from the image left).

    Each row is smoothed horizontally; the left edge is the strongest rising
    gradient and the right edge the strongest falling gradient, searched in
    windows around the line found from the row-averaged column profile.
    ``edge_offset_px`` moves the gradient peak inward by the bloom half-width,
    since the steepest slope sits on the outer rim of the bright edge band.
    Rows whose peak gradient is below ``min_contrast`` are flagged and copied
    from the nearest valid row.
    """
    geom = geom or ImageGeometry()
    k = backend or kernels.impl
    pixels = np.asarray(getattr(img, "pixels", img), dtype=np.float64)
    if pixels.shape != (geom.height_px, geom.width_px):
        raise ValueError(f"image shape {pixels.shape} does not match geometry")
    width = geom.width_px
    sm = ndimage.gaussian_filter1d(pixels, smooth_px, axis=1, mode="nearest") if smooth_px > 0 else pixels

    profile = sm.mean(axis=0)
    gp = np.zeros(width)
    gp[1:-1] = (profile[2:] - profile[:-2]) * 0.5
    gl = int(np.argmax(gp[1:-2])) + 1
    gr = int(np.argmin(gp[gl + 1:-1])) + gl + 1
    mid = 0.5 * (gl + gr)
    window = (max(gl - half_window_px, 1), int(math.floor(mid)), int(math.ceil(mid)), min(gr + half_window_px, width - 2))

    pos, peak = k.detect_rows(np.ascontiguousarray(sm), *window)
    failed = peak < min_contrast
    left = (pos[:, 0] + 0.5 + edge_offset_px) * geom.px_w
    right = (pos[:, 1] + 0.5 - edge_offset_px) * geom.px_w
    left = _impute_nearest(left, failed[:, 0], (gl + 0.5 + edge_offset_px) * geom.px_w)
    right = _impute_nearest(right, failed[:, 1], (gr + 0.5 - edge_offset_px) * geom.px_w)
    return EdgeDetection(left, right, failed, window)


def estimate_snr(img: SemImage | np.ndarray) -> float:
    """Line contrast over per-pixel noise, both measured from the image alone.

    Noise comes from differences between vertically adjacent pixels, which
    cancel the (slowly varying) structure along the line; contrast is the
    5-95 percentile spread of the row-averaged column profile.
    """
    x = np.asarray(getattr(img, "pixels", img), dtype=np.float64)
    noise = float(np.diff(x, axis=0).std()) / math.sqrt(2.0)
    profile = x.mean(axis=0)
    contrast = float(np.percentile(profile, 95) - np.percentile(profile, 5))
    return contrast / max(noise, 1e-12)


def adaptive_sigma(snr: float, scale: float = 3.5, max_sigma: float = 3.0, min_sigma: float = 0.3) -> float:
    """Isotropic smoothing width (px) for a given SNR; 0 when below ``min_sigma``."""
    s = min(max_sigma, scale / max(snr, 1e-12))
    return s if s >= min_sigma else 0.0


def adaptive_smooth(img: SemImage | np.ndarray, **kwargs) -> np.ndarray:
    """Gaussian pre-smoothing whose strength shrinks as the estimated SNR grows.

    Fixed smoothing trades variance at low dose for a roughness-attenuating
    bias at high dose; scaling the width by ``1/SNR`` keeps both small, so the
    detection error falls with dose.
    """
    x = np.asarray(getattr(img, "pixels", img), dtype=np.float64)
    s = adaptive_sigma(estimate_snr(x), **kwargs)
    return ndimage.gaussian_filter(x, s, mode="nearest") if s > 0 else x


def estimate_ler(img: SemImage | np.ndarray, geom: ImageGeometry | None = None, adaptive: bool = True,
                 **kwargs) -> LerPrediction:
    """Base regressor: LER of both detected edges.

    With ``adaptive`` (the default) the image is first smoothed according to
    its estimated SNR; noiseless images pass through unchanged.
    """
    det = detect_edges(adaptive_smooth(img) if adaptive else img, geom, **kwargs)
    return LerPrediction(compute_ler(det.left), compute_ler(det.right), det.n_failed)


# ------------------------------------------------------------------ features


def _band_stats(noise: np.ndarray, cols: np.ndarray, half: int) -> tuple[float, float]:
    j = np.arange(noise.shape[1])
    mask = np.abs(j[None, :] - cols[:, None]) <= half
    vals = noise[mask]
    return float(vals.mean()), float(vals.std())


def difficulty_features(noise: SemImage | np.ndarray, det: EdgeDetection, geom: ImageGeometry | None = None,
                        band_px: int = 3) -> np.ndarray:
    """Fixed-length summary of a noise image around the detected edges (see ``FEATURE_NAMES``)."""
    geom = geom or ImageGeometry()
    x = np.asarray(getattr(noise, "pixels", noise), dtype=np.float64)
    mean = float(x.mean())
    cols_l = np.floor(det.left / geom.px_w).astype(int)
    cols_r = np.floor(det.right / geom.px_w).astype(int)
    lm, ls = _band_stats(x, cols_l, band_px)
    rm, rs = _band_stats(x, cols_r, band_px)
    feats = [
        mean, float(x.std()), float(x.max()),
        lm, ls, rm, rs,
        float(np.diff(det.left).std()), float(np.diff(det.right).std()),
        1.0 / max(mean, 1e-6),
        1.0,
    ]
    return np.array(feats)


def _lag1(x: np.ndarray) -> float:
    x = x - x.mean()
    den = float(np.dot(x, x))
    return float(np.dot(x[:-1], x[1:]) / den) if den > 0 else 0.0


def sequence_features(det: EdgeDetection) -> np.ndarray:
    """Summaries of the detected edge sequences (see ``SEQUENCE_FEATURE_NAMES``)."""
    out = []
    for name in ("increment_std", "lag1", "ler", "curv"):
        for e in (det.left, det.right):
            d1 = np.diff(e)
            if name == "increment_std":
                out.append(float(d1.std()))
            elif name == "lag1":
                out.append(_lag1(d1))
            elif name == "ler":
                out.append(compute_ler(e))
            else:
                out.append(float(np.diff(e, 2).std() / max(d1.std(), 1e-9)))
    out.append(1.0)
    return np.array(out)


# ------------------------------------------------------------------ training


def _standardizer(X: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    mean = X.mean(axis=0)
    std = X.std(axis=0)
    const = std < 1e-12
    mean = np.where(const, 0.0, mean)
    std = np.where(const, 1.0, std)
    return mean, std


def _cosine_lrs(lr: float, total_steps: int, floor: float = 0.01) -> np.ndarray:
    s = np.arange(total_steps) / max(total_steps - 1, 1)
    return lr * (floor + (1.0 - floor) * 0.5 * (1.0 + np.cos(np.pi * s)))


def _train(theta, shape, X, r, y, loss, q_lo, q_hi, delta, epochs, batch, lr, rng, backend):
    k = backend or kernels.impl
    n = X.shape[0]
    nb = -(-n // batch)
    lrs = _cosine_lrs(lr, epochs * nb)
    m = np.zeros_like(theta)
    v = np.zeros_like(theta)
    X = np.ascontiguousarray(X, dtype=np.float64)
    r = np.ascontiguousarray(r, dtype=np.float64)
    y = np.ascontiguousarray(y, dtype=np.float64)
    t = 0
    curve = []
    for ep in range(epochs):
        order = rng.permutation(n).astype(np.int64)
        total, t = k.train_epoch(theta, m, v, t, shape, X, r, y, order, batch,
                                 np.ascontiguousarray(lrs[ep * nb:(ep + 1) * nb]),
                                 loss, q_lo, q_hi, delta)
        value = total / n
        if not math.isfinite(value) or not np.all(np.isfinite(theta)):
            raise TrainingError(f"training diverged at epoch {ep}: loss={value}")
        curve.append(value)
    return curve


def _init_hidden(rng, d, h):
    lim = math.sqrt(6.0 / d)
    return rng.uniform(-lim, lim, size=(h, d)), np.zeros(h)


@dataclass(eq=False)
class DifficultyModel:
    """Per-edge regressor of ``phi = -ln|residual|`` from features."""

    theta: np.ndarray
    shape: tuple[int, int, int]
    feature_mean: np.ndarray
    feature_std: np.ndarray
    seed: int
    epochs: int
    loss_curve: list = field(default_factory=list)
    final_mae: float = float("nan")

    def predict_phi(self, features) -> np.ndarray:
        X = np.atleast_2d(np.asarray(features, dtype=np.float64))
        if X.shape[1] != self.shape[0]:
            raise ValueError(f"expected {self.shape[0]} features, got {X.shape[1]}")
        Xs = (X - self.feature_mean) / self.feature_std
        return kernels.impl.predict(self.theta, self.shape, np.ascontiguousarray(Xs), np.zeros(X.shape[0]))[:, 0]


def difficulty_targets(y, yhat, eps_resid: float = 1e-6) -> np.ndarray:
    """``-ln(max(|y - yhat|, eps_resid))``."""
    return -np.log(np.maximum(np.abs(np.asarray(y, float) - np.asarray(yhat, float)), eps_resid))


def difficulty_objective(theta, shape, Xs, targets, delta: float = 1e-8, backend=None):
    """Smoothed MAE ``mean(sqrt(e^2 + delta^2))`` and its gradient."""
    k = backend or kernels.get_backend("python")
    return k.loss_grad(theta, shape, Xs, np.zeros(len(targets)), targets, kernels.LOSS_MAE, 0.0, 0.0, delta)


def fit_difficulty(
    features,
    targets,
    seed: int = 0,
    hidden: int = 16,
    epochs: int = 200,
    batch: int = 18,
    lr: float = 1e-3,
    delta: float = 1e-8,
    backend=None,
) -> DifficultyModel:
    X = np.atleast_2d(np.asarray(features, dtype=np.float64))
    t = np.asarray(targets, dtype=np.float64)
    if X.shape[0] != t.size:
        raise ValueError("features and targets differ in length")
    if t.size < 10:
        raise TrainingError(f"need at least 10 training examples, got {t.size}")
    if not np.all(np.isfinite(t)) or not np.all(np.isfinite(X)):
        raise TrainingError("non-finite features or targets")
    mean, std = _standardizer(X)
    Xs = (X - mean) / std
    d = X.shape[1]
    shape = (d, hidden, 1)
    rng = np.random.default_rng(seed)
    w1, b1 = _init_hidden(rng, d, hidden)
    lim = math.sqrt(6.0 / (hidden + 1))
    w2 = rng.uniform(-lim, lim, size=(1, hidden)) * 0.1
    b2 = np.array([np.median(t)])
    theta = np.concatenate([w1.ravel(), b1, w2.ravel(), b2])
    curve = _train(theta, shape, Xs, np.zeros(t.size), t, kernels.LOSS_MAE, 0.0, 0.0, delta,
                   epochs, batch, lr, rng, backend)
    model = DifficultyModel(theta, shape, mean, std, seed, epochs, curve)
    model.final_mae = float(np.mean(np.abs(model.predict_phi(X) - t)))
    return model


def predict_gamma(model: DifficultyModel | None, features=None, phi=None):
    """``exp(-phi)``; pass either a model and features or ``phi`` directly."""
    if phi is None:
        phi = model.predict_phi(features)
    gamma = np.exp(-np.asarray(phi, dtype=np.float64))
    return float(gamma) if gamma.ndim == 0 else gamma


def pinball_loss(eps: float, y, yhat):
    """Quantile loss: ``eps*(y-yhat)`` if ``y >= yhat`` else ``(1-eps)*(yhat-y)``."""
    if not 0 < eps < 1:
        raise ValueError(f"quantile level must lie in (0, 1), got {eps}")
    u = np.asarray(y, dtype=np.float64) - np.asarray(yhat, dtype=np.float64)
    out = np.where(u >= 0, eps * u, (eps - 1.0) * u)
    return float(out) if out.ndim == 0 else out


@dataclass(eq=False)
class QuantileNet:
    """Residual quantile network; input column 0 is the base prediction."""

    theta: np.ndarray
    shape: tuple[int, int, int]
    input_mean: np.ndarray
    input_std: np.ndarray
    alpha: float
    seed: int
    epochs: int
    loss_curve: list = field(default_factory=list)

    @classmethod
    def zeros(cls, n_inputs: int, alpha: float = 0.1) -> "QuantileNet":
        shape = (n_inputs, 2 * n_inputs, 2)
        return cls(np.zeros(kernels.impl.n_params(shape)), shape, np.zeros(n_inputs), np.ones(n_inputs),
                   alpha, 0, 0)

    def raw_quantiles(self, inputs) -> tuple[np.ndarray, np.ndarray]:
        X = np.atleast_2d(np.asarray(inputs, dtype=np.float64))
        if X.shape[1] != self.shape[0]:
            raise ValueError(f"expected {self.shape[0]} inputs, got {X.shape[1]}")
        Xs = (X - self.input_mean) / self.input_std
        out = kernels.impl.predict(self.theta, self.shape, np.ascontiguousarray(Xs), np.ascontiguousarray(X[:, 0]))
        return out[:, 0], out[:, 1]


def quantile_objective(theta, shape, Xs, yhat, y, alpha: float, backend=None):
    """Summed pinball loss of the lower and upper heads, averaged over rows, and its gradient."""
    k = backend or kernels.get_backend("python")
    return k.loss_grad(theta, shape, Xs, yhat, y, kernels.LOSS_PINBALL, 0.5 * alpha, 1.0 - 0.5 * alpha, 0.0)


def fit_quantile_net(
    inputs,
    y,
    alpha: float,
    seed: int = 0,
    epochs: int = 300,
    batch: int = 18,
    lr: float = 1e-3,
    backend=None,
) -> QuantileNet:
    X = np.atleast_2d(np.asarray(inputs, dtype=np.float64))
    y = np.asarray(y, dtype=np.float64)
    if not 0 < alpha < 0.5:
        raise ValueError(f"alpha must lie in (0, 0.5), got {alpha}")
    if X.shape[0] != y.size:
        raise ValueError("inputs and labels differ in length")
    if y.size < 10:
        raise TrainingError(f"need at least 10 training examples, got {y.size}")
    if not np.all(np.isfinite(X)) or not np.all(np.isfinite(y)):
        raise TrainingError("non-finite inputs or labels")
    mean, std = _standardizer(X)
    Xs = (X - mean) / std
    d = X.shape[1]
    shape = (d, 2 * d, 2)
    rng = np.random.default_rng(seed)
    w1, b1 = _init_hidden(rng, d, 2 * d)
    w2 = rng.uniform(-0.01, 0.01, size=(2, 2 * d))
    theta = np.concatenate([w1.ravel(), b1, w2.ravel(), np.zeros(2)])
    curve = _train(theta, shape, Xs, X[:, 0], y, kernels.LOSS_PINBALL, 0.5 * alpha, 1.0 - 0.5 * alpha, 0.0,
                   epochs, batch, lr, rng, backend)
    return QuantileNet(theta, shape, mean, std, alpha, seed, epochs, curve)


def predict_quantiles(net: QuantileNet, inputs) -> tuple[np.ndarray, np.ndarray]:
    """Lower and upper quantile estimates, swapped where the heads cross."""
    lo, hi = net.raw_quantiles(inputs)
    return np.minimum(lo, hi), np.maximum(lo, hi)


def order_outputs(lo, hi):
    lo = np.asarray(lo, dtype=np.float64)
    hi = np.asarray(hi, dtype=np.float64)
    return np.minimum(lo, hi), np.maximum(lo, hi)


# --------------------------------------------------------------- checkpoints


def _layers(theta, shape):
    w1, b1, w2, b2 = kernels._kernels_py.unpack(theta, shape)
    return [
        {"name": "hidden", "activation": "relu", "weight_shape": list(w1.shape),
         "weights": w1.ravel().tolist(), "bias": b1.tolist()},
        {"name": "output", "activation": "linear", "weight_shape": list(w2.shape),
         "weights": w2.ravel().tolist(), "bias": b2.tolist()},
    ]


def checkpoint_dict(model: DifficultyModel | QuantileNet) -> dict:
    if isinstance(model, DifficultyModel):
        doc = {"kind": "difficulty", "standardization": {"mean": model.feature_mean.tolist(),
                                                         "std": model.feature_std.tolist()},
               "final_mae": model.final_mae, "residual_input": None}
    elif isinstance(model, QuantileNet):
        doc = {"kind": "quantile", "standardization": {"mean": model.input_mean.tolist(),
                                                       "std": model.input_std.tolist()},
               "alpha": model.alpha, "residual_input": 0}
    else:
        raise TypeError(f"cannot checkpoint {type(model).__name__}")
    doc.update(format=CHECKPOINT_FORMAT, version=CHECKPOINT_VERSION, shape=list(model.shape),
               layers=_layers(model.theta, model.shape), seed=model.seed, epochs=model.epochs,
               loss_curve=list(model.loss_curve))
    return doc


def save_checkpoint(model, path) -> None:
    Path(path).write_text(json.dumps(checkpoint_dict(model), indent=1, sort_keys=True) + "\n")


def load_checkpoint(path) -> DifficultyModel | QuantileNet:
    doc = json.loads(Path(path).read_text())
    if doc.get("format") != CHECKPOINT_FORMAT:
        raise ValueError(f"{path}: not a {CHECKPOINT_FORMAT} file")
    if doc.get("version") != CHECKPOINT_VERSION:
        raise ValueError(f"{path}: unsupported checkpoint version {doc.get('version')}")
    shape = tuple(doc["shape"])
    theta = np.concatenate([np.concatenate([np.asarray(layer["weights"], float), np.asarray(layer["bias"], float)])
                            for layer in doc["layers"]])
    mean = np.asarray(doc["standardization"]["mean"], float)
    std = np.asarray(doc["standardization"]["std"], float)
    if doc["kind"] == "difficulty":
        return DifficultyModel(theta, shape, mean, std, doc["seed"], doc["epochs"], doc["loss_curve"],
                               doc["final_mae"])
    if doc["kind"] == "quantile":
        return QuantileNet(theta, shape, mean, std, doc["alpha"], doc["seed"], doc["epochs"], doc["loss_curve"])
    raise ValueError(f"{path}: unknown model kind {doc['kind']!r}")
