"""Split, normalized and quantile-conformalized prediction intervals.

All calibrators sort their nonconformity scores in nonincreasing order and
take the ``m``-th largest, ``m = floor(alpha * (n + 1))``. A calibration set
too small for the requested miscoverage (``m < 1``) is an error rather than
an infinite interval.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

VARIANTS = ("cp", "ncp", "cqr")


class CalibrationError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class CalibrationScores:
    scores: np.ndarray  # nonincreasing

    @classmethod
    def from_unsorted(cls, values) -> "CalibrationScores":
        s = np.asarray(values, dtype=np.float64).ravel()
        if s.size == 0:
            raise CalibrationError("no calibration scores")
        if not np.all(np.isfinite(s)):
            raise CalibrationError("calibration scores must be finite")
        # stable sort on the negated scores keeps ties in input order
        return cls(s[np.argsort(-s, kind="stable")])

    @property
    def n(self) -> int:
        return self.scores.size

    def mth_largest(self, alpha: float) -> float:
        return float(self.scores[quantile_index(self.n, alpha) - 1])


@dataclass(frozen=True)
class IntervalModel:
    """A calibrated interval constructor.

    ``constant`` is ``r_m`` for plain CP, ``rho_m`` for normalized CP and
    ``eps_m`` (possibly negative) for CQR.
    """

    variant: str
    constant: float
    alpha: float
    n_calib: int
    m: int

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise ValueError(f"unknown variant {self.variant!r}")
        if not math.isfinite(self.constant):
            raise CalibrationError("calibration constant is not finite")
        if self.variant != "cqr" and self.constant < 0:
            raise CalibrationError("absolute-residual scores cannot give a negative constant")


@dataclass(frozen=True)
class PredictionInterval:
    lo: float
    hi: float
    center: float

    def __post_init__(self):
        if not (math.isfinite(self.lo) and math.isfinite(self.hi)) or self.lo > self.hi:
            raise ValueError(f"invalid interval [{self.lo}, {self.hi}]")

    @property
    def width(self) -> float:
        return self.hi - self.lo

    def contains(self, y: float) -> bool:
        return self.lo <= y <= self.hi


class DegeneracyCounter:
    """Counts CQR intervals that collapsed to their midpoint."""

    def __init__(self):
        self.count = 0

    def __repr__(self):
        return f"DegeneracyCounter(count={self.count})"


def quantile_index(n: int, alpha: float) -> int:
    """``m = floor(alpha * (n + 1))``; raises when ``m < 1``."""
    if n < 1:
        raise CalibrationError("calibration set is empty")
    if not 0 < alpha < 1:
        raise CalibrationError(f"alpha must lie in (0, 1), got {alpha}")
    m = math.floor(alpha * (n + 1))
    if m < 1:
        raise CalibrationError(
            f"calibration set too small for requested miscoverage (n={n}, alpha={alpha})"
        )
    return m


def residual_score(y, yhat):
    out = np.abs(np.asarray(y, dtype=np.float64) - np.asarray(yhat, dtype=np.float64))
    return float(out) if out.ndim == 0 else out


def normalized_score(residual, gamma):
    residual = np.asarray(residual, dtype=np.float64)
    gamma = np.asarray(gamma, dtype=np.float64)
    if np.any(~(gamma > 0)):
        raise CalibrationError("gamma must be strictly positive")
    out = residual / gamma
    return float(out) if out.ndim == 0 else out


def cqr_score(y, lo, hi):
    """``max(lo - y, y - hi)``: negative exactly when ``y`` is strictly inside."""
    y = np.asarray(y, dtype=np.float64)
    lo = np.asarray(lo, dtype=np.float64)
    hi = np.asarray(hi, dtype=np.float64)
    if np.any(lo > hi):
        raise CalibrationError("quantile bounds are crossed (lo > hi)")
    out = np.maximum(lo - y, y - hi)
    return float(out) if out.ndim == 0 else out


def _calibrate(variant: str, scores, alpha: float) -> IntervalModel:
    cs = CalibrationScores.from_unsorted(scores)
    m = quantile_index(cs.n, alpha)
    return IntervalModel(variant, float(cs.scores[m - 1]), alpha, cs.n, m)


def calibrate_cp(residuals, alpha: float) -> IntervalModel:
    r = np.asarray(residuals, dtype=np.float64)
    if np.any(r < 0):
        raise CalibrationError("residuals must be nonnegative")
    return _calibrate("cp", r, alpha)


def calibrate_ncp(residuals, gammas, alpha: float) -> IntervalModel:
    """Normalized CP from paired residuals and positive difficulty scales."""
    r = np.asarray(residuals, dtype=np.float64)
    g = np.asarray(gammas, dtype=np.float64)
    if r.shape != g.shape:
        raise CalibrationError("residuals and gammas differ in length")
    if np.any(r < 0):
        raise CalibrationError("residuals must be nonnegative")
    return _calibrate("ncp", normalized_score(r, g), alpha)


def calibrate_cqr(y, lo, hi, alpha: float) -> IntervalModel:
    return _calibrate("cqr", np.atleast_1d(cqr_score(y, lo, hi)), alpha)


def _require(model: IntervalModel, variant: str):
    if model.variant != variant:
        raise ValueError(f"expected a {variant} model, got {model.variant}")


def interval_cp(yhat: float, model: IntervalModel) -> PredictionInterval:
    _require(model, "cp")
    return PredictionInterval(yhat - model.constant, yhat + model.constant, yhat)


def interval_ncp(yhat: float, gamma: float, model: IntervalModel) -> PredictionInterval:
    _require(model, "ncp")
    if not gamma > 0:
        raise CalibrationError("gamma must be strictly positive")
    half = model.constant * gamma
    return PredictionInterval(yhat - half, yhat + half, yhat)


def interval_cqr(lo: float, hi: float, model: IntervalModel, counter: DegeneracyCounter | None = None,
                 center: float | None = None) -> PredictionInterval:
    """``[lo - eps_m, hi + eps_m]``; an empty result collapses to the midpoint and is counted."""
    _require(model, "cqr")
    if lo > hi:
        raise CalibrationError("quantile bounds are crossed (lo > hi)")
    a, b = lo - model.constant, hi + model.constant
    if a > b:
        a = b = 0.5 * (lo + hi)
        if counter is not None:
            counter.count += 1
    return PredictionInterval(a, b, 0.5 * (lo + hi) if center is None else center)


# ------------------------------------------------------------ batch versions


def bounds_cp(yhat, model: IntervalModel) -> tuple[np.ndarray, np.ndarray]:
    _require(model, "cp")
    yhat = np.asarray(yhat, dtype=np.float64)
    return yhat - model.constant, yhat + model.constant


def bounds_ncp(yhat, gamma, model: IntervalModel) -> tuple[np.ndarray, np.ndarray]:
    _require(model, "ncp")
    gamma = np.asarray(gamma, dtype=np.float64)
    if np.any(~(gamma > 0)):
        raise CalibrationError("gamma must be strictly positive")
    half = model.constant * gamma
    yhat = np.asarray(yhat, dtype=np.float64)
    return yhat - half, yhat + half


def bounds_cqr(lo, hi, model: IntervalModel) -> tuple[np.ndarray, np.ndarray, int]:
    """Vectorized :func:`interval_cqr`; also returns the number of midpoint collapses."""
    _require(model, "cqr")
    lo = np.asarray(lo, dtype=np.float64)
    hi = np.asarray(hi, dtype=np.float64)
    if np.any(lo > hi):
        raise CalibrationError("quantile bounds are crossed (lo > hi)")
    a, b = lo - model.constant, hi + model.constant
    empty = a > b
    mid = 0.5 * (lo + hi)
    return np.where(empty, mid, a), np.where(empty, mid, b), int(empty.sum())
