"""Rough edge synthesis with a Palasantzas power spectral density.

Edges are generated by Fourier synthesis: each positive-frequency bin gets a
complex Gaussian coefficient whose variance equals ``PSD(f_k) * df``, the
spectrum is made Hermitian and inverted. The PSD used throughout is the
two-sided density, so ``sum_k PSD(f_k) df`` over all ``n`` bins approximates
the edge variance.

Conventions
-----------
* LER is the population standard deviation (divide by N) of the edge
  displacements. No finite-length bias correction is applied.
* The DC bin is zeroed, so every synthesized edge has exactly zero mean.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

SIGMA_GRID = tuple(round(0.4 + 0.2 * i, 1) for i in range(8))
HURST_GRID = tuple(round(0.1 * i, 1) for i in range(1, 10))
XI_GRID = tuple(range(6, 41))


@dataclass(frozen=True)
class PalasantzasParams:
    """Roughness parameters: ``sigma`` (nm), ``hurst`` exponent, ``xi`` (nm)."""

    sigma: float
    hurst: float
    xi: float

    def __post_init__(self):
        if not (self.sigma > 0 and math.isfinite(self.sigma)):
            raise ValueError(f"sigma must be positive, got {self.sigma}")
        if not 0 < self.hurst < 1:
            raise ValueError(f"hurst must lie in (0, 1), got {self.hurst}")
        if not (self.xi > 0 and math.isfinite(self.xi)):
            raise ValueError(f"xi must be positive, got {self.xi}")

    def as_dict(self) -> dict:
        return {"sigma": self.sigma, "hurst": self.hurst, "xi": self.xi}


@dataclass(frozen=True, eq=False)
class EdgeProfile:
    displacements: np.ndarray
    pitch: float
    params: PalasantzasParams
    seed: int | None = None

    def __post_init__(self):
        d = np.asarray(self.displacements, dtype=np.float64)
        if d.ndim != 1 or d.size == 0:
            raise ValueError("displacements must be a nonempty 1-D sequence")
        if not np.all(np.isfinite(d)):
            raise ValueError("displacements must be finite")
        d.setflags(write=False)
        object.__setattr__(self, "displacements", d)

    @property
    def n(self) -> int:
        return self.displacements.size


def _prefactor(hurst: float) -> float:
    # sqrt(pi) * Gamma(h + 1/2) / Gamma(h), via lgamma to stay accurate near h -> 0
    return math.sqrt(math.pi) * math.exp(math.lgamma(hurst + 0.5) - math.lgamma(hurst))


def psd_eval(params: PalasantzasParams, f):
    """Evaluate the Palasantzas PSD (nm^3) at frequency ``f`` (cycles/nm).

    Accepts a scalar or an array; negative frequencies are rejected.
    """
    f_arr = np.asarray(f, dtype=np.float64)
    if np.any(f_arr < 0) or not np.all(np.isfinite(f_arr)):
        raise ValueError("frequencies must be finite and nonnegative")
    h, xi = params.hurst, params.xi
    out = (
        _prefactor(h)
        * 2.0
        * params.sigma**2
        * xi
        / (1.0 + (2.0 * np.pi * f_arr * xi) ** 2) ** (h + 0.5)
    )
    return float(out) if out.ndim == 0 else out


def frequencies(n: int, pitch: float) -> np.ndarray:
    """Nonnegative bin frequencies ``k / (n * pitch)`` for ``k = 0..n/2``."""
    return np.arange(n // 2 + 1) / (n * pitch)


def synthesize_edge(
    params: PalasantzasParams,
    n: int = 1024,
    pitch: float = 2.0,
    seed: int = 0,
    psd=None,
) -> EdgeProfile:
    """Generate one rough edge whose expected periodogram equals the PSD.

    ``psd`` overrides the spectral model (a callable of frequency); it exists
    for degenerate checks and alternative spectra.
    """
    if n < 2 or n & (n - 1):
        raise ValueError(f"n must be a power of two >= 2, got {n}")
    if not pitch > 0:
        raise ValueError(f"pitch must be positive, got {pitch}")
    rng = np.random.default_rng(seed)
    df = 1.0 / (n * pitch)
    f = frequencies(n, pitch)
    spec = psd_eval(params, f) if psd is None else np.asarray(psd(f), dtype=np.float64)
    amp = np.sqrt(spec * df)

    g = rng.standard_normal((2, f.size))
    coef = amp * (g[0] + 1j * g[1]) / math.sqrt(2.0)
    coef[0] = 0.0
    # Nyquist bin must be real; give it the full unit variance
    coef[-1] = amp[-1] * g[0, -1]
    # irfft builds the Hermitian spectrum; scale by n to undo its 1/n
    d = np.fft.irfft(coef, n=n) * n
    return EdgeProfile(d, pitch, params, seed)


def compute_ler(edge) -> float:
    """Population standard deviation of edge displacements (nm)."""
    d = np.asarray(getattr(edge, "displacements", edge), dtype=np.float64)
    if d.size == 0:
        raise ValueError("edge is empty")
    return float(np.sqrt(np.mean((d - d.mean()) ** 2)))


def periodogram(edge, pitch: float | None = None, onesided: bool = True) -> np.ndarray:
    """``|DFT(d)|^2 * pitch / n`` per bin.

    With ``onesided`` only bins ``0..n/2`` are returned; values are *not*
    doubled, so they estimate the two-sided PSD at ``f_k`` directly. Use
    :func:`parseval_weights` to fold them back into a variance.
    """
    d = np.asarray(getattr(edge, "displacements", edge), dtype=np.float64)
    if d.size == 0:
        raise ValueError("edge is empty")
    if pitch is None:
        pitch = getattr(edge, "pitch", 1.0)
    n = d.size
    spec = np.fft.rfft(d) if onesided else np.fft.fft(d)
    return np.abs(spec) ** 2 * pitch / n


def parseval_weights(n: int) -> np.ndarray:
    """Multiplicities of one-sided bins in the full two-sided spectrum."""
    w = np.full(n // 2 + 1, 2.0)
    w[0] = 1.0
    if n % 2 == 0:
        w[-1] = 1.0
    return w


def autocorrelation(edges: np.ndarray, max_lag: int) -> np.ndarray:
    """Ensemble circular autocovariance at lags ``0..max_lag`` (nm^2).

    ``edges`` has shape ``(n_edges, n)``.
    """
    edges = np.atleast_2d(np.asarray(edges, dtype=np.float64))
    out = np.empty(max_lag + 1)
    for r in range(max_lag + 1):
        out[r] = np.mean(edges * np.roll(edges, -r, axis=1))
    return out
