"""Simplified SEM rendering, Poisson dose noise, denoising and noise images.

Images are stored as ``(height_px, width_px)`` arrays: one row per sample
along the line, one column per 0.5 nm pixel across it. Pixel ``j`` covers
``[j * px_w, (j + 1) * px_w)`` nm.
"""
from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy import ndimage

from .roughness import EdgeProfile

STANDARD_DOSES = (2, 3, 4, 5, 10, 20, 30, 50, 100, 200)
LINE_WIDTHS = (10.0, 15.0)
KINDS = ("clean", "noisy", "denoised", "noise")

SEMF_MAGIC = b"SEMF"
_SEMF_HEADER = struct.Struct("<4sHHII")


class GeometryError(ValueError):
    pass


@dataclass(frozen=True)
class ImageGeometry:
    width_px: int = 64
    height_px: int = 1024
    px_w: float = 0.5
    px_h: float = 2.0
    margin_nm: float = 4.0

    @property
    def width_nm(self) -> float:
        return self.width_px * self.px_w

    def column_centers(self) -> np.ndarray:
        return (np.arange(self.width_px) + 0.5) * self.px_w


@dataclass(frozen=True)
class LineSpec:
    left: EdgeProfile
    right: EdgeProfile
    center_offset: float
    width: float

    def positions(self) -> tuple[np.ndarray, np.ndarray]:
        """Continuous left/right edge positions per row (nm from image left)."""
        half = 0.5 * self.width
        return (
            self.center_offset - half + self.left.displacements,
            self.center_offset + half + self.right.displacements,
        )

    def validate(self, geom: ImageGeometry) -> None:
        if self.left.n != geom.height_px or self.right.n != geom.height_px:
            raise GeometryError("edge length must equal the image height")
        if self.center_offset + 0.5 * self.width + geom.margin_nm > geom.width_nm:
            raise GeometryError("line offset + width + margin exceeds the image width")
        left, right = self.positions()
        if np.any(left >= right):
            raise GeometryError("left edge crosses the right edge")
        if left.min() < 0 or right.max() > geom.width_nm:
            raise GeometryError("line leaves the image")


@dataclass(frozen=True)
class RenderStyle:
    background: float = 0.2
    line: float = 0.55
    bloom: float = 0.9
    bloom_halfwidth_px: float = 1.0
    texture_amp: float = 0.03
    texture_sigma_px: float = 3.0
    blur: bool = True
    blur_major_px: float = 2.0
    blur_minor_px: float = 1.0
    blur_angle_deg: float = 30.0

    @classmethod
    def ideal(cls) -> "RenderStyle":
        """Binary stripe with bloom rims: no texture, no blur."""
        return cls(texture_amp=0.0, blur=False)


@dataclass(frozen=True, eq=False)
class SemImage:
    """An intensity grid plus bookkeeping.

    ``gain`` converts pixel values back to electron counts for noisy images
    (``counts = pixels * gain``); it is ``None`` for other kinds.
    """

    pixels: np.ndarray
    kind: str
    dose: float | None = None
    gain: float | None = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown image kind {self.kind!r}")

    @property
    def shape(self) -> tuple[int, int]:
        return self.pixels.shape


def _interval_coverage(lo: np.ndarray, hi: np.ndarray, geom: ImageGeometry) -> np.ndarray:
    """Fraction of each pixel covered by the per-row interval ``[lo, hi]``."""
    x0 = np.arange(geom.width_px) * geom.px_w
    x1 = x0 + geom.px_w
    overlap = np.minimum(hi[:, None], x1) - np.maximum(lo[:, None], x0)
    return np.clip(overlap / geom.px_w, 0.0, 1.0)


def blur_kernel(major: float, minor: float, angle_deg: float) -> np.ndarray:
    """Normalized anisotropic Gaussian; ``angle_deg`` is the major-axis angle to +x."""
    radius = int(np.ceil(3.0 * max(major, minor)))
    ax = np.arange(-radius, radius + 1, dtype=np.float64)
    yy, xx = np.meshgrid(ax, ax, indexing="ij")
    t = np.deg2rad(angle_deg)
    # rows grow downward, so a positive angle to +x is a negative row offset
    u = xx * np.cos(t) - yy * np.sin(t)
    v = xx * np.sin(t) + yy * np.cos(t)
    k = np.exp(-0.5 * ((u / major) ** 2 + (v / minor) ** 2))
    return k / k.sum()


def render_clean(
    spec: LineSpec,
    geom: ImageGeometry | None = None,
    style: RenderStyle | None = None,
    seed: int = 0,
) -> SemImage:
    geom = geom or ImageGeometry()
    style = style or RenderStyle()
    spec.validate(geom)
    left, right = spec.positions()

    line_cov = _interval_coverage(left, right, geom)
    bw = style.bloom_halfwidth_px * geom.px_w
    bloom_cov = np.minimum(
        _interval_coverage(left - bw, left + bw, geom)
        + _interval_coverage(right - bw, right + bw, geom),
        1.0,
    )
    img = style.background + (style.line - style.background) * line_cov
    img = img + (style.bloom - img) * bloom_cov

    if style.texture_amp > 0:
        rng = np.random.default_rng(seed)
        tex = ndimage.gaussian_filter(
            rng.standard_normal(img.shape), style.texture_sigma_px, mode="wrap"
        )
        tex *= style.texture_amp / max(tex.std(), 1e-12)
        img = img + tex * (1.0 - line_cov) * (1.0 - bloom_cov)

    if style.blur:
        k = blur_kernel(style.blur_major_px, style.blur_minor_px, style.blur_angle_deg)
        img = ndimage.convolve(img, k, mode="nearest")

    img = np.clip(img, 0.0, None)
    img /= img.max()
    return SemImage(img, "clean")


def poisson_counts(img: SemImage, dose: float, seed: int = 0) -> np.ndarray:
    """Shot-noise sample ``Poisson(dose * p) / dose`` before clipping/renormalization."""
    if not dose > 0:
        raise ValueError(f"dose must be positive, got {dose}")
    p = np.asarray(img.pixels, dtype=np.float64)
    if p.min() < 0 or p.max() > 1:
        raise ValueError("input image must be normalized to [0, 1]")
    rng = np.random.default_rng(seed)
    return rng.poisson(dose * p).astype(np.float64) / dose


def apply_poisson(img: SemImage, dose: float, seed: int = 0, p_max: float = 4.0) -> SemImage:
    """Corrupt a clean image with shot noise at ``dose`` electrons per pixel.

    Samples are clipped to ``[0, p_max]`` (in clean-intensity units) and the
    realized maximum is mapped to 1. The returned ``gain`` undoes both steps.
    """
    x = np.clip(poisson_counts(img, dose, seed), 0.0, p_max)
    peak = x.max()
    if peak > 0:
        x /= peak
    return SemImage(x, "noisy", dose=float(dose), gain=float(dose * peak) if peak > 0 else float(dose))


def anscombe(counts):
    return 2.0 * np.sqrt(np.asarray(counts) + 0.375)


def inverse_anscombe(z):
    return (np.asarray(z) / 2.0) ** 2 - 0.375


def denoise(img: SemImage, sigma_px: float = 1.5, radius_px: int = 4) -> SemImage:
    """Anscombe transform, Gaussian smoothing, algebraic inverse, clip to [0, 1]."""
    gain = img.gain if img.gain is not None else 1.0
    z = anscombe(np.asarray(img.pixels, dtype=np.float64) * gain)
    z = ndimage.gaussian_filter(z, sigma_px, mode="nearest", truncate=radius_px / sigma_px)
    out = np.clip(inverse_anscombe(z) / gain, 0.0, 1.0)
    return SemImage(out, "denoised", dose=img.dose, gain=img.gain)


def noise_image(noisy: SemImage, denoised: SemImage) -> SemImage:
    a = np.asarray(noisy.pixels, dtype=np.float64)
    b = np.asarray(denoised.pixels, dtype=np.float64)
    if a.shape != b.shape:
        raise GeometryError(f"shape mismatch: {a.shape} vs {b.shape}")
    return SemImage(np.abs(a - b), "noise", dose=noisy.dose)


def round_edge_positions(positions_nm: np.ndarray, geom: ImageGeometry) -> np.ndarray:
    """Pixel-level export of edge positions (nearest pixel boundary index)."""
    return np.rint(np.asarray(positions_nm) / geom.px_w).astype(np.int16)


# ---------------------------------------------------------------- SEMF files


def write_semf(path, img: SemImage | np.ndarray) -> None:
    """Write a little-endian float32 raw image with a 16-byte SEMF header.

    ``flags`` holds the image kind index in its low two bits.
    """
    if isinstance(img, SemImage):
        pixels, kind = img.pixels, img.kind
    else:
        pixels, kind = img, "clean"
    arr = np.ascontiguousarray(pixels, dtype="<f4")
    if arr.ndim != 2:
        raise ValueError("SEMF images must be 2-D")
    height, width = arr.shape
    header = _SEMF_HEADER.pack(SEMF_MAGIC, width, height, KINDS.index(kind), 0)
    Path(path).write_bytes(header + arr.tobytes())


def read_semf(path) -> SemImage:
    raw = Path(path).read_bytes()
    if len(raw) < _SEMF_HEADER.size:
        raise ValueError(f"{path}: truncated SEMF header")
    magic, width, height, flags, _ = _SEMF_HEADER.unpack_from(raw)
    if magic != SEMF_MAGIC:
        raise ValueError(f"{path}: bad magic {magic!r}")
    expected = _SEMF_HEADER.size + 4 * width * height
    if len(raw) != expected:
        raise ValueError(f"{path}: expected {expected} bytes, found {len(raw)}")
    arr = np.frombuffer(raw, dtype="<f4", offset=_SEMF_HEADER.size).reshape(height, width)
    return SemImage(arr.astype(np.float64), KINDS[flags & 3])
