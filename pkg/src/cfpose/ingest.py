"""Real-image ingestion: decode, segment by HSV threshold, extract points.

Every pixel passing the threshold becomes a homogeneous normalized image
point ((u - c_x) / f, (v - c_y) / f, 1) carrying the pixel's luma as its
gray value. Segmentation scans row-major, so output order is stable.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from PIL import Image, UnidentifiedImageError

from .exceptions import CorruptFileError, EmptySegmentationError, UnsupportedFormatError
from .geometry import PointSet

SUPPORTED_FORMATS = ("PNG", "PPM")


@dataclass(frozen=True)
class HsvThreshold:
    """Hue band in degrees (wraps around 360 when hue_lo > hue_hi) plus
    minimum saturation and value, both in [0, 1]."""

    hue_lo: float = 345.0
    hue_hi: float = 15.0
    sat_min: float = 0.5
    val_min: float = 0.3

    def __post_init__(self):
        if not (0.0 <= self.hue_lo < 360.0 and 0.0 <= self.hue_hi < 360.0):
            raise ValueError("hue bounds must lie in [0, 360)")
        if not (0.0 <= self.sat_min <= 1.0 and 0.0 <= self.val_min <= 1.0):
            raise ValueError("sat_min and val_min must lie in [0, 1]")


DEFAULT_RED = HsvThreshold()


def load_image(path) -> np.ndarray:
    """Decode a PNG or PPM file into an (H, W, 3) uint8 RGB raster."""
    try:
        with Image.open(path) as img:
            fmt = img.format
            if fmt not in SUPPORTED_FORMATS:
                raise UnsupportedFormatError(
                    f"{path}: format {fmt} not supported (need PNG or PPM)"
                )
            rgb = img.convert("RGB")
            arr = np.asarray(rgb, dtype=np.uint8)
    except UnidentifiedImageError as exc:
        raise CorruptFileError(f"{path}: cannot decode image ({exc})") from exc
    except OSError as exc:
        if isinstance(exc, FileNotFoundError):
            raise
        raise CorruptFileError(f"{path}: truncated or corrupt image ({exc})") from exc
    if arr.ndim != 3 or arr.shape[2] != 3:
        raise CorruptFileError(f"{path}: unexpected raster shape {arr.shape}")
    return arr


def rgb_to_hsv(raster: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Vectorized hexcone conversion. Hue in degrees [0, 360), s and v in [0, 1]."""
    rgb = raster.astype(np.float64) / 255.0
    r, g, b = rgb[..., 0], rgb[..., 1], rgb[..., 2]
    maxc = np.max(rgb, axis=-1)
    minc = np.min(rgb, axis=-1)
    delta = maxc - minc
    v = maxc
    s = np.where(maxc > 0, delta / np.where(maxc > 0, maxc, 1.0), 0.0)

    nz = delta > 0
    rc = np.where(nz, (maxc - r) / np.where(nz, delta, 1.0), 0.0)
    gc = np.where(nz, (maxc - g) / np.where(nz, delta, 1.0), 0.0)
    bc = np.where(nz, (maxc - b) / np.where(nz, delta, 1.0), 0.0)
    # channel priority r, then g, then b (matches the stock hexcone rule)
    h = np.zeros_like(maxc)
    is_r = nz & (maxc == r)
    is_g = nz & ~is_r & (maxc == g)
    is_b = nz & ~is_r & ~is_g
    h[is_r] = (bc - gc)[is_r]
    h[is_g] = (2.0 + rc - bc)[is_g]
    h[is_b] = (4.0 + gc - rc)[is_b]
    h = (h / 6.0) % 1.0
    return h * 360.0, s, v


def luma(raster: np.ndarray) -> np.ndarray:
    """Standard luma in [0, 1]: 0.299 R + 0.587 G + 0.114 B."""
    rgb = raster.astype(np.float64)
    return (0.299 * rgb[..., 0] + 0.587 * rgb[..., 1] + 0.114 * rgb[..., 2]) / 255.0


def hsv_mask(raster: np.ndarray, thr: HsvThreshold) -> np.ndarray:
    h, s, v = rgb_to_hsv(raster)
    if thr.hue_lo <= thr.hue_hi:
        in_band = (h >= thr.hue_lo) & (h <= thr.hue_hi)
    else:  # wraparound band, e.g. red at 345..15
        in_band = (h >= thr.hue_lo) | (h <= thr.hue_hi)
    return in_band & (s >= thr.sat_min) & (v >= thr.val_min)


def segment_hsv(
    raster: np.ndarray,
    thr: HsvThreshold,
    focal_length: float,
    principal_point: tuple | None = None,
) -> PointSet:
    """Extract the thresholded pixels as a normalized homogeneous point set.

    The principal point defaults to the image center. Raises
    EmptySegmentationError when nothing passes the threshold.
    """
    if focal_length <= 0:
        raise ValueError("focal_length must be positive")
    height, width = raster.shape[:2]
    cx, cy = principal_point if principal_point is not None else (width / 2.0, height / 2.0)
    mask = hsv_mask(raster, thr)
    rows, cols = np.nonzero(mask)  # row-major scan order
    if rows.size == 0:
        raise EmptySegmentationError("no pixel passed the HSV threshold")
    pts = np.ones((rows.size, 3))
    pts[:, 0] = (cols - cx) / focal_length
    pts[:, 1] = (rows - cy) / focal_length
    gray = luma(raster)[rows, cols]
    return PointSet(2, pts, gray)
