# adaptive_lpr.py
"""
Adaptive light-pollution removal.

The veil is modelled as J(x, y) = A(x) * alpha(x, y): a per-column ground
light radiance A(x) times a closed-form scattering weight. A(x) is
estimated from a few sky rows by comparing the input against a pristine
calibration sky, after a quasi-quartile filter has removed the stars.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from scipy.ndimage import gaussian_filter1d, median_filter, minimum_filter1d

from constants import (
    CLAMP_WARN_FRACTION,
    DEFAULT_EXPOSURE_SCALE,
    DEFAULT_PROFILE_SIGMA,
    DEFAULT_ROW_FRACTIONS,
    DEFAULT_WINDOW,
)
from core_types import (
    INFINITE,
    Atmosphere,
    CameraGeometry,
    DepthMap,
    DomainError,
    EmptySkyError,
    GroundLightProfile,
    RadianceImage,
    RestorationResult,
    SkyMask,
    subtract_veil,
)

logger = logging.getLogger(__name__)

# ============================================================
# Calibration set
# ============================================================

@dataclass(frozen=True, eq=False)
class CalibrationSet:
    """
    Sky rows of the input paired with rows of a pristine calibration image.

    ``calib_samples`` holds the paired calibration rows already resampled to
    the input width and multiplied by ``exposure_scale``, shape (3, k, W).
    """

    calib_image: RadianceImage
    row_set: tuple[int, ...]
    calib_rows: tuple[int, ...]
    window: int = DEFAULT_WINDOW
    exposure_scale: float = DEFAULT_EXPOSURE_SCALE
    calib_samples: np.ndarray = field(default=None, repr=False)

    def __post_init__(self):
        check_window(self.window)
        if len(self.row_set) != len(self.calib_rows):
            raise DomainError(f"{len(self.row_set)} input rows but {len(self.calib_rows)} calibration rows")
        if not (self.exposure_scale > 0):
            raise DomainError(f"exposure_scale must be > 0, got {self.exposure_scale}")
        if self.calib_samples is not None:
            s = np.array(self.calib_samples, dtype=np.float64)
            if s.ndim != 3 or s.shape[:2] != (3, len(self.row_set)):
                raise DomainError(f"calib_samples must have shape (3, {len(self.row_set)}, W), got {s.shape}")
            s.setflags(write=False)
            object.__setattr__(self, "calib_samples", s)

    @property
    def size(self) -> int:
        return len(self.row_set)


def check_window(window: int) -> int:
    if int(window) != window or window < 3 or window % 2 == 0:
        raise DomainError(f"filter window must be an odd integer >= 3, got {window}")
    return int(window)

# ============================================================
# Scattering weight alpha
# ============================================================

def alpha_factor(geom: CameraGeometry, atm: Atmosphere, x, y, L=INFINITE) -> np.ndarray:
    """
    alpha = (1 - exp(-beta (1+s) L)) / (1+s), per channel.

    x, y and L broadcast together; the result has a leading channel axis.
    L = INFINITE gives 1/(1+s).
    """
    s = np.asarray(geom.elevation_factor(x, y), dtype=np.float64)
    L = np.asarray(L, dtype=np.float64)
    s, L = np.broadcast_arrays(s, L)
    beta = atm.beta.reshape((3,) + (1,) * s.ndim)
    k = 1.0 + s
    return -np.expm1(-beta * k * L) / k


def alpha_grid(geom: CameraGeometry, atm: Atmosphere, depth: DepthMap) -> np.ndarray:
    """alpha for every pixel, shape (3, H, W)."""
    depth.require_size(geom.width_px, geom.height_px)
    x = geom.x_of_col(np.arange(geom.width_px))[None, :]
    y = geom.y_of_row(np.arange(geom.height_px))[:, None]
    return alpha_factor(geom, atm, x, y, depth.distance)

# ============================================================
# Quasi-quartile filter
# ============================================================

def quasi_quartile(row: np.ndarray, window: int = DEFAULT_WINDOW) -> np.ndarray:
    """(windowed min + windowed median) / 2 along the last axis, edges replicated."""
    window = check_window(window)
    row = np.asarray(row, dtype=np.float64)
    if row.shape[-1] < window:
        raise DomainError(f"filter window {window} is longer than the signal ({row.shape[-1]} samples)")
    lo = minimum_filter1d(row, size=window, axis=-1, mode="nearest")
    size = (1,) * (row.ndim - 1) + (window,)
    med = median_filter(row, size=size, mode="nearest")
    return 0.5 * (lo + med)

# ============================================================
# Calibration alignment
# ============================================================

def _resample_columns(rows: np.ndarray, width: int) -> np.ndarray:
    """Linear resampling of (..., W_src) rows to ``width`` columns, pixel centres aligned."""
    src_w = rows.shape[-1]
    if src_w == width:
        return rows.copy()
    xs = (np.arange(width, dtype=np.float64) + 0.5) * (src_w / width) - 0.5
    grid = np.arange(src_w, dtype=np.float64)
    flat = rows.reshape(-1, src_w)
    out = np.stack([np.interp(xs, grid, r) for r in flat])
    return out.reshape(rows.shape[:-1] + (width,))


def align_calibration(
    polluted: RadianceImage,
    input_sky: SkyMask,
    calib: RadianceImage,
    calib_sky: SkyMask,
    *,
    fractions: Sequence[float] = DEFAULT_ROW_FRACTIONS,
    window: int = DEFAULT_WINDOW,
    exposure_scale: float = DEFAULT_EXPOSURE_SCALE,
) -> CalibrationSet:
    """
    Pair sky rows of the input with calibration rows at the same
    fraction of their sky heights, and resample the calibration rows
    to the input width.
    """
    input_sky.require_size(polluted.width, polluted.height)
    calib_sky.require_size(calib.width, calib.height)
    h_in, h_cal = input_sky.sky_height, calib_sky.sky_height
    if h_in == 0:
        raise EmptySkyError("input image has no sky rows above the skyline; pass --mask or crop the frame")
    if h_cal == 0:
        raise EmptySkyError("calibration image has no sky rows above the skyline; pass --calib-mask")
    if not fractions:
        raise EmptySkyError("no calibration row fractions given")

    pairs: dict[int, int] = {}
    for f in fractions:
        if not (0.0 <= f < 1.0):
            raise DomainError(f"row fraction must lie in [0, 1), got {f}")
        # floor(f * h) < h, so every row stays strictly above both skylines
        pairs.setdefault(int(f * h_in), int(f * h_cal))
    rows_in = tuple(pairs)
    rows_cal = tuple(pairs.values())

    samples = _resample_columns(calib.data[:, list(rows_cal), :], polluted.width) * exposure_scale
    logger.debug(f"calibration rows {list(rows_in)} <- {list(rows_cal)} (sky heights {h_in} / {h_cal})")
    return CalibrationSet(
        calib_image=calib,
        row_set=rows_in,
        calib_rows=rows_cal,
        window=window,
        exposure_scale=exposure_scale,
        calib_samples=samples,
    )

# ============================================================
# Ground light profile
# ============================================================

def filtered_differences(polluted: RadianceImage, cal: CalibrationSet) -> np.ndarray:
    """Quasi-quartile of input rows minus quasi-quartile of calibration rows, shape (3, k, W)."""
    if cal.size == 0:
        raise EmptySkyError("calibration set has no rows")
    if cal.calib_samples is None or cal.calib_samples.shape[2] != polluted.width:
        raise DomainError("calibration set is not aligned to this image; build it with align_calibration")
    ours = polluted.data[:, list(cal.row_set), :]
    return quasi_quartile(ours, cal.window) - quasi_quartile(cal.calib_samples, cal.window)


def smooth_profile(values: np.ndarray, sigma: float = DEFAULT_PROFILE_SIGMA) -> np.ndarray:
    """
    Gaussian smoothing along x with odd-reflection padding, so a linear
    ramp passes through unchanged. Clamped at 0.
    """
    if sigma <= 0:
        return np.maximum(values, 0.0)
    pad = int(4.0 * sigma + 0.5)
    padded = np.pad(values, ((0, 0), (pad, pad)), mode="reflect", reflect_type="odd")
    out = gaussian_filter1d(padded, sigma, axis=-1, mode="nearest")[:, pad:pad + values.shape[1]]
    return np.maximum(out, 0.0)


def estimate_light_profile(
    polluted: RadianceImage,
    cal: CalibrationSet,
    geom: CameraGeometry,
    atm: Atmosphere,
    *,
    sigma: float = DEFAULT_PROFILE_SIGMA,
) -> GroundLightProfile:
    """
    Least-squares A(x): mean over the calibration rows of the
    filtered difference divided by alpha, negative ratios floored at 0.
    """
    diff = filtered_differences(polluted, cal)
    x = geom.x_of_col(np.arange(polluted.width))[None, :]
    y = geom.y_of_row(np.asarray(cal.row_set))[:, None]
    alpha = alpha_factor(geom, atm, x, y, INFINITE)
    ratios = np.maximum(diff / alpha, 0.0)
    values = smooth_profile(ratios.mean(axis=1), sigma)
    profile = GroundLightProfile(values)
    logger.info(f"💡 ground light profile from {cal.size} rows: mean A = {[round(v, 5) for v in profile.stats()['mean']]}")
    return profile

# ============================================================
# Veil and restoration
# ============================================================

def pollution_image_adaptive(
    profile: GroundLightProfile,
    geom: CameraGeometry,
    atm: Atmosphere,
    depth: DepthMap,
) -> RadianceImage:
    """J(x, y) = A(x) * alpha(x, y, L(x, y))."""
    profile.require_width(geom.width_px)
    alpha = alpha_grid(geom, atm, depth)
    return RadianceImage(profile.values[:, None, :] * alpha)


def restore_adaptive(
    polluted: RadianceImage,
    cal: Optional[CalibrationSet],
    geom: CameraGeometry,
    atm: Atmosphere,
    depth: DepthMap,
    *,
    profile: Optional[GroundLightProfile] = None,
    sigma: float = DEFAULT_PROFILE_SIGMA,
) -> RestorationResult:
    """Estimate A(x) (unless ``profile`` is given), build J and subtract it."""
    if profile is None:
        if cal is None:
            raise EmptySkyError("adaptive restoration needs a calibration set or a light profile")
        profile = estimate_light_profile(polluted, cal, geom, atm, sigma=sigma)
    veil = pollution_image_adaptive(profile, geom, atm, depth)
    result = subtract_veil(polluted, veil)
    warn_if_clamped(result.clamp_fraction)
    return RestorationResult(result.image, result.veil, result.clamp_fraction, profile)


def warn_if_clamped(fraction: float) -> None:
    if fraction > CLAMP_WARN_FRACTION:
        logger.warning(f"⚠️ {fraction:.1%} of pixels clamped at 0; beta or the light profile may be too strong")
    else:
        logger.debug(f"clamped fraction {fraction:.4%}")
