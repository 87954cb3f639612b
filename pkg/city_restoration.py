# city_restoration.py
"""
Below-skyline restoration with depth-limited paths.

Paths that end on a building or hill accumulate less veil than sky paths.
Depth maps from monocular estimators have soft, misplaced edges, so the
depth is first snapped to the image's own edges with a guided filter;
otherwise a halo appears along the skyline.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Union

import numpy as np
from scipy.ndimage import uniform_filter

from adaptive_lpr import CalibrationSet, restore_adaptive
from constants import (
    DEFAULT_DEPTH_SCALE,
    DEFAULT_GF_EPSILON,
    DEFAULT_GF_RADIUS,
    DEFAULT_PROFILE_SIGMA,
)
from core_types import (
    INFINITE,
    Atmosphere,
    CameraGeometry,
    DepthMap,
    DomainError,
    GroundLightProfile,
    RadianceImage,
    RestorationResult,
    SkyMask,
    require_same_size,
)
from media_utils import read_depth_raster

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class GuidedFilterParams:
    radius: int = DEFAULT_GF_RADIUS
    epsilon: float = DEFAULT_GF_EPSILON
    depth_scale: float = DEFAULT_DEPTH_SCALE

    def __post_init__(self):
        if int(self.radius) != self.radius or self.radius < 1:
            raise DomainError(f"guided filter radius must be an integer >= 1, got {self.radius}")
        if not (self.epsilon > 0):
            raise DomainError(f"guided filter epsilon must be > 0, got {self.epsilon}")
        if not (self.depth_scale > 0):
            raise DomainError(f"depth scale must be > 0, got {self.depth_scale}")

# ============================================================
# Depth ingestion
# ============================================================

def depth_from_array(raw: np.ndarray, scale: float, sky: SkyMask) -> DepthMap:
    """Scale raw depth units to metres and force every sky pixel to INFINITE."""
    if not (scale > 0):
        raise DomainError(f"depth scale must be > 0, got {scale}")
    raw = np.asarray(raw, dtype=np.float64)
    if raw.ndim != 2:
        raise DomainError(f"depth raster must be single-channel, got shape {raw.shape}")
    h, w = raw.shape
    sky.require_size(w, h)
    meters = raw * scale
    sky_px = sky.sky_raster()
    ground = ~sky_px & np.isfinite(meters)
    bad = ground & ~(meters > 0)
    if np.any(bad):
        r, c = np.argwhere(bad)[0]
        raise DomainError(f"depth must be > 0 below the skyline; {int(bad.sum())} bad pixel(s), first at row {r}, column {c}")
    return DepthMap(np.where(sky_px, INFINITE, meters))


def sky_from_depth(raw: np.ndarray) -> SkyMask:
    """Skyline where each column's leading run of +inf samples ends."""
    raw = np.asarray(raw, dtype=np.float64)
    ground = ~np.isposinf(raw)
    rows = np.where(ground.any(axis=0), ground.argmax(axis=0), raw.shape[0])
    return SkyMask.from_rows(rows, raw.shape[0])


def load_depth(path: Union[str, Path], scale: float, sky: SkyMask) -> DepthMap:
    """Read a PFM (metres) or 16-bit PNG (units of ``scale`` metres) depth raster."""
    raw = read_depth_raster(path)
    depth = depth_from_array(raw, scale, sky)
    logger.info(f"🗺️ loaded depth {path} ({depth.width}x{depth.height}, {int(depth.valid.sum())} finite pixels)")
    return depth

# ============================================================
# Guided filter
# ============================================================

def _box(a: np.ndarray, size: int) -> np.ndarray:
    # zero padding; callers divide by a box-filtered count so borders normalise themselves
    return uniform_filter(a, size=size, mode="constant", cval=0.0)


def guided_filter(
    guide: Union[RadianceImage, np.ndarray],
    target: DepthMap,
    p: GuidedFilterParams = GuidedFilterParams(),
) -> DepthMap:
    """
    Edge-preserving filter of ``target`` steered by the luminance of ``guide``.

    Window statistics use finite-depth pixels only; INFINITE pixels stay
    INFINITE and results are clamped to the range of the finite input.
    """
    g = guide.luminance() if isinstance(guide, RadianceImage) else np.asarray(guide, dtype=np.float64)
    require_same_size(target.width, target.height, g.shape[1], g.shape[0], "guided filter guide")
    g = np.clip(g, 0.0, 1.0)
    valid = target.valid
    if not valid.any():
        return target

    size = 2 * int(p.radius) + 1
    m = valid.astype(np.float64)
    t = np.where(valid, target.distance, 0.0)

    count = _box(m, size)
    has = count > 0
    n = np.where(has, count, 1.0)
    mean_g = _box(g * m, size) / n
    mean_t = _box(t, size) / n
    var_g = np.maximum(_box(g * g * m, size) / n - mean_g * mean_g, 0.0)
    cov_gt = _box(g * t, size) / n - mean_g * mean_t

    a = np.where(has, cov_gt / (var_g + p.epsilon), 0.0)
    b = np.where(has, mean_t - a * mean_g, 0.0)
    w = has.astype(np.float64)
    windows = np.maximum(_box(w, size), np.finfo(np.float64).tiny)
    out = (_box(a * w, size) / windows) * g + _box(b * w, size) / windows

    fin = target.distance[valid]
    out = np.clip(out, fin.min(), fin.max())
    logger.debug(f"guided filter r={p.radius} eps={p.epsilon:g} over {int(valid.sum())} finite pixels")
    return DepthMap(np.where(valid, out, INFINITE))

# ============================================================
# Restoration
# ============================================================

def restore_city(
    polluted: RadianceImage,
    cal: Optional[CalibrationSet],
    geom: CameraGeometry,
    atm: Atmosphere,
    depth_raw: DepthMap,
    gf: GuidedFilterParams = GuidedFilterParams(),
    *,
    profile: Optional[GroundLightProfile] = None,
    sigma: float = DEFAULT_PROFILE_SIGMA,
    filter_depth: bool = True,
) -> tuple[RestorationResult, DepthMap]:
    """
    Guided-filter the depth, then run adaptive restoration with per-pixel
    path lengths. Returns the result and the depth actually used.
    """
    depth_raw.require_size(polluted.width, polluted.height)
    depth = guided_filter(polluted, depth_raw, gf) if filter_depth else depth_raw
    result = restore_adaptive(polluted, cal, geom, atm, depth, profile=profile, sigma=sigma)
    return result, depth
