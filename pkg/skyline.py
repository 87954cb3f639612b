# skyline.py
"""
Gradient-based skyline detection.

Luminance is median-prefiltered and then opened with a vertical line
longer than a star, so point sources cannot pose as ground. Per column the
skyline is the topmost row whose vertical step exceeds the Otsu threshold,
floored at a minimum contrast so smooth sky gradients never qualify. A
user-supplied mask always wins.
"""
from __future__ import annotations

import logging
from typing import Optional

import numpy as np
from scipy.ndimage import grey_opening, median_filter
from skimage.filters import threshold_otsu

from constants import (
    SKYLINE_MEDIAN_WIDTH,
    SKYLINE_MIN_CONTRAST,
    SKYLINE_PREFILTER,
    SKYLINE_STAR_FOOTPRINT,
)
from core_types import RadianceImage, SkyMask

logger = logging.getLogger(__name__)


def vertical_gradient(luma: np.ndarray) -> np.ndarray:
    """|L[r] - L[r-1]| per column; row 0 has no predecessor and gets 0."""
    g = np.zeros_like(luma)
    g[1:] = np.abs(np.diff(luma, axis=0))
    return g


def _column_skyline(g: np.ndarray, height: int) -> int:
    if g.max() < SKYLINE_MIN_CONTRAST:
        return height
    thr = max(float(threshold_otsu(g)), SKYLINE_MIN_CONTRAST)
    hits = np.flatnonzero(g > thr)
    return int(hits[0]) if hits.size else height


def detect_skyline(img: RadianceImage, override: Optional[SkyMask] = None) -> SkyMask:
    """Per-column skyline of ``img``; ``override`` is returned unchanged when given."""
    if override is not None:
        override.require_size(img.width, img.height)
        return override

    luma = median_filter(img.luminance(), size=SKYLINE_PREFILTER, mode="nearest")
    luma = grey_opening(luma, size=(SKYLINE_STAR_FOOTPRINT, 1), mode="nearest")
    g = vertical_gradient(luma)
    rows = np.array([_column_skyline(g[:, c], img.height) for c in range(img.width)], dtype=np.int64)
    if img.width > 1:
        rows = median_filter(rows, size=min(SKYLINE_MEDIAN_WIDTH, img.width), mode="nearest")

    mask = SkyMask(rows, img.height)
    if mask.sky_height == img.height:
        logger.info("🌌 no skyline found; treating the whole frame as sky")
    else:
        logger.debug(f"skyline rows {int(rows.min())}..{int(rows.max())}")
    return mask
