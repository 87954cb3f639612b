# core_types.py
"""
Shared domain types for skyclear.

All rasters are planar numpy arrays in *linear* radiance: images are
``(3, H, W)`` float64 in R, G, B order, with display white = 1.0.
Instances are immutable after construction (arrays are copied and
flagged read-only), so they can be shared across worker threads.

Pixel coordinates follow the camera model: origin at the principal
point, x to the right, y upward. The bottom image row sits at
``y = -h`` so its rays are horizontal (elevation factor 0).
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Optional, Sequence, Union

import numpy as np

from constants import (
    DEFAULT_QUAD_REL_TOL,
    DEFAULT_TAU_MAX_FACTOR,
    LUMA_WEIGHTS,
)

INFINITE = math.inf

PerChannel = Union[float, Sequence[float], np.ndarray]

# ============================================================
# Errors
# ============================================================

class SkyclearError(Exception):
    """Base class for every error raised by skyclear."""

class DomainError(SkyclearError, ValueError):
    """Numeric argument outside the domain of a physical formula."""

class DimensionMismatchError(SkyclearError, ValueError):
    """Two rasters (or a raster and a profile) do not line up."""

class ImageFormatError(SkyclearError):
    """Unreadable / unsupported raster file."""

class EmptySkyError(SkyclearError):
    """A sky mask leaves no sky rows to calibrate on."""

class ConfigError(SkyclearError):
    """Bad scene file or flag combination."""

# ============================================================
# Helpers
# ============================================================

def per_channel(value: PerChannel, name: str = "value") -> np.ndarray:
    """Broadcast a scalar or a 1/3-sequence to a float64 array of shape (3,)."""
    arr = np.atleast_1d(np.asarray(value, dtype=np.float64))
    if arr.ndim != 1 or arr.size not in (1, 3):
        raise DomainError(f"{name} must be 1 or 3 values, got shape {arr.shape}")
    if arr.size == 1:
        arr = np.repeat(arr, 3)
    return arr

def _frozen(arr: np.ndarray) -> np.ndarray:
    out = np.array(arr, dtype=np.float64, copy=True)
    out.setflags(write=False)
    return out

def require_same_size(a_w: int, a_h: int, b_w: int, b_h: int, what: str) -> None:
    if (a_w, a_h) != (b_w, b_h):
        raise DimensionMismatchError(
            f"{what}: expected {a_w}x{a_h}, got {b_w}x{b_h}"
        )

# ============================================================
# RadianceImage
# ============================================================

@dataclass(frozen=True, eq=False)
class RadianceImage:
    """Planar 3-channel linear-radiance raster (the carrier of Î, I, J and I*)."""

    data: np.ndarray

    def __post_init__(self):
        arr = np.asarray(self.data, dtype=np.float64)
        if arr.ndim != 3 or arr.shape[0] != 3:
            raise ImageFormatError(f"radiance data must have shape (3, H, W), got {arr.shape}")
        if arr.shape[1] < 1 or arr.shape[2] < 1:
            raise ImageFormatError(f"image must be at least 1x1, got {arr.shape[2]}x{arr.shape[1]}")
        if not np.all(np.isfinite(arr)):
            raise DomainError("radiance samples must be finite")
        if np.any(arr < 0):
            raise DomainError(f"radiance samples must be >= 0 (min {arr.min():.6g})")
        object.__setattr__(self, "data", _frozen(arr))

    @property
    def width(self) -> int:
        return int(self.data.shape[2])

    @property
    def height(self) -> int:
        return int(self.data.shape[1])

    @property
    def shape(self) -> tuple[int, int]:
        return self.height, self.width

    def to_hwc(self) -> np.ndarray:
        return np.ascontiguousarray(np.moveaxis(self.data, 0, -1))

    def luminance(self) -> np.ndarray:
        w = np.asarray(LUMA_WEIGHTS, dtype=np.float64)
        return np.tensordot(w, self.data, axes=1)

    @classmethod
    def from_hwc(cls, arr: np.ndarray) -> "RadianceImage":
        arr = np.asarray(arr, dtype=np.float64)
        if arr.ndim != 3 or arr.shape[2] != 3:
            raise ImageFormatError(f"expected an (H, W, 3) array, got {arr.shape}")
        return cls(np.moveaxis(arr, -1, 0))

    @classmethod
    def zeros(cls, width: int, height: int) -> "RadianceImage":
        return cls(np.zeros((3, height, width)))

    @classmethod
    def constant(cls, width: int, height: int, value: PerChannel) -> "RadianceImage":
        v = per_channel(value, "constant radiance")
        return cls(np.broadcast_to(v[:, None, None], (3, height, width)))

# ============================================================
# Camera geometry
# ============================================================

@dataclass(frozen=True)
class CameraGeometry:
    """Pinhole camera with the principal point at the image centre."""

    focal_px: float
    width_px: int
    height_px: int

    def __post_init__(self):
        if not (self.focal_px > 0):
            raise DomainError(f"focal_px must be > 0, got {self.focal_px}")
        if self.width_px < 1 or self.height_px < 1:
            raise DomainError(f"image size must be >= 1x1, got {self.width_px}x{self.height_px}")

    @classmethod
    def for_image(cls, width: int, height: int, focal_px: Optional[float] = None) -> "CameraGeometry":
        # f = width gives ~53 deg horizontal field of view
        return cls(float(focal_px) if focal_px else float(width), int(width), int(height))

    @property
    def half_height_px(self) -> float:
        return self.height_px / 2.0

    def x_of_col(self, col) -> np.ndarray:
        return np.asarray(col, dtype=np.float64) - (self.width_px - 1) / 2.0

    def y_of_row(self, row) -> np.ndarray:
        return (self.height_px - 1 - np.asarray(row, dtype=np.float64)) - self.half_height_px

    def elevation_factor(self, x, y) -> np.ndarray:
        """s(x, y) = (y + h) / sqrt(f^2 + x^2 + y^2); 0 on the bottom row."""
        x = np.asarray(x, dtype=np.float64)
        y = np.asarray(y, dtype=np.float64)
        h = self.half_height_px
        return (y + h) / np.sqrt(self.focal_px ** 2 + x * x + y * y)

    def elevation_grid(self) -> np.ndarray:
        """s for every pixel, shape (H, W)."""
        x = self.x_of_col(np.arange(self.width_px))[None, :]
        y = self.y_of_row(np.arange(self.height_px))[:, None]
        return self.elevation_factor(x, y)

# ============================================================
# Atmosphere
# ============================================================

@dataclass(frozen=True, eq=False)
class Atmosphere:
    """Per-channel scattering coefficients (m^-1) plus quadrature controls."""

    beta: np.ndarray
    quad_rel_tol: float = DEFAULT_QUAD_REL_TOL
    tau_max_factor: float = DEFAULT_TAU_MAX_FACTOR

    def __post_init__(self):
        b = per_channel(self.beta, "beta")
        if np.any(~np.isfinite(b)) or np.any(b <= 0) or np.any(b > 1):
            raise DomainError(f"beta must lie in (0, 1] m^-1, got {b.tolist()}")
        if not (0 < self.quad_rel_tol <= 1e-3):
            raise DomainError(f"quad_rel_tol must lie in (0, 1e-3], got {self.quad_rel_tol}")
        if not (self.tau_max_factor >= 10):
            raise DomainError(f"tau_max_factor must be >= 10, got {self.tau_max_factor}")
        object.__setattr__(self, "beta", _frozen(b))

    @classmethod
    def from_beta(cls, beta: PerChannel, **kw) -> "Atmosphere":
        return cls(per_channel(beta, "beta"), **kw)

    def path_cap(self) -> np.ndarray:
        """Effective path length (m) used for INFINITE paths, per channel."""
        return self.tau_max_factor / self.beta

# ============================================================
# Ground light profile A(x)
# ============================================================

@dataclass(frozen=True, eq=False)
class GroundLightProfile:
    """Per-channel radiance of ground lights along the horizon, shape (3, W)."""

    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=np.float64)
        if v.ndim != 2 or v.shape[0] != 3 or v.shape[1] < 1:
            raise DimensionMismatchError(f"profile must have shape (3, W), got {v.shape}")
        if not np.all(np.isfinite(v)) or np.any(v < 0):
            raise DomainError("profile values must be finite and >= 0")
        object.__setattr__(self, "values", _frozen(v))

    @property
    def width(self) -> int:
        return int(self.values.shape[1])

    @classmethod
    def constant(cls, a: PerChannel, width: int) -> "GroundLightProfile":
        v = per_channel(a, "radiance")
        return cls(np.repeat(v[:, None], width, axis=1))

    def require_width(self, width: int) -> None:
        if self.width != width:
            raise DimensionMismatchError(f"profile length {self.width} != image width {width}")

    def stats(self) -> dict:
        v = self.values
        return {
            "min": v.min(axis=1).tolist(),
            "mean": v.mean(axis=1).tolist(),
            "max": v.max(axis=1).tolist(),
        }

# ============================================================
# Depth map
# ============================================================

@dataclass(frozen=True, eq=False)
class DepthMap:
    """Per-pixel path length L in metres; +inf marks INFINITE (sky) pixels."""

    distance: np.ndarray

    def __post_init__(self):
        d = np.asarray(self.distance, dtype=np.float64)
        if d.ndim != 2:
            raise DimensionMismatchError(f"depth must be 2-D, got shape {d.shape}")
        if np.any(np.isnan(d)):
            raise DomainError("depth contains NaN samples")
        fin = np.isfinite(d)
        if np.any(d[fin] <= 0) or np.any(d[~fin] < 0):
            raise DomainError("finite depths must be > 0")
        object.__setattr__(self, "distance", _frozen(d))

    @property
    def width(self) -> int:
        return int(self.distance.shape[1])

    @property
    def height(self) -> int:
        return int(self.distance.shape[0])

    @property
    def valid(self) -> np.ndarray:
        """Pixels carrying a finite depth estimate."""
        return np.isfinite(self.distance)

    @property
    def is_all_infinite(self) -> bool:
        return not np.any(self.valid)

    @classmethod
    def infinite(cls, width: int, height: int) -> "DepthMap":
        return cls(np.full((height, width), INFINITE))

    def require_size(self, width: int, height: int) -> None:
        require_same_size(width, height, self.width, self.height, "depth map")

# ============================================================
# Sky mask
# ============================================================

@dataclass(frozen=True, eq=False)
class SkyMask:
    """Per-column skyline row: rows strictly above ``rows[c]`` are sky."""

    rows: np.ndarray
    height: int

    def __post_init__(self):
        r = np.asarray(self.rows)
        if r.ndim != 1 or r.size < 1:
            raise DimensionMismatchError(f"skyline must be one row index per column, got shape {r.shape}")
        if not np.all(np.equal(np.mod(r, 1), 0)):
            raise DomainError("skyline rows must be integers")
        r = r.astype(np.int64)
        if np.any(r < 0) or np.any(r > self.height):
            raise DomainError(f"skyline rows must lie in [0, {self.height}]")
        r = r.copy()
        r.setflags(write=False)
        object.__setattr__(self, "rows", r)

    @property
    def width(self) -> int:
        return int(self.rows.size)

    @property
    def sky_height(self) -> int:
        """Number of leading rows that are sky in every column."""
        return int(self.rows.min())

    def sky_raster(self) -> np.ndarray:
        rr = np.arange(self.height)[:, None]
        return rr < self.rows[None, :]

    @classmethod
    def full_sky(cls, width: int, height: int) -> "SkyMask":
        return cls(np.full(width, height, dtype=np.int64), height)

    @classmethod
    def from_rows(cls, rows: Iterable[int], height: int) -> "SkyMask":
        return cls(np.asarray(list(rows), dtype=np.int64), height)

    def require_size(self, width: int, height: int) -> None:
        require_same_size(width, height, self.width, self.height, "sky mask")

# ============================================================
# Restoration result
# ============================================================

@dataclass(frozen=True, eq=False)
class RestorationResult:
    """Restored image I, the subtracted veil J and bookkeeping for the summary."""

    image: RadianceImage
    veil: RadianceImage
    clamp_fraction: float
    profile: Optional[GroundLightProfile] = None

    @property
    def veil_energy(self) -> float:
        return float(self.veil.data.sum())


def subtract_veil(polluted: RadianceImage, veil: RadianceImage) -> RestorationResult:
    """I = max(Î - J, 0); clamp_fraction counts pixels clamped in any channel."""
    require_same_size(polluted.width, polluted.height, veil.width, veil.height, "pollution veil")
    diff = polluted.data - veil.data
    clamped = np.any(diff < 0, axis=0)
    return RestorationResult(
        image=RadianceImage(np.maximum(diff, 0.0)),
        veil=veil,
        clamp_fraction=float(clamped.mean()),
    )
