# baseline_lpr.py
"""
Baseline light-pollution removal with a uniform ground radiance A.

For a pixel whose ray climbs with elevation factor s, a point at path
length tau sits at altitude tau*s, and the veil is the path integral

    J = integral_0^L E(tau*s) beta exp(-beta*tau) dtau,   E(y) = 2 pi A E1(beta y).

With u = beta*tau this becomes 2 pi A * K(s, beta L) where

    K(s, U) = integral_0^U E1(max(u*s, beta*y_floor)) exp(-u) du.

Below the kink u_k = beta*y_floor/s the integrand is E1(beta*y_floor) exp(-u),
which integrates in closed form; the rest is integrated in log(u).
"""
from __future__ import annotations

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Optional

import numpy as np

from adaptive_lpr import CalibrationSet, filtered_differences, warn_if_clamped
from config import resolve_threads
from constants import DEFAULT_METERS_PER_UNIT, Y_FLOOR_M
from core_types import (
    INFINITE,
    Atmosphere,
    CameraGeometry,
    DepthMap,
    DomainError,
    PerChannel,
    RadianceImage,
    RestorationResult,
    per_channel,
    subtract_veil,
)
from quadrature import simpson_doubling
from scattering import exp_integral_e1

logger = logging.getLogger(__name__)

# unique (s, U) pairs per work item; fixed so results never depend on the thread count
CHUNK = 2048


@dataclass(frozen=True, eq=False)
class BaselineParams:
    a_const: np.ndarray
    atm: Atmosphere
    geom: CameraGeometry
    meters_per_unit: float = DEFAULT_METERS_PER_UNIT

    def __post_init__(self):
        a = per_channel(self.a_const, "ground radiance")
        if np.any(~np.isfinite(a)) or np.any(a < 0):
            raise DomainError(f"ground radiance must be finite and >= 0, got {a.tolist()}")
        if not (self.meters_per_unit > 0):
            raise DomainError(f"meters_per_unit must be > 0, got {self.meters_per_unit}")
        a.setflags(write=False)
        object.__setattr__(self, "a_const", a)

    def with_radiance(self, a: PerChannel) -> "BaselineParams":
        return BaselineParams(a, self.atm, self.geom, self.meters_per_unit)


def altitude_along_ray(
    geom: CameraGeometry, x, y, tau, meters_per_unit: float = DEFAULT_METERS_PER_UNIT
) -> np.ndarray:
    """Altitude tau * s(x, y) reached after path length tau; 0 on the bottom row."""
    tau = np.asarray(tau, dtype=np.float64)
    out = tau * geom.elevation_factor(x, y) * meters_per_unit
    return float(out) if np.ndim(out) == 0 else out

# ============================================================
# Unit-radiance kernel
# ============================================================

def _unit_veil(slope: np.ndarray, upper: np.ndarray, beta: float, rel_tol: float) -> np.ndarray:
    """K(s, U) for 1-D arrays; ``slope`` is s*meters_per_unit, ``upper`` is beta*L."""
    floor_arg = beta * Y_FLOOR_M
    with np.errstate(divide="ignore"):
        kink = np.where(slope > 0, floor_arg / slope, np.inf)
    flat = exp_integral_e1(floor_arg) * -np.expm1(-np.minimum(kink, upper))

    rest = np.flatnonzero(upper > kink)
    out = flat.copy()
    if rest.size:
        c = slope[rest]

        # u = e^v: integrand E1(u*s) exp(-u) u
        def integrand(v: np.ndarray, sel: np.ndarray) -> np.ndarray:
            u = np.exp(v)
            return exp_integral_e1(u * c[sel, None]) * np.exp(-u) * u

        out[rest] += simpson_doubling(integrand, np.log(kink[rest]), np.log(upper[rest]), rel_tol)
    return out


def _unit_veil_threaded(slope: np.ndarray, upper: np.ndarray, beta: float, rel_tol: float, threads: int) -> np.ndarray:
    spans = [(i, min(i + CHUNK, slope.size)) for i in range(0, slope.size, CHUNK)]
    if threads <= 1 or len(spans) <= 1:
        parts = [_unit_veil(slope[a:b], upper[a:b], beta, rel_tol) for a, b in spans]
    else:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            parts = list(pool.map(lambda ab: _unit_veil(slope[ab[0]:ab[1]], upper[ab[0]:ab[1]], beta, rel_tol), spans))
    return np.concatenate(parts) if parts else np.zeros(0)


def _unit_veil_field(
    slope: np.ndarray,
    distance: np.ndarray,
    atm: Atmosphere,
    threads: Optional[int],
) -> np.ndarray:
    """K for every sample of ``slope`` (s*meters_per_unit) and path length ``distance``; channel axis first."""
    threads = resolve_threads(threads)
    out = np.empty((3,) + slope.shape)
    cache: dict[float, np.ndarray] = {}
    for c, beta in enumerate(atm.beta):
        beta = float(beta)
        if beta not in cache:
            upper = np.minimum(beta * distance, atm.tau_max_factor)
            # mirrored columns share s, so roughly half the pixels are unique
            pairs = np.stack([slope.ravel(), upper.ravel()], axis=1)
            uniq, inverse = np.unique(pairs, axis=0, return_inverse=True)
            k = _unit_veil_threaded(uniq[:, 0], uniq[:, 1], beta, atm.quad_rel_tol, threads)
            cache[beta] = k[inverse.reshape(-1)].reshape(slope.shape)
            logger.debug(f"beta={beta:g}: {uniq.shape[0]} unique path integrals for {slope.size} samples")
        out[c] = cache[beta]
    return out


def unit_veil_grid(
    geom: CameraGeometry,
    atm: Atmosphere,
    depth: DepthMap,
    meters_per_unit: float = DEFAULT_METERS_PER_UNIT,
    threads: Optional[int] = None,
) -> np.ndarray:
    """J / (2 pi A) for every pixel and channel, shape (3, H, W)."""
    depth.require_size(geom.width_px, geom.height_px)
    return _unit_veil_field(geom.elevation_grid() * meters_per_unit, depth.distance, atm, threads)

# ============================================================
# Veil and restoration
# ============================================================

def pollution_image_baseline(p: BaselineParams, depth: DepthMap, threads: Optional[int] = None) -> RadianceImage:
    """J for a uniform ground radiance; sky paths are cut at tau_max_factor / beta."""
    unit = unit_veil_grid(p.geom, p.atm, depth, p.meters_per_unit, threads)
    j = (2.0 * math.pi) * p.a_const[:, None, None] * unit
    return RadianceImage(np.maximum(j, 0.0))


def restore_baseline(
    polluted: RadianceImage,
    p: BaselineParams,
    depth: DepthMap,
    threads: Optional[int] = None,
) -> RestorationResult:
    """I = max(Î - J, 0) with the uniform-radiance veil."""
    depth.require_size(polluted.width, polluted.height)
    veil = pollution_image_baseline(p, depth, threads)
    result = subtract_veil(polluted, veil)
    warn_if_clamped(result.clamp_fraction)
    return result


def estimate_baseline_radiance(
    polluted: RadianceImage,
    cal: CalibrationSet,
    p: BaselineParams,
    threads: Optional[int] = None,
) -> np.ndarray:
    """
    Constant A per channel from the calibration rows: mean over rows and
    columns of the filtered difference divided by the unit-radiance veil.
    """
    diff = filtered_differences(polluted, cal)
    geom = p.geom
    x = geom.x_of_col(np.arange(geom.width_px))[None, :]
    y = geom.y_of_row(np.asarray(cal.row_set))[:, None]
    slope = geom.elevation_factor(x, y) * p.meters_per_unit
    # calibration rows are sky, so their paths are infinite
    unit = (2.0 * math.pi) * _unit_veil_field(slope, np.full(slope.shape, INFINITE), p.atm, threads)
    a = np.maximum(diff / unit, 0.0).mean(axis=(1, 2))
    logger.info(f"💡 baseline ground radiance A = {[round(float(v), 6) for v in a]}")
    return a
