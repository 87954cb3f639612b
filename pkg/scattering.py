# scattering.py
"""
Atmospheric-physics primitives for scattered ground light.

Model: homogeneous atmosphere, isotropic single scattering. Ground lights
of radiance A illuminate an atmosphere point at altitude y with

    E(y) = 2*pi*A * E1(beta*y)

which is the closed form of the disk integral over the ground plane.
Both forms are implemented; the quadrature form is the cross-check.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Union

import numpy as np

from constants import Y_FLOOR_M
from core_types import Atmosphere, DomainError, PerChannel, per_channel
from media_utils import write_curve_csv
from quadrature import simpson_doubling

logger = logging.getLogger(__name__)

EULER_GAMMA = 0.57721566490153286061
_E1_SERIES_TERMS = 30
_E1_CF_MAX_ITER = 500
_E1_CF_EPS = 1e-15
_FPMIN = 1e-300

Number = Union[float, np.ndarray]

# ============================================================
# Attenuation
# ============================================================

def attenuate(e0: Number, beta: Number, d: Number) -> Number:
    """Bouguer's law: e0 * exp(-beta * d)."""
    e0_, beta_, d_ = (np.asarray(v, dtype=np.float64) for v in (e0, beta, d))
    if np.any(e0_ < 0) or np.any(beta_ <= 0) or np.any(d_ < 0):
        raise DomainError(f"attenuate needs e0 >= 0, beta > 0, d >= 0 (got {e0}, {beta}, {d})")
    out = e0_ * np.exp(-beta_ * d_)
    return float(out) if out.ndim == 0 else out


def point_source_irradiance(e0: Number, beta: Number, d: Number) -> Number:
    """Isotropic point source: attenuated radiance over the inverse-square law."""
    d_ = np.asarray(d, dtype=np.float64)
    if np.any(d_ <= 0):
        raise DomainError(f"point source distance must be > 0 (singular at 0), got {d}")
    out = np.asarray(attenuate(e0, beta, d_)) / (d_ * d_)
    return float(out) if out.ndim == 0 else out

# ============================================================
# Exponential integral E1
# ============================================================

def _e1_series(u: np.ndarray) -> np.ndarray:
    # E1(u) = -gamma - ln u - sum_{n>=1} (-u)^n / (n * n!)
    term = np.ones_like(u)
    acc = np.zeros_like(u)
    for n in range(1, _E1_SERIES_TERMS + 1):
        term = term * (-u) / n
        acc = acc + term / n
    return -EULER_GAMMA - np.log(u) - acc


def _e1_continued_fraction(u: np.ndarray) -> np.ndarray:
    # modified Lentz evaluation of the E1 continued fraction, valid for u > 1
    b = u + 1.0
    c = np.full_like(u, 1.0 / _FPMIN)
    d = 1.0 / b
    h = d.copy()
    live = np.ones(u.shape, dtype=bool)
    for i in range(1, _E1_CF_MAX_ITER + 1):
        an = -float(i * i)
        b = b + 2.0
        d_new = 1.0 / (an * d + b)
        c_new = b + an / c
        delta = c_new * d_new
        # converged elements stop updating so each result is independent of its neighbours
        d = np.where(live, d_new, d)
        c = np.where(live, c_new, c)
        h = np.where(live, h * delta, h)
        live &= np.abs(delta - 1.0) >= _E1_CF_EPS
        if not live.any():
            break
    else:
        logger.warning(f"⚠️ E1 continued fraction unconverged for {int(live.sum())} argument(s)")
    return h * np.exp(-u)


def exp_integral_e1(u: Number) -> Number:
    """E1(u) = integral_u^inf exp(-t)/t dt for u > 0 (scalar or array)."""
    arr = np.asarray(u, dtype=np.float64)
    if np.any(~(arr > 0)):
        raise DomainError(f"E1 is defined for u > 0 only (diverges at 0), got min {np.min(arr)}")
    flat = arr.reshape(-1)
    out = np.empty_like(flat)
    small = flat <= 1.0
    if small.any():
        out[small] = _e1_series(flat[small])
    if (~small).any():
        out[~small] = _e1_continued_fraction(flat[~small])
    out = out.reshape(arr.shape)
    return float(out) if out.ndim == 0 else out

# ============================================================
# Altitude irradiance E(y)
# ============================================================

def _check_altitude(y: np.ndarray) -> None:
    if np.any(~(y >= Y_FLOOR_M)):
        raise DomainError(f"altitude must be >= {Y_FLOOR_M} m (E diverges at the ground), got min {np.min(y)}")


def _check_radiance(a: PerChannel) -> np.ndarray:
    a_ = per_channel(a, "ground radiance")
    if np.any(a_ < 0) or not np.all(np.isfinite(a_)):
        raise DomainError(f"ground radiance must be finite and >= 0, got {a_.tolist()}")
    return a_


def irradiance_at_altitude(a: PerChannel, atm: Atmosphere, y: Number) -> np.ndarray:
    """
    Per-channel 2*pi*a*E1(beta*y).

    Returns shape (3,) for scalar y, (3, n) for an array of n altitudes.
    """
    a_ = _check_radiance(a)
    y_ = np.asarray(y, dtype=np.float64)
    _check_altitude(y_)
    beta = atm.beta
    if y_.ndim == 0:
        return a_ * (2.0 * math.pi * exp_integral_e1(beta * float(y_)))
    yy = y_.reshape(-1)
    return a_[:, None] * (2.0 * math.pi * exp_integral_e1(beta[:, None] * yy[None, :]))


def irradiance_at_altitude_quadrature(a: PerChannel, atm: Atmosphere, y: float) -> np.ndarray:
    """
    Direct quadrature of the ground-disk integral

        E(y) = integral_0^inf A exp(-beta sqrt(x^2+y^2)) / (x^2+y^2) 2 pi x dx

    evaluated with x = y*sinh(t), which turns the integrand into the smooth
    2*pi*A*exp(-beta*y*cosh t)*tanh t. The upper limit is placed where the
    remaining tail is below quad_rel_tol of the integral.
    """
    a_ = _check_radiance(a)
    y = float(y)
    _check_altitude(np.asarray(y))
    beta = atm.beta
    by = beta * y

    # tail beyond cosh(T) = 1 + K/(beta*y) is at most exp(-K) of the total
    k_tail = max(atm.tau_max_factor, math.log(1.0 / atm.quad_rel_tol) + 7.0)
    t_max = np.arccosh(1.0 + k_tail / by)

    # exp(-beta*y) is factored out so the integrand stays O(1); cosh t - 1 = 2 sinh^2(t/2)
    def integrand(t: np.ndarray, sel: np.ndarray) -> np.ndarray:
        return np.exp(-2.0 * by[sel, None] * np.sinh(0.5 * t) ** 2) * np.tanh(t)

    unit = simpson_doubling(integrand, np.zeros(3), t_max, atm.quad_rel_tol)
    return a_ * (2.0 * math.pi * unit * np.exp(-by))

# ============================================================
# Irradiance curves
# ============================================================

@dataclass(frozen=True, eq=False)
class IrradianceCurve:
    """E(y) sampled at increasing altitudes; values shape (3, n)."""

    altitudes: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        alt = np.asarray(self.altitudes, dtype=np.float64)
        val = np.asarray(self.values, dtype=np.float64)
        if alt.ndim != 1 or val.shape != (3, alt.size):
            raise DomainError(f"curve shapes disagree: altitudes {alt.shape}, values {val.shape}")
        if np.any(alt <= 0) or np.any(np.diff(alt) <= 0):
            raise DomainError("curve altitudes must be positive and strictly increasing")
        if np.any(val < 0) or np.any(np.diff(val, axis=1) >= 0):
            raise DomainError("curve values must be strictly decreasing (zero radiance, or underflow at the top: lower y_max)")

    @property
    def n(self) -> int:
        return int(self.altitudes.size)


def emit_irradiance_curve(
    a: PerChannel,
    atm: Atmosphere,
    y_min: float,
    y_max: float,
    n: int,
    path: Optional[Union[str, Path]] = None,
) -> IrradianceCurve:
    """Sample E(y) at n log-spaced altitudes; optionally write the CSV."""
    if not (0 < y_min < y_max):
        raise DomainError(f"need 0 < y_min < y_max, got {y_min}, {y_max}")
    if n < 2:
        raise DomainError(f"need at least 2 samples, got {n}")
    altitudes = np.geomspace(float(y_min), float(y_max), int(n))
    curve = IrradianceCurve(altitudes, irradiance_at_altitude(a, atm, altitudes))
    if path is not None:
        write_curve_csv(curve, path)
        logger.info(f"✅ wrote {curve.n}-sample irradiance curve to {path}")
    return curve
