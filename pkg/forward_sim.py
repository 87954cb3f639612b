# forward_sim.py
"""
Forward simulator: builds polluted images Î = I + J from a known pristine
sky I and a known ground light profile, using either veil model.

Scene files are flat ``key = value`` text with ``#`` comments:

    width = 512
    height = 341
    seed = 7
    stars = 50
    sky_top = 0.02
    sky_bottom = 0.06
    mode = adaptive               # or baseline
    beta = 1e-4                   # 1 or 3 values, or clean / slight-haze / haze
    profile = ramp 0.10 0.16      # or: constant 0.1   (1 or 3 comma-separated values)
    output = polluted.png
    truth = pristine.png
    profile_out = profile.csv

Further keys: ``focal_px``, ``meters_per_unit``, ``noise_sigma``,
``lights`` (profile CSV), ``base`` (pristine image instead of the synthetic
sky), ``depth`` / ``depth_scale`` / ``sky_mask``. Without ``sky_mask`` each
column's leading +inf depth samples are the sky. Relative paths are taken
from the scene file's directory.
"""
from __future__ import annotations

import logging
import math
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from adaptive_lpr import pollution_image_adaptive
from baseline_lpr import BaselineParams, pollution_image_baseline
from city_restoration import depth_from_array, sky_from_depth
from constants import (
    BETA_PRESETS,
    DEFAULT_DEPTH_SCALE,
    DEFAULT_METERS_PER_UNIT,
    MIN_SIM_SIZE,
    STAR_AMPLITUDE_RANGE,
    STAR_MIN_SEPARATION,
    STAR_SIGMA_RANGE,
)
from core_types import (
    Atmosphere,
    CameraGeometry,
    ConfigError,
    DepthMap,
    DomainError,
    GroundLightProfile,
    PerChannel,
    RadianceImage,
    per_channel,
    require_same_size,
)
from media_utils import load_image, read_depth_raster, read_profile_csv, read_sky_mask_csv

logger = logging.getLogger(__name__)

MODES = ("baseline", "adaptive")
STAR_MARGIN = 2

# ============================================================
# Stars and synthetic skies
# ============================================================

@dataclass(frozen=True)
class Star:
    """Gaussian star at integer pixel (col, row)."""

    col: int
    row: int
    amplitude: float
    sigma: float

    def __post_init__(self):
        if self.amplitude < 0:
            raise DomainError(f"star amplitude must be >= 0, got {self.amplitude}")
        if not (self.sigma > 0):
            raise DomainError(f"star sigma must be > 0, got {self.sigma}")


def star_field(width: int, height: int, count: int, seed: int) -> list[Star]:
    """``count`` seeded stars at least STAR_MIN_SEPARATION px apart, away from the border."""
    if count <= 0:
        return []
    rng = np.random.default_rng(seed)
    stars: list[Star] = []
    taken = np.empty((0, 2))
    attempts = 0
    while len(stars) < count:
        attempts += 1
        if attempts > 1000 * count:
            raise ConfigError(f"cannot place {count} stars {STAR_MIN_SEPARATION} px apart in {width}x{height}")
        col = int(rng.integers(STAR_MARGIN, width - STAR_MARGIN))
        row = int(rng.integers(STAR_MARGIN, height - STAR_MARGIN))
        if taken.size and np.min(np.hypot(taken[:, 0] - col, taken[:, 1] - row)) < STAR_MIN_SEPARATION:
            continue
        amp = float(rng.uniform(*STAR_AMPLITUDE_RANGE))
        sig = float(rng.uniform(*STAR_SIGMA_RANGE))
        stars.append(Star(col, row, amp, sig))
        taken = np.vstack([taken, [col, row]])
    return stars


def composite_stars(img: RadianceImage, stars: Sequence[Star]) -> RadianceImage:
    """Add white Gaussian stars onto ``img``."""
    if not stars:
        return img
    data = img.data.copy()
    for s in stars:
        r = int(math.ceil(4 * s.sigma))
        r0, r1 = max(0, s.row - r), min(img.height, s.row + r + 1)
        c0, c1 = max(0, s.col - r), min(img.width, s.col + r + 1)
        yy = np.arange(r0, r1)[:, None] - s.row
        xx = np.arange(c0, c1)[None, :] - s.col
        psf = s.amplitude * np.exp(-(xx * xx + yy * yy) / (2.0 * s.sigma ** 2))
        data[:, r0:r1, c0:c1] += psf[None]
    return RadianceImage(data)


def make_synthetic_sky(
    width: int,
    height: int,
    top: PerChannel,
    bottom: PerChannel,
    stars: int = 0,
    seed: int = 0,
) -> RadianceImage:
    """Vertical gradient from ``top`` (row 0) to ``bottom`` (last row) plus seeded stars."""
    if width < MIN_SIM_SIZE or height < MIN_SIM_SIZE:
        raise DomainError(f"synthetic sky must be at least {MIN_SIM_SIZE}x{MIN_SIM_SIZE}, got {width}x{height}")
    t = per_channel(top, "sky_top")
    b = per_channel(bottom, "sky_bottom")
    frac = np.arange(height, dtype=np.float64) / (height - 1)
    column = t[:, None] + (b - t)[:, None] * frac[None, :]
    sky = RadianceImage(np.repeat(column[:, :, None], width, axis=2))
    return composite_stars(sky, star_field(width, height, stars, seed))

# ============================================================
# Scenes
# ============================================================

@dataclass(frozen=True, eq=False)
class SimScene:
    base: RadianceImage
    profile: GroundLightProfile
    atm: Atmosphere
    geom: CameraGeometry
    depth: DepthMap
    stars: tuple[Star, ...] = ()
    meters_per_unit: float = DEFAULT_METERS_PER_UNIT
    noise_sigma: float = 0.0
    seed: int = 0

    def __post_init__(self):
        w, h = self.base.width, self.base.height
        require_same_size(w, h, self.geom.width_px, self.geom.height_px, "scene geometry")
        self.depth.require_size(w, h)
        self.profile.require_width(w)
        if self.noise_sigma < 0:
            raise DomainError(f"noise_sigma must be >= 0, got {self.noise_sigma}")

    def pristine(self) -> RadianceImage:
        """I: the base with stars composited."""
        return composite_stars(self.base, self.stars)


def veil(scene: SimScene, mode: str, threads: Optional[int] = None) -> RadianceImage:
    if mode == "adaptive":
        return pollution_image_adaptive(scene.profile, scene.geom, scene.atm, scene.depth)
    if mode == "baseline":
        a = scene.profile.values
        if np.any(a != a[:, :1]):
            raise ConfigError("baseline mode needs a constant light profile")
        p = BaselineParams(a[:, 0], scene.atm, scene.geom, scene.meters_per_unit)
        return pollution_image_baseline(p, scene.depth, threads)
    raise ConfigError(f"mode must be one of {MODES}, got '{mode}'")


def synthesize(scene: SimScene, mode: str, threads: Optional[int] = None) -> RadianceImage:
    """Î = I + J with the selected veil model, plus optional seeded sensor noise."""
    out = scene.pristine().data + veil(scene, mode, threads).data
    if scene.noise_sigma > 0:
        rng = np.random.default_rng(scene.seed)
        out = np.maximum(out + rng.normal(0.0, scene.noise_sigma, size=out.shape), 0.0)
    logger.debug(f"synthesized {mode} scene {scene.base.width}x{scene.base.height}")
    return RadianceImage(out)

# ============================================================
# Scene files
# ============================================================

_LINE = re.compile(r"^\s*([A-Za-z_][A-Za-z0-9_]*)\s*=\s*(.*?)\s*$")

SCENE_KEYS = {
    "width", "height", "seed", "stars", "sky_top", "sky_bottom", "mode", "beta",
    "focal_px", "meters_per_unit", "profile", "lights", "base", "depth",
    "depth_scale", "sky_mask", "noise_sigma", "output", "truth", "profile_out",
}


@dataclass
class SceneConfig:
    """Parsed scene file; every path is already resolved against the file's directory."""

    width: int = 256
    height: int = 171
    seed: int = 0
    stars: int = 0
    sky_top: np.ndarray = field(default_factory=lambda: per_channel(0.02))
    sky_bottom: np.ndarray = field(default_factory=lambda: per_channel(0.05))
    mode: str = "adaptive"
    beta: np.ndarray = field(default_factory=lambda: per_channel(BETA_PRESETS["slight-haze"]))
    focal_px: Optional[float] = None
    meters_per_unit: float = DEFAULT_METERS_PER_UNIT
    profile: tuple = field(default_factory=lambda: ("constant", per_channel(0.1)))
    lights: Optional[Path] = None
    base: Optional[Path] = None
    depth: Optional[Path] = None
    depth_scale: float = DEFAULT_DEPTH_SCALE
    sky_mask: Optional[Path] = None
    noise_sigma: float = 0.0
    output: Optional[Path] = None
    truth: Optional[Path] = None
    profile_out: Optional[Path] = None


def parse_beta(text: str) -> np.ndarray:
    """``1e-4``, ``1e-4,2e-4,3e-4`` or a preset name."""
    text = text.strip()
    if text in BETA_PRESETS:
        return per_channel(BETA_PRESETS[text], "beta")
    try:
        vals = [float(v) for v in text.split(",")]
    except ValueError:
        raise ConfigError(f"beta must be 1 or 3 numbers or one of {sorted(BETA_PRESETS)}, got '{text}'")
    if len(vals) not in (1, 3):
        raise ConfigError(f"beta takes 1 or 3 values, got {len(vals)}")
    return per_channel(vals, "beta")


def _channels(text: str, key: str) -> np.ndarray:
    try:
        vals = [float(v) for v in text.split(",")]
    except ValueError:
        raise ConfigError(f"{key}: expected 1 or 3 comma-separated numbers, got '{text}'")
    if len(vals) not in (1, 3):
        raise ConfigError(f"{key}: expected 1 or 3 values, got {len(vals)}")
    return per_channel(vals, key)


def _profile_spec(text: str) -> tuple:
    parts = text.split()
    if len(parts) == 2 and parts[0] == "constant":
        return ("constant", _channels(parts[1], "profile"))
    if len(parts) == 3 and parts[0] == "ramp":
        return ("ramp", _channels(parts[1], "profile"), _channels(parts[2], "profile"))
    raise ConfigError(f"profile must be 'constant <a>' or 'ramp <a_left> <a_right>', got '{text}'")


def parse_scene_file(path) -> SceneConfig:
    path = Path(path)
    try:
        lines = path.read_text(encoding="utf-8").splitlines()
    except OSError as e:
        raise ConfigError(f"cannot read scene file {path}: {e}") from e

    root = path.parent
    cfg = SceneConfig()
    for no, raw in enumerate(lines, 1):
        line = raw.split("#", 1)[0]
        if not line.strip():
            continue
        m = _LINE.match(line)
        if not m:
            raise ConfigError(f"{path}:{no}: expected 'key = value', got '{raw.strip()}'")
        key, value = m.group(1), m.group(2)
        if key not in SCENE_KEYS:
            raise ConfigError(f"{path}:{no}: unknown key '{key}' (known: {', '.join(sorted(SCENE_KEYS))})")
        if not value:
            raise ConfigError(f"{path}:{no}: '{key}' has no value")
        try:
            if key in ("width", "height", "seed", "stars"):
                setattr(cfg, key, int(value))
            elif key in ("focal_px", "meters_per_unit", "depth_scale", "noise_sigma"):
                setattr(cfg, key, float(value))
            elif key in ("sky_top", "sky_bottom"):
                setattr(cfg, key, _channels(value, key))
            elif key == "beta":
                cfg.beta = parse_beta(value)
            elif key == "profile":
                cfg.profile = _profile_spec(value)
            elif key == "mode":
                if value not in MODES:
                    raise ConfigError(f"mode must be one of {MODES}, got '{value}'")
                cfg.mode = value
            else:
                setattr(cfg, key, root / value)
        except ValueError as e:
            raise ConfigError(f"{path}:{no}: bad value for '{key}': {e}") from e
        except ConfigError as e:
            raise ConfigError(f"{path}:{no}: {e}") from e
    return cfg


def ramp_profile(left: PerChannel, right: PerChannel, width: int) -> GroundLightProfile:
    """Linear A(x) from ``left`` at column 0 to ``right`` at the last column."""
    l, r = per_channel(left), per_channel(right)
    frac = np.arange(width, dtype=np.float64) / max(width - 1, 1)
    return GroundLightProfile(l[:, None] + (r - l)[:, None] * frac[None, :])


def build_scene(cfg: SceneConfig) -> SimScene:
    """Turn a parsed scene file into a SimScene (loads any referenced files)."""
    if cfg.base is not None:
        base = load_image(cfg.base, "srgb")
        stars: tuple[Star, ...] = ()
    else:
        base = make_synthetic_sky(cfg.width, cfg.height, cfg.sky_top, cfg.sky_bottom)
        stars = tuple(star_field(cfg.width, cfg.height, cfg.stars, cfg.seed))
    w, h = base.width, base.height

    if cfg.lights is not None:
        profile = read_profile_csv(cfg.lights)
    elif cfg.profile[0] == "ramp":
        profile = ramp_profile(cfg.profile[1], cfg.profile[2], w)
    else:
        profile = GroundLightProfile.constant(cfg.profile[1], w)

    if cfg.depth is not None:
        raw = read_depth_raster(cfg.depth)
        if cfg.sky_mask:
            sky = read_sky_mask_csv(cfg.sky_mask, h)
        elif np.isposinf(raw).any():
            sky = sky_from_depth(raw)
        else:
            raise ConfigError(f"{cfg.depth}: depth has no +inf sky pixels; add 'sky_mask = <csv>' to the scene")
        depth = depth_from_array(raw, cfg.depth_scale, sky)
        logger.info(f"🗺️ scene depth {cfg.depth}: {int(depth.valid.sum())} finite pixels")
    else:
        depth = DepthMap.infinite(w, h)

    return SimScene(
        base=base,
        profile=profile,
        atm=Atmosphere.from_beta(cfg.beta),
        geom=CameraGeometry.for_image(w, h, cfg.focal_px),
        depth=depth,
        stars=stars,
        meters_per_unit=cfg.meters_per_unit,
        noise_sigma=cfg.noise_sigma,
        seed=cfg.seed,
    )
