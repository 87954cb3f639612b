import argparse
import logging
from pathlib import Path
from typing import Optional

import numpy as np

import config
from adaptive_lpr import CalibrationSet, align_calibration, estimate_light_profile, restore_adaptive
from baseline_lpr import BaselineParams, estimate_baseline_radiance, restore_baseline
from city_restoration import GuidedFilterParams, load_depth, restore_city
from constants import (
    BETA_PRESETS,
    DEFAULT_BIT_DEPTH,
    DEFAULT_DEPTH_SCALE,
    DEFAULT_EXPOSURE_SCALE,
    DEFAULT_GF_EPSILON,
    DEFAULT_GF_RADIUS,
    DEFAULT_METERS_PER_UNIT,
    DEFAULT_PROFILE_SIGMA,
    DEFAULT_ROW_FRACTIONS,
    DEFAULT_WINDOW,
)
from core_types import (
    Atmosphere,
    CameraGeometry,
    ConfigError,
    DepthMap,
    RadianceImage,
    RestorationResult,
    SkyMask,
    per_channel,
)
from forward_sim import build_scene, parse_beta, parse_scene_file, synthesize
from media_utils import (
    load_image,
    read_profile_csv,
    read_sky_mask_csv,
    save_image,
    write_depth_pfm,
    write_profile_csv,
    write_sky_mask_csv,
)
from scattering import emit_irradiance_curve
from skyline import detect_skyline

logger = logging.getLogger(__name__)

# ---------- Flag parsers ----------
def _beta_arg(text: str) -> np.ndarray:
    try:
        return parse_beta(text)
    except ConfigError as e:
        raise argparse.ArgumentTypeError(str(e))

def _channels_arg(text: str) -> np.ndarray:
    try:
        vals = [float(v) for v in text.split(",")]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected 1 or 3 comma-separated numbers, got '{text}'")
    if len(vals) not in (1, 3):
        raise argparse.ArgumentTypeError(f"expected 1 or 3 values, got {len(vals)}")
    return per_channel(vals)

def _rows_arg(text: str) -> tuple[float, ...]:
    try:
        vals = tuple(float(v) for v in text.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError(f"rows must be comma-separated fractions of the sky height, got '{text}'")
    if not vals or any(not (0.0 <= v < 1.0) for v in vals):
        raise argparse.ArgumentTypeError(f"row fractions must lie in [0, 1), got '{text}'")
    return vals

def _positive_float(text: str) -> float:
    try:
        v = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected a number, got '{text}'")
    if not v > 0:
        raise argparse.ArgumentTypeError(f"expected a value > 0, got {v}")
    return v

def _int_arg(text: str) -> int:
    try:
        return int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected an integer, got '{text}'")

def _positive_int(text: str) -> int:
    v = _int_arg(text)
    if v < 1:
        raise argparse.ArgumentTypeError(f"expected an integer >= 1, got {v}")
    return v

def _odd_window(text: str) -> int:
    v = _int_arg(text)
    if v < 1 or v % 2 == 0:
        raise argparse.ArgumentTypeError(f"window must be an odd integer >= 1, got {v}")
    return v

def _sample_count(text: str) -> int:
    v = _int_arg(text)
    if v < 2:
        raise argparse.ArgumentTypeError(f"need at least 2 samples, got {v}")
    return v

# ---------- Shared pipeline steps ----------
def _atmosphere(args) -> Atmosphere:
    beta = args.beta if args.beta is not None else per_channel(config.BETA)
    return Atmosphere.from_beta(beta, quad_rel_tol=config.QUAD_REL_TOL)

def _sky_mask(img: RadianceImage, mask_path: Optional[str]) -> SkyMask:
    override = read_sky_mask_csv(mask_path, img.height) if mask_path else None
    return detect_skyline(img, override)

def _input_sky(img: RadianceImage, args) -> SkyMask:
    sky = _sky_mask(img, args.mask)
    if args.dump_mask:
        write_sky_mask_csv(sky, args.dump_mask)
        logger.info(f"🌌 wrote skyline to {args.dump_mask}")
    return sky

def _calibration(args, img: RadianceImage, sky: SkyMask) -> CalibrationSet:
    calib = load_image(args.calib, args.transfer)
    calib_sky = _sky_mask(calib, args.calib_mask)
    return align_calibration(
        img, sky, calib, calib_sky,
        fractions=args.rows, window=args.window, exposure_scale=args.exposure,
    )

def _save(result: RestorationResult, args) -> None:
    save_image(result.image, args.output, args.transfer, args.bit_depth)
    logger.info(f"✅ wrote {args.output}")

def _common_params(args, atm: Atmosphere, geom: CameraGeometry) -> dict:
    return {
        "beta": atm.beta.tolist(),
        "focal_px": geom.focal_px,
        "width": geom.width_px,
        "height": geom.height_px,
        "transfer": args.transfer,
        "threads": config.resolve_threads(args.threads),
    }

def _summary(result: RestorationResult, params: dict) -> dict:
    return {
        "clamp_fraction": result.clamp_fraction,
        "veil_energy": result.veil_energy,
        "profile": result.profile.stats() if result.profile is not None else None,
        "params": params,
    }

# ---------- Handlers ----------
def cmd_restore_sky(args) -> dict:
    img = load_image(args.input, args.transfer)
    atm = _atmosphere(args)
    geom = CameraGeometry.for_image(img.width, img.height, args.focal)
    sky = _input_sky(img, args)

    cal = _calibration(args, img, sky) if args.calib else None
    profile = read_profile_csv(args.lights) if args.lights else None
    result = restore_adaptive(
        img, cal, geom, atm, DepthMap.infinite(img.width, img.height),
        profile=profile, sigma=args.sigma,
    )
    _save(result, args)
    if args.profile_out:
        write_profile_csv(result.profile, args.profile_out)

    params = _common_params(args, atm, geom)
    params.update(window=args.window, rows=list(args.rows), sigma=args.sigma, exposure=args.exposure,
                  calib=args.calib, lights=args.lights)
    return _summary(result, params)

def cmd_restore_baseline(args) -> dict:
    img = load_image(args.input, args.transfer)
    atm = _atmosphere(args)
    geom = CameraGeometry.for_image(img.width, img.height, args.focal)
    sky = _input_sky(img, args)
    depth = load_depth(args.depth, args.depth_scale, sky) if args.depth else DepthMap.infinite(img.width, img.height)

    p = BaselineParams(args.radiance if args.radiance is not None else 0.0, atm, geom, args.meters_per_unit)
    if args.calib:
        p = p.with_radiance(estimate_baseline_radiance(img, _calibration(args, img, sky), p, args.threads))
    result = restore_baseline(img, p, depth, args.threads)
    _save(result, args)

    params = _common_params(args, atm, geom)
    params.update(radiance=p.a_const.tolist(), meters_per_unit=p.meters_per_unit, depth=args.depth)
    return _summary(result, params)

def cmd_restore_city(args) -> dict:
    img = load_image(args.input, args.transfer)
    atm = _atmosphere(args)
    geom = CameraGeometry.for_image(img.width, img.height, args.focal)
    sky = _input_sky(img, args)
    gf = GuidedFilterParams(args.gf_radius, args.gf_eps, args.depth_scale)
    depth_raw = load_depth(args.depth, gf.depth_scale, sky)

    cal = _calibration(args, img, sky) if args.calib else None
    profile = read_profile_csv(args.lights) if args.lights else None
    result, depth = restore_city(
        img, cal, geom, atm, depth_raw, gf,
        profile=profile, sigma=args.sigma, filter_depth=not args.no_guided,
    )
    _save(result, args)
    if args.dump_depth:
        write_depth_pfm(depth, args.dump_depth)
    if args.profile_out:
        write_profile_csv(result.profile, args.profile_out)

    params = _common_params(args, atm, geom)
    params.update(window=args.window, rows=list(args.rows), sigma=args.sigma, depth=args.depth,
                  depth_scale=gf.depth_scale, gf_radius=gf.radius, gf_eps=gf.epsilon,
                  guided=not args.no_guided)
    return _summary(result, params)

def cmd_estimate_lights(args) -> dict:
    img = load_image(args.input, args.transfer)
    atm = _atmosphere(args)
    geom = CameraGeometry.for_image(img.width, img.height, args.focal)
    sky = _input_sky(img, args)
    profile = estimate_light_profile(img, _calibration(args, img, sky), geom, atm, sigma=args.sigma)
    write_profile_csv(profile, args.output)
    logger.info(f"✅ wrote light profile to {args.output}")

    params = _common_params(args, atm, geom)
    params.update(window=args.window, rows=list(args.rows), sigma=args.sigma, exposure=args.exposure)
    return {"clamp_fraction": None, "veil_energy": None, "profile": profile.stats(), "params": params}

def cmd_simulate(args) -> dict:
    cfg = parse_scene_file(args.scene)
    if args.output:
        cfg.output = Path(args.output)
    if cfg.output is None:
        raise ConfigError("simulate needs an output path: set 'output' in the scene file or pass -o")
    scene = build_scene(cfg)
    polluted = synthesize(scene, cfg.mode, args.threads)
    save_image(polluted, cfg.output, args.transfer, args.bit_depth)
    if cfg.truth:
        save_image(scene.pristine(), cfg.truth, args.transfer, args.bit_depth)
    if cfg.profile_out:
        write_profile_csv(scene.profile, cfg.profile_out)
    logger.info(f"✅ simulated {cfg.mode} scene -> {cfg.output}")

    veil_energy = float(polluted.data.sum() - scene.pristine().data.sum())
    params = {
        "mode": cfg.mode,
        "beta": scene.atm.beta.tolist(),
        "focal_px": scene.geom.focal_px,
        "width": scene.base.width,
        "height": scene.base.height,
        "seed": cfg.seed,
        "stars": len(scene.stars),
        "noise_sigma": cfg.noise_sigma,
    }
    return {"clamp_fraction": None, "veil_energy": veil_energy, "profile": scene.profile.stats(), "params": params}

def cmd_curve(args) -> dict:
    if args.preset_family:
        out = Path(args.output)
        written = {}
        for name, beta in BETA_PRESETS.items():
            path = out.with_name(f"{out.stem}_{name}{out.suffix or '.csv'}")
            emit_irradiance_curve(args.radiance, Atmosphere.from_beta(beta), args.ymin, args.ymax, args.n, path)
            written[name] = str(path)
        params = {"presets": dict(BETA_PRESETS), "files": written}
    else:
        atm = _atmosphere(args)
        emit_irradiance_curve(args.radiance, atm, args.ymin, args.ymax, args.n, args.output)
        params = {"beta": atm.beta.tolist(), "file": args.output}
    params.update(ymin=args.ymin, ymax=args.ymax, n=args.n, radiance=per_channel(args.radiance).tolist())
    return {"clamp_fraction": None, "veil_energy": None, "profile": None, "params": params}

# ---------- Registration ----------
def _common_parent() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(add_help=False)
    p.add_argument("--beta", type=_beta_arg, default=None,
                   help=f"scattering coefficient in 1/m: 1 or 3 comma-separated values or one of "
                        f"{', '.join(BETA_PRESETS)} (default: {config.BETA:g})")
    p.add_argument("--threads", type=int, default=None,
                   help="worker threads (default: SKYCLEAR_THREADS or available parallelism)")
    p.add_argument("--json", action="store_true", help="print a JSON summary to stdout")
    p.add_argument("--transfer", choices=("srgb", "linear"), default="srgb",
                   help="transfer function of input/output rasters (default: srgb)")
    p.add_argument("--bit-depth", type=int, choices=(8, 16), default=DEFAULT_BIT_DEPTH,
                   help=f"output bit depth (default: {DEFAULT_BIT_DEPTH})")
    verbosity = p.add_mutually_exclusive_group()
    verbosity.add_argument("-v", "--verbose", action="store_true", help="debug logging")
    verbosity.add_argument("-q", "--quiet", action="store_true", help="warnings and errors only")
    return p

def _image_flags(p: argparse.ArgumentParser, output_help: str) -> None:
    p.add_argument("input", help="polluted input image (PNG, PFM, JPEG or TIFF)")
    p.add_argument("-o", "--output", required=True, help=output_help)
    p.add_argument("--focal", type=_positive_float, default=None,
                   help="focal length in pixels (default: image width)")
    p.add_argument("--mask", default=None, help="skyline CSV (column,row) for the input; default: detect")
    p.add_argument("--dump-mask", default=None, help="write the skyline actually used as CSV (column,row)")

def _calib_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--calib-mask", default=None, help="skyline CSV for the calibration image; default: detect")
    p.add_argument("--rows", type=_rows_arg, default=DEFAULT_ROW_FRACTIONS,
                   help="calibration rows as fractions of the sky height (default: 0.1,0.2,0.3,0.4,0.5)")
    p.add_argument("--window", type=_odd_window, default=DEFAULT_WINDOW,
                   help=f"quasi-quartile window in pixels, odd (default: {DEFAULT_WINDOW})")
    p.add_argument("--exposure", type=_positive_float, default=DEFAULT_EXPOSURE_SCALE,
                   help="scale applied to the calibration image (default: 1)")

def _profile_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--sigma", type=float, default=DEFAULT_PROFILE_SIGMA,
                   help=f"Gaussian smoothing of A(x) in pixels, 0 disables (default: {DEFAULT_PROFILE_SIGMA:g})")
    p.add_argument("--profile-out", default=None, help="also write the light profile CSV used")

def register_commands(subparsers) -> None:
    common = _common_parent()

    # ---------- restore-sky ----------
    p = subparsers.add_parser("restore-sky", parents=[common],
                              help="adaptive restoration of a sky photograph")
    _image_flags(p, "restored image")
    src = p.add_mutually_exclusive_group()
    src.add_argument("--calib", default=None, help="pristine calibration sky image")
    src.add_argument("--lights", default=None, help="light profile CSV (x,A_R,A_G,A_B); skips estimation")
    _calib_flags(p)
    _profile_flags(p)
    p.set_defaults(handler=cmd_restore_sky, needs_source=True)

    # ---------- restore-baseline ----------
    p = subparsers.add_parser("restore-baseline", parents=[common],
                              help="restoration with a uniform ground radiance")
    _image_flags(p, "restored image")
    src = p.add_mutually_exclusive_group()
    src.add_argument("--radiance", type=_channels_arg, default=None, help="ground radiance A (1 or 3 values)")
    src.add_argument("--calib", default=None, help="estimate A from this calibration sky")
    _calib_flags(p)
    p.add_argument("--depth", default=None, help="depth raster (PFM metres or 16-bit PNG)")
    p.add_argument("--depth-scale", type=_positive_float, default=DEFAULT_DEPTH_SCALE,
                   help="metres per depth unit (default: 1)")
    p.add_argument("--meters-per-unit", type=_positive_float, default=DEFAULT_METERS_PER_UNIT,
                   help="scale from path length to altitude (default: 1)")
    p.set_defaults(handler=cmd_restore_baseline, needs_source=True)

    # ---------- restore-city ----------
    p = subparsers.add_parser("restore-city", parents=[common],
                              help="adaptive restoration with depth-limited paths below the skyline")
    _image_flags(p, "restored image")
    src = p.add_mutually_exclusive_group()
    src.add_argument("--calib", default=None, help="pristine calibration sky image")
    src.add_argument("--lights", default=None, help="light profile CSV; skips estimation")
    _calib_flags(p)
    _profile_flags(p)
    p.add_argument("--depth", required=True, help="depth raster (PFM metres or 16-bit PNG)")
    p.add_argument("--depth-scale", type=_positive_float, default=DEFAULT_DEPTH_SCALE,
                   help="metres per depth unit (default: 1)")
    p.add_argument("--gf-radius", type=_positive_int, default=DEFAULT_GF_RADIUS,
                   help=f"guided filter radius (default: {DEFAULT_GF_RADIUS})")
    p.add_argument("--gf-eps", type=_positive_float, default=DEFAULT_GF_EPSILON,
                   help=f"guided filter epsilon (default: {DEFAULT_GF_EPSILON:g})")
    p.add_argument("--no-guided", action="store_true", help="use the raw depth without guided filtering")
    p.add_argument("--dump-depth", default=None, help="write the depth actually used as PFM")
    p.set_defaults(handler=cmd_restore_city, needs_source=True)

    # ---------- estimate-lights ----------
    p = subparsers.add_parser("estimate-lights", parents=[common],
                              help="estimate the ground light profile A(x) and write it as CSV")
    _image_flags(p, "light profile CSV")
    p.add_argument("--calib", required=True, help="pristine calibration sky image")
    _calib_flags(p)
    p.add_argument("--sigma", type=float, default=DEFAULT_PROFILE_SIGMA,
                   help=f"Gaussian smoothing of A(x) in pixels, 0 disables (default: {DEFAULT_PROFILE_SIGMA:g})")
    p.set_defaults(handler=cmd_estimate_lights, needs_source=False)

    # ---------- simulate ----------
    p = subparsers.add_parser("simulate", parents=[common],
                              help="synthesize a polluted image from a scene file")
    p.add_argument("scene", help="scene file (key = value lines)")
    p.add_argument("-o", "--output", default=None, help="polluted image; overrides the scene's 'output'")
    p.set_defaults(handler=cmd_simulate, needs_source=False)

    # ---------- curve ----------
    p = subparsers.add_parser("curve", parents=[common],
                              help="write the altitude irradiance curve E(y) as CSV")
    p.add_argument("--ymin", type=_positive_float, default=10.0, help="lowest altitude in m (default: 10)")
    p.add_argument("--ymax", type=_positive_float, default=100000.0, help="highest altitude in m (default: 1e5)")
    p.add_argument("--n", type=_sample_count, default=64, help="number of log-spaced samples (default: 64)")
    p.add_argument("--radiance", type=_channels_arg, default=per_channel(1.0),
                   help="ground radiance A (default: 1)")
    p.add_argument("--preset-family", action="store_true",
                   help="one CSV per beta preset, named <output>_<preset>.csv")
    p.add_argument("-o", "--output", required=True, help="curve CSV")
    p.set_defaults(handler=cmd_curve, needs_source=False)

def check_source(args) -> None:
    """restore-sky / restore-city need --calib or --lights; restore-baseline needs --radiance or --calib."""
    if not getattr(args, "needs_source", False):
        return
    if args.handler is cmd_restore_baseline:
        if args.radiance is None and not args.calib:
            raise ConfigError("restore-baseline needs --radiance A or --calib IMAGE")
    elif not args.calib and not args.lights:
        raise ConfigError(f"{args.command} needs --calib IMAGE or --lights PROFILE.csv")
