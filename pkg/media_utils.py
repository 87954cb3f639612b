import os
import csv
import logging
from pathlib import Path
from typing import Union

import numpy as np
import png
from PIL import Image

from constants import DEFAULT_BIT_DEPTH, PFM_EXTS, PILLOW_EXTS, PNG_EXTS
from core_types import (
    DepthMap,
    GroundLightProfile,
    ImageFormatError,
    RadianceImage,
    SkyMask,
)

logger = logging.getLogger(__name__)

PathLike = Union[str, Path]
TRANSFERS = ("srgb", "linear")

# ------------------------------------------------------------
# Format guess
# ------------------------------------------------------------

def guess_raster_kind(path: PathLike) -> str:
    ext = (os.path.splitext(str(path))[1] or "").lower()
    if ext in PNG_EXTS:
        return "png"
    if ext in PFM_EXTS:
        return "pfm"
    if ext in PILLOW_EXTS:
        return "pillow"
    raise ImageFormatError(f"unsupported raster extension '{ext}' for {path} (use .png, .pfm, .jpg or .tif)")

def _check_transfer(transfer: str) -> str:
    t = (transfer or "").lower()
    if t not in TRANSFERS:
        raise ImageFormatError(f"transfer must be one of {TRANSFERS}, got '{transfer}'")
    return t

# ------------------------------------------------------------
# sRGB transfer
# ------------------------------------------------------------

def srgb_decode(v: np.ndarray) -> np.ndarray:
    """sRGB electro-optical transfer: encoded [0, 1] -> linear [0, 1]."""
    v = np.asarray(v, dtype=np.float64)
    return np.where(v <= 0.04045, v / 12.92, ((v + 0.055) / 1.055) ** 2.4)

def srgb_encode(v: np.ndarray) -> np.ndarray:
    """Inverse of srgb_decode; input is clipped to [0, 1]."""
    v = np.clip(np.asarray(v, dtype=np.float64), 0.0, 1.0)
    return np.where(v <= 0.0031308, v * 12.92, 1.055 * v ** (1.0 / 2.4) - 0.055)

# ------------------------------------------------------------
# PFM
# ------------------------------------------------------------

def read_pfm(path: PathLike) -> np.ndarray:
    """Read a PFM file; returns (H, W) or (H, W, 3) float64, top row first."""
    try:
        with open(path, "rb") as f:
            kind = f.readline().strip()
            dims = f.readline().split()
            scale = float(f.readline().strip())
            raw = f.read()
    except OSError as e:
        raise ImageFormatError(f"cannot read {path}: {e}") from e
    except ValueError as e:
        raise ImageFormatError(f"{path}: malformed PFM header ({e})") from e

    if kind == b"PF":
        planes = 3
    elif kind == b"Pf":
        planes = 1
    else:
        raise ImageFormatError(f"{path}: not a PFM file (magic {kind!r})")
    try:
        w, h = int(dims[0]), int(dims[1])
    except (IndexError, ValueError) as e:
        raise ImageFormatError(f"{path}: malformed PFM dimensions") from e
    if w <= 0 or h <= 0:
        raise ImageFormatError(f"{path}: PFM dimensions must be positive, got {w}x{h}")

    dtype = "<f4" if scale < 0 else ">f4"
    need = w * h * planes
    if len(raw) < need * 4:
        raise ImageFormatError(f"{path}: expected {need} samples, found {len(raw) // 4}")
    data = np.frombuffer(raw, dtype=dtype, count=need)
    shape = (h, w, 3) if planes == 3 else (h, w)
    # PFM stores the bottom row first
    return np.flipud(data.reshape(shape)).astype(np.float64)

def write_pfm(path: PathLike, arr: np.ndarray) -> None:
    """Write (H, W) or (H, W, 3) samples as little-endian float32 PFM."""
    arr = np.asarray(arr, dtype=np.float64)
    if arr.ndim == 3 and arr.shape[2] == 3:
        magic = b"PF"
    elif arr.ndim == 2:
        magic = b"Pf"
    else:
        raise ImageFormatError(f"PFM needs an (H, W) or (H, W, 3) array, got {arr.shape}")
    h, w = arr.shape[:2]
    body = np.ascontiguousarray(np.flipud(arr), dtype="<f4")
    with open(path, "wb") as f:
        f.write(magic + b"\n")
        f.write(f"{w} {h}\n".encode("ascii"))
        f.write(b"-1.0\n")
        f.write(body.tobytes())

# ------------------------------------------------------------
# PNG (pypng handles 8- and 16-bit)
# ------------------------------------------------------------

def _read_png(path: PathLike) -> tuple[np.ndarray, int, int]:
    """Returns (H, W, planes) integer samples, bit depth and plane count."""
    try:
        w, h, rows, info = png.Reader(filename=str(path)).asDirect()
        bitdepth = int(info["bitdepth"])
        planes = int(info["planes"])
        data = np.vstack([np.asarray(r, dtype=np.uint32) for r in rows])
    except OSError as e:
        raise ImageFormatError(f"cannot read {path}: {e}") from e
    except png.Error as e:
        raise ImageFormatError(f"{path}: invalid PNG ({e})") from e
    if bitdepth not in (8, 16):
        raise ImageFormatError(f"{path}: unsupported PNG bit depth {bitdepth} (need 8 or 16)")
    return data.reshape(h, w, planes), bitdepth, planes

def _write_png16(path: PathLike, hwc: np.ndarray) -> None:
    h, w = hwc.shape[:2]
    q = np.clip(np.rint(hwc * 65535.0), 0, 65535).astype(np.uint16)
    greyscale = hwc.ndim == 2
    writer = png.Writer(width=w, height=h, greyscale=greyscale, bitdepth=16)
    with open(path, "wb") as f:
        writer.write(f, q.reshape(h, -1))

# ------------------------------------------------------------
# Radiance images
# ------------------------------------------------------------

def load_image(path: PathLike, transfer: str = "srgb") -> RadianceImage:
    """
    Load an RGB raster as linear radiance.
    PNG (8/16-bit) and JPEG/TIFF (8-bit) are decoded with ``transfer``;
    PFM is already linear and is taken as is.
    """
    transfer = _check_transfer(transfer)
    if not os.path.exists(path):
        raise ImageFormatError(f"input file not found: {path}")
    kind = guess_raster_kind(path)

    if kind == "pfm":
        arr = read_pfm(path)
        if arr.ndim != 3:
            raise ImageFormatError(f"{path}: expected a 3-channel PFM, got 1 channel")
        if not np.all(np.isfinite(arr)):
            raise ImageFormatError(f"{path}: PFM contains non-finite samples")
        negative = int(np.count_nonzero(arr < 0))
        if negative:
            logger.warning(f"⚠️ {path}: clamped {negative} negative sample(s) to 0")
        return RadianceImage.from_hwc(np.maximum(arr, 0.0))

    if kind == "png":
        data, bitdepth, planes = _read_png(path)
        if planes < 3:
            raise ImageFormatError(f"{path}: expected 3 colour channels, got {planes}")
        enc = data[:, :, :3].astype(np.float64) / float((1 << bitdepth) - 1)
    else:
        try:
            with Image.open(path) as im:
                if im.mode not in ("RGB", "RGBA"):
                    raise ImageFormatError(f"{path}: expected an 8-bit RGB image, got mode {im.mode}")
                enc = np.asarray(im.convert("RGB"), dtype=np.float64) / 255.0
        except OSError as e:
            raise ImageFormatError(f"cannot read {path}: {e}") from e

    lin = srgb_decode(enc) if transfer == "srgb" else enc
    logger.debug(f"loaded {path} ({lin.shape[1]}x{lin.shape[0]}, {transfer})")
    return RadianceImage.from_hwc(lin)

def save_image(
    img: RadianceImage,
    path: PathLike,
    transfer: str = "srgb",
    bit_depth: int = DEFAULT_BIT_DEPTH,
) -> None:
    """Write an image; PNG clips to display white, PFM keeps the full range."""
    transfer = _check_transfer(transfer)
    kind = guess_raster_kind(path)
    hwc = img.to_hwc()

    if kind == "pfm":
        write_pfm(path, hwc)
        return

    enc = srgb_encode(hwc) if transfer == "srgb" else np.clip(hwc, 0.0, 1.0)
    if kind == "png" and bit_depth == 16:
        _write_png16(path, enc)
    elif bit_depth == 8:
        q = np.clip(np.rint(enc * 255.0), 0, 255).astype(np.uint8)
        Image.fromarray(q, mode="RGB").save(path)
    else:
        raise ImageFormatError(f"bit depth {bit_depth} is not available for {path} (PNG: 8/16, others: 8)")
    logger.debug(f"saved {path} ({transfer}, {bit_depth}-bit)")

# ------------------------------------------------------------
# Depth rasters
# ------------------------------------------------------------

def read_depth_raster(path: PathLike) -> np.ndarray:
    """Single-channel depth samples in file units: PFM floats or PNG integer counts."""
    if not os.path.exists(path):
        raise ImageFormatError(f"depth file not found: {path}")
    kind = guess_raster_kind(path)
    if kind == "pfm":
        arr = read_pfm(path)
        return arr[:, :, 0] if arr.ndim == 3 else arr
    if kind == "png":
        data, _bitdepth, _planes = _read_png(path)
        return data[:, :, 0].astype(np.float64)
    raise ImageFormatError(f"{path}: depth must be PFM or PNG")

def write_depth_pfm(depth: DepthMap, path: PathLike) -> None:
    """INFINITE pixels are stored as +inf."""
    write_pfm(path, depth.distance)
    logger.info(f"🗺️ wrote depth map to {path}")

# ------------------------------------------------------------
# CSV artifacts
# ------------------------------------------------------------

def _fmt(v: float) -> str:
    # repr round-trips float64 exactly
    return repr(float(v))

def write_profile_csv(profile: GroundLightProfile, path: PathLike) -> None:
    with open(path, "w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(["x", "A_R", "A_G", "A_B"])
        for x in range(profile.width):
            w.writerow([x, *(_fmt(v) for v in profile.values[:, x])])

def read_profile_csv(path: PathLike) -> GroundLightProfile:
    try:
        with open(path, newline="") as f:
            rows = list(csv.reader(f))
    except OSError as e:
        raise ImageFormatError(f"cannot read light profile {path}: {e}") from e
    if not rows or [c.strip() for c in rows[0]] != ["x", "A_R", "A_G", "A_B"]:
        raise ImageFormatError(f"{path}: expected header x,A_R,A_G,A_B")
    body = [r for r in rows[1:] if r]
    try:
        xs = [int(r[0]) for r in body]
        vals = np.array([[float(c) for c in r[1:4]] for r in body], dtype=np.float64)
    except (ValueError, IndexError) as e:
        raise ImageFormatError(f"{path}: malformed profile row ({e})") from e
    if xs != list(range(len(xs))):
        raise ImageFormatError(f"{path}: x column must be 0..W-1 in order")
    return GroundLightProfile(vals.T.reshape(3, -1))

def write_sky_mask_csv(mask: SkyMask, path: PathLike) -> None:
    with open(path, "w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(["column", "row"])
        for c, r in enumerate(mask.rows):
            w.writerow([c, int(r)])

def read_sky_mask_csv(path: PathLike, height: int) -> SkyMask:
    try:
        with open(path, newline="") as f:
            rows = list(csv.reader(f))
    except OSError as e:
        raise ImageFormatError(f"cannot read sky mask {path}: {e}") from e
    body = [r for r in rows[1:] if r] if rows and rows[0][:1] == ["column"] else [r for r in rows if r]
    try:
        pairs = sorted((int(r[0]), int(r[1])) for r in body)
    except (ValueError, IndexError) as e:
        raise ImageFormatError(f"{path}: malformed sky mask row ({e})") from e
    if [c for c, _ in pairs] != list(range(len(pairs))):
        raise ImageFormatError(f"{path}: sky mask must list every column exactly once")
    return SkyMask.from_rows((r for _, r in pairs), height)

def write_curve_csv(curve, path: PathLike) -> None:
    """Irradiance curve as altitude_m,E_R,E_G,E_B."""
    with open(path, "w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(["altitude_m", "E_R", "E_G", "E_B"])
        for i, y in enumerate(curve.altitudes):
            w.writerow([_fmt(y), *(_fmt(v) for v in curve.values[:, i])])
