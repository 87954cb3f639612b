"""Shared synthetic scenes for the skyclear test suite."""
from types import SimpleNamespace

import numpy as np
import pytest
from scipy.ndimage import gaussian_filter

from adaptive_lpr import pollution_image_adaptive
from city_restoration import depth_from_array
from core_types import (
    INFINITE,
    Atmosphere,
    CameraGeometry,
    DepthMap,
    GroundLightProfile,
    RadianceImage,
    SkyMask,
)
from forward_sim import SimScene, make_synthetic_sky, ramp_profile, star_field, synthesize


@pytest.fixture
def atm():
    return Atmosphere.from_beta(1e-4)


@pytest.fixture
def small_geom():
    return CameraGeometry.for_image(48, 32)


@pytest.fixture(scope="session")
def flagship():
    """512x341 sky, 50 stars, ramped ground light; I* is the star-free base."""
    w, h = 512, 341
    base = make_synthetic_sky(w, h, top=0.02, bottom=0.06)
    stars = tuple(star_field(w, h, 50, seed=11))
    geom = CameraGeometry.for_image(w, h)
    atm = Atmosphere.from_beta(1e-4)
    profile = ramp_profile(0.10, 0.16, w)
    scene = SimScene(base, profile, atm, geom, DepthMap.infinite(w, h), stars=stars)
    return SimpleNamespace(
        scene=scene,
        base=base,
        stars=stars,
        pristine=scene.pristine(),
        calib=base,
        profile=profile,
        geom=geom,
        atm=atm,
        sky=SkyMask.full_sky(w, h),
        polluted=synthesize(scene, "adaptive"),
    )


@pytest.fixture(scope="session")
def city():
    """128x96 frame with a flat skyline at row 40 and a building 600 m away."""
    w, h, skyline = 128, 96, 40
    rows = np.arange(h)[:, None]
    sky_px = np.broadcast_to(rows < skyline, (h, w))

    grad = 0.03 + 0.02 * rows / (skyline - 1)
    luma = np.where(sky_px, grad, 0.5)
    base = RadianceImage(np.repeat(luma[None], 3, axis=0))

    sky = SkyMask.from_rows([skyline] * w, h)
    depth_true = DepthMap(np.where(sky_px, INFINITE, 600.0))
    geom = CameraGeometry.for_image(w, h)
    atm = Atmosphere.from_beta(1e-4)
    profile = GroundLightProfile.constant(0.1, w)
    polluted = RadianceImage(base.data + pollution_image_adaptive(profile, geom, atm, depth_true).data)

    # estimator-style depth: sky given a large finite value, edges blurred
    raw = gaussian_filter(np.where(sky_px, 20000.0, 600.0), sigma=4.0)
    return SimpleNamespace(
        width=w,
        height=h,
        skyline=skyline,
        base=base,
        sky=sky,
        depth_true=depth_true,
        depth_raw=depth_from_array(raw, 1.0, sky),
        geom=geom,
        atm=atm,
        profile=profile,
        polluted=polluted,
    )
