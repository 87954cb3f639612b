"""
End-to-end properties of the restoration pipeline on synthetic scenes
with known ground truth. The heavier cases carry the ``slow`` marker.
"""
import math
import os
from types import SimpleNamespace

import numpy as np
import pytest
from scipy.integrate import quad
from scipy.special import exp1

from adaptive_lpr import align_calibration, alpha_factor, estimate_light_profile, restore_adaptive
from baseline_lpr import BaselineParams, estimate_baseline_radiance, restore_baseline
from city_restoration import GuidedFilterParams, restore_city
from constants import BETA_PRESETS
from core_types import Atmosphere, CameraGeometry, DepthMap, GroundLightProfile, SkyMask
from forward_sim import SimScene, make_synthetic_sky, ramp_profile, synthesize
from scattering import (
    emit_irradiance_curve,
    exp_integral_e1,
    irradiance_at_altitude,
    irradiance_at_altitude_quadrature,
)

MANY = max(4, os.cpu_count() or 1)
THREAD_COUNTS = (1, 2, MANY)


def _e1_by_quadrature(u):
    """E1 by adaptive quadrature, in variables that keep the integrand smooth."""
    opts = dict(epsabs=0.0, epsrel=1e-12, limit=200)
    if u >= 1.0:
        # e^-u * integral_0^inf e^-w / (u + w) dw
        tail, _ = quad(lambda w: math.exp(-w) / (u + w), 0.0, math.inf, **opts)
        return math.exp(-u) * tail
    # t = e^v over [u, 1], plus E1(1)
    head, _ = quad(lambda v: math.exp(-math.exp(v)), math.log(u), 0.0, **opts)
    return head + _e1_by_quadrature(1.0)


def _star_neighbourhood(stars, width, height, radius=5):
    rows, cols = np.mgrid[0:height, 0:width]
    near = np.zeros((height, width), dtype=bool)
    for s in stars:
        near |= np.hypot(rows - s.row, cols - s.col) <= radius
    return near


def _top_band_variation(image, fraction=0.1):
    band = image.data[:, : max(1, int(fraction * image.height)), :]
    means = band.mean(axis=(0, 1))
    return float((means.max() - means.min()) / means.mean())


def _band_error(result, base, rows):
    return float(np.abs(result.image.data[:, rows] - base.data[:, rows]).mean())


@pytest.fixture(scope="module")
def baseline_scene():
    w, h = 256, 171
    base = make_synthetic_sky(w, h, top=0.02, bottom=0.06)
    atm = Atmosphere.from_beta(1e-4)
    geom = CameraGeometry.for_image(w, h)
    depth = DepthMap.infinite(w, h)
    scene = SimScene(base, GroundLightProfile.constant([0.08, 0.1, 0.12], w), atm, geom, depth)
    return SimpleNamespace(
        base=base,
        depth=depth,
        params=BaselineParams([0.08, 0.1, 0.12], atm, geom),
        polluted=synthesize(scene, "baseline", threads=1),
    )


@pytest.fixture(scope="module")
def ramp_scene():
    """Star-free bright sky under a left-to-right ramp of ground light."""
    w, h = 256, 171
    base = make_synthetic_sky(w, h, top=0.2, bottom=0.25)
    atm = Atmosphere.from_beta(1e-4)
    geom = CameraGeometry.for_image(w, h)
    depth = DepthMap.infinite(w, h)
    scene = SimScene(base, ramp_profile(0.10, 0.16, w), atm, geom, depth)
    polluted = synthesize(scene, "adaptive")
    sky = SkyMask.full_sky(w, h)
    return SimpleNamespace(
        base=base,
        atm=atm,
        geom=geom,
        depth=depth,
        polluted=polluted,
        cal=align_calibration(polluted, sky, base, sky),
    )


def _restore_ramp_baseline(scene, threads):
    p = BaselineParams(0.0, scene.atm, scene.geom)
    a = estimate_baseline_radiance(scene.polluted, scene.cal, p, threads=threads)
    return restore_baseline(scene.polluted, p.with_radiance(a), scene.depth, threads=threads)


class TestExponentialIntegral:
    def test_matches_adaptive_quadrature(self):
        u = np.geomspace(1e-4, 50.0, 1000)
        want = np.array([_e1_by_quadrature(v) for v in u])
        np.testing.assert_allclose(exp_integral_e1(u), want, rtol=1e-9, atol=0)

    def test_matches_scipy(self):
        u = np.geomspace(1e-4, 50.0, 1000)
        np.testing.assert_allclose(exp_integral_e1(u), exp1(u), rtol=1e-9, atol=0)


class TestAltitudeIrradiance:
    def test_closed_form_matches_disk_integral(self):
        rng = np.random.default_rng(2024)
        betas = np.exp(rng.uniform(math.log(2.8e-5), math.log(1e-3), 100))
        altitudes = np.exp(rng.uniform(math.log(1.0), math.log(1e5), 100))
        for beta, y in zip(betas, altitudes):
            atm = Atmosphere.from_beta(beta)
            closed = irradiance_at_altitude(1.0, atm, y)
            direct = irradiance_at_altitude_quadrature(1.0, atm, y)
            np.testing.assert_allclose(closed, direct, rtol=1e-6, err_msg=f"beta={beta:.3e} y={y:.3e}")

    def test_preset_curves_are_ordered_and_decreasing(self):
        curves = [
            emit_irradiance_curve(1.0, Atmosphere.from_beta(BETA_PRESETS[name]), 10.0, 1e5, 64)
            for name in ("clean", "slight-haze", "haze")
        ]
        for curve in curves:
            assert curve.n == 64
            assert np.all(np.diff(curve.values, axis=1) < 0)
        for thin, thick in zip(curves, curves[1:]):
            assert np.all(thin.values > thick.values)


class TestAlphaClosedForm:
    def test_matches_path_integral(self):
        rng = np.random.default_rng(77)
        geom = CameraGeometry.for_image(512, 341)
        for i in range(100):
            beta = math.exp(rng.uniform(math.log(1e-5), math.log(1e-2)))
            col, row = rng.uniform(0, 511), rng.uniform(0, 340)
            x, y = float(geom.x_of_col(col)), float(geom.y_of_row(row))
            L = math.inf if i % 4 == 0 else math.exp(rng.uniform(0.0, math.log(1e5)))
            s = float(geom.elevation_factor(x, y))
            # integral over the ray of exp(-beta tau s) beta exp(-beta tau) in u = beta tau; the tail past u = 50 is negligible
            upper = min(beta * L, 50.0)
            want, _ = quad(lambda u: math.exp(-u * (1.0 + s)), 0.0, upper, epsabs=0.0, epsrel=1e-12)
            got = alpha_factor(geom, Atmosphere.from_beta(beta), x, y, L)
            np.testing.assert_allclose(got, want, rtol=1e-8, err_msg=f"beta={beta:.3e} s={s:.4f} L={L}")


@pytest.mark.slow
class TestBaselineRoundTrip:
    def test_recovers_base(self, baseline_scene):
        result = restore_baseline(baseline_scene.polluted, baseline_scene.params, baseline_scene.depth, threads=1)
        assert np.max(np.abs(result.image.data - baseline_scene.base.data)) <= 1e-6

    @pytest.mark.parametrize("threads", THREAD_COUNTS[1:])
    def test_thread_count_is_invisible(self, baseline_scene, threads):
        one = restore_baseline(baseline_scene.polluted, baseline_scene.params, baseline_scene.depth, threads=1)
        many = restore_baseline(baseline_scene.polluted, baseline_scene.params, baseline_scene.depth, threads=threads)
        assert np.array_equal(one.image.data, many.image.data)


@pytest.mark.slow
class TestAdaptiveRoundTrip:
    def test_recovers_light_profile(self, flagship):
        cal = align_calibration(flagship.polluted, flagship.sky, flagship.calib, flagship.sky)
        profile = estimate_light_profile(flagship.polluted, cal, flagship.geom, flagship.atm)
        truth = flagship.profile.values
        lit = truth > 0.05
        assert lit.all()
        rel = np.abs(profile.values - truth) / truth
        assert rel[lit].max() <= 0.02

    def test_recovers_base_sky_away_from_stars(self, flagship):
        cal = align_calibration(flagship.polluted, flagship.sky, flagship.calib, flagship.sky)
        depth = DepthMap.infinite(flagship.base.width, flagship.base.height)
        result = restore_adaptive(flagship.polluted, cal, flagship.geom, flagship.atm, depth)
        away = ~_star_neighbourhood(flagship.stars, flagship.base.width, flagship.base.height)
        err = np.abs(result.image.data - flagship.base.data)[:, away]
        assert err.max() <= 0.02
        assert result.clamp_fraction == 0.0

    def test_repeatable(self, flagship):
        cal = align_calibration(flagship.polluted, flagship.sky, flagship.calib, flagship.sky)
        depth = DepthMap.infinite(flagship.base.width, flagship.base.height)
        a = restore_adaptive(flagship.polluted, cal, flagship.geom, flagship.atm, depth)
        b = restore_adaptive(flagship.polluted, cal, flagship.geom, flagship.atm, depth)
        assert np.array_equal(a.image.data, b.image.data)


@pytest.mark.slow
class TestRampAblation:
    def test_adaptive_flattens_the_ramp(self, ramp_scene):
        s = ramp_scene
        result = restore_adaptive(s.polluted, s.cal, s.geom, s.atm, s.depth)
        assert _top_band_variation(result.image) <= 0.01

    def test_uniform_radiance_leaves_the_ramp(self, ramp_scene):
        result = _restore_ramp_baseline(ramp_scene, threads=1)
        assert _top_band_variation(result.image) >= 0.05

    def test_thread_count_is_invisible(self, ramp_scene):
        one = _restore_ramp_baseline(ramp_scene, threads=1)
        many = _restore_ramp_baseline(ramp_scene, threads=MANY)
        assert np.array_equal(one.image.data, many.image.data)


class TestCity:
    def test_denser_air_removes_more_light(self, city):
        cal = align_calibration(city.polluted, city.sky, city.base, city.sky)
        energy = []
        for beta in (1e-4, 1e-3):
            result, _ = restore_city(city.polluted, cal, city.geom, Atmosphere.from_beta(beta), city.depth_raw)
            energy.append(result.veil_energy)
        assert energy[1] > energy[0]

    def test_filtering_reduces_the_skyline_halo(self, city):
        band = slice(city.skyline - 5, city.skyline + 5)
        gf = GuidedFilterParams(radius=16, epsilon=1e-3)
        raw, _ = restore_city(city.polluted, None, city.geom, city.atm, city.depth_raw, gf,
                              profile=city.profile, filter_depth=False)
        snapped, used = restore_city(city.polluted, None, city.geom, city.atm, city.depth_raw, gf,
                                     profile=city.profile)
        assert used is not city.depth_raw
        assert _band_error(snapped, city.base, band) < _band_error(raw, city.base, band)

    def test_repeatable(self, city):
        runs = [
            restore_city(city.polluted, None, city.geom, city.atm, city.depth_raw, profile=city.profile)
            for _ in range(2)
        ]
        assert np.array_equal(runs[0][0].image.data, runs[1][0].image.data)
        assert np.array_equal(runs[0][1].distance, runs[1][1].distance)
