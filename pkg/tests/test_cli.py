import json
import logging

import numpy as np
import pytest

from core_types import Atmosphere, CameraGeometry, DepthMap, GroundLightProfile
from forward_sim import SimScene, make_synthetic_sky, synthesize
from media_utils import load_image, read_pfm, save_image, write_pfm
from skyclear import run

W, H = 64, 48


@pytest.fixture(autouse=True)
def _restore_logging():
    # run() reconfigures the root logger
    root = logging.getLogger()
    handlers, level = root.handlers[:], root.level
    yield
    root.handlers[:] = handlers
    root.setLevel(level)


@pytest.fixture
def sky_files(tmp_path):
    """Star-free polluted sky and its pristine calibration, both as PFM."""
    base = make_synthetic_sky(W, H, top=0.02, bottom=0.05)
    scene = SimScene(
        base=base,
        profile=GroundLightProfile.constant(0.1, W),
        atm=Atmosphere.from_beta(1e-4),
        geom=CameraGeometry.for_image(W, H),
        depth=DepthMap.infinite(W, H),
    )
    polluted, calib = tmp_path / "polluted.pfm", tmp_path / "calib.pfm"
    save_image(synthesize(scene, "adaptive"), polluted)
    save_image(base, calib)
    return tmp_path, str(polluted), str(calib), base


class TestUsage:
    def test_missing_source(self, sky_files):
        d, polluted, _calib, _ = sky_files
        assert run(["restore-sky", polluted, "-o", str(d / "o.pfm")]) == 2

    def test_conflicting_sources(self, sky_files, capsys):
        d, polluted, calib, _ = sky_files
        code = run(["restore-sky", polluted, "-o", str(d / "o.pfm"), "--calib", calib, "--lights", "x.csv"])
        assert code == 2
        assert "not allowed with" in capsys.readouterr().err

    def test_unknown_flag(self, sky_files):
        d, polluted, calib, _ = sky_files
        assert run(["restore-sky", polluted, "-o", str(d / "o.pfm"), "--calib", calib, "--frobnicate"]) == 2

    def test_no_subcommand(self):
        assert run([]) == 2

    def test_help(self, capsys):
        assert run(["--help"]) == 0
        assert "restore-city" in capsys.readouterr().out

    def test_bad_beta(self, tmp_path):
        assert run(["curve", "-o", str(tmp_path / "c.csv"), "--beta", "foggy"]) == 2

    @pytest.mark.parametrize("value", ["4", "0", "five"])
    def test_bad_window(self, sky_files, value):
        d, polluted, calib, _ = sky_files
        assert run(["estimate-lights", polluted, "--calib", calib, "--window", value, "-o", str(d / "l.csv")]) == 2

    def test_bad_guided_radius(self, sky_files):
        d, polluted, calib, _ = sky_files
        code = run(["restore-city", polluted, "--calib", calib, "--depth", polluted, "--gf-radius", "0",
                    "-o", str(d / "c.pfm")])
        assert code == 2

    def test_too_few_curve_samples(self, tmp_path, capsys):
        assert run(["curve", "-o", str(tmp_path / "c.csv"), "--n", "1"]) == 2
        assert "at least 2 samples" in capsys.readouterr().err

    def test_missing_input_is_a_runtime_error(self, tmp_path):
        code = run(["restore-baseline", str(tmp_path / "nope.png"), "-o", str(tmp_path / "o.png"), "--radiance", "0.1"])
        assert code == 1

    def test_mismatched_lights_csv(self, sky_files, tmp_path):
        d, polluted, _calib, _ = sky_files
        lights = tmp_path / "short.csv"
        lights.write_text("x,A_R,A_G,A_B\n0,0.1,0.1,0.1\n")
        assert run(["restore-sky", polluted, "-o", str(d / "o.pfm"), "--lights", str(lights)]) == 1


class TestRestoreSky:
    def test_end_to_end_with_summary(self, sky_files, capsys):
        d, polluted, calib, base = sky_files
        out = d / "restored.pfm"
        code = run(["restore-sky", polluted, "--calib", calib, "-o", str(out), "--json", "--window", "15"])
        assert code == 0
        summary = json.loads(capsys.readouterr().out)
        assert summary["schema"] == 1
        assert summary["subcommand"] == "restore-sky"
        assert summary["runtime_ms"] >= 0
        assert 0.0 <= summary["clamp_fraction"] <= 0.01
        assert summary["veil_energy"] > 0
        assert summary["profile"]["mean"] == pytest.approx([0.1] * 3, rel=0.05)
        assert summary["params"]["window"] == 15
        restored = load_image(out)
        assert np.max(np.abs(restored.data - base.data)) < 0.02

    def test_lights_reproduce_calibration_run(self, sky_files):
        d, polluted, calib, _ = sky_files
        lights = d / "lights.csv"
        assert run(["estimate-lights", polluted, "--calib", calib, "-o", str(lights)]) == 0
        assert run(["restore-sky", polluted, "--calib", calib, "-o", str(d / "a.pfm")]) == 0
        assert run(["restore-sky", polluted, "--lights", str(lights), "-o", str(d / "b.pfm")]) == 0
        assert (d / "a.pfm").read_bytes() == (d / "b.pfm").read_bytes()

    def test_scalar_beta_equals_triple(self, sky_files):
        d, polluted, calib, _ = sky_files
        assert run(["restore-sky", polluted, "--calib", calib, "-o", str(d / "a.pfm"), "--beta", "1e-4"]) == 0
        assert run(["restore-sky", polluted, "--calib", calib, "-o", str(d / "b.pfm"),
                    "--beta", "1e-4,1e-4,1e-4"]) == 0
        assert (d / "a.pfm").read_bytes() == (d / "b.pfm").read_bytes()

    def test_profile_out(self, sky_files):
        d, polluted, calib, _ = sky_files
        prof = d / "used.csv"
        assert run(["restore-sky", polluted, "--calib", calib, "-o", str(d / "a.png"), "--profile-out", str(prof)]) == 0
        assert len(prof.read_text().splitlines()) == W + 1

    def test_mask_file(self, sky_files):
        d, polluted, calib, _ = sky_files
        mask = d / "mask.csv"
        mask.write_text("column,row\n" + "".join(f"{c},{H}\n" for c in range(W)))
        code = run(["restore-sky", polluted, "--calib", calib, "--mask", str(mask), "--calib-mask", str(mask),
                    "-o", str(d / "a.pfm")])
        assert code == 0

    def test_dumped_mask_is_reusable(self, sky_files):
        d, polluted, calib, _ = sky_files
        dumped = d / "sky.csv"
        assert run(["restore-sky", polluted, "--calib", calib, "--dump-mask", str(dumped), "-o", str(d / "a.pfm")]) == 0
        lines = dumped.read_text().splitlines()
        assert lines[0] == "column,row" and len(lines) == W + 1
        # a star-free gradient sky has no skyline
        assert lines[1:] == [f"{c},{H}" for c in range(W)]
        code = run(["restore-sky", polluted, "--calib", calib, "--mask", str(dumped), "-o", str(d / "b.pfm")])
        assert code == 0
        assert (d / "a.pfm").read_bytes() == (d / "b.pfm").read_bytes()
        assert code == 0


class TestRestoreBaseline:
    def test_threads_do_not_change_output(self, sky_files):
        d, polluted, _calib, _ = sky_files
        for n in ("1", "3"):
            assert run(["restore-baseline", polluted, "--radiance", "0.05", "--threads", n,
                        "-o", str(d / f"t{n}.pfm")]) == 0
        assert (d / "t1.pfm").read_bytes() == (d / "t3.pfm").read_bytes()

    def test_estimated_radiance_in_summary(self, sky_files, capsys):
        d, polluted, calib, _ = sky_files
        assert run(["restore-baseline", polluted, "--calib", calib, "-o", str(d / "b.pfm"), "--json", "-q"]) == 0
        summary = json.loads(capsys.readouterr().out)
        assert all(a > 0 for a in summary["params"]["radiance"])
        assert summary["profile"] is None


class TestRestoreCity:
    def test_depth_dump(self, sky_files):
        d, polluted, calib, _ = sky_files
        depth = np.full((H, W), 5000.0)
        mask = d / "mask.csv"
        mask.write_text("column,row\n" + "".join(f"{c},30\n" for c in range(W)))
        write_pfm(d / "depth.pfm", depth)
        code = run(["restore-city", polluted, "--calib", calib, "--mask", str(mask), "--calib-mask", str(mask),
                    "--depth", str(d / "depth.pfm"), "--dump-depth", str(d / "used.pfm"), "-o", str(d / "c.pfm")])
        assert code == 0
        used = read_pfm(d / "used.pfm")
        assert np.all(np.isinf(used[:30])) and np.allclose(used[30:], 5000.0)

    def test_depth_is_required(self, sky_files):
        d, polluted, calib, _ = sky_files
        assert run(["restore-city", polluted, "--calib", calib, "-o", str(d / "c.pfm")]) == 2


class TestSimulateAndCurve:
    def test_simulate(self, tmp_path, capsys):
        scene = tmp_path / "scene.txt"
        scene.write_text(
            "width = 40\nheight = 30\nstars = 3\nseed = 1\nprofile = constant 0.08\n"
            "output = polluted.pfm\ntruth = truth.pfm\nprofile_out = lights.csv\n"
        )
        assert run(["simulate", str(scene), "--json"]) == 0
        summary = json.loads(capsys.readouterr().out)
        assert summary["params"]["stars"] == 3
        polluted = load_image(tmp_path / "polluted.pfm")
        truth = load_image(tmp_path / "truth.pfm")
        assert np.all(polluted.data > truth.data)
        assert (tmp_path / "lights.csv").exists()

    def test_simulate_needs_output(self, tmp_path):
        scene = tmp_path / "scene.txt"
        scene.write_text("width = 40\n")
        assert run(["simulate", str(scene)]) == 2

    def test_curve(self, tmp_path):
        out = tmp_path / "curve.csv"
        assert run(["curve", "-o", str(out)]) == 0
        lines = out.read_text().splitlines()
        assert len(lines) == 65
        values = np.array([[float(v) for v in ln.split(",")] for ln in lines[1:]])
        assert np.all(np.diff(values[:, 0]) > 0)
        assert np.all(np.diff(values[:, 1:], axis=0) < 0)

    def test_curve_presets(self, tmp_path):
        out = tmp_path / "family.csv"
        assert run(["curve", "-o", str(out), "--preset-family", "--n", "8"]) == 0
        curves = {
            name: np.loadtxt(tmp_path / f"family_{name}.csv", delimiter=",", skiprows=1)
            for name in ("clean", "slight-haze", "haze")
        }
        assert np.all(curves["clean"][:, 1] > curves["slight-haze"][:, 1])
        assert np.all(curves["slight-haze"][:, 1] > curves["haze"][:, 1])
