import json
import subprocess
import sys

import numpy as np
import pytest

from planecal import formats
from planecal.cli import main as cli_main
from planecal.errors import FormatError, InsufficientDataError
from planecal.geometry import Isometry3, canonicalize
from planecal.projection import LidarProjectionParams, PointCloud
from planecal.solver import CalibrationReport, MeasurementPair, SolverConfig, calibrate
from planecal.synth import NoiseSpec, SweepCell, SweepResult
from planecal.target import BoardSpec, CornerSet

from conftest import random_isometry, random_plane

PARAMS = LidarProjectionParams.for_sensor(n_rings=4, width=32)


def random_cloud(rng, n=50, rings=True, intensities=True):
    return PointCloud(
        rng.uniform(-5, 5, size=(n, 3)),
        rings=rng.integers(0, 4, size=n).astype(np.int32) if rings else None,
        intensities=rng.uniform(0, 1, size=n) if intensities else None)


class TestCloudRoundTrip:
    @pytest.mark.parametrize("binary", [False, True])
    def test_exact_round_trip(self, tmp_path, rng, binary):
        cloud = random_cloud(rng)
        path = tmp_path / ("c.cloud" if not binary else "c.cloud.bin")
        formats.save_cloud(path, cloud, PARAMS, binary=binary)
        loaded, params = formats.load_cloud(path)
        np.testing.assert_array_equal(loaded.points, cloud.points)
        np.testing.assert_array_equal(loaded.rings, cloud.rings)
        np.testing.assert_array_equal(loaded.intensities, cloud.intensities)
        assert params == PARAMS

    def test_three_point_file(self, tmp_path):
        cloud = PointCloud(np.array([[1.0, 2.0, 3.0],
                                     [0.1, -0.2, 0.3],
                                     [1e-17, 2e17, -3.5]]),
                           rings=np.array([0, 1, 2]))
        path = tmp_path / "three.cloud"
        formats.save_cloud(path, cloud, PARAMS)
        loaded, _ = formats.load_cloud(path)
        assert len(loaded) == 3
        np.testing.assert_array_equal(loaded.points, cloud.points)

    def test_nan_coordinate_rejected(self, tmp_path):
        path = tmp_path / "bad.cloud"
        path.write_text(formats.CLOUD_MAGIC + "\n"
                        + json.dumps({"n_rings": 4, "width": 32,
                                      "azimuth_resolution": 32 / (2 * np.pi),
                                      "azimuth_offset": 16.0, "count": 1,
                                      "columns": ["x", "y", "z"]}) + "\n"
                        + "1.0 nan 2.0\n")
        with pytest.raises(FormatError) as err:
            formats.load_cloud(path)
        assert err.value.details.get("line") == 3

    def test_empty_cloud_rejected(self, tmp_path):
        path = tmp_path / "empty.cloud"
        path.write_text(formats.CLOUD_MAGIC + "\n"
                        + json.dumps({"n_rings": 4, "width": 32,
                                      "azimuth_resolution": 32 / (2 * np.pi),
                                      "azimuth_offset": 16.0, "count": 0,
                                      "columns": ["x", "y", "z"]}) + "\n")
        with pytest.raises(InsufficientDataError):
            formats.load_cloud(path)

    def test_ringless_non_multiple_rejected(self, tmp_path, rng):
        cloud = PointCloud(rng.uniform(-1, 1, size=(33, 3)))
        path = tmp_path / "r.cloud"
        formats.save_cloud(path, cloud, PARAMS)
        with pytest.raises(FormatError):
            formats.load_cloud(path)

    def test_bad_magic(self, tmp_path):
        path = tmp_path / "x.cloud"
        path.write_text("something else\n")
        with pytest.raises(FormatError):
            formats.load_cloud(path)


class TestCornersRoundTrip:
    def test_round_trip(self, tmp_path, rng):
        board = BoardSpec(rows=6, cols=8, square_size=0.2)
        corners = CornerSet(rng.uniform(0, 1000, size=(48, 2)), board)
        formats.save_corners(tmp_path / "c.json", corners)
        loaded = formats.load_corners(tmp_path / "c.json")
        np.testing.assert_array_equal(loaded.pixels, corners.pixels)
        assert loaded.board == board

    def test_wrong_corner_count(self, tmp_path, rng):
        payload = {"format": "planecal-corners", "version": 1,
                   "board": {"rows": 6, "cols": 8, "square_size": 0.2},
                   "corners": rng.uniform(0, 10, size=(47, 2)).tolist()}
        (tmp_path / "bad.json").write_text(json.dumps(payload))
        with pytest.raises(FormatError) as err:
            formats.load_corners(tmp_path / "bad.json")
        assert err.value.details.get("expected") == 48


class TestCoreRoundTrips:
    def test_measurements(self, tmp_path, rng):
        pairs = [MeasurementPair(random_plane(rng), random_plane(rng), id=f"x{i}")
                 for i in range(20)]
        formats.save_measurements(tmp_path / "m.json", pairs)
        loaded = formats.load_measurements(tmp_path / "m.json")
        for a, b in zip(pairs, loaded):
            np.testing.assert_array_equal(a.lidar_plane.normal, b.lidar_plane.normal)
            assert a.lidar_plane.dist == b.lidar_plane.dist
            assert a.camera_plane.dist == b.camera_plane.dist
            assert a.id == b.id

    def test_solver_config(self, tmp_path):
        cfg = SolverConfig(max_iterations=17, update_tolerance=3.3e-8,
                           huber_delta=0.123456789012345678,
                           normal_weight=2.5, dist_weight=0.25,
                           conditioning_threshold=1e-7)
        formats.save_solver_config(tmp_path / "s.json", cfg)
        assert formats.load_solver_config(tmp_path / "s.json") == cfg

    def test_report(self, tmp_path, rng):
        report = CalibrationReport(
            extrinsic=random_isometry(rng),
            per_measurement=[("a", 0.1, 1.0), ("b", 0.30000000000000004, 0.5)],
            chi2_trace=[1.5, 0.25, 0.12499999999999999],
            hessian_spectrum=np.sort(rng.uniform(0, 10, size=6)),
            converged=True, condition_warning=False, iterations=7)
        formats.save_report(tmp_path / "r.json", report)
        loaded = formats.load_report(tmp_path / "r.json")
        np.testing.assert_array_equal(loaded.extrinsic.rotation,
                                      report.extrinsic.rotation)
        np.testing.assert_array_equal(loaded.extrinsic.translation,
                                      report.extrinsic.translation)
        assert loaded.per_measurement == report.per_measurement
        assert loaded.chi2_trace == report.chi2_trace
        np.testing.assert_array_equal(loaded.hessian_spectrum,
                                      report.hessian_spectrum)
        assert (loaded.converged, loaded.condition_warning, loaded.iterations) \
            == (True, False, 7)

    def test_sweep(self, tmp_path):
        result = SweepResult(cells=(
            SweepCell(0, "zero", 0.002, 0.3, 3, 0.0412345678901234,
                      0.1, 0.001, 0.0005, 40, 0),
            SweepCell(1, "mid", 0.00824621125123532, 0.7, 39, 0.002,
                      0.0004, 0.0001, 3e-05, 40, 1)))
        formats.save_sweep(tmp_path / "t.json", result)
        assert formats.load_sweep(tmp_path / "t.json") == result

    def test_mass_random_round_trips(self, tmp_path, rng):
        # 1000 random planes/isometries through the JSON converters, bit-exact
        for _ in range(1000):
            pl = random_plane(rng)
            back = formats.plane_from_dict(json.loads(json.dumps(
                formats.plane_to_dict(pl))))
            assert back.dist == pl.dist
            np.testing.assert_array_equal(back.normal, pl.normal)
            x = random_isometry(rng)
            back = formats.isometry_from_dict(json.loads(json.dumps(
                formats.isometry_to_dict(x))))
            np.testing.assert_array_equal(back.rotation, x.rotation)
            np.testing.assert_array_equal(back.translation, x.translation)


class TestCli:
    def run_cli(self, *argv) -> int:
        return cli_main(list(argv))

    def test_simulate_calibrate_evaluate_noiseless(self, tmp_path, capsys):
        ds = tmp_path / "ds"
        assert self.run_cli("simulate", "--output", str(ds), "--seed", "3") == 0
        for frame in ("000", "001", "002", "003"):
            assert self.run_cli("extract", "--dataset", str(ds / "manifest.json"),
                                "--frame", frame, "--radius", "40",
                                "--append", "--output", str(tmp_path / "m.json")) == 0
        assert self.run_cli("calibrate", "--measurements", str(tmp_path / "m.json"),
                            "--output", str(tmp_path / "report.json")) == 0
        assert self.run_cli("evaluate", "--report", str(tmp_path / "report.json"),
                            "--dataset", str(ds / "manifest.json")) == 0
        out = capsys.readouterr().out.strip().splitlines()
        result = json.loads(out[-1])
        assert result["e_t"] < 1e-6
        assert result["e_r"] < 1e-7

    def test_calibrate_with_two_measurements_fails(self, tmp_path, capsys):
        pairs = [MeasurementPair(canonicalize(np.array([0.0, 0.0, 1.0]), -1.0),
                                 canonicalize(np.array([0.0, 0.0, 1.0]), -2.0),
                                 id=str(i)) for i in range(2)]
        formats.save_measurements(tmp_path / "m.json", pairs)
        rc = self.run_cli("calibrate", "--measurements", str(tmp_path / "m.json"),
                          "--output", str(tmp_path / "r.json"))
        assert rc == 1
        err = json.loads(capsys.readouterr().err.strip())
        assert err["code"] == "insufficient_data"

    def test_sweep_cli_small(self, tmp_path):
        cfg = {"format": "planecal-sweep-config", "version": 1,
               "measurement_counts": [3, 4], "trials_per_count": 2,
               "pool_size": 6, "rng_seed": 4,
               "noise_levels": [{"sigma_lidar": 0.002, "sigma_camera": 0.3,
                                 "rng_seed": 1, "label": "a"}]}
        (tmp_path / "cfg.json").write_text(json.dumps(cfg))
        assert self.run_cli("sweep", "--config", str(tmp_path / "cfg.json"),
                            "--output", str(tmp_path / "sweep.json")) == 0
        result = formats.load_sweep(tmp_path / "sweep.json")
        assert len(result.cells) == 2

    def test_usage_error_exit_2(self):
        with pytest.raises(SystemExit) as exc:
            cli_main(["calibrate"])  # missing required flags
        assert exc.value.code == 2

    def test_console_script_runs(self, tmp_path):
        proc = subprocess.run([sys.executable, "-m", "planecal.cli", "--help"],
                              capture_output=True, text=True)
        assert proc.returncode == 0
        assert "simulate" in proc.stdout

    def test_missing_file_exit_1(self, tmp_path, capsys):
        rc = self.run_cli("calibrate", "--measurements",
                          str(tmp_path / "nope.json"),
                          "--output", str(tmp_path / "r.json"))
        assert rc == 1


class TestManifest:
    def test_missing_reference_rejected(self, tmp_path):
        payload = {"format": "planecal-dataset", "version": 1,
                   "lidar": formats.lidar_params_to_dict(PARAMS),
                   "camera": {"fx": 100.0, "fy": 100.0, "cx": 50.0, "cy": 50.0,
                              "width": 100, "height": 100,
                              "distortion": [0, 0, 0, 0, 0]},
                   "board": {"rows": 2, "cols": 2, "square_size": 0.1},
                   "ground_truth": None,
                   "frames": [{"id": "0", "cloud": "missing.cloud",
                               "corners": "missing.json"}]}
        (tmp_path / "manifest.json").write_text(json.dumps(payload))
        with pytest.raises(FormatError):
            formats.load_manifest(tmp_path / "manifest.json")

    def test_duplicate_frame_ids_rejected(self, tmp_path):
        (tmp_path / "a.cloud").write_text("")
        (tmp_path / "a.json").write_text("{}")
        payload = {"format": "planecal-dataset", "version": 1,
                   "lidar": formats.lidar_params_to_dict(PARAMS),
                   "camera": {"fx": 100.0, "fy": 100.0, "cx": 50.0, "cy": 50.0,
                              "width": 100, "height": 100,
                              "distortion": [0, 0, 0, 0, 0]},
                   "board": {"rows": 2, "cols": 2, "square_size": 0.1},
                   "ground_truth": None,
                   "frames": [{"id": "0", "cloud": "a.cloud", "corners": "a.json"},
                              {"id": "0", "cloud": "a.cloud", "corners": "a.json"}]}
        (tmp_path / "manifest.json").write_text(json.dumps(payload))
        with pytest.raises(FormatError):
            formats.load_manifest(tmp_path / "manifest.json")
