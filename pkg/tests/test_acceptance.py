"""Acceptance suite: one test per release criterion, each printing a verdict.

Run with ``pytest tests/test_acceptance.py -v -s`` to see the PASS/FAIL line
and runtime per criterion.
"""

import json
import time
from contextlib import contextmanager
from dataclasses import replace

import numpy as np
import pytest

from planecal import formats
from planecal.errors import SingularSystemError
from planecal.geometry import (
    axis_angle_to_matrix,
    boxplus,
    canonicalize,
    transform_jacobian,
    transform_plane_coeffs,
    Twist6,
)
from planecal.solver import (
    MeasurementPair,
    SolverConfig,
    calibrate,
    conditioning_check,
    evaluate_error,
)
from planecal.synth import (
    NoiseSpec,
    cell_errors,
    default_rig,
    generate_pool,
    level_pool,
    run_sweep,
    table_sweep_config,
)
from planecal.target import RansacConfig, ransac_plane

from conftest import random_isometry, random_plane


@contextmanager
def criterion(name: str, budget_s: float):
    start = time.perf_counter()
    try:
        yield
    except BaseException:
        print(f"\n[ACCEPTANCE] {name}: FAIL ({time.perf_counter() - start:.1f}s)")
        raise
    elapsed = time.perf_counter() - start
    print(f"\n[ACCEPTANCE] {name}: PASS ({elapsed:.1f}s, budget {budget_s:.0f}s)")
    assert elapsed < budget_s


@pytest.fixture(scope="module")
def table_sweep():
    cfg = table_sweep_config()
    rig = default_rig()
    start = time.perf_counter()
    result = run_sweep(cfg, rig)
    return cfg, rig, result, time.perf_counter() - start


def test_jacobian_oracle():
    with criterion("jacobian finite-difference oracle", 5.0):
        rng = np.random.default_rng(606)
        step = 1e-6
        worst = 0.0
        for _ in range(1000):
            x = random_isometry(rng)
            pl = random_plane(rng)
            jac = transform_jacobian(x, pl)
            num = np.zeros((4, 6))
            for k in range(6):
                dv = np.zeros(6)
                dv[k] = step
                np_, dp = transform_plane_coeffs(
                    boxplus(x, Twist6.from_vector(dv)), pl)
                nm, dm = transform_plane_coeffs(
                    boxplus(x, Twist6.from_vector(-dv)), pl)
                num[:3, k] = (np_ - nm) / (2 * step)
                num[3, k] = (dp - dm) / (2 * step)
            worst = max(worst, float(np.max(np.abs(jac - num))))
        assert worst < 1e-6


def test_noiseless_exactness():
    with criterion("noiseless 3-placement exact recovery", 1.0):
        rig = default_rig()
        rng = np.random.default_rng(7)
        pool, gt = generate_pool(rig, NoiseSpec(), 3, rng)
        assert not conditioning_check(pool).warning
        report = calibrate(pool)  # guess=None: the module's own initial guess
        e_t, e_r = evaluate_error(report.extrinsic, gt)
        assert e_t < 1e-6
        assert e_r < 1e-8


def test_table_trend_noiseless_column(table_sweep):
    cfg, rig, result, elapsed = table_sweep
    with criterion("benchmark trend, nominal-zero column", 300.0 - elapsed):
        e39 = result.cell(0, 39).mean_e_t
        e4 = result.cell(0, 4).mean_e_t
        assert e39 <= 5e-3
        assert e4 >= 2.0 * e39
        col = [result.cell(0, w).mean_e_t for w in cfg.measurement_counts]
        inversions = sum(1 for a, b in zip(col, col[1:]) if b > a)
        assert inversions <= 1


def test_table_trend_mid_noise(table_sweep):
    cfg, rig, result, elapsed = table_sweep
    with criterion("benchmark trend, mid-noise column", 300.0 - elapsed):
        assert result.cell(1, 20).mean_e_t <= 8e-3
        assert result.cell(1, 39).mean_e_t <= 6e-3


def test_best_of_three(table_sweep):
    cfg, rig, result, _ = table_sweep
    with criterion("best-of-40 calibration at N=3", 120.0):
        pool, gt = level_pool(cfg, rig, 0)
        errors, _ = cell_errors(cfg, pool, gt, 3)
        best_t = min(e[0] for e in errors)
        best_r = min(e[1] for e in errors)
        assert best_t <= 0.5e-2   # 0.5 cm
        assert best_r <= 0.5e-2   # 0.5 * 10^-2 rad


def test_huber_robustness():
    with criterion("Huber outlier suppression", 60.0):
        rig = default_rig()
        rng = np.random.default_rng(np.random.SeedSequence((0, 55)))
        noise = NoiseSpec(np.hypot(8e-3, 2e-3), np.hypot(7e-3, 0.3))
        pool, gt = generate_pool(rig, noise, 22, rng)
        clean = pool[:20]
        outliers = []
        for k, pair in enumerate(pool[20:]):
            axis = np.array([0.0, 1.0, 0.0]) if k == 0 else np.array([1.0, 0.0, 0.0])
            flipped = axis_angle_to_matrix(axis * np.radians(30.0)) \
                @ pair.lidar_plane.normal
            bad = canonicalize(flipped, pair.lidar_plane.dist + 0.5)
            outliers.append(replace(pair, lidar_plane=bad, id=f"outlier{k}"))

        e_clean, _ = evaluate_error(calibrate(clean).extrinsic, gt)
        e_huber, _ = evaluate_error(calibrate(clean + outliers).extrinsic, gt)
        e_lsq, _ = evaluate_error(
            calibrate(clean + outliers,
                      SolverConfig(huber_delta=np.inf)).extrinsic, gt)
        assert e_huber <= 2.0 * e_clean
        assert e_lsq >= 3.0 * e_huber


def test_degenerate_pool_flagged():
    with criterion("all-parallel degeneracy detection", 1.0):
        rig = default_rig()
        rng = np.random.default_rng(31)
        pool, _ = generate_pool(rig, NoiseSpec(), 6, rng,
                                tilt_limit_deg=0.0, direction_margin=0.0)
        diag = conditioning_check(pool)
        assert diag.warning
        assert diag.rank < 6
        with pytest.warns(RuntimeWarning):
            with pytest.raises(SingularSystemError) as exc_info:
                calibrate(pool)
        assert exc_info.value.report is not None  # no silent garbage extrinsic


def test_ransac_recovery_rate():
    with criterion("RANSAC 80/20 recovery", 10.0):
        rng = np.random.default_rng(99)
        successes = 0
        for trial in range(100):
            plane = random_plane(rng, min_abs_dist=0.5)
            from conftest import plane_basis
            u, v = plane_basis(plane)
            coeffs = rng.uniform(-1.0, 1.0, size=(80, 2))
            pts = (-plane.normal * plane.dist + coeffs[:, :1] * u
                   + coeffs[:, 1:] * v
                   + rng.normal(scale=0.008, size=(80, 1)) * plane.normal)
            out = rng.uniform(-2.5, 2.5, size=(20, 3))
            out = out[np.abs(plane.point_distances(out)) > 0.08]
            obs = ransac_plane(np.vstack([pts, out]),
                               RansacConfig(inlier_threshold=0.03, rng_seed=trial))
            angle = np.degrees(np.arccos(np.clip(
                abs(obs.plane.normal @ plane.normal), -1, 1)))
            all_true = np.all(np.isin(np.arange(80), obs.inlier_indices))
            successes += bool(angle < 1.0 and all_true)
        assert successes >= 95


def test_serialization_losslessness(tmp_path):
    with criterion("serialization round-trips", 10.0):
        rng = np.random.default_rng(404)

        # planes and measurement pairs: batches through real files
        for batch in range(10):
            pairs = [MeasurementPair(random_plane(rng), random_plane(rng),
                                     id=f"{batch}-{i}") for i in range(100)]
            path = tmp_path / f"m{batch}.json"
            formats.save_measurements(path, pairs)
            loaded = formats.load_measurements(path)
            for a, b in zip(pairs, loaded):
                assert np.array_equal(a.lidar_plane.normal, b.lidar_plane.normal)
                assert a.lidar_plane.dist == b.lidar_plane.dist
                assert np.array_equal(a.camera_plane.normal, b.camera_plane.normal)
                assert a.camera_plane.dist == b.camera_plane.dist

        # isometries / reports: the identical JSON path, in memory
        for _ in range(1000):
            x = random_isometry(rng)
            back = formats.isometry_from_dict(
                json.loads(json.dumps(formats.isometry_to_dict(x))))
            assert np.array_equal(back.rotation, x.rotation)
            assert np.array_equal(back.translation, x.translation)

        # clouds: text and binary variants through files
        from planecal.projection import LidarProjectionParams, PointCloud
        params = LidarProjectionParams.for_sensor(4, 32)
        for k in range(50):
            cloud = PointCloud(rng.uniform(-9, 9, size=(20, 3)),
                               rings=rng.integers(0, 4, size=20).astype(np.int32),
                               intensities=rng.uniform(0, 1, size=20))
            for binary in (False, True):
                p = tmp_path / f"c{k}{binary}.cloud"
                formats.save_cloud(p, cloud, params, binary=binary)
                loaded, _ = formats.load_cloud(p)
                assert np.array_equal(loaded.points, cloud.points)
                assert np.array_equal(loaded.intensities, cloud.intensities)
