"""Command-line entry points.

Subcommands: ``simulate`` (write a synthetic dataset), ``sweep`` (accuracy
benchmark table), ``extract`` (dataset frame + seed -> measurement pair),
``calibrate`` (measurement list -> report), ``evaluate`` (report vs ground
truth), ``serve`` (session HTTP service).  Every command is deterministic
given its config; data errors exit 1 with a machine-readable JSON payload on
stderr, usage errors exit 2.
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import formats
from .errors import CalibrationError, FormatError
from .projection import project_by_id
from .solver import SolverConfig, calibrate, evaluate_error
from .synth import (
    NoiseSpec,
    RigSpec,
    SweepConfig,
    default_rig,
    run_sweep,
    sample_board_pose,
    simulate_camera,
    simulate_lidar,
    table_sweep_config,
)
from .target import PatchSelection, RansacConfig, board_pose, camera_plane, \
    collect_patch_pixels, ransac_plane, reprojection_rms
from .solver import MeasurementPair


def _load_rig(entry) -> RigSpec:
    if entry in (None, "default"):
        return default_rig()
    return RigSpec(
        ground_truth_extrinsic=formats.isometry_from_dict(entry["extrinsic"]),
        lidar=formats.lidar_params_from_dict(entry["lidar"]),
        camera=formats.intrinsics_from_dict(entry["camera"]),
        board=formats.board_from_dict(entry["board"]))


def cmd_simulate(args) -> int:
    cfg = {}
    if args.config:
        cfg = formats.read_json(args.config, "planecal-sim-config")
    rig = _load_rig(cfg.get("rig"))
    n_frames = int(cfg.get("frames", 5))
    seed = args.seed if args.seed is not None else int(cfg.get("seed", 0))
    noise_cfg = cfg.get("noise", {})
    noise = NoiseSpec(sigma_lidar=float(noise_cfg.get("sigma_lidar", 0.0)),
                      sigma_camera=float(noise_cfg.get("sigma_camera", 0.0)),
                      rng_seed=int(noise_cfg.get("rng_seed", seed)))
    sampler = cfg.get("sampler", {})

    out = Path(args.output)
    (out / "frames").mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(seed)
    frames = []
    for k in range(n_frames):
        pose = sample_board_pose(rng, rig, **sampler)
        frame_noise = replace(noise, rng_seed=int(rng.integers(2**62)))
        cloud = simulate_lidar(rig, pose, frame_noise)
        corners = simulate_camera(rig, pose, frame_noise)
        frame_id = f"{k:03d}"
        cloud_rel = f"frames/{frame_id}.cloud"
        corners_rel = f"frames/{frame_id}.corners.json"
        formats.save_cloud(out / cloud_rel, cloud, rig.lidar)
        formats.save_corners(out / corners_rel, corners)
        frames.append(formats.FrameRef(id=frame_id, cloud=cloud_rel,
                                       corners=corners_rel))
    manifest = formats.DatasetManifest(
        root=out, lidar=rig.lidar, camera=rig.camera, board=rig.board,
        frames=tuple(frames), ground_truth=rig.ground_truth_extrinsic)
    formats.save_manifest(out / "manifest.json", manifest)
    print(json.dumps({"dataset": str(out / "manifest.json"),
                      "frames": n_frames, "seed": seed}))
    return 0


def cmd_sweep(args) -> int:
    if args.config:
        raw = formats.read_json(args.config, "planecal-sweep-config")
        levels = tuple(NoiseSpec(sigma_lidar=float(n["sigma_lidar"]),
                                 sigma_camera=float(n["sigma_camera"]),
                                 rng_seed=int(n.get("rng_seed", 0)),
                                 label=n.get("label", ""))
                       for n in raw.get("noise_levels", []))
        base = table_sweep_config()
        cfg = SweepConfig(
            measurement_counts=tuple(raw.get("measurement_counts",
                                             base.measurement_counts)),
            trials_per_count=int(raw.get("trials_per_count",
                                         base.trials_per_count)),
            noise_levels=levels or base.noise_levels,
            pool_size=int(raw.get("pool_size", base.pool_size)),
            rng_seed=int(raw.get("rng_seed", base.rng_seed)))
        rig = _load_rig(raw.get("rig"))
    else:
        cfg = table_sweep_config()
        rig = default_rig()
    if args.seed is not None:
        cfg = replace(cfg, rng_seed=args.seed)
    result = run_sweep(cfg, rig)
    formats.save_sweep(args.output, result)
    for cell in result.cells:
        print(f"noise[{cell.noise_index}] {cell.noise_label or '-':>6} "
              f"n={cell.n_measurements:2d}  "
              f"e_t {1000 * cell.mean_e_t:8.3f} ± {1000 * cell.std_e_t:8.3f} mm  "
              f"e_r {cell.mean_e_r:.6f} ± {cell.std_e_r:.6f} rad")
    return 0


def _auto_seed(image) -> tuple[int, int]:
    """Pixel of the filled cell closest to the filled region's median."""
    rows, cols = np.nonzero(image.filled)
    r = int(np.median(rows))
    c = int(np.median(cols[rows == r])) if np.any(rows == r) else int(np.median(cols))
    return r, c


def cmd_extract(args) -> int:
    manifest = formats.load_manifest(args.dataset)
    ref = manifest.frame(args.frame)
    cloud, params = formats.load_cloud(manifest.cloud_path(ref))
    image = project_by_id(cloud, params)
    if args.ring is None or args.column is None:
        ring, column = _auto_seed(image)
    else:
        ring, column = args.ring, args.column
    sel = PatchSelection(seed_pixel=(ring, column), radius=args.radius)
    points, _ = collect_patch_pixels(image, cloud, sel)
    lidar_obs = ransac_plane(points, RansacConfig(rng_seed=args.seed or 0))

    corners = formats.load_corners(manifest.corners_path(ref))
    pose = board_pose(corners, manifest.camera)
    cam_obs = camera_plane(pose, manifest.board,
                           reprojection_rms(pose, corners, manifest.camera))
    pair = MeasurementPair(lidar_plane=lidar_obs.plane,
                           camera_plane=cam_obs.plane, id=ref.id)
    pairs = []
    if args.append and Path(args.output).exists():
        pairs = formats.load_measurements(args.output)
    pairs.append(pair)
    formats.save_measurements(args.output, pairs)
    print(json.dumps({"frame": ref.id, "seed_pixel": [ring, column],
                      "lidar_inliers": lidar_obs.inlier_count,
                      "measurements": len(pairs)}))
    return 0


def cmd_calibrate(args) -> int:
    measurements = formats.load_measurements(args.measurements)
    cfg = formats.load_solver_config(args.config) if args.config else SolverConfig()
    report = calibrate(measurements, cfg)
    formats.save_report(args.output, report)
    t = report.extrinsic.translation
    print(json.dumps({"converged": report.converged,
                      "condition_warning": report.condition_warning,
                      "iterations": report.iterations,
                      "translation": t.tolist(),
                      "chi2": report.chi2_trace[-1],
                      "report": str(args.output)}))
    return 0


def cmd_evaluate(args) -> int:
    report = formats.load_report(args.report)
    if args.dataset:
        manifest = formats.load_manifest(args.dataset)
        if manifest.ground_truth is None:
            raise FormatError("dataset manifest carries no ground truth",
                              field="ground_truth")
        gt = manifest.ground_truth
    elif args.config:
        data = formats.read_json(args.config, "planecal-ground-truth")
        gt = formats.isometry_from_dict(data["extrinsic"])
    else:
        raise FormatError("evaluate needs --dataset or --config for ground truth")
    e_t, e_r = evaluate_error(report.extrinsic, gt)
    print(json.dumps({"e_t": e_t, "e_r": e_r}))
    if args.output:
        formats.write_json(args.output, {"format": "planecal-evaluation",
                                         "version": 1, "e_t": e_t, "e_r": e_r})
    return 0


def cmd_serve(args) -> int:
    from .service import make_session_server

    server = make_session_server(args.dataset, port=args.port, ui_dir=args.ui,
                                 output_path=args.output)
    host, port = server.server_address
    print(f"session service on http://{host}:{port}/ "
          f"(dataset {args.dataset})", flush=True)
    try:
        server.serve_forever()
    except KeyboardInterrupt:
        pass
    finally:
        server.server_close()
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="planecal",
        description="LiDAR-RGB extrinsic calibration from checkerboard planes")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="write a synthetic dataset + ground truth")
    p.add_argument("--config", help="sim config file (planecal-sim-config)")
    p.add_argument("--seed", type=int, help="override the config seed")
    p.add_argument("--output", required=True, help="dataset directory")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("sweep", help="accuracy benchmark over noise x counts")
    p.add_argument("--config", help="sweep config file (planecal-sweep-config)")
    p.add_argument("--seed", type=int, help="override the master seed")
    p.add_argument("--output", required=True, help="sweep result file")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("extract", help="frame + seed pixel -> measurement pair")
    p.add_argument("--dataset", required=True, help="dataset manifest")
    p.add_argument("--frame", required=True, help="frame id")
    p.add_argument("--ring", type=int, help="seed ring (default: auto)")
    p.add_argument("--column", type=int, help="seed column (default: auto)")
    p.add_argument("--radius", type=float, default=12.0, help="patch radius px")
    p.add_argument("--seed", type=int, help="RANSAC rng seed")
    p.add_argument("--append", action="store_true",
                   help="append to an existing measurement file")
    p.add_argument("--output", required=True, help="measurement list file")
    p.set_defaults(func=cmd_extract)

    p = sub.add_parser("calibrate", help="measurement list -> calibration report")
    p.add_argument("--measurements", required=True)
    p.add_argument("--config", help="solver config file")
    p.add_argument("--output", required=True, help="report file")
    p.set_defaults(func=cmd_calibrate)

    p = sub.add_parser("evaluate", help="report vs ground truth -> (e_t, e_r)")
    p.add_argument("--report", required=True)
    p.add_argument("--dataset", help="manifest with ground truth")
    p.add_argument("--config", help="ground-truth file (planecal-ground-truth)")
    p.add_argument("--output", help="optional evaluation output file")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("serve", help="start the interactive session service")
    p.add_argument("--dataset", required=True, help="dataset manifest")
    p.add_argument("--port", type=int, default=8765)
    p.add_argument("--ui", help="static UI bundle directory")
    p.add_argument("--output", help="session measurement file to keep updated")
    p.set_defaults(func=cmd_serve)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except CalibrationError as exc:
        print(json.dumps(exc.payload()), file=sys.stderr)
        return 1
    except FileNotFoundError as exc:
        print(json.dumps({"code": "not_found", "message": str(exc),
                          "details": {}}), file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
