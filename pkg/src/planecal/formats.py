"""Dataset and report file formats.

Everything is plain text: clouds as a headered table (with an optional
binary variant sharing the schema), every other artifact as JSON with a
``format``/``version`` pair up front.  Floats are written with full
round-trip precision, so save/load is bit-exact for finite values and
diffable by eye.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import FormatError, InsufficientDataError
from .geometry import Isometry3, Plane, canonicalize
from .projection import CameraIntrinsics, LidarProjectionParams, PointCloud
from .solver import CalibrationReport, MeasurementPair, SolverConfig
from .synth import NoiseSpec, SweepCell, SweepResult
from .target import BoardSpec, CornerSet

CLOUD_MAGIC = "planecal-cloud 1"
CLOUD_BIN_MAGIC = b"planecal-cloud-bin 1\n"


def _fmt(v: float) -> str:
    return f"{float(v):.17g}"


def _require(mapping: dict, key: str, where: str):
    if key not in mapping:
        raise FormatError(f"missing field '{where}.{key}'", field=f"{where}.{key}")
    return mapping[key]


def read_json(path, expected_format: str) -> dict:
    path = Path(path)
    try:
        data = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise FormatError(f"{path}: invalid JSON at line {exc.lineno}",
                          line=exc.lineno) from exc
    if not isinstance(data, dict) or data.get("format") != expected_format:
        raise FormatError(f"{path}: expected format '{expected_format}', "
                          f"got {data.get('format')!r}", field="format")
    if data.get("version") != 1:
        raise FormatError(f"{path}: unsupported version {data.get('version')!r}",
                          field="version")
    return data


def write_json(path, payload: dict):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(payload, indent=1) + "\n")


# ---------------------------------------------------------------------------
# point clouds
# ---------------------------------------------------------------------------

def save_cloud(path, cloud: PointCloud, params: LidarProjectionParams,
               binary: bool = False):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    has_ring = cloud.rings is not None
    has_intensity = cloud.intensities is not None
    columns = ["x", "y", "z"] + (["ring"] if has_ring else []) \
        + (["intensity"] if has_intensity else [])
    header = {"n_rings": params.n_rings, "width": params.width,
              "azimuth_resolution": params.azimuth_resolution,
              "azimuth_offset": params.azimuth_offset,
              "count": len(cloud), "columns": columns}
    if binary:
        with open(path, "wb") as f:
            f.write(CLOUD_BIN_MAGIC)
            f.write((json.dumps(header) + "\n").encode())
            f.write(np.ascontiguousarray(cloud.points, dtype="<f8").tobytes())
            if has_ring:
                f.write(np.ascontiguousarray(cloud.rings, dtype="<i4").tobytes())
            if has_intensity:
                f.write(np.ascontiguousarray(cloud.intensities, dtype="<f8").tobytes())
        return
    with open(path, "w") as f:
        f.write(CLOUD_MAGIC + "\n")
        f.write(json.dumps(header) + "\n")
        for i in range(len(cloud)):
            fields = [_fmt(v) for v in cloud.points[i]]
            if has_ring:
                fields.append(str(int(cloud.rings[i])))
            if has_intensity:
                fields.append(_fmt(cloud.intensities[i]))
            f.write(" ".join(fields) + "\n")


def _finish_cloud(pts, rings, intensities, header, path):
    if len(pts) == 0:
        raise InsufficientDataError(f"{path}: empty cloud")
    if rings is None and len(pts) % header["width"] != 0:
        raise FormatError(
            f"{path}: no ring column and point count {len(pts)} is not a "
            f"whole number of {header['width']}-column turns; ring ids "
            "cannot be inferred", field="ring")
    params = LidarProjectionParams(header["azimuth_resolution"],
                                   header["azimuth_offset"],
                                   header["n_rings"], header["width"])
    cloud = PointCloud(pts, rings=rings, intensities=intensities)
    return cloud, params


def load_cloud(path) -> tuple[PointCloud, LidarProjectionParams]:
    """Parse a cloud file (text or binary); returns the cloud and its layout."""
    path = Path(path)
    raw = path.read_bytes()
    if raw.startswith(CLOUD_BIN_MAGIC):
        return _load_cloud_binary(raw, path)
    lines = raw.decode().splitlines()
    if not lines or lines[0].strip() != CLOUD_MAGIC:
        raise FormatError(f"{path}: not a cloud file (bad magic line)", line=1)
    if len(lines) < 2:
        raise InsufficientDataError(f"{path}: empty cloud")
    try:
        header = json.loads(lines[1])
    except json.JSONDecodeError as exc:
        raise FormatError(f"{path}: bad header", line=2) from exc
    columns = _require(header, "columns", "header")
    has_ring = "ring" in columns
    has_intensity = "intensity" in columns
    n_fields = len(columns)
    pts, rings, intens = [], [], []
    for lineno, line in enumerate(lines[2:], start=3):
        if not line.strip():
            continue
        parts = line.split()
        if len(parts) != n_fields:
            raise FormatError(f"{path}: record at line {lineno} has "
                              f"{len(parts)} fields, expected {n_fields}",
                              line=lineno)
        try:
            vals = [float(v) for v in parts]
        except ValueError as exc:
            raise FormatError(f"{path}: unparseable number at line {lineno}",
                              line=lineno) from exc
        if not all(np.isfinite(vals[:3])):
            raise FormatError(f"{path}: non-finite coordinate at line {lineno}",
                              line=lineno)
        pts.append(vals[:3])
        if has_ring:
            rings.append(int(vals[3]))
        if has_intensity:
            intens.append(vals[-1])
    return _finish_cloud(np.asarray(pts, dtype=float).reshape(-1, 3),
                         np.asarray(rings, dtype=np.int32) if has_ring else None,
                         np.asarray(intens) if has_intensity else None,
                         header, path)


def _load_cloud_binary(raw: bytes, path):
    body = raw[len(CLOUD_BIN_MAGIC):]
    nl = body.index(b"\n")
    try:
        header = json.loads(body[:nl])
    except json.JSONDecodeError as exc:
        raise FormatError(f"{path}: bad binary header", line=2) from exc
    count = _require(header, "count", "header")
    columns = _require(header, "columns", "header")
    blob = body[nl + 1:]
    pts = np.frombuffer(blob, dtype="<f8", count=count * 3).reshape(-1, 3).copy()
    offset = count * 3 * 8
    rings = None
    intens = None
    if "ring" in columns:
        rings = np.frombuffer(blob, dtype="<i4", count=count, offset=offset).copy()
        offset += count * 4
    if "intensity" in columns:
        intens = np.frombuffer(blob, dtype="<f8", count=count, offset=offset).copy()
    if not np.all(np.isfinite(pts)):
        bad = int(np.flatnonzero(~np.isfinite(pts).all(axis=1))[0])
        raise FormatError(f"{path}: non-finite coordinate in record {bad}",
                          record=bad)
    return _finish_cloud(pts, rings, intens, header, path)


# ---------------------------------------------------------------------------
# JSON converters for core types
# ---------------------------------------------------------------------------

def plane_to_dict(p: Plane) -> dict:
    return {"normal": p.normal.tolist(), "dist": p.dist}


def plane_from_dict(d: dict, where: str = "plane") -> Plane:
    return Plane(np.asarray(_require(d, "normal", where), dtype=float),
                 _require(d, "dist", where))


def isometry_to_dict(x: Isometry3) -> dict:
    return {"rotation": x.rotation.tolist(), "translation": x.translation.tolist()}


def isometry_from_dict(d: dict, where: str = "isometry") -> Isometry3:
    return Isometry3(np.asarray(_require(d, "rotation", where), dtype=float),
                     np.asarray(_require(d, "translation", where), dtype=float))


def board_to_dict(b: BoardSpec) -> dict:
    return {"rows": b.rows, "cols": b.cols, "square_size": b.square_size}


def board_from_dict(d: dict) -> BoardSpec:
    return BoardSpec(_require(d, "rows", "board"), _require(d, "cols", "board"),
                     _require(d, "square_size", "board"))


def intrinsics_to_dict(c: CameraIntrinsics) -> dict:
    return {"fx": c.fx, "fy": c.fy, "cx": c.cx, "cy": c.cy,
            "width": c.width, "height": c.height,
            "distortion": c.distortion.tolist()}


def intrinsics_from_dict(d: dict) -> CameraIntrinsics:
    return CameraIntrinsics(
        fx=_require(d, "fx", "camera"), fy=_require(d, "fy", "camera"),
        cx=_require(d, "cx", "camera"), cy=_require(d, "cy", "camera"),
        width=_require(d, "width", "camera"), height=_require(d, "height", "camera"),
        distortion=np.asarray(d.get("distortion", np.zeros(5)), dtype=float))


def lidar_params_to_dict(p: LidarProjectionParams) -> dict:
    return {"azimuth_resolution": p.azimuth_resolution,
            "azimuth_offset": p.azimuth_offset,
            "n_rings": p.n_rings, "width": p.width}


def lidar_params_from_dict(d: dict) -> LidarProjectionParams:
    return LidarProjectionParams(
        _require(d, "azimuth_resolution", "lidar"),
        _require(d, "azimuth_offset", "lidar"),
        _require(d, "n_rings", "lidar"), _require(d, "width", "lidar"))


# ---------------------------------------------------------------------------
# corners
# ---------------------------------------------------------------------------

def save_corners(path, corners: CornerSet):
    write_json(path, {"format": "planecal-corners", "version": 1,
                      "board": board_to_dict(corners.board),
                      "corners": corners.pixels.tolist()})


def load_corners(path) -> CornerSet:
    data = read_json(path, "planecal-corners")
    board = board_from_dict(_require(data, "board", "corners"))
    px = np.asarray(_require(data, "corners", "corners"), dtype=float)
    if px.ndim != 2 or px.shape[1] != 2:
        raise FormatError(f"{path}: corners must be Nx2", field="corners")
    if len(px) != board.corner_count:
        raise FormatError(
            f"{path}: board {board.rows}x{board.cols} requires "
            f"{board.corner_count} corners, file has {len(px)}",
            field="corners", expected=board.corner_count, got=len(px))
    return CornerSet(px, board)


# ---------------------------------------------------------------------------
# measurements, solver config, reports, sweep tables
# ---------------------------------------------------------------------------

def save_measurements(path, measurements):
    write_json(path, {
        "format": "planecal-measurements", "version": 1,
        "measurements": [{"id": m.id,
                          "lidar_plane": plane_to_dict(m.lidar_plane),
                          "camera_plane": plane_to_dict(m.camera_plane)}
                         for m in measurements]})


def load_measurements(path) -> list:
    data = read_json(path, "planecal-measurements")
    out = []
    for i, m in enumerate(_require(data, "measurements", "measurements")):
        where = f"measurements[{i}]"
        out.append(MeasurementPair(
            lidar_plane=plane_from_dict(_require(m, "lidar_plane", where),
                                        where + ".lidar_plane"),
            camera_plane=plane_from_dict(_require(m, "camera_plane", where),
                                         where + ".camera_plane"),
            id=m.get("id", f"m{i}")))
    return out


def save_solver_config(path, cfg: SolverConfig):
    write_json(path, {"format": "planecal-solver-config", "version": 1,
                      "max_iterations": cfg.max_iterations,
                      "update_tolerance": cfg.update_tolerance,
                      "huber_delta": cfg.huber_delta,
                      "normal_weight": cfg.normal_weight,
                      "dist_weight": cfg.dist_weight,
                      "conditioning_threshold": cfg.conditioning_threshold})


def load_solver_config(path) -> SolverConfig:
    d = read_json(path, "planecal-solver-config")
    defaults = SolverConfig()
    return SolverConfig(
        max_iterations=d.get("max_iterations", defaults.max_iterations),
        update_tolerance=d.get("update_tolerance", defaults.update_tolerance),
        huber_delta=d.get("huber_delta", defaults.huber_delta),
        normal_weight=d.get("normal_weight", defaults.normal_weight),
        dist_weight=d.get("dist_weight", defaults.dist_weight),
        conditioning_threshold=d.get("conditioning_threshold",
                                     defaults.conditioning_threshold))


def report_to_dict(r: CalibrationReport) -> dict:
    return {"format": "planecal-report", "version": 1,
            "extrinsic": isometry_to_dict(r.extrinsic),
            "per_measurement": [{"id": i, "residual": res, "weight": w}
                                for i, res, w in r.per_measurement],
            "chi2_trace": list(r.chi2_trace),
            "hessian_spectrum": np.asarray(r.hessian_spectrum).tolist(),
            "converged": r.converged,
            "condition_warning": r.condition_warning,
            "iterations": r.iterations}


def report_from_dict(d: dict) -> CalibrationReport:
    return CalibrationReport(
        extrinsic=isometry_from_dict(_require(d, "extrinsic", "report")),
        per_measurement=[(m["id"], m["residual"], m["weight"])
                         for m in _require(d, "per_measurement", "report")],
        chi2_trace=list(_require(d, "chi2_trace", "report")),
        hessian_spectrum=np.asarray(_require(d, "hessian_spectrum", "report")),
        converged=_require(d, "converged", "report"),
        condition_warning=_require(d, "condition_warning", "report"),
        iterations=d.get("iterations", 0))


def save_report(path, report: CalibrationReport):
    write_json(path, report_to_dict(report))


def load_report(path) -> CalibrationReport:
    return report_from_dict(read_json(path, "planecal-report"))


def save_sweep(path, result: SweepResult):
    write_json(path, {
        "format": "planecal-sweep", "version": 1,
        "cells": [{"noise_index": c.noise_index, "noise_label": c.noise_label,
                   "sigma_lidar": c.sigma_lidar, "sigma_camera": c.sigma_camera,
                   "n_measurements": c.n_measurements,
                   "mean_e_t": c.mean_e_t, "std_e_t": c.std_e_t,
                   "mean_e_r": c.mean_e_r, "std_e_r": c.std_e_r,
                   "n_trials": c.n_trials, "n_failed": c.n_failed}
                  for c in result.cells]})


def load_sweep(path) -> SweepResult:
    data = read_json(path, "planecal-sweep")
    return SweepResult(cells=tuple(
        SweepCell(**cell) for cell in _require(data, "cells", "sweep")))


# ---------------------------------------------------------------------------
# dataset manifests
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class FrameRef:
    id: str
    cloud: str
    corners: str


@dataclass(frozen=True)
class DatasetManifest:
    root: Path
    lidar: LidarProjectionParams
    camera: CameraIntrinsics
    board: BoardSpec
    frames: tuple
    ground_truth: Isometry3 | None = None

    def frame(self, frame_id: str) -> FrameRef:
        for f in self.frames:
            if f.id == frame_id:
                return f
        raise FormatError(f"unknown frame id '{frame_id}'", field="frame",
                          known=[f.id for f in self.frames])

    def cloud_path(self, ref: FrameRef) -> Path:
        return self.root / ref.cloud

    def corners_path(self, ref: FrameRef) -> Path:
        return self.root / ref.corners


def save_manifest(path, manifest: DatasetManifest):
    write_json(path, {
        "format": "planecal-dataset", "version": 1,
        "lidar": lidar_params_to_dict(manifest.lidar),
        "camera": intrinsics_to_dict(manifest.camera),
        "board": board_to_dict(manifest.board),
        "ground_truth": (isometry_to_dict(manifest.ground_truth)
                         if manifest.ground_truth is not None else None),
        "frames": [{"id": f.id, "cloud": f.cloud, "corners": f.corners}
                   for f in manifest.frames]})


def load_manifest(path) -> DatasetManifest:
    path = Path(path)
    data = read_json(path, "planecal-dataset")
    frames = []
    ids = set()
    for i, fr in enumerate(_require(data, "frames", "dataset")):
        ref = FrameRef(id=_require(fr, "id", f"frames[{i}]"),
                       cloud=_require(fr, "cloud", f"frames[{i}]"),
                       corners=_require(fr, "corners", f"frames[{i}]"))
        if ref.id in ids:
            raise FormatError(f"{path}: duplicate frame id '{ref.id}'",
                              field=f"frames[{i}].id")
        ids.add(ref.id)
        for rel in (ref.cloud, ref.corners):
            if not (path.parent / rel).exists():
                raise FormatError(f"{path}: referenced file missing: {rel}",
                                  field=f"frames[{i}]")
        frames.append(ref)
    gt = data.get("ground_truth")
    return DatasetManifest(
        root=path.parent,
        lidar=lidar_params_from_dict(_require(data, "lidar", "dataset")),
        camera=intrinsics_from_dict(_require(data, "camera", "dataset")),
        board=board_from_dict(_require(data, "board", "dataset")),
        frames=tuple(frames),
        ground_truth=isometry_from_dict(gt) if gt else None)
