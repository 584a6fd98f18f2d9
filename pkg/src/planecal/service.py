"""Calibration session store and the local HTTP/JSON service behind the UI.

One serve process owns one session: an ordered list of accepted measurement
pairs over a replayed dataset, a pending LiDAR plane fit awaiting the
operator's verdict, and the latest calibration report.  Mutations are
serialized under a single lock and guarded by a revision counter: every
mutating request must quote the revision it saw, and a stale revision is
rejected so rapid clicking cannot lose updates.  All geometry is computed
here; the browser client only renders payloads.
"""

from __future__ import annotations

import json
import threading
from dataclasses import dataclass
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from pathlib import Path

import numpy as np

from . import formats
from .errors import (
    CalibrationError,
    ConflictError,
    FormatError,
    InvalidStateError,
    OutOfBoundsError,
    SingularSystemError,
)
from .projection import pinhole_project, project_by_id
from .solver import MeasurementPair, SolverConfig, calibrate
from .target import (
    PatchSelection,
    RansacConfig,
    board_pose,
    camera_plane,
    collect_patch_pixels,
    ransac_plane,
    reprojection_rms,
)

_STATUS = {
    "conflict": 409,
    "out_of_bounds": 400,
    "format_error": 400,
    "invalid_state": 409,
    "insufficient_data": 422,
    "fit_failure": 422,
    "degenerate_geometry": 422,
    "no_convergence": 422,
    "singular_system": 422,
    "out_of_view": 422,
    "not_found": 404,
}


class NotFoundError(CalibrationError):
    code = "not_found"


@dataclass
class _Frame:
    ref: formats.FrameRef
    cloud: object = None
    image: object = None
    camera: dict | None = None


class SessionStore:
    """Single-operator acquisition session over a recorded dataset."""

    def __init__(self, manifest: formats.DatasetManifest,
                 solver_config: SolverConfig | None = None,
                 ransac_config: RansacConfig | None = None,
                 output_path: str | None = None):
        self.manifest = manifest
        self.solver_config = solver_config or SolverConfig()
        self.ransac_config = ransac_config or RansacConfig()
        self.output_path = Path(output_path) if output_path else None
        self.revision = 0
        self.frame_index = 0
        self.pending: dict | None = None
        self.accepted: list[tuple[MeasurementPair, dict]] = []
        self.report = None
        self._frames = [_Frame(ref=r) for r in manifest.frames]
        self._lock = threading.Lock()

    # -- internals ---------------------------------------------------------

    def _bump(self):
        self.revision += 1

    def _check_revision(self, payload: dict):
        rev = payload.get("revision")
        if rev != self.revision:
            raise ConflictError(
                f"stale revision {rev}; store is at {self.revision}",
                expected=self.revision, got=rev)

    def _current(self) -> _Frame:
        if not (0 <= self.frame_index < len(self._frames)):
            raise NotFoundError("no frame left in the dataset",
                                frame_index=self.frame_index,
                                n_frames=len(self._frames))
        frame = self._frames[self.frame_index]
        if frame.cloud is None:
            cloud, _ = formats.load_cloud(self.manifest.cloud_path(frame.ref))
            frame.cloud = cloud
            frame.image = project_by_id(cloud, self.manifest.lidar)
        return frame

    def _camera_side(self, frame: _Frame) -> dict:
        if frame.camera is None:
            corners = formats.load_corners(self.manifest.corners_path(frame.ref))
            pose = board_pose(corners, self.manifest.camera)
            rms = reprojection_rms(pose, corners, self.manifest.camera)
            obs = camera_plane(pose, self.manifest.board, rms)
            hx, hy = self.manifest.board.polygon_half_extents()
            outline3d = pose.apply(np.array([[-hx, -hy, 0.0], [hx, -hy, 0.0],
                                             [hx, hy, 0.0], [-hx, hy, 0.0]]))
            outline = pinhole_project(self.manifest.camera, outline3d)
            frame.camera = {"observation": _observation_payload(obs),
                            "corners": corners.pixels.tolist(),
                            "board_outline": outline.tolist()}
        return frame.camera

    def _persist(self):
        if self.output_path is None:
            return
        formats.save_measurements(self.output_path,
                                  [pair for pair, _ in self.accepted])
        if self.report is not None:
            formats.save_report(self.output_path.with_suffix(".report.json"),
                                self.report)

    # -- read endpoints ------------------------------------------------------

    def session_state(self) -> dict:
        with self._lock:
            return {
                "revision": self.revision,
                "frame_index": self.frame_index,
                "n_frames": len(self._frames),
                "accepted": [{"id": pair.id,
                              "lidar_plane": formats.plane_to_dict(pair.lidar_plane),
                              "camera_plane": formats.plane_to_dict(pair.camera_plane)}
                             for pair, _ in self.accepted],
                "has_pending": self.pending is not None,
                "has_report": self.report is not None,
            }

    def frame_meta(self) -> dict:
        with self._lock:
            frame = self._current()
            rng = frame.image.range
            filled = frame.image.filled
            return {
                "revision": self.revision,
                "frame_index": self.frame_index,
                "frame_id": frame.ref.id,
                "n_rings": frame.image.n_rings,
                "width": frame.image.width,
                "n_points": int(np.count_nonzero(filled)),
                "range_min": float(rng[filled].min()) if filled.any() else 0.0,
                "range_max": float(rng[filled].max()) if filled.any() else 0.0,
            }

    def frame_raster(self, kind: str) -> bytes:
        with self._lock:
            frame = self._current()
            grid = frame.image.range if kind == "range" else frame.image.intensity
            return np.ascontiguousarray(grid, dtype="<f4").tobytes()

    def camera_plane_payload(self) -> dict:
        with self._lock:
            frame = self._current()
            payload = dict(self._camera_side(frame))
            payload["revision"] = self.revision
            return payload

    def report_payload(self) -> dict:
        with self._lock:
            if self.report is None:
                raise NotFoundError("no calibration report yet")
            payload = formats.report_to_dict(self.report)
            payload["revision"] = self.revision
            return payload

    # -- mutations -----------------------------------------------------------

    def seed(self, payload: dict) -> dict:
        with self._lock:
            self._check_revision(payload)
            frame = self._current()
            sel = PatchSelection(
                seed_pixel=(int(payload.get("ring", -1)),
                            int(payload.get("column", -1))),
                radius=float(payload.get("radius", 5)))
            points, pixels = collect_patch_pixels(frame.image, frame.cloud, sel)
            obs = ransac_plane(points, self.ransac_config)
            inlier_pixels = pixels[obs.inlier_indices]
            self.pending = {"observation": obs, "selection": sel,
                            "frame_id": frame.ref.id,
                            "inlier_pixels": inlier_pixels}
            self._bump()
            return {"revision": self.revision,
                    "observation": _observation_payload(obs),
                    "inlier_pixels": inlier_pixels.tolist()}

    def accept(self, payload: dict) -> dict:
        with self._lock:
            self._check_revision(payload)
            if self.pending is None:
                raise InvalidStateError("no pending plane fit to accept")
            frame = self._current()
            cam = self._camera_side(frame)
            pair = MeasurementPair(
                lidar_plane=self.pending["observation"].plane,
                camera_plane=formats.plane_from_dict(
                    cam["observation"]["plane"]),
                id=frame.ref.id)
            provenance = {
                "selection": {"ring": self.pending["selection"].seed_pixel[0],
                              "column": self.pending["selection"].seed_pixel[1],
                              "radius": self.pending["selection"].radius},
                "corners_file": frame.ref.corners,
            }
            self.accepted.append((pair, provenance))
            self.pending = None
            self.frame_index += 1
            self._bump()
            self._persist()
            return {"revision": self.revision, "accepted_count": len(self.accepted)}

    def reject(self, payload: dict) -> dict:
        with self._lock:
            self._check_revision(payload)
            self.pending = None
            self.frame_index += 1
            self._bump()
            self._persist()
            return {"revision": self.revision, "frame_index": self.frame_index}

    def goto(self, payload: dict) -> dict:
        with self._lock:
            self._check_revision(payload)
            index = int(payload.get("index", 0))
            if not (0 <= index < len(self._frames)):
                raise OutOfBoundsError("frame index out of range", index=index)
            self.frame_index = index
            self.pending = None
            self._bump()
            return {"revision": self.revision, "frame_index": self.frame_index}

    def run_calibration(self, payload: dict) -> dict:
        with self._lock:
            self._check_revision(payload)
            pairs = [pair for pair, _ in self.accepted]
            self.report = calibrate(pairs, self.solver_config)
            self._bump()
            self._persist()
            out = formats.report_to_dict(self.report)
            out["revision"] = self.revision
            return out


def _observation_payload(obs) -> dict:
    return {"plane": formats.plane_to_dict(obs.plane),
            "inlier_count": obs.inlier_count,
            "rms_residual": obs.rms_residual,
            "source": obs.source}


_CONTENT_TYPES = {".html": "text/html", ".js": "text/javascript",
                  ".css": "text/css", ".map": "application/json",
                  ".svg": "image/svg+xml", ".ico": "image/x-icon"}


class SessionHandler(BaseHTTPRequestHandler):
    """Routes /api/* to the store; everything else serves the UI bundle."""

    server_version = "planecal"

    @property
    def store(self) -> SessionStore:
        return self.server.store

    def log_message(self, fmt, *args):  # quiet by default
        pass

    def _send_json(self, payload: dict, status: int = 200):
        body = json.dumps(payload).encode()
        self.send_response(status)
        self.send_header("Content-Type", "application/json")
        self.send_header("Content-Length", str(len(body)))
        self.end_headers()
        self.wfile.write(body)

    def _send_error_payload(self, exc: CalibrationError):
        self._send_json(exc.payload(), _STATUS.get(exc.code, 400))

    def _send_bytes(self, blob: bytes, content_type: str):
        self.send_response(200)
        self.send_header("Content-Type", content_type)
        self.send_header("Content-Length", str(len(blob)))
        self.end_headers()
        self.wfile.write(blob)

    def do_GET(self):
        try:
            path = self.path.split("?")[0]
            if path == "/api/session":
                self._send_json(self.store.session_state())
            elif path == "/api/frame":
                self._send_json(self.store.frame_meta())
            elif path == "/api/frame/range.bin":
                self._send_bytes(self.store.frame_raster("range"),
                                 "application/octet-stream")
            elif path == "/api/frame/intensity.bin":
                self._send_bytes(self.store.frame_raster("intensity"),
                                 "application/octet-stream")
            elif path == "/api/camera_plane":
                self._send_json(self.store.camera_plane_payload())
            elif path == "/api/report":
                self._send_json(self.store.report_payload())
            elif path.startswith("/api/"):
                self._send_json({"code": "not_found",
                                 "message": f"unknown endpoint {path}",
                                 "details": {}}, 404)
            else:
                self._serve_static(path)
        except CalibrationError as exc:
            self._send_error_payload(exc)
        except BrokenPipeError:
            pass

    def do_POST(self):
        try:
            length = int(self.headers.get("Content-Length", 0))
            body = self.rfile.read(length) if length else b"{}"
            try:
                payload = json.loads(body or b"{}")
            except json.JSONDecodeError as exc:
                raise FormatError("request body is not valid JSON") from exc
            routes = {
                "/api/seed": self.store.seed,
                "/api/accept": self.store.accept,
                "/api/reject": self.store.reject,
                "/api/goto": self.store.goto,
                "/api/calibrate": self.store.run_calibration,
            }
            handler = routes.get(self.path.split("?")[0])
            if handler is None:
                self._send_json({"code": "not_found",
                                 "message": f"unknown endpoint {self.path}",
                                 "details": {}}, 404)
                return
            self._send_json(handler(payload))
        except SingularSystemError as exc:
            payload = exc.payload()
            if exc.report is not None:
                payload["details"]["partial_report"] = formats.report_to_dict(exc.report)
            self._send_json(payload, _STATUS[exc.code])
        except CalibrationError as exc:
            self._send_error_payload(exc)
        except BrokenPipeError:
            pass

    def _serve_static(self, path: str):
        ui = getattr(self.server, "ui_dir", None)
        if ui is None:
            self._send_json({"code": "not_found",
                             "message": "no UI bundle configured; use /api/*",
                             "details": {}}, 404)
            return
        rel = "index.html" if path in ("/", "") else path.lstrip("/")
        target = (Path(ui) / rel).resolve()
        if not str(target).startswith(str(Path(ui).resolve())) or not target.is_file():
            self._send_json({"code": "not_found", "message": f"no such file {rel}",
                             "details": {}}, 404)
            return
        ctype = _CONTENT_TYPES.get(target.suffix, "application/octet-stream")
        self._send_bytes(target.read_bytes(), ctype)


def make_session_server(manifest_path, port: int = 0, ui_dir=None,
                        output_path=None,
                        solver_config: SolverConfig | None = None) -> ThreadingHTTPServer:
    """Build (but do not start) the session server; port 0 picks a free port."""
    manifest = formats.load_manifest(manifest_path)
    server = ThreadingHTTPServer(("127.0.0.1", port), SessionHandler)
    server.store = SessionStore(manifest, solver_config=solver_config,
                                output_path=output_path)
    server.ui_dir = str(ui_dir) if ui_dir else None
    return server
