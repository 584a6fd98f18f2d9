"""Camera and LiDAR image-formation models.

The camera side is a pinhole with an invertible 5-coefficient
radial-tangential distortion model.  The LiDAR side embeds an ordered cloud
into a dense (ring x azimuth-bin) image keyed by beam id rather than by
elevation angle; each populated pixel keeps a back-pointer into the source
cloud so patches selected on the image can be lifted back to 3D.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import (
    BehindCameraError,
    ConvergenceError,
    InsufficientDataError,
    OutOfBoundsError,
    OutOfViewError,
)

TWO_PI = 2.0 * math.pi


@dataclass(frozen=True)
class CameraIntrinsics:
    """Pinhole parameters plus plumb-bob distortion (k1, k2, p1, p2, k3)."""

    fx: float
    fy: float
    cx: float
    cy: float
    width: int
    height: int
    distortion: np.ndarray = field(default_factory=lambda: np.zeros(5))

    def __post_init__(self):
        d = np.array(self.distortion, dtype=float).reshape(5)
        d.flags.writeable = False
        object.__setattr__(self, "distortion", d)
        if not (self.fx > 0 and self.fy > 0):
            raise ValueError("focal lengths must be positive")
        if not (0 <= self.cx < self.width and 0 <= self.cy < self.height):
            raise ValueError("principal point must lie inside the image")

    @property
    def has_distortion(self) -> bool:
        return bool(np.any(self.distortion != 0.0))

    def matrix(self) -> np.ndarray:
        return np.array([[self.fx, 0.0, self.cx],
                         [0.0, self.fy, self.cy],
                         [0.0, 0.0, 1.0]])


@dataclass(frozen=True)
class LidarProjectionParams:
    """Azimuth scale/offset and ring layout of the projection-by-ID image."""

    azimuth_resolution: float  # pixels per radian, = width / 2pi
    azimuth_offset: float      # pixels
    n_rings: int
    width: int

    def __post_init__(self):
        if self.n_rings < 1:
            raise ValueError("n_rings must be >= 1")
        if abs(self.width - TWO_PI * self.azimuth_resolution) > 1.0:
            raise ValueError("width must equal 2*pi*azimuth_resolution within one pixel")

    @staticmethod
    def for_sensor(n_rings: int, width: int) -> "LidarProjectionParams":
        """Full-turn layout with the seam at the back (azimuth pi)."""
        return LidarProjectionParams(width / TWO_PI, width / 2.0, n_rings, width)


@dataclass(frozen=True)
class PointCloud:
    """Columnar cloud: points (N, 3) meters, optional per-point ring/intensity."""

    points: np.ndarray
    rings: np.ndarray | None = None
    intensities: np.ndarray | None = None

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=float).reshape(-1, 3)
        object.__setattr__(self, "points", pts)
        if not np.all(np.isfinite(pts)):
            raise ValueError("point coordinates must be finite")
        if self.rings is not None:
            r = np.asarray(self.rings, dtype=np.int32).reshape(-1)
            if len(r) != len(pts):
                raise ValueError("rings length mismatch")
            object.__setattr__(self, "rings", r)
        if self.intensities is not None:
            i = np.asarray(self.intensities, dtype=float).reshape(-1)
            if len(i) != len(pts):
                raise ValueError("intensities length mismatch")
            object.__setattr__(self, "intensities", i)

    def __len__(self) -> int:
        return len(self.points)


@dataclass(frozen=True)
class RangeImage:
    """Dense (n_rings x width) embedding with per-pixel source indices.

    ``point_index`` is -1 where no point landed; those pixels are empty and
    carry range 0.
    """

    point_index: np.ndarray
    range: np.ndarray
    intensity: np.ndarray

    @property
    def n_rings(self) -> int:
        return self.point_index.shape[0]

    @property
    def width(self) -> int:
        return self.point_index.shape[1]

    @property
    def filled(self) -> np.ndarray:
        return self.point_index >= 0


def pinhole_project(intr: CameraIntrinsics, p) -> np.ndarray:
    """Project camera-frame point(s) with z > 0 to pixel coordinates.

    Operates on already-undistorted geometry; apply `distort_normalized`
    first if the lens model matters.
    """
    pts = np.asarray(p, dtype=float)
    single = pts.ndim == 1
    pts = np.atleast_2d(pts)
    z = pts[:, 2]
    if np.any(z <= 1e-9):
        raise BehindCameraError("point at or behind the camera plane",
                                min_z=float(np.min(z)))
    uv = np.empty((len(pts), 2))
    uv[:, 0] = intr.fx * pts[:, 0] / z + intr.cx
    uv[:, 1] = intr.fy * pts[:, 1] / z + intr.cy
    return uv[0] if single else uv


def distort_normalized(intr: CameraIntrinsics, xy) -> np.ndarray:
    """Forward radial-tangential distortion of normalized coordinates."""
    pts = np.asarray(xy, dtype=float)
    single = pts.ndim == 1
    pts = np.atleast_2d(pts)
    k1, k2, p1, p2, k3 = intr.distortion
    x, y = pts[:, 0], pts[:, 1]
    r2 = x * x + y * y
    radial = 1.0 + r2 * (k1 + r2 * (k2 + r2 * k3))
    xd = x * radial + 2.0 * p1 * x * y + p2 * (r2 + 2.0 * x * x)
    yd = y * radial + p1 * (r2 + 2.0 * y * y) + 2.0 * p2 * x * y
    out = np.stack([xd, yd], axis=1)
    return out[0] if single else out


def undistort_pixel(intr: CameraIntrinsics, pixel) -> np.ndarray:
    """Invert the distortion model, returning the normalized ray (x, y).

    Fixed-point iteration, at most 20 rounds, converged when the update drops
    below 1e-10 in normalized units.  With zero coefficients this is exactly
    K^-1.
    """
    px = np.asarray(pixel, dtype=float)
    single = px.ndim == 1
    px = np.atleast_2d(px)
    xd = (px[:, 0] - intr.cx) / intr.fx
    yd = (px[:, 1] - intr.cy) / intr.fy
    if not intr.has_distortion:
        out = np.stack([xd, yd], axis=1)
        return out[0] if single else out
    k1, k2, p1, p2, k3 = intr.distortion
    x, y = xd.copy(), yd.copy()
    for _ in range(20):
        r2 = x * x + y * y
        radial = 1.0 + r2 * (k1 + r2 * (k2 + r2 * k3))
        dx = 2.0 * p1 * x * y + p2 * (r2 + 2.0 * x * x)
        dy = p1 * (r2 + 2.0 * y * y) + 2.0 * p2 * x * y
        x_new = (xd - dx) / radial
        y_new = (yd - dy) / radial
        step = np.max(np.hypot(x_new - x, y_new - y))
        x, y = x_new, y_new
        if step < 1e-10:
            break
    else:
        raise ConvergenceError("distortion inversion did not converge",
                               last_step=float(step))
    out = np.stack([x, y], axis=1)
    return out[0] if single else out


def _resolve_rings(cloud: PointCloud, params: LidarProjectionParams) -> np.ndarray:
    if cloud.rings is not None:
        rings = cloud.rings
    else:
        # Ordered-cloud convention: consecutive full turns, one ring each.
        rings = (np.arange(len(cloud)) // params.width).astype(np.int32)
    if np.any(rings < 0) or np.any(rings >= params.n_rings):
        bad = rings[(rings < 0) | (rings >= params.n_rings)][0]
        raise OutOfViewError("ring id outside [0, n_rings)", ring=int(bad),
                             n_rings=params.n_rings)
    return rings


def project_by_id(cloud: PointCloud, params: LidarProjectionParams) -> RangeImage:
    """Embed the cloud into a dense index/range/intensity image.

    Column = round(f * atan2(y, x) + c) modulo width, row = ring id.  When two
    points of one ring land in the same column the closer one wins, which is
    what the beam would physically have reported.
    """
    if len(cloud) == 0:
        raise InsufficientDataError("cannot project an empty cloud")
    rings = _resolve_rings(cloud, params)
    pts = cloud.points
    rng = np.linalg.norm(pts, axis=1)
    azimuth = np.arctan2(pts[:, 1], pts[:, 0])
    cols = np.rint(params.azimuth_resolution * azimuth + params.azimuth_offset)
    cols = cols.astype(np.int64) % params.width

    shape = (params.n_rings, params.width)
    index = np.full(shape, -1, dtype=np.int64)
    range_img = np.zeros(shape)
    intensity = np.zeros(shape)

    # Points with no usable direction cannot claim a pixel.
    ok = rng > 1e-12
    order = np.argsort(rng[ok])[::-1]  # write far to near; nearest wins
    src = np.flatnonzero(ok)[order]
    index[rings[src], cols[src]] = src
    range_img[rings[src], cols[src]] = rng[src]
    if cloud.intensities is not None:
        intensity[rings[src], cols[src]] = cloud.intensities[src]
    return RangeImage(index, range_img, intensity)


def pixel_to_point(img: RangeImage, cloud: PointCloud, pixel) -> np.ndarray | None:
    """Source 3D point stored at (ring, column), or None for an empty pixel."""
    ring, col = int(pixel[0]), int(pixel[1])
    if not (0 <= ring < img.n_rings and 0 <= col < img.width):
        raise OutOfBoundsError("pixel outside the range image",
                               ring=ring, column=col)
    idx = img.point_index[ring, col]
    if idx < 0:
        return None
    return cloud.points[idx]
