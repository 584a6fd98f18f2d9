"""Per-sensor plane extraction from a checkerboard placement.

On the LiDAR side a circular patch of the range image seeds a RANSAC plane
fit.  On the camera side the known planar corner grid is registered to its
detected pixel locations (homography initialization, Gauss-Newton reprojection
refinement) and the board plane z = 0 is pushed through the recovered pose.
Corner detection itself is upstream: this module consumes pixel lists.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import (
    ConvergenceError,
    DegenerateGeometryError,
    FitError,
    InsufficientDataError,
    OutOfBoundsError,
)
from .geometry import (
    Isometry3,
    Plane,
    Twist6,
    boxplus,
    canonicalize,
    skew,
    transform_plane,
)
from .projection import CameraIntrinsics, PointCloud, RangeImage, undistort_pixel


@dataclass(frozen=True)
class BoardSpec:
    """Checkerboard interior-corner grid; corners live in the board z=0 plane."""

    rows: int
    cols: int
    square_size: float

    def __post_init__(self):
        if self.rows < 2 or self.cols < 2:
            raise ValueError("board needs at least 2x2 interior corners")
        if self.square_size <= 0:
            raise ValueError("square_size must be positive")

    @property
    def corner_count(self) -> int:
        return self.rows * self.cols

    def corner_grid(self) -> np.ndarray:
        """Row-major (rows*cols, 3) corner model, centered, z = 0."""
        c, r = np.meshgrid(np.arange(self.cols), np.arange(self.rows))
        x = (c.ravel() - (self.cols - 1) / 2.0) * self.square_size
        y = (r.ravel() - (self.rows - 1) / 2.0) * self.square_size
        return np.stack([x, y, np.zeros_like(x)], axis=1)

    def polygon_half_extents(self) -> tuple[float, float]:
        """Physical board half-size: corner grid plus one square of margin."""
        return ((self.cols + 1) / 2.0 * self.square_size,
                (self.rows + 1) / 2.0 * self.square_size)


@dataclass(frozen=True)
class CornerSet:
    """Detected interior corners, row-major to match `BoardSpec.corner_grid`."""

    pixels: np.ndarray
    board: BoardSpec

    def __post_init__(self):
        px = np.asarray(self.pixels, dtype=float).reshape(-1, 2)
        if len(px) != self.board.corner_count:
            raise ValueError(
                f"expected {self.board.corner_count} corners, got {len(px)}")
        object.__setattr__(self, "pixels", px)


@dataclass(frozen=True)
class PatchSelection:
    """Operator's seed on the range image plus a pixel radius."""

    seed_pixel: tuple[int, int]  # (ring, column)
    radius: float

    def __post_init__(self):
        if self.radius < 1:
            raise ValueError("radius must be >= 1 pixel")


@dataclass(frozen=True)
class RansacConfig:
    max_iterations: int = 500
    inlier_threshold: float = 0.02  # meters point-to-plane
    min_inlier_ratio: float = 0.6
    rng_seed: int = 0

    def __post_init__(self):
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be >= 1")
        if self.inlier_threshold <= 0:
            raise ValueError("inlier_threshold must be positive")
        if not (0 < self.min_inlier_ratio <= 1):
            raise ValueError("min_inlier_ratio must be in (0, 1]")


@dataclass(frozen=True)
class PlaneObservation:
    """One sensor's plane measurement with its fit diagnostics."""

    plane: Plane
    inlier_count: int
    rms_residual: float
    source: str  # "lidar" | "camera"
    inlier_indices: np.ndarray | None = None

    def __post_init__(self):
        if self.rms_residual < 0:
            raise ValueError("rms_residual must be >= 0")
        if self.source == "lidar" and self.inlier_count < 3:
            raise ValueError("lidar plane needs >= 3 inliers")


def collect_patch(img: RangeImage, cloud: PointCloud, sel: PatchSelection) -> np.ndarray:
    """3D points whose pixels fall in a circular disc around the seed.

    Column distance is computed modulo width so discs wrap cleanly across the
    azimuth seam.  Returns the points in row-major pixel scan order together
    with their pixel coordinates via `collect_patch_pixels`.
    """
    points, _ = collect_patch_pixels(img, cloud, sel)
    return points


def collect_patch_pixels(img: RangeImage, cloud: PointCloud,
                         sel: PatchSelection) -> tuple[np.ndarray, np.ndarray]:
    """Like `collect_patch` but also returns the (ring, column) per point."""
    ring0, col0 = sel.seed_pixel
    if not (0 <= ring0 < img.n_rings and 0 <= col0 < img.width):
        raise OutOfBoundsError("seed pixel outside the range image",
                               ring=int(ring0), column=int(col0))
    r = int(np.ceil(sel.radius))
    rows = np.arange(max(0, ring0 - r), min(img.n_rings, ring0 + r + 1))
    cols = np.arange(col0 - r, col0 + r + 1) % img.width
    rr, cc = np.meshgrid(rows, cols, indexing="ij")
    dr = rr - ring0
    dc = np.abs(cc - col0)
    dc = np.minimum(dc, img.width - dc)  # modular column distance
    inside = (dr * dr + dc * dc) <= sel.radius * sel.radius
    filled = img.point_index[rr, cc] >= 0
    keep = inside & filled
    if not np.any(keep):
        raise FitError("no points inside the selected patch",
                       ring=int(ring0), column=int(col0), radius=sel.radius)
    idx = img.point_index[rr[keep], cc[keep]]
    pixels = np.stack([rr[keep], cc[keep]], axis=1)
    return cloud.points[idx], pixels


def fit_plane_lsq(points: np.ndarray) -> tuple[Plane, float]:
    """Exact least-squares plane: centroid + smallest scatter eigenvector.

    Returns the canonical plane and the rms point-to-plane residual.
    """
    pts = np.asarray(points, dtype=float)
    if len(pts) < 3:
        raise InsufficientDataError("plane fit needs >= 3 points", count=len(pts))
    centroid = pts.mean(axis=0)
    centered = pts - centroid
    scatter = centered.T @ centered
    evals, evecs = np.linalg.eigh(scatter)
    n = evecs[:, 0]
    if evals[2] <= 0 or evals[1] <= 1e-12 * evals[2]:
        raise DegenerateGeometryError("points do not span a plane")
    plane = canonicalize(n, -float(n @ centroid))
    rms = float(np.sqrt(np.mean(plane.point_distances(pts) ** 2)))
    return plane, rms


def ransac_plane(points: np.ndarray, cfg: RansacConfig) -> PlaneObservation:
    """Robust plane fit: 3-point hypotheses, consensus voting, eigen refinement.

    Sampling happens over a canonically sorted copy of the input, so the
    result is invariant to input permutation for a fixed seed.  The winning
    consensus is refined by exact least squares, reclassified once against the
    refined plane, and refined again.  Returned inlier indices refer to the
    caller's point order.
    """
    pts = np.asarray(points, dtype=float).reshape(-1, 3)
    n_pts = len(pts)
    if n_pts < 3:
        raise InsufficientDataError("RANSAC needs >= 3 points", count=n_pts)

    sort_perm = np.lexsort((pts[:, 2], pts[:, 1], pts[:, 0]))
    spts = pts[sort_perm]

    rng = np.random.default_rng(cfg.rng_seed)
    tri = np.empty((cfg.max_iterations, 3), dtype=np.int64)
    for k in range(cfg.max_iterations):
        tri[k] = rng.choice(n_pts, size=3, replace=False)

    a, b, c = spts[tri[:, 0]], spts[tri[:, 1]], spts[tri[:, 2]]
    normals = np.cross(b - a, c - a)
    norms = np.linalg.norm(normals, axis=1)
    valid = norms > 1e-12  # collinear triples produce no hypothesis
    if not np.any(valid):
        raise DegenerateGeometryError("all sampled triples were collinear")
    normals = normals[valid] / norms[valid, None]
    ds = -np.einsum("ij,ij->i", normals, a[valid])

    # residual matrix: hypotheses x points
    resid = np.abs(normals @ spts.T + ds[:, None])
    counts = np.sum(resid < cfg.inlier_threshold, axis=1)
    best = int(np.argmax(counts))
    if counts[best] < max(3, cfg.min_inlier_ratio * n_pts):
        raise FitError("no plane reached the inlier-ratio threshold",
                       best_count=int(counts[best]), total=n_pts,
                       min_inlier_ratio=cfg.min_inlier_ratio)

    consensus = resid[best] < cfg.inlier_threshold
    plane, _ = fit_plane_lsq(spts[consensus])
    # one reclassification pass against the refined plane
    final = np.abs(plane.point_distances(spts)) < cfg.inlier_threshold
    if np.count_nonzero(final) >= 3:
        plane, rms = fit_plane_lsq(spts[final])
    else:
        final = consensus
        rms = float(np.sqrt(np.mean(plane.point_distances(spts[final]) ** 2)))
    if np.count_nonzero(final) < cfg.min_inlier_ratio * n_pts:
        raise FitError("consensus collapsed below the inlier-ratio threshold",
                       best_count=int(np.count_nonzero(final)), total=n_pts,
                       min_inlier_ratio=cfg.min_inlier_ratio)
    return PlaneObservation(plane=plane,
                            inlier_count=int(np.count_nonzero(final)),
                            rms_residual=rms,
                            source="lidar",
                            inlier_indices=np.sort(sort_perm[final]))


def _pose_from_homography(h: np.ndarray) -> Isometry3:
    """Decompose a board-to-normalized-image homography into a pose guess."""
    scale = np.linalg.norm(h[:, 0])
    if scale < 1e-12:
        raise DegenerateGeometryError("homography has a vanishing column")
    h = h / scale
    if h[2, 2] < 0:
        h = -h  # keep the board in front of the camera
    r1, r2, t = h[:, 0], h[:, 1], h[:, 2]
    r3 = np.cross(r1, r2)
    rot = np.stack([r1, r2, r3], axis=1)
    u, _, vt = np.linalg.svd(rot)
    rot = u @ np.diag([1.0, 1.0, np.linalg.det(u @ vt)]) @ vt
    return Isometry3(rot, t)


def _homography_dlt(src: np.ndarray, dst: np.ndarray) -> np.ndarray:
    """Direct linear transform with Hartley normalization."""
    def normalizer(p):
        mean = p.mean(axis=0)
        scale = np.sqrt(2.0) / max(np.mean(np.linalg.norm(p - mean, axis=1)), 1e-12)
        t = np.array([[scale, 0, -scale * mean[0]],
                      [0, scale, -scale * mean[1]],
                      [0, 0, 1.0]])
        return t

    ts, td = normalizer(src), normalizer(dst)
    s = (np.column_stack([src, np.ones(len(src))]) @ ts.T)[:, :2]
    d = (np.column_stack([dst, np.ones(len(dst))]) @ td.T)[:, :2]
    rows = []
    for (x, y), (u, v) in zip(s, d):
        rows.append([-x, -y, -1, 0, 0, 0, u * x, u * y, u])
        rows.append([0, 0, 0, -x, -y, -1, v * x, v * y, v])
    a = np.asarray(rows)
    _, sv, vt = np.linalg.svd(a)
    if sv[-2] < 1e-9 * sv[0]:
        raise DegenerateGeometryError("corner layout is degenerate for homography")
    hn = vt[-1].reshape(3, 3)
    return np.linalg.inv(td) @ hn @ ts


def board_pose(corners: CornerSet, intr: CameraIntrinsics) -> Isometry3:
    """Camera-from-board pose minimizing corner reprojection error.

    Pixels are undistorted to normalized coordinates, a DLT homography gives
    the initial pose, and Gauss-Newton on the normalized reprojection error
    polishes it (stop at update norm < 1e-10 or 50 iterations).
    """
    model = corners.board.corner_grid()
    obs = undistort_pixel(intr, corners.pixels)

    spread = np.linalg.eigvalsh(np.cov(obs.T))
    if spread[0] <= 1e-6 * spread[1]:
        raise DegenerateGeometryError("detected corners are (nearly) collinear")

    h = _homography_dlt(model[:, :2], obs)
    pose = _pose_from_homography(h)

    def residuals_and_jac(p: Isometry3):
        cam = p.apply(model)
        z = cam[:, 2]
        if np.any(z <= 1e-9):
            raise ConvergenceError("board surface crossed the camera plane")
        proj = cam[:, :2] / z[:, None]
        res = (proj - obs).ravel()
        jac = np.zeros((2 * len(model), 6))
        for i, q in enumerate(cam):
            d_proj = np.array([[1.0 / q[2], 0.0, -q[0] / q[2] ** 2],
                               [0.0, 1.0 / q[2], -q[1] / q[2] ** 2]])
            d_q = np.hstack([np.eye(3), -skew(q)])  # [dt | dtheta]
            jac[2 * i:2 * i + 2] = d_proj @ d_q
        return res, jac

    prev_cost = np.inf
    for _ in range(50):
        res, jac = residuals_and_jac(pose)
        cost = float(res @ res)
        if cost > 4.0 * prev_cost + 1e-12:
            raise ConvergenceError("board pose refinement diverged", cost=cost)
        prev_cost = min(prev_cost, cost)
        h_mat = jac.T @ jac
        g = jac.T @ res
        try:
            step = np.linalg.solve(h_mat, -g)
        except np.linalg.LinAlgError as exc:
            raise DegenerateGeometryError("singular normal matrix in pose fit") from exc
        pose = boxplus(pose, Twist6.from_vector(step))
        if np.linalg.norm(step) < 1e-10:
            break
    if np.any(pose.apply(model)[:, 2] <= 0):
        raise ConvergenceError("refined board pose is not in front of the camera")
    return pose


def reprojection_rms(pose: Isometry3, corners: CornerSet,
                     intr: CameraIntrinsics) -> float:
    """RMS reprojection residual in normalized coordinates (diagnostic)."""
    cam = pose.apply(corners.board.corner_grid())
    proj = cam[:, :2] / cam[:, 2:3]
    obs = undistort_pixel(intr, corners.pixels)
    return float(np.sqrt(np.mean(np.sum((proj - obs) ** 2, axis=1))))


def camera_plane(pose: Isometry3, board: BoardSpec,
                 rms_residual: float = 0.0) -> PlaneObservation:
    """Board plane (z = 0 in board frame) expressed in the camera frame."""
    plane = transform_plane(pose, Plane(np.array([0.0, 0.0, 1.0]), 0.0))
    return PlaneObservation(plane=plane, inlier_count=board.corner_count,
                            rms_residual=rms_residual, source="camera")
