"""Joint extrinsic estimation from paired plane observations.

Given pairs (lidar plane, camera plane) of the same board placement, the
solver estimates the camera-from-lidar transform X minimizing the robustified
sum of 4D plane-to-plane errors e_i = err(X * pi_lidar_i, pi_camera_i).
Gauss-Newton steps on the [dt | dtheta] twist chart, a Huber M-estimator
down-weights gross outliers, and a scalar Levenberg fallback guards against
the rare diverging step.  Three well-spread plane pairs fully constrain the
six degrees of freedom; near-parallel normals leave directions unconstrained,
which the conditioning diagnostics expose instead of silently absorbing.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, replace

import numpy as np

from .errors import InsufficientDataError, SingularSystemError
from .geometry import (
    Isometry3,
    Plane,
    Twist6,
    boxplus,
    rotation_angle,
    transform_jacobian,
    transform_plane_coeffs,
)


@dataclass(frozen=True)
class MeasurementPair:
    """One target placement: its plane in each sensor frame."""

    lidar_plane: Plane
    camera_plane: Plane
    id: str = ""


@dataclass(frozen=True)
class SolverConfig:
    max_iterations: int = 100
    update_tolerance: float = 1e-9
    huber_delta: float = 0.02     # on the Omega-norm of the 4D residual,
                                  # ~4x an inlier residual at benchmark noise
    normal_weight: float = 1.0
    dist_weight: float = 1.0
    conditioning_threshold: float = 1e-8  # relative eigenvalue cutoff

    def __post_init__(self):
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be >= 1")
        if not self.huber_delta > 0:
            raise ValueError("huber_delta must be positive")
        if not (self.normal_weight > 0 and self.dist_weight > 0):
            raise ValueError("weights must be positive")

    def omega(self) -> np.ndarray:
        return np.diag([self.dist_weight] + [self.normal_weight] * 3)


@dataclass(frozen=True)
class CalibrationReport:
    extrinsic: Isometry3
    per_measurement: list  # (id, residual Omega-norm, robust weight)
    chi2_trace: list
    hessian_spectrum: np.ndarray  # ascending eigenvalues of the final H
    converged: bool
    condition_warning: bool
    iterations: int = 0


@dataclass(frozen=True)
class ConditioningReport:
    eigenvalues: np.ndarray  # ascending
    warning: bool
    rank: int


def _normals(measurements, side: str) -> np.ndarray:
    return np.stack([getattr(m, side).normal for m in measurements])


def _dists(measurements, side: str) -> np.ndarray:
    return np.array([getattr(m, side).dist for m in measurements])


def _minimal_rotation(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Smallest rotation mapping unit vector a onto unit vector b."""
    v = np.cross(a, b)
    s = np.linalg.norm(v)
    c = float(a @ b)
    if s < 1e-12:
        if c > 0:
            return np.eye(3)
        # antipodal: rotate pi about any axis orthogonal to a
        axis = np.cross(a, [1.0, 0.0, 0.0])
        if np.linalg.norm(axis) < 1e-6:
            axis = np.cross(a, [0.0, 1.0, 0.0])
        axis /= np.linalg.norm(axis)
        from .geometry import axis_angle_to_matrix
        return axis_angle_to_matrix(axis * np.pi)
    vx = np.array([[0, -v[2], v[1]], [v[2], 0, -v[0]], [-v[1], v[0], 0]])
    return np.eye(3) + vx + vx @ vx * ((1 - c) / s**2)


def initial_guess(measurements) -> Isometry3:
    """Decoupled closed-form starting point.

    Rotation aligns the lidar normals onto the camera normals (orthogonal
    Procrustes with determinant correction); translation solves the linear
    per-pair distance constraints (R n_l)^T t = d_l - d_c.  With normals
    spanning fewer than two directions the rotation falls back to the minimal
    mean-normal alignment (no spin about the free axis) and the translation to
    the minimum-norm solution; a warning flags the degeneracy.
    """
    if len(measurements) < 3:
        raise InsufficientDataError("initial guess needs >= 3 measurements",
                                    count=len(measurements))
    ns_l = _normals(measurements, "lidar_plane")
    ns_c = _normals(measurements, "camera_plane")

    sv = np.linalg.svd(ns_l, compute_uv=False)
    degenerate = sv[1] < 1e-6 * sv[0]
    if degenerate:
        warnings.warn("plane normals span fewer than two directions; "
                      "initial guess is only partially constrained",
                      RuntimeWarning, stacklevel=2)
        mean_l = ns_l.mean(axis=0)
        mean_c = ns_c.mean(axis=0)
        mean_l /= np.linalg.norm(mean_l)
        mean_c /= np.linalg.norm(mean_c)
        rot = _minimal_rotation(mean_l, mean_c)
    else:
        h = ns_l.T @ ns_c
        u, _, vt = np.linalg.svd(h)
        d = np.sign(np.linalg.det(vt.T @ u.T))
        rot = vt.T @ np.diag([1.0, 1.0, d]) @ u.T

    a = ns_l @ rot.T
    b = _dists(measurements, "lidar_plane") - _dists(measurements, "camera_plane")
    t, *_ = np.linalg.lstsq(a, b, rcond=None)
    return Isometry3(rot, t)


def _huber_rho(r: float, delta: float) -> float:
    if r <= delta:
        return r * r
    return 2.0 * delta * r - delta * delta


def _huber_weight(r: float, delta: float) -> float:
    if r <= delta or delta == np.inf:
        return 1.0
    return delta / r


def _aligned_pairs(measurements, guess: Isometry3):
    """Flip lidar planes whose transformed normal opposes the camera normal.

    Canonical forms are per-frame; the raw transform inside the loop must not
    chase a sign flip, so the alignment is fixed once at the starting point.
    """
    out = []
    for m in measurements:
        n, d = transform_plane_coeffs(guess, m.lidar_plane)
        if float(n @ m.camera_plane.normal) < 0.0:
            out.append(replace(m, lidar_plane=m.lidar_plane.flipped()))
        else:
            out.append(m)
    return out


def _residual_and_jacobian(x: Isometry3, pair: MeasurementPair):
    n_hat, d_hat = transform_plane_coeffs(x, pair.lidar_plane)
    cam = pair.camera_plane
    # plane_error specialized to a unit transformed normal:
    #   e_dist = n_hat . (-n_hat d_hat + n_cam d_cam) = -d_hat + d_cam n_hat.n_cam
    err = np.empty(4)
    err[0] = -d_hat + cam.dist * float(n_hat @ cam.normal)
    err[1:] = cam.normal - n_hat

    # chain: d err / d pi_hat  (pi_hat ordered [n; d], err ordered [dist; n])
    a = np.zeros((4, 4))
    a[0, :3] = cam.dist * cam.normal
    a[0, 3] = -1.0
    a[1:, :3] = -np.eye(3)
    jac = a @ transform_jacobian(x, pair.lidar_plane)
    return err, jac


def _robust_objective(x: Isometry3, pairs, omega, delta: float) -> float:
    total = 0.0
    for pair in pairs:
        err, _ = _residual_and_jacobian(x, pair)
        total += _huber_rho(float(np.sqrt(err @ omega @ err)), delta)
    return total


def _normal_equations(x: Isometry3, pairs, omega, delta: float):
    h = np.zeros((6, 6))
    g = np.zeros(6)
    norms, weights = [], []
    for pair in pairs:
        err, jac = _residual_and_jacobian(x, pair)
        r = float(np.sqrt(err @ omega @ err))
        w = _huber_weight(r, delta)
        jtw = jac.T @ omega
        h += w * (jtw @ jac)
        g += w * (jtw @ err)
        norms.append(r)
        weights.append(w)
    return h, g, norms, weights


def calibrate(measurements, cfg: SolverConfig | None = None,
              guess: Isometry3 | None = None) -> CalibrationReport:
    """Estimate the camera-from-lidar extrinsic from >= 3 plane pairs.

    Accepted steps never increase the robust objective (rejected steps retry
    with a scaled diagonal); iteration stops when the update norm drops below
    ``cfg.update_tolerance``.  Raises SingularSystemError, with the partial
    report attached, when the normal matrix is rank deficient at the relative
    threshold ``cfg.conditioning_threshold``.
    """
    cfg = cfg or SolverConfig()
    if len(measurements) < 3:
        raise InsufficientDataError("calibration needs >= 3 measurements",
                                    count=len(measurements))
    omega = cfg.omega()
    x = guess if guess is not None else initial_guess(measurements)
    pairs = _aligned_pairs(measurements, x)

    chi2 = _robust_objective(x, pairs, omega, cfg.huber_delta)
    trace = [chi2]
    converged = False
    lm = 0.0
    iterations = 0

    for iterations in range(1, cfg.max_iterations + 1):
        h, g, _, _ = _normal_equations(x, pairs, omega, cfg.huber_delta)
        evals = np.linalg.eigvalsh(h)
        if evals[0] < cfg.conditioning_threshold * max(evals[-1], 1e-300):
            partial = _finalize_report(x, pairs, omega, cfg, trace,
                                       converged=False, iterations=iterations)
            raise SingularSystemError(
                "normal matrix is rank deficient; plane normals do not "
                "constrain all six degrees of freedom",
                report=partial,
                eigenvalues=[float(v) for v in evals])

        step = None
        for _ in range(8):  # Levenberg fallback: scale diagonal on rejection
            h_damped = h + lm * np.diag(np.diag(h))
            delta_vec = np.linalg.solve(h_damped, -g)
            if np.linalg.norm(delta_vec) < cfg.update_tolerance:
                # at the optimum; a sub-tolerance step cannot move the objective
                converged = True
                step = delta_vec
                break
            candidate = boxplus(x, Twist6.from_vector(delta_vec))
            chi2_new = _robust_objective(candidate, pairs, omega, cfg.huber_delta)
            if chi2_new <= chi2 * (1.0 + 1e-12) + 1e-300:
                step = delta_vec
                x, chi2 = candidate, chi2_new
                lm = 0.0  # back to pure Gauss-Newton once steps behave
                break
            lm = max(lm * 10.0, 1e-6)
        if step is None:
            break  # no acceptable step; report non-convergence
        trace.append(chi2)
        if converged or np.linalg.norm(step) < cfg.update_tolerance:
            converged = True
            break

    return _finalize_report(x, pairs, omega, cfg, trace, converged, iterations)


def _finalize_report(x, pairs, omega, cfg, trace, converged, iterations):
    h, _, norms, weights = _normal_equations(x, pairs, omega, cfg.huber_delta)
    evals = np.linalg.eigvalsh(h)
    warning = bool(evals[0] < cfg.conditioning_threshold * max(evals[-1], 1e-300))
    per = [(pair.id, float(r), float(w))
           for pair, r, w in zip(pairs, norms, weights)]
    return CalibrationReport(extrinsic=x, per_measurement=per,
                             chi2_trace=list(trace), hessian_spectrum=evals,
                             converged=converged, condition_warning=warning,
                             iterations=iterations)


def conditioning_check(measurements, cfg: SolverConfig | None = None) -> ConditioningReport:
    """Eigen-spectrum of the unweighted normal matrix at the linearization point.

    Uses the closed-form initial guess when one is available, identity
    otherwise; flags a warning when the relative eigenvalue gap indicates
    unconstrained directions (similar normals).
    """
    cfg = cfg or SolverConfig()
    if len(measurements) < 1:
        raise InsufficientDataError("conditioning check needs >= 1 measurement")
    x = Isometry3.identity()
    if len(measurements) >= 3:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            try:
                x = initial_guess(measurements)
            except np.linalg.LinAlgError:
                pass
    omega = cfg.omega()
    h = np.zeros((6, 6))
    for pair in _aligned_pairs(measurements, x):
        _, jac = _residual_and_jacobian(x, pair)
        h += jac.T @ omega @ jac
    evals = np.linalg.eigvalsh(h)
    cutoff = cfg.conditioning_threshold * max(evals[-1], 1e-300)
    rank = int(np.sum(evals > cutoff))
    return ConditioningReport(eigenvalues=evals, warning=rank < 6, rank=rank)


def evaluate_error(estimate: Isometry3, ground_truth: Isometry3) -> tuple[float, float]:
    """Translation (m) and rotation (rad) error of the estimate vs truth."""
    delta = ground_truth.inverse() @ estimate
    return float(np.linalg.norm(delta.translation)), rotation_angle(delta.rotation)
