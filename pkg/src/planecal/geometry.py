"""Plane and rigid-transform algebra.

A plane is stored as a unit normal ``n`` and signed distance ``d`` with the
locus ``n . x + d = 0``; the point of the plane closest to the origin is
``-n d``.  Rigid transforms act on points as ``x' = R x + t``, which induces
``n' = R n`` and ``d' = d - (R n)^T t`` on plane coefficients.  The sign of
the distance update is pinned by the point-set consistency test (transform
three points of the plane, refit, compare) rather than by convention alone:
getting it wrong silently mirrors every downstream calibration result.

Perturbations use a left-multiplicative axis-angle chart,
``X ⊞ δ = (exp(δθ) R, exp(δθ) t + δt)``, with twist ordering [δt | δθ]; the
analytic Jacobian of the plane transform in this chart is what the
calibration solver consumes.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import DegenerateGeometryError

# Type invariants (unit norm, orthonormality) are enforced to this tolerance.
UNIT_TOL = 1e-9


def _frozen(a, shape) -> np.ndarray:
    out = np.array(a, dtype=float).reshape(shape)
    out.flags.writeable = False
    return out


def skew(v) -> np.ndarray:
    """Cross-product matrix: skew(v) @ u == cross(v, u)."""
    x, y, z = np.asarray(v, dtype=float)
    return np.array([[0.0, -z, y], [z, 0.0, -x], [-y, x, 0.0]])


def axis_angle_to_matrix(w) -> np.ndarray:
    """Rodrigues rotation from an axis-angle 3-vector.

    Uses the series expansion below 1e-9 rad so the map stays smooth through
    zero (the solver differentiates through it numerically in tests).
    """
    w = np.asarray(w, dtype=float)
    theta = float(np.linalg.norm(w))
    s = skew(w)
    if theta < 1e-9:
        return np.eye(3) + s + 0.5 * (s @ s)
    a = math.sin(theta) / theta
    b = (1.0 - math.cos(theta)) / theta**2
    return np.eye(3) + a * s + b * (s @ s)


def rotation_angle(r) -> float:
    """Rotation angle in [0, pi] of an orthonormal matrix.

    atan2 of the skew-part norm against the trace: unlike plain arccos this
    has no precision floor near zero, which matters when asserting sub-1e-8
    recovery errors.
    """
    s = 0.5 * math.hypot(r[2, 1] - r[1, 2], r[0, 2] - r[2, 0], r[1, 0] - r[0, 1])
    c = (float(np.trace(r)) - 1.0) / 2.0
    return math.atan2(s, c)


@dataclass(frozen=True)
class Plane:
    """Oriented plane ``n . x + d = 0`` with unit normal (meters for d)."""

    normal: np.ndarray
    dist: float

    def __post_init__(self):
        n = _frozen(self.normal, (3,))
        if abs(np.linalg.norm(n) - 1.0) > UNIT_TOL:
            raise ValueError(f"plane normal must be unit length, got |n|={np.linalg.norm(n)}")
        object.__setattr__(self, "normal", n)
        object.__setattr__(self, "dist", float(self.dist))

    def flipped(self) -> "Plane":
        return Plane(-self.normal, -self.dist)

    def point_distances(self, points) -> np.ndarray:
        """Signed point-to-plane distances, vectorized over rows."""
        pts = np.asarray(points, dtype=float)
        return pts @ self.normal + self.dist


@dataclass(frozen=True)
class Isometry3:
    """Rigid transform x' = R x + t."""

    rotation: np.ndarray
    translation: np.ndarray

    def __post_init__(self):
        r = _frozen(self.rotation, (3, 3))
        t = _frozen(self.translation, (3,))
        if np.max(np.abs(r.T @ r - np.eye(3))) > UNIT_TOL:
            raise ValueError("rotation is not orthonormal")
        if abs(np.linalg.det(r) - 1.0) > UNIT_TOL:
            raise ValueError("rotation has det != +1")
        object.__setattr__(self, "rotation", r)
        object.__setattr__(self, "translation", t)

    @staticmethod
    def identity() -> "Isometry3":
        return Isometry3(np.eye(3), np.zeros(3))

    def compose(self, other: "Isometry3") -> "Isometry3":
        """self ∘ other: apply ``other`` first."""
        return Isometry3(self.rotation @ other.rotation,
                         self.rotation @ other.translation + self.translation)

    def __matmul__(self, other: "Isometry3") -> "Isometry3":
        return self.compose(other)

    def inverse(self) -> "Isometry3":
        rt = self.rotation.T
        return Isometry3(rt, -(rt @ self.translation))

    def apply(self, points) -> np.ndarray:
        """Transform one point (3,) or many (N, 3)."""
        pts = np.asarray(points, dtype=float)
        return pts @ self.rotation.T + self.translation


@dataclass(frozen=True)
class Twist6:
    """Small SE(3) perturbation, ordered [d_translation | d_rotation]."""

    d_translation: np.ndarray
    d_rotation: np.ndarray

    def __post_init__(self):
        dt = _frozen(self.d_translation, (3,))
        dr = _frozen(self.d_rotation, (3,))
        if not (np.all(np.isfinite(dt)) and np.all(np.isfinite(dr))):
            raise ValueError("twist components must be finite")
        object.__setattr__(self, "d_translation", dt)
        object.__setattr__(self, "d_rotation", dr)

    @staticmethod
    def zero() -> "Twist6":
        return Twist6(np.zeros(3), np.zeros(3))

    @staticmethod
    def from_vector(v) -> "Twist6":
        v = np.asarray(v, dtype=float).reshape(6)
        return Twist6(v[:3], v[3:])

    def as_vector(self) -> np.ndarray:
        return np.concatenate([self.d_translation, self.d_rotation])


@dataclass(frozen=True)
class PlaneError:
    """4D plane-to-plane residual: projected origin-distance gap + normal gap."""

    e_dist: float
    e_normal: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "e_dist", float(self.e_dist))
        object.__setattr__(self, "e_normal", _frozen(self.e_normal, (3,)))

    def as_vector(self) -> np.ndarray:
        """Stacked [e_dist, e_normal], matching the solver's weight layout."""
        return np.concatenate([[self.e_dist], self.e_normal])


def canonicalize(raw_normal, raw_dist: float) -> Plane:
    """Normalize coefficients and fix the (n, d) / (-n, -d) sign ambiguity.

    The canonical representative has ``dist <= 0``; planes through the origin
    are oriented so the first nonzero normal component is positive.  The error
    metric is sign sensitive, so every stored plane must be canonical.
    """
    n = np.asarray(raw_normal, dtype=float).reshape(3)
    norm = float(np.linalg.norm(n))
    if norm <= 1e-9:
        raise DegenerateGeometryError("cannot canonicalize a (near-)zero normal",
                                      norm=norm)
    n = n / norm
    d = float(raw_dist) / norm
    if abs(d) <= 1e-12:
        # through-origin plane; snapping tiny |d| keeps the orientation rule
        # stable when round-off moves d across zero
        d = 0.0
        # "first nonzero" means first component above tolerance, again so that
        # ~1e-16 jitter of exact zeros cannot flip the canonical sign (a unit
        # normal always has a component >= 1/sqrt(3))
        first = n[np.flatnonzero(np.abs(n) > 1e-9)[0]]
        if first < 0:
            n = -n
    elif d > 0:
        n, d = -n, -d
    return Plane(n, d)


def transform_plane_coeffs(x: Isometry3, pi: Plane) -> tuple[np.ndarray, float]:
    """Raw coefficient map (n', d') = (R n, d - (R n)^T t), no canonicalization.

    This is the smooth map the analytic Jacobian differentiates; the public
    `transform_plane` canonicalizes it, which is discontinuous at sign flips.
    """
    n = x.rotation @ pi.normal
    d = pi.dist - float(n @ x.translation)
    return n, d


def transform_plane(x: Isometry3, pi: Plane) -> Plane:
    """Plane observed in frame A expressed in frame B, where x maps A points to B."""
    n, d = transform_plane_coeffs(x, pi)
    return canonicalize(n, d)


def boxplus(x: Isometry3, delta: Twist6) -> Isometry3:
    """Left-multiplicative perturbation: (exp(δθ) R, exp(δθ) t + δt)."""
    dr = axis_angle_to_matrix(delta.d_rotation)
    return Isometry3(dr @ x.rotation, dr @ x.translation + delta.d_translation)


def transform_jacobian(x: Isometry3, pi: Plane) -> np.ndarray:
    """Derivative of the raw plane transform w.r.t. the twist at zero.

    Rows are [normal (3); distance (1)], columns [δt (3) | δθ (3)]:

        [ 0        -skew(R n) ]
        [ -(R n)^T  0         ]

    The distance row carries the opposite sign of the commonly printed
    ``n^T R^T`` block: under ``n . x + d = 0`` the transformed distance is
    ``d - (R n)^T t``, which the finite-difference and point-set oracles in
    the test suite confirm.
    """
    rn = x.rotation @ pi.normal
    j = np.zeros((4, 6))
    j[:3, 3:] = -skew(rn)
    j[3, :3] = -rn
    return j


def closest_point(pi: Plane) -> np.ndarray:
    """Point of the plane closest to the origin: -n d."""
    return -pi.normal * pi.dist


def plane_error(pi_i: Plane, pi_j: Plane) -> PlaneError:
    """4D plane-to-plane error: [n_i . (p_i - p_j); n_j - n_i]."""
    e_dist = float(pi_i.normal @ (closest_point(pi_i) - closest_point(pi_j)))
    return PlaneError(e_dist, pi_j.normal - pi_i.normal)
