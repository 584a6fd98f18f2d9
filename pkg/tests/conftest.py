import numpy as np
import pytest

from planecal.geometry import Isometry3, Plane, axis_angle_to_matrix, canonicalize


def random_rotation(rng) -> np.ndarray:
    w = rng.normal(size=3)
    w = w / np.linalg.norm(w) * rng.uniform(0.0, np.pi * 0.95)
    return axis_angle_to_matrix(w)


def random_isometry(rng, t_scale=2.0) -> Isometry3:
    return Isometry3(random_rotation(rng), rng.normal(scale=t_scale, size=3))


def random_plane(rng, min_abs_dist=0.0) -> Plane:
    n = rng.normal(size=3)
    while np.linalg.norm(n) < 1e-3:
        n = rng.normal(size=3)
    d = rng.uniform(-5.0, 5.0)
    if min_abs_dist > 0.0:
        d = np.sign(d or 1.0) * (abs(d) + min_abs_dist)
    return canonicalize(n, d)


def plane_basis(plane) -> tuple[np.ndarray, np.ndarray]:
    """Two orthonormal vectors spanning the plane's direction space."""
    n = plane.normal
    ref = np.array([1.0, 0.0, 0.0]) if abs(n[0]) < 0.9 else np.array([0.0, 1.0, 0.0])
    u = np.cross(n, ref)
    u /= np.linalg.norm(u)
    v = np.cross(n, u)
    return u, v


@pytest.fixture
def rng():
    return np.random.default_rng(20240817)
