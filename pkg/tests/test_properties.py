"""Property-based checks of the plane algebra invariants."""

import numpy as np
from hypothesis import given, settings, strategies as st

from planecal.geometry import (
    Isometry3,
    axis_angle_to_matrix,
    canonicalize,
    closest_point,
    plane_error,
    transform_plane,
)

finite = st.floats(min_value=-100.0, max_value=100.0,
                   allow_nan=False, allow_infinity=False)
normal_component = st.floats(min_value=-10.0, max_value=10.0,
                             allow_nan=False, allow_infinity=False)


def vectors(elements, size=3):
    return st.lists(elements, min_size=size, max_size=size).map(np.array)


nonzero_normals = vectors(normal_component).filter(
    lambda v: np.linalg.norm(v) > 1e-6)

rotvecs = vectors(st.floats(min_value=-3.0, max_value=3.0,
                            allow_nan=False, allow_infinity=False))


@settings(max_examples=200, deadline=None)
@given(n=nonzero_normals, d=finite)
def test_canonicalize_is_idempotent_and_oriented(n, d):
    p = canonicalize(n, d)
    assert abs(np.linalg.norm(p.normal) - 1.0) < 1e-9
    assert p.dist <= 0.0 or (p.dist == 0.0 and p.normal[np.flatnonzero(p.normal)[0]] > 0)
    again = canonicalize(p.normal, p.dist)
    assert np.allclose(again.normal, p.normal, atol=1e-12)
    assert abs(again.dist - p.dist) < 1e-12


@settings(max_examples=200, deadline=None)
@given(n=nonzero_normals, d=finite, scale=st.floats(min_value=1e-3, max_value=1e3),
       flip=st.booleans())
def test_canonicalize_collapses_equivalent_coefficients(n, d, scale, flip):
    sign = -1.0 if flip else 1.0
    a = canonicalize(n, d)
    b = canonicalize(sign * scale * n, sign * scale * d)
    assert np.allclose(a.normal, b.normal, atol=1e-9)
    assert abs(a.dist - b.dist) < 1e-9 * max(1.0, abs(a.dist))


@settings(max_examples=200, deadline=None)
@given(n=nonzero_normals, d=finite)
def test_self_error_is_exactly_zero(n, d):
    p = canonicalize(n, d)
    err = plane_error(p, p)
    assert err.e_dist == 0.0
    assert np.all(err.e_normal == 0.0)


@settings(max_examples=200, deadline=None)
@given(n=nonzero_normals, d=finite)
def test_closest_point_lies_on_plane(n, d):
    p = canonicalize(n, d)
    cp = closest_point(p)
    assert abs(p.normal @ cp + p.dist) < 1e-9 * max(1.0, abs(p.dist))


@settings(max_examples=150, deadline=None)
@given(n=nonzero_normals, d=st.floats(min_value=-20.0, max_value=20.0),
       w=rotvecs, t=vectors(st.floats(min_value=-5.0, max_value=5.0,
                                      allow_nan=False, allow_infinity=False)))
def test_transform_inverse_round_trip(n, d, w, t):
    p = canonicalize(n, d)
    x = Isometry3(axis_angle_to_matrix(w), t)
    back = transform_plane(x.inverse(), transform_plane(x, p))
    assert np.allclose(back.normal, p.normal, atol=1e-9)
    assert abs(back.dist - p.dist) < 1e-9 * max(1.0, abs(p.dist))
