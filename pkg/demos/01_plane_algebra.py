#!/usr/bin/env python3
"""Plane algebra walkthrough: representation, transforms, and the Jacobian.

Shows how planes are stored, how a rigid transform acts on plane
coefficients, and that the analytic Jacobian used by the solver agrees with
central finite differences.
"""

import numpy as np

from planecal import (
    Isometry3,
    Twist6,
    boxplus,
    canonicalize,
    closest_point,
    plane_error,
    transform_jacobian,
    transform_plane,
)
from planecal.geometry import axis_angle_to_matrix, transform_plane_coeffs

print("=== Plane representation ===")
plane = canonicalize((0.0, 0.0, 2.0), -4.0)   # any scale of (n, d) works
print(f"canonicalize((0,0,2), -4)  ->  normal {plane.normal}, dist {plane.dist}")
print(f"closest point to origin: {closest_point(plane)}  (the plane z = 2)")

print("\n=== Transforming a plane ===")
lift = Isometry3(np.eye(3), np.array([0.0, 0.0, 1.0]))
moved = transform_plane(lift, plane)
print(f"translate the frame contents by +1 m in z:  dist {plane.dist} -> {moved.dist}")

spin = Isometry3(axis_angle_to_matrix([0.0, np.pi / 2, 0.0]), np.zeros(3))
tilted = transform_plane(spin, plane)
print(f"rotate 90 deg about y: normal {plane.normal} -> {np.round(tilted.normal, 12)}")

print("\n=== Plane-to-plane error (what the solver minimizes) ===")
other = canonicalize((0.0, 0.0, 1.0), -2.5)
err = plane_error(plane, other)
print(f"z=2 vs z=2.5 planes: e_dist {err.e_dist:+.3f} m, e_normal {err.e_normal}")

print("\n=== Analytic Jacobian vs finite differences ===")
rng = np.random.default_rng(0)
x = Isometry3(axis_angle_to_matrix(rng.normal(size=3) * 0.5), rng.normal(size=3))
pi = canonicalize(rng.normal(size=3), rng.uniform(-4, 4))
analytic = transform_jacobian(x, pi)

step = 1e-6
numeric = np.zeros((4, 6))
for k in range(6):
    dv = np.zeros(6)
    dv[k] = step
    np_, dp = transform_plane_coeffs(boxplus(x, Twist6.from_vector(dv)), pi)
    nm, dm = transform_plane_coeffs(boxplus(x, Twist6.from_vector(-dv)), pi)
    numeric[:3, k] = (np_ - nm) / (2 * step)
    numeric[3, k] = (dp - dm) / (2 * step)

print(f"max |analytic - numeric| = {np.max(np.abs(analytic - numeric)):.2e}")
print("rows: [normal x,y,z; distance], cols: [dtx dty dtz | drx dry drz]")
print(np.array_str(analytic, precision=4, suppress_small=True))
