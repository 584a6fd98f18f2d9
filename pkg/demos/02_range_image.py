#!/usr/bin/env python3
"""Projection by ID: embed a simulated scan into a dense ring/azimuth image.

Renders the range image of a synthetic board placement to a PNG so you can
see exactly what the session UI shows the operator.
"""

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np

from planecal import NoiseSpec, default_rig, project_by_id, sample_board_pose, simulate_lidar
from planecal.projection import pixel_to_point

rig = default_rig()
rng = np.random.default_rng(12)
pose = sample_board_pose(rng, rig)
cloud = simulate_lidar(rig, pose, NoiseSpec(sigma_lidar=8e-3, rng_seed=1))
print(f"board placement produced {len(cloud)} lidar returns")

image = project_by_id(cloud, rig.lidar)
print(f"range image: {image.n_rings} rings x {image.width} columns, "
      f"{np.count_nonzero(image.filled)} filled pixels")

# every filled pixel points back at its source 3D point
ring, col = np.argwhere(image.filled)[0]
p = pixel_to_point(image, cloud, (ring, col))
print(f"pixel ({ring}, {col}) -> point {np.round(p, 3)} "
      f"(range {image.range[ring, col]:.3f} m)")

out = Path(__file__).parent / "output"
out.mkdir(exist_ok=True)
fig, ax = plt.subplots(figsize=(12, 3))
shown = np.ma.masked_where(~image.filled, image.range)
im = ax.imshow(shown, aspect="auto", cmap="viridis", origin="lower")
ax.set_xlabel("azimuth bin")
ax.set_ylabel("ring")
ax.set_title("projection-by-ID range image of one board placement")
fig.colorbar(im, label="range [m]")
fig.tight_layout()
fig.savefig(out / "range_image.png", dpi=110)
print(f"wrote {out / 'range_image.png'}")
