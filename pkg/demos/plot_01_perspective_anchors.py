"""
Perspective anchors
===================

Anchors are laid out uniformly in image and depth coordinates. Once
inverse-projected they fan out: the lateral gap between neighbours grows
linearly with depth.
"""

import numpy as np

from persbev.geometry import anchor_spacing_profile, default_grid, project

grid = default_grid()
print("grid (W, H, D):", grid.shape)

###############################################################################
# Lateral anchor spacing at a few depths. It equals ``d * stride / fx``.

profile = anchor_spacing_profile(grid)
for depth, spacing in profile[::11]:
    print(f"depth {depth:5.1f} m -> spacing {spacing:.3f} m")

###############################################################################
# Every anchor projects back onto its feature-cell center.

err = np.abs(project(grid.intr, grid.world_anchors) - grid.frustum_anchors).max()
print(f"max reprojection error: {err:.1e}")

###############################################################################
# Ground-plane footprint of the perspective BEV lattice. It is a wedge, and
# every cell lies inside the field of view.

xz = grid.ground_anchors()
print("x span at nearest bin: %.2f .. %.2f m" % (xz[0, 0, 0], xz[-1, 0, 0]))
print("x span at farthest bin: %.2f .. %.2f m" % (xz[0, -1, 0], xz[-1, -1, 0]))
