"""
Lift and collapse without resampling
====================================

A feature map is lifted by an outer product with a per-pixel depth
distribution, then summed over image rows. The result already sits on the
perspective BEV lattice.
"""

import numpy as np

from persbev.geometry import default_grid
from persbev.lift import FeatureMap, collapse_height, make_depth_mode, outer_product_lift, softmax_depth

grid = default_grid()
W, H, D = grid.shape
rng = np.random.default_rng(0)
feat = FeatureMap(rng.normal(size=(8, H, W)).astype(np.float32))

###############################################################################
# A normalized distribution spreads each feature across depth without
# changing its total.

depth = softmax_depth(rng.normal(size=(D, H, W)))
lifted = outer_product_lift(feat, depth)
print("lifted shape:", lifted.data.shape)
print("max |sum over depth - feature|:", np.abs(lifted.data.sum(axis=1) - feat.data).max())

bev = collapse_height(lifted)
print("perspective BEV shape (C, D, W):", bev.data.shape)

###############################################################################
# With the degenerate all-ones distribution every depth slice is identical,
# so depth cannot be recovered from the BEV feature.

flat = collapse_height(outer_product_lift(feat, make_depth_mode("uniform_one", shape=(D, H, W))))
print("slices identical:", bool(np.all(flat.data == flat.data[:, :1])))
