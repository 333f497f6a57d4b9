"""
What resampling costs
=====================

Gathering the frustum onto a regular 0.64 m voxel grid leaves near-field
cells unread, reads far-field cells many times, and allocates voxels that
the camera never sees.
"""

from persbev.geometry import default_grid
from persbev.sampling import memory_report, default_voxel_grid, perspective_invalid_fraction, sampling_census

grid, spec = default_grid(), default_voxel_grid()
census = sampling_census(grid, spec)

print("quartile   depth [m]   never read   reads per read cell   out-of-view voxels")
for r in census.records:
    print(
        f"{r.quartile:>8}   {r.depth_lo:4.0f}-{r.depth_hi:<4.0f}   {r.under_sampled_fraction:10.3f}"
        f"   {r.duplication_factor:19.2f}   {r.invalid_cell_fraction:18.3f}"
    )

###############################################################################
# The perspective lattice has no out-of-view cells at all.

print("voxel grid out-of-view fraction:", round(census.invalid_cell_fraction, 4))
print("perspective lattice out-of-view fraction:", perspective_invalid_fraction(grid))

###############################################################################
# Tensor payloads at 64 channels.

for key, value in memory_report(grid, spec, channels=64, census=census).items():
    print(f"{key:>20}: {value / 2**20:8.2f} MiB")
