"""
Latency and anchor density
==========================

Stage timings for the sampling-free path against grid sampling at identical
shapes, then a sweep that densifies the voxel grid laterally.
"""

from dataclasses import replace

from persbev.harness.bench import density_sweep, latency_bench
from persbev.harness.config import PipelineConfig

base = PipelineConfig()
rep = latency_bench([("none", base), ("grid_nearest", replace(base, sampling_mode="grid_nearest"))])
for row in rep.rows:
    stages = ", ".join(f"{k} {row[k + '_us'] / 1000:.1f}" for k in ("lift", "sample", "collapse", "decode"))
    print(f"{row['config_id']:>12}: total {row['total_us'] / 1000:.1f} ms ({stages}) x{row['ratio_to_none']:.2f}")

###############################################################################
# Finer voxels cut the quantization error but the tensor grows with them.

sweep = density_sweep(base, "x_density", (1, 2, 4), seeds=range(5))
for row in sweep.rows:
    print(
        f"factor {row['factor']}: nx {row['nx']:4d}, {row['total_bytes'] / 2**20:7.1f} MiB, "
        f"duplication {row['duplication_factor']:5.2f}, error {row['mean_translation_error']:.3f} m"
    )
