"""Synthetic scenes, the end-to-end pipeline, benchmarks and reports."""

from .bench import density_sweep, e2e_report, latency_bench
from .config import PipelineConfig, load_config
from .pipeline import run_batch, run_pipeline
from .report import BenchReport, emit_report, read_report
from .scene import Scene, synth_scene
from .tensorio import load_tensor, save_tensor
