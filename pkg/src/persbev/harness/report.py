"""Tabular reports and their CSV serialization."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

from ..errors import FormatError, PersBEVError

CENSUS_COLUMNS = (
    "config_id", "quartile", "under_sampled_fraction", "duplication_factor",
    "invalid_fraction", "tensor_bytes",
)
DETECTION_COLUMNS = ("scene_id", "class", "x", "z", "height", "l", "w", "h", "yaw", "score")


class ReportIOError(PersBEVError, OSError):
    """Reading or writing a report file failed."""


@dataclass
class BenchReport:
    """Rows of named values with a fixed column order."""

    columns: tuple[str, ...]
    rows: list[dict] = field(default_factory=list)

    def add(self, **values):
        missing = set(self.columns) - set(values)
        extra = set(values) - set(self.columns)
        if missing or extra:
            raise FormatError(f"row mismatch: missing {sorted(missing)}, unexpected {sorted(extra)}")
        self.rows.append(values)

    def column(self, name: str) -> list:
        return [r[name] for r in self.rows]

    def __len__(self):
        return len(self.rows)


def format_value(v) -> str:
    """Locale-independent text that parses back to the same value."""
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, int):
        return str(v)
    if isinstance(v, float):
        if math.isnan(v):
            return "nan"
        if math.isinf(v):
            return "inf" if v > 0 else "-inf"
        return repr(v)
    if hasattr(v, "item"):  # numpy scalars
        return format_value(v.item())
    return str(v)


def parse_value(s: str):
    if s in ("true", "false"):
        return s == "true"
    try:
        return int(s)
    except ValueError:
        pass
    try:
        return float(s)
    except ValueError:
        return s


def emit_report(report: BenchReport, path, format: str = "csv"):
    """Write ``report`` as CSV: header row, then one line per row."""
    if format != "csv":
        raise FormatError(f"unsupported report format {format!r}")
    try:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(report.columns)
            for row in report.rows:
                writer.writerow([format_value(row[c]) for c in report.columns])
    except OSError as exc:
        raise ReportIOError(f"cannot write report to {path}: {exc}") from exc
    return path


def read_report(path) -> BenchReport:
    try:
        with open(path, newline="", encoding="utf-8") as fh:
            reader = csv.reader(fh)
            try:
                header = next(reader)
            except StopIteration:
                raise FormatError(f"{path} is empty; expected a header row") from None
            report = BenchReport(tuple(header))
            for line in reader:
                if len(line) != len(header):
                    raise FormatError(f"{path}: row has {len(line)} fields, header has {len(header)}")
                report.rows.append({c: parse_value(v) for c, v in zip(header, line)})
    except OSError as exc:
        raise ReportIOError(f"cannot read report {path}: {exc}") from exc
    return report


def census_report(entries, channels: int = 64, bytes_per_element: int = 4) -> BenchReport:
    """One row per depth quartile (plus ``all``) for each ``(config_id, census)``.

    ``tensor_bytes`` is the voxel-tensor payload of the voxels in that quartile.
    """
    report = BenchReport(CENSUS_COLUMNS)
    per_voxel = channels * bytes_per_element
    for config_id, census in entries:
        for r in census.records:
            report.add(
                config_id=config_id,
                quartile=str(r.quartile),
                under_sampled_fraction=r.under_sampled_fraction,
                duplication_factor=r.duplication_factor,
                invalid_fraction=r.invalid_cell_fraction,
                tensor_bytes=r.n_voxels * per_voxel,
            )
        report.add(
            config_id=config_id,
            quartile="all",
            under_sampled_fraction=census.under_sampled_fraction,
            duplication_factor=census.duplication_factor,
            invalid_fraction=census.invalid_cell_fraction,
            tensor_bytes=census.n_voxels * per_voxel,
        )
    return report


def detections_report(items) -> BenchReport:
    """``items`` is an iterable of ``(scene_id, Detection)``."""
    report = BenchReport(DETECTION_COLUMNS)
    for scene_id, det in items:
        b = det.box
        report.add(
            scene_id=scene_id, **{"class": det.class_id},
            x=b.center.x, z=b.center.z, height=b.center.y,
            l=b.size[0], w=b.size[1], h=b.size[2], yaw=b.yaw, score=det.score,
        )
    return report
