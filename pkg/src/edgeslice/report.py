"""CSV/summary emission for latency samples. Byte-stable for fixed inputs."""
from __future__ import annotations

import os
import statistics
from dataclasses import dataclass
from math import ceil

from .errors import ConfigInvalidError
from .netsim import LatencySample

CSV_HEADER = "scenario,mode,operation,request_index,rtt_ms"


@dataclass(frozen=True)
class SummaryRow:
    scenario: str
    mode: str
    operation: str
    count: int
    mean_ms: float
    median_ms: float
    p95_ms: float
    min_ms: float
    max_ms: float


def percentile_95(values: list[float]) -> float:
    """Nearest-rank 95th percentile."""
    ranked = sorted(values)
    rank = ceil(0.95 * len(ranked))
    return ranked[rank - 1]


def summarize(samples: list[LatencySample]) -> list[SummaryRow]:
    groups: dict[tuple[str, str, str], list[float]] = {}
    for sample in samples:
        key = (sample.scenario, sample.mode, sample.operation)
        groups.setdefault(key, []).append(sample.rtt_ms)
    rows = []
    for key in sorted(groups):
        values = groups[key]
        rows.append(
            SummaryRow(
                scenario=key[0],
                mode=key[1],
                operation=key[2],
                count=len(values),
                mean_ms=statistics.fmean(values),
                median_ms=statistics.median(values),
                p95_ms=percentile_95(values),
                min_ms=min(values),
                max_ms=max(values),
            )
        )
    return rows


def emit_results(samples: list[LatencySample], out_dir: str) -> tuple[str, str]:
    """Write samples.csv and summary.txt; returns their paths."""
    if not samples:
        raise ConfigInvalidError("no samples to emit")
    os.makedirs(out_dir, exist_ok=True)
    samples_path = os.path.join(out_dir, "samples.csv")
    summary_path = os.path.join(out_dir, "summary.txt")
    lines = [CSV_HEADER]
    for s in samples:
        lines.append(
            f"{s.scenario},{s.mode},{s.operation},{s.request_index},{s.rtt_ms:.6f}"
        )
    with open(samples_path, "w", encoding="ascii", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")
    summary_lines = []
    for row in summarize(samples):
        summary_lines.append(
            f"scenario={row.scenario} mode={row.mode} operation={row.operation}"
            f" count={row.count} mean_ms={row.mean_ms:.6f} median_ms={row.median_ms:.6f}"
            f" p95_ms={row.p95_ms:.6f} min_ms={row.min_ms:.6f} max_ms={row.max_ms:.6f}"
        )
    with open(summary_path, "w", encoding="ascii", newline="\n") as fh:
        fh.write("\n".join(summary_lines) + "\n")
    return samples_path, summary_path
