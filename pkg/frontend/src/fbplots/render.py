"""Render serving-experiment figures from fluidbatch CSV outputs.

Reads only the CSV schemas the simulator's CLI emits (summary.csv,
slo_sweep.csv, ablation.csv) and reproduces the standard panel layouts:
the four metric panels against arrival rate, violation rate against the
latency SLO, and throughput against static batch size with the platform
peak as a dashed reference. No simulation logic lives here.

Usage:
    fbplots --input summary.csv --panel four-panel-rates --output fig.png
"""

from __future__ import annotations

import argparse
import csv
import sys
from dataclasses import dataclass
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt

PANELS = ("four-panel-rates", "violation-vs-slo", "ablation-throughput")


class CsvSchemaError(ValueError):
    """The input CSV does not carry the columns the panel needs."""


@dataclass(frozen=True)
class FigureSpec:
    input_csv: str
    panel: str
    output: str
    series_column: str = "policy"

    def __post_init__(self):
        if self.panel not in PANELS:
            raise CsvSchemaError(f"unknown panel {self.panel!r}; choose from {PANELS}")


def read_rows(path: str, required: set[str], series_column: str) -> list[dict]:
    with open(path, newline="") as f:
        reader = csv.DictReader(f)
        columns = set(reader.fieldnames or ())
        missing = (required | {series_column}) - columns
        if missing:
            raise CsvSchemaError(
                f"{path}: missing columns {sorted(missing)}; found {sorted(columns)}"
            )
        rows = list(reader)
    if not rows:
        raise CsvSchemaError(f"{path}: no data rows")
    return rows


def series_of(rows: list[dict], key: str) -> list[str]:
    seen: list[str] = []
    for r in rows:
        if r[key] not in seen:
            seen.append(r[key])
    return seen


def _plot_lines(ax, rows, series_column, x_col, y_col):
    for name in series_of(rows, series_column):
        pts = sorted(
            ((float(r[x_col]), float(r[y_col])) for r in rows if r[series_column] == name)
        )
        ax.plot([p[0] for p in pts], [p[1] for p in pts], marker="o", label=name)


def four_panel_rates(rows: list[dict], series_column: str):
    fig, axes = plt.subplots(2, 2, figsize=(9, 7))
    panels = [
        ("processing_rate", "Processing rate (inf/s)", False),
        ("avg_latency", "Avg latency (s)", True),
        ("utilisation", "Utilisation", False),
        ("p99_latency", "Tail latency p99 (s)", True),
    ]
    slo = float(rows[0]["slo"])
    for ax, (col, label, draw_slo) in zip(axes.flat, panels):
        _plot_lines(ax, rows, series_column, "arrival_rate", col)
        if draw_slo:
            ax.axhline(slo, linestyle=":", color="grey", label="SLO")
        ax.set_xlabel("Arrival rate (samples/s)")
        ax.set_ylabel(label)
        ax.grid(alpha=0.3)
    axes.flat[0].legend(fontsize=8)
    fig.tight_layout()
    return fig


def violation_vs_slo(rows: list[dict], series_column: str):
    fig, ax = plt.subplots(figsize=(5.5, 4))
    _plot_lines(ax, rows, series_column, "slo", "violation_rate")
    ax.set_xlabel("Latency SLO (s)")
    ax.set_ylabel("SLO violation rate")
    ax.set_ylim(-0.02, 1.02)
    ax.grid(alpha=0.3)
    ax.legend(fontsize=8)
    fig.tight_layout()
    return fig


def ablation_throughput(rows: list[dict], series_column: str):
    fig, ax = plt.subplots(figsize=(5.5, 4))
    _plot_lines(ax, rows, series_column, "batch_size", "gops")
    peak = max(float(r["peak_gops"]) for r in rows)
    ax.axhline(peak, linestyle="--", color="black", label="peak")
    ax.set_xlabel("Batch size")
    ax.set_ylabel("Throughput (GOp/s)")
    ax.grid(alpha=0.3)
    ax.legend(fontsize=8)
    fig.tight_layout()
    return fig


REQUIRED_COLUMNS = {
    "four-panel-rates": {"arrival_rate", "slo", "processing_rate", "avg_latency",
                         "p99_latency", "utilisation"},
    "violation-vs-slo": {"slo", "violation_rate"},
    "ablation-throughput": {"batch_size", "gops", "peak_gops"},
}

BUILDERS = {
    "four-panel-rates": four_panel_rates,
    "violation-vs-slo": violation_vs_slo,
    "ablation-throughput": ablation_throughput,
}


def build_figure(spec: FigureSpec):
    rows = read_rows(spec.input_csv, REQUIRED_COLUMNS[spec.panel], spec.series_column)
    return BUILDERS[spec.panel](rows, spec.series_column)


def render(spec: FigureSpec) -> str:
    """Render the panel and write the image; returns the output path."""
    fig = build_figure(spec)
    out = Path(spec.output)
    out.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(out)
    plt.close(fig)
    return str(out)


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="fbplots", description=__doc__.splitlines()[0])
    parser.add_argument("--input", required=True, help="CSV produced by the fluidbatch CLI")
    parser.add_argument("--panel", required=True, choices=PANELS)
    parser.add_argument("--output", required=True, help="image path (.png, .pdf, .svg)")
    parser.add_argument("--series-column", default="policy")
    args = parser.parse_args(argv)
    try:
        path = render(FigureSpec(args.input, args.panel, args.output, args.series_column))
    except (CsvSchemaError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    print(f"wrote {path}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
