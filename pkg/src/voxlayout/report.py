"""Metrics report rendering: delimited text, CSV, and summary figures.

The text report always opens with the full configuration echo so a result
file is self-describing. Figures are optional conveniences rendered with
the Agg backend next to the delimited outputs.
"""

from __future__ import annotations

import csv
import os

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np

from . import binio
from .config import PipelineConfig, dump_config
from .errors import InvalidArgument, ParseError
from .metrics import MetricsReport

STATS_MAGIC = "FST1"


def report_text(report: MetricsReport) -> str:
    lines = ["# configuration"]
    for key, value in report.config.items():
        lines.append(f"{key} = {value}")
    lines.append("")
    lines.append("# per-scene metrics (I_p and OR scaled x1000)")
    for scene in report.scenes:
        for key in scene.values:
            lines.append(f"{scene.name}\t{key}\t{report.scaled(key, scene.values[key]):.6f}")
    lines.append("")
    lines.append("# aggregate")
    for key, value in report.aggregate().items():
        lines.append(f"all\t{key}\t{report.scaled(key, value):.6f}")
    return "\n".join(lines) + "\n"


def write_report(report: MetricsReport, out_dir: str, figures: bool = True) -> list[str]:
    """Write report.txt, metrics.csv, and figures/*.png; returns the paths."""
    os.makedirs(out_dir, exist_ok=True)
    paths = []

    txt_path = os.path.join(out_dir, "report.txt")
    with open(txt_path, "w", encoding="utf-8") as fh:
        fh.write(report_text(report))
    paths.append(txt_path)

    csv_path = os.path.join(out_dir, "metrics.csv")
    with open(csv_path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["scene", "metric", "value"])
        for scene in report.scenes:
            for key, value in scene.values.items():
                writer.writerow([scene.name, key, f"{report.scaled(key, value):.10g}"])
        for key, value in report.aggregate().items():
            writer.writerow(["all", key, f"{report.scaled(key, value):.10g}"])
    paths.append(csv_path)

    if figures and report.scenes:
        fig_dir = os.path.join(out_dir, "figures")
        os.makedirs(fig_dir, exist_ok=True)
        paths.extend(_write_figures(report, fig_dir))
    return paths


def _write_figures(report: MetricsReport, fig_dir: str) -> list[str]:
    paths = []
    agg = report.aggregate()
    if agg:
        keys = list(agg)
        values = [report.scaled(k, agg[k]) for k in keys]
        fig, ax = plt.subplots(figsize=(max(4, len(keys)), 3.2))
        ax.bar(range(len(keys)), values, color="#4878a8")
        ax.set_xticks(range(len(keys)))
        ax.set_xticklabels(keys, rotation=30, ha="right")
        ax.set_ylabel("aggregate value")
        ax.set_title("scene metrics (I_p, OR x1000)")
        fig.tight_layout()
        p = os.path.join(fig_dir, "aggregate.png")
        fig.savefig(p, dpi=120)
        plt.close(fig)
        paths.append(p)

    if len(report.scenes) > 1:
        keys = sorted({k for s in report.scenes for k in s.values})
        fig, ax = plt.subplots(figsize=(6, 3.2))
        xs = np.arange(len(report.scenes))
        for key in keys:
            ys = [report.scaled(key, s.values.get(key, np.nan)) for s in report.scenes]
            ax.plot(xs, ys, marker="o", label=key)
        ax.set_xticks(xs)
        ax.set_xticklabels([s.name for s in report.scenes], rotation=30, ha="right")
        ax.set_ylabel("value")
        ax.set_title("per-scene metrics")
        ax.legend(fontsize=7)
        fig.tight_layout()
        p = os.path.join(fig_dir, "per_scene.png")
        fig.savefig(p, dpi=120)
        plt.close(fig)
        paths.append(p)
    return paths


def config_echo(cfg: PipelineConfig) -> dict[str, str]:
    """Config as an ordered mapping for the report header."""
    echo = {}
    for line in dump_config(cfg).strip().splitlines():
        key, _, value = line.partition(" = ")
        echo[key] = value
    return echo


def save_feature_stats(mu: np.ndarray, sigma: np.ndarray, path: str) -> None:
    """Gaussian feature statistics: FST1, u32 dim, f64 mu, f64 sigma."""
    mu = np.asarray(mu, dtype=np.float64).reshape(-1)
    sigma = np.asarray(sigma, dtype=np.float64)
    if sigma.shape != (len(mu), len(mu)):
        raise InvalidArgument("sigma must be (dim, dim) for the given mu")
    with open(path, "wb") as fh:
        binio.write_magic(fh, STATS_MAGIC)
        binio.write_u32(fh, len(mu))
        binio.write_f64(fh, mu)
        binio.write_f64(fh, sigma.ravel())


def load_feature_stats(path: str) -> tuple[np.ndarray, np.ndarray]:
    with open(path, "rb") as fh:
        binio.read_magic(fh, STATS_MAGIC, path)
        (dim,) = binio.read_u32(fh, 1)
        mu = binio.read_f64(fh, dim)
        sigma = binio.read_f64(fh, dim * dim).reshape(dim, dim)
    if not np.isfinite(mu).all() or not np.isfinite(sigma).all():
        raise ParseError("non-finite feature statistics", path)
    return mu, sigma
