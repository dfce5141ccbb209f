"""Figure builders over spillsim output files.

Figures are deterministic for fixed inputs: fixed size, no timestamps, and
PNGs written without the software metadata chunk, so regeneration is
byte-stable.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from .io import read_ledger, read_pairs, read_pairs_meta, read_sweep

FIGURE_KINDS = ("decay", "bias", "scaling", "ledger-overlay")

# covariances at or below this are float dust from the exact oracle
COV_FLOOR = 1e-12


@dataclass(frozen=True)
class FigureSpec:
    """Inputs, kind, output path, and axis scales for one figure."""

    kind: str
    inputs: dict[str, str]
    output: str
    axis_scales: dict[str, str] = field(default_factory=dict)

    def __post_init__(self) -> None:
        if self.kind not in FIGURE_KINDS:
            raise ValueError(f"unknown figure kind {self.kind!r}, expected one of {FIGURE_KINDS}")
        for name, path in self.inputs.items():
            if not Path(path).exists():
                raise FileNotFoundError(f"input {name} not found: {path}")


def _save(fig, output: str) -> str:
    Path(output).parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(output, dpi=120, metadata={"Software": None})
    plt.close(fig)
    return output


def decay_points(rows: list[dict[str, str]]) -> tuple[np.ndarray, np.ndarray]:
    """Mean |covariance| per rounds-since-last-interaction, over pairs in the
    stated regime with a positive gap."""
    buckets: dict[int, list[float]] = {}
    for row in rows:
        if row["never_interacting"] == "1" or row["in_regime"] != "1":
            continue
        gap = int(row["gap_later"])
        cov = abs(float(row["cov"]))
        if gap >= 1 and cov > COV_FLOOR:
            buckets.setdefault(gap, []).append(cov)
    gaps = np.array(sorted(buckets), dtype=np.float64)
    means = np.array([np.mean(buckets[int(gap)]) for gap in gaps])
    return gaps, means


def fit_log_slope(gaps: np.ndarray, means: np.ndarray) -> float:
    if gaps.size < 2:
        raise ValueError("need at least two decay points to fit a slope")
    return float(np.polyfit(gaps, np.log(means), 1)[0])


def plot_decay(spec: FigureSpec) -> tuple[str, float | None]:
    """Log-scale covariance decay against time since the last interaction,
    with the fitted slope and the -1/t_mix reference line."""
    rows = read_pairs(spec.inputs["pairs"])
    t_mix = float(read_pairs_meta(spec.inputs["meta"])["t_mix"])
    gaps, means = decay_points(rows)
    fig, ax = plt.subplots(figsize=(6, 4))
    slope = None
    if gaps.size == 0:
        warnings.warn("no covariance rows to plot; emitting an empty decay figure")
        ax.set_title("covariance decay (no data)")
    else:
        ax.plot(gaps, means, "o", label="mean |cov|")
        if gaps.size >= 2:
            slope = fit_log_slope(gaps, means)
            grid = np.linspace(gaps.min(), gaps.max(), 50)
            anchor = math.log(means[0]) - slope * gaps[0]
            ax.plot(grid, np.exp(anchor + slope * grid), "-", label=f"fit slope {slope:.3f}")
            ref = math.log(means[0]) + gaps[0] / t_mix
            ax.plot(
                grid,
                np.exp(ref - grid / t_mix),
                "--",
                label=f"reference slope {-1 / t_mix:.3f}",
            )
        ax.set_yscale(spec.axis_scales.get("y", "log"))
        ax.set_title("covariance decay since last interaction")
        ax.legend()
    ax.set_xlabel("rounds since last interaction")
    ax.set_ylabel("|covariance|")
    return _save(fig, spec.output), slope


def plot_bias(spec: FigureSpec) -> str:
    """Bias against the truncation radius with the decay-bound overlay."""
    rows = read_sweep(spec.inputs["sweep"])
    radii = np.array([float(row["r"]) for row in rows])
    bias = np.array([float(row["bias"]) for row in rows])
    t_mix = float(rows[0]["t_mix"]) if rows else 1.0
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.plot(radii, bias, "o-", label="measured bias")
    if rows:
        grid = np.linspace(radii.min(), radii.max(), 100)
        ax.plot(grid, 2 * np.exp(-grid / t_mix), "--", label="2 exp(-r / t_mix)")
    ax.set_yscale(spec.axis_scales.get("y", "log"))
    ax.set_xlabel("truncation radius r")
    ax.set_ylabel("bias")
    ax.set_title("bias versus truncation radius")
    ax.legend()
    return _save(fig, spec.output)


def plot_scaling(spec: FigureSpec) -> str:
    """Mean-squared error against the population-time size, bound overlaid."""
    rows = read_sweep(spec.inputs["sweep"])
    size = np.array([float(row["n"]) * float(row["horizon"]) for row in rows])
    mse = np.array([float(row["mse"]) for row in rows])
    bound = np.array([float(row["mse_bound"]) for row in rows])
    order = np.argsort(size)
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.plot(size[order], mse[order], "o-", label="measured MSE")
    ax.plot(size[order], bound[order], "--", label="MSE bound")
    ax.set_xscale(spec.axis_scales.get("x", "log"))
    ax.set_yscale(spec.axis_scales.get("y", "log"))
    ax.set_xlabel("N x T")
    ax.set_ylabel("MSE")
    ax.set_title("MSE scaling")
    ax.legend()
    return _save(fig, spec.output)


def plot_ledger_overlay(spec: FigureSpec) -> str:
    """Measured-versus-bound bars for every ledger row."""
    rows = read_ledger(spec.inputs["ledger"])
    names = [row["name"] for row in rows]
    measured = np.array([float(row["measured"]) for row in rows])
    bounds = np.array([float(row["bound"]) for row in rows])
    x = np.arange(len(names))
    fig, ax = plt.subplots(figsize=(7, 4))
    ax.bar(x - 0.2, measured, width=0.4, label="measured")
    ax.bar(x + 0.2, bounds, width=0.4, label="bound")
    ax.set_xticks(x)
    ax.set_xticklabels(names, rotation=20, ha="right")
    ax.set_yscale(spec.axis_scales.get("y", "linear"))
    ax.set_title("bound ledger")
    ax.legend()
    fig.tight_layout()
    return _save(fig, spec.output)


def plot(spec: FigureSpec):
    """Dispatch on the figure kind; returns the written path (decay figures
    also return the fitted slope)."""
    if spec.kind == "decay":
        return plot_decay(spec)
    if spec.kind == "bias":
        return plot_bias(spec)
    if spec.kind == "scaling":
        return plot_scaling(spec)
    return plot_ledger_overlay(spec)
