"""Exposure indicators, exact exposure probabilities, and the truncated
inverse-probability estimator of the treatment effect.

Exposure of cell (i, t) to arm a at radius r means the realized assignment
equals a on the whole spatio-temporal neighborhood of (i, t).  Because
assignments are cluster-constant fair coins, the exposure probability is
exactly 2^(-m) where m counts the clusters that neighborhood touches; no
Monte Carlo is involved.
"""

from __future__ import annotations

import io
import math
from dataclasses import dataclass

import numpy as np

from .design import AssignmentMatrix, VerticalDesign, clusters_touching
from .env import OutcomePanel
from .graphs import GraphSequence

# Largest touched-cluster count whose probability 2^(-m) is still a normal
# float; beyond this the cell is reported as degenerate instead of rounding
# the weight toward zero.
MAX_EXACT_POW = 1022


class DegenerateExposureError(ValueError):
    """Exposure probability underflows the exact power-of-two range."""

    def __init__(self, i: int, t: int, count: int):
        super().__init__(
            f"cell (i={i}, t={t}) touches {count} clusters; 2^-{count} is not "
            f"an exact normal float (limit {MAX_EXACT_POW})"
        )
        self.cell = (i, t)
        self.count = count


def exposure_count(g: GraphSequence, d: VerticalDesign, i: int, t: int, r: int) -> int:
    """Number of clusters touched by the radius-r neighborhood of (i, t)."""
    return len(clusters_touching(d, g.spatio_temporal_neighborhood(i, t, r)))


def exposure_probability(g: GraphSequence, d: VerticalDesign, i: int, t: int, r: int) -> float:
    """Exact 2^(-m) with m the touched-cluster count."""
    m = exposure_count(g, d, i, t, r)
    if m > MAX_EXACT_POW:
        raise DegenerateExposureError(i, t, m)
    return math.ldexp(1.0, -m)


def exposure_indicator(
    g: GraphSequence,
    d: VerticalDesign,
    w: AssignmentMatrix | np.ndarray,
    i: int,
    t: int,
    a: int,
    r: int,
) -> int:
    """1 iff w equals a on every cell of the spatio-temporal neighborhood."""
    warr = np.asarray(getattr(w, "w", w))
    for j, tau in g.spatio_temporal_neighborhood(i, t, r):
        if warr[j - 1, tau - 1] != a:
            return 0
    return 1


@dataclass(frozen=True)
class HtReport:
    """Per-cell estimator terms plus their exact exposure bookkeeping.

    terms[i, t] is (X1 - X0) / p * y; estimate is the mean over all cells.
    Cells whose exposure probability underflows are listed in
    degenerate_cells and carry NaN terms; the estimate is NaN if any exist.
    """

    r: int
    terms: np.ndarray
    estimate: float
    exposure_probs: np.ndarray
    exposure_counts: np.ndarray
    degenerate_cells: tuple[tuple[int, int], ...] = ()

    def summary(self) -> dict:
        valid = ~np.isnan(self.exposure_probs)
        return {
            "r": self.r,
            "estimate": self.estimate,
            "min_p": float(np.min(self.exposure_probs[valid])) if valid.any() else float("nan"),
            "max_m": int(np.max(self.exposure_counts)),
            "degenerate_cells": len(self.degenerate_cells),
        }

    def to_csv_text(self) -> str:
        out = io.StringIO()
        out.write("i,t,term,p,m\n")
        n, horizon = self.terms.shape
        for i in range(n):
            for t in range(horizon):
                out.write(
                    f"{i + 1},{t + 1},{self.terms[i, t]!r},"
                    f"{self.exposure_probs[i, t]!r},{int(self.exposure_counts[i, t])}\n"
                )
        return out.getvalue()


def ht_estimate(
    g: GraphSequence,
    d: VerticalDesign,
    w: AssignmentMatrix | np.ndarray,
    y: OutcomePanel | np.ndarray,
    r: int,
) -> HtReport:
    """Inverse-probability estimate from one realized assignment and panel.

    Outcome values are consumed as-is (noise included); the truncation radius
    r limits history through the exposure neighborhoods only.
    """
    values = y.values if isinstance(y, OutcomePanel) else np.asarray(y, dtype=np.float64)
    n, horizon = g.n, g.horizon
    if values.shape != (n, horizon):
        raise ValueError(f"outcome shape {values.shape} != ({n}, {horizon})")
    warr = np.asarray(getattr(w, "w", w))
    terms = np.empty((n, horizon), dtype=np.float64)
    probs = np.empty((n, horizon), dtype=np.float64)
    counts = np.empty((n, horizon), dtype=np.int64)
    degenerate: list[tuple[int, int]] = []
    for i in range(1, n + 1):
        for t in range(1, horizon + 1):
            cells = g.spatio_temporal_neighborhood(i, t, r)
            m = len(clusters_touching(d, cells))
            counts[i - 1, t - 1] = m
            if m > MAX_EXACT_POW:
                degenerate.append((i, t))
                probs[i - 1, t - 1] = float("nan")
                terms[i - 1, t - 1] = float("nan")
                continue
            p = math.ldexp(1.0, -m)
            probs[i - 1, t - 1] = p
            patch = np.array([warr[j - 1, tau - 1] for j, tau in cells])
            x1 = 1 if (patch == 1).all() else 0
            x0 = 1 if (patch == 0).all() else 0
            terms[i - 1, t - 1] = (x1 - x0) / p * values[i - 1, t - 1]
    estimate = float("nan") if degenerate else float(terms.mean())
    return HtReport(
        r=r,
        terms=terms,
        estimate=estimate,
        exposure_probs=probs,
        exposure_counts=counts,
        degenerate_cells=tuple(degenerate),
    )
