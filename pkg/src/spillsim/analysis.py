"""Clustering-induced graphs, last interaction times, and the theoretical
bounds evaluated for a concrete (environment, graphs, design, radius).

The k-th clustering-induced graph joins two individuals when their
neighborhoods, unioned over the rounds of time block k, touch a common
spatial block of that block's partition.  Cluster degrees of these graphs
(self-edge included, so degrees are >= 1) drive the exposure-probability
lower bound and the variance and mean-squared-error bounds.
"""

from __future__ import annotations

import io
import math
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from .design import VerticalDesign
from .env import Environment
from .estimator import exposure_probability
from .graphs import GraphSequence


@dataclass(frozen=True)
class CigSequence:
    """Per-time-block induced graphs; self-edges implicit, never stored."""

    adjacency: np.ndarray  # bool, shape (K, n, n), zero diagonal
    block_len: int
    horizon: int

    def __post_init__(self) -> None:
        adj = np.asarray(self.adjacency, dtype=bool)
        if adj.ndim != 3 or adj.shape[1] != adj.shape[2]:
            raise ValueError(f"adjacency must be (K, n, n), got {adj.shape}")
        adj.flags.writeable = False
        object.__setattr__(self, "adjacency", adj)

    @property
    def n(self) -> int:
        return self.adjacency.shape[1]

    @property
    def n_time_blocks(self) -> int:
        return self.adjacency.shape[0]

    def has_edge(self, i: int, i_other: int, k: int) -> bool:
        if i == i_other:
            return True
        return bool(self.adjacency[k - 1, i - 1, i_other - 1])

    def interaction_blocks(self, i: int, i_other: int) -> tuple[int, ...]:
        """Blocks k with an (i, i') edge; every block when i == i'."""
        if i == i_other:
            return tuple(range(1, self.n_time_blocks + 1))
        ks = np.flatnonzero(self.adjacency[:, i - 1, i_other - 1])
        return tuple(int(k) + 1 for k in ks)

    def block_of_round(self, t: int) -> int:
        if not 1 <= t <= self.horizon:
            raise IndexError(f"round {t} out of range [1, {self.horizon}]")
        return (t - 1) // self.block_len + 1


def build_cig(g: GraphSequence, d: VerticalDesign) -> CigSequence:
    """Join individuals whose block-union neighborhoods share a spatial block."""
    if g.n != d.n or g.horizon != d.horizon:
        raise ValueError("graph sequence and design disagree on (n, horizon)")
    n = g.n
    k_total = d.n_time_blocks
    adjacency = np.zeros((k_total, n, n), dtype=bool)
    for k in range(1, k_total + 1):
        n_blocks = len(d.partitions[k - 1])
        touch = np.zeros((n, n_blocks), dtype=bool)
        rounds = list(d.block_rounds(k))
        for i in range(1, n + 1):
            for j in g.union_neighborhood(i, rounds):
                touch[i - 1, d.spatial_block_of(j, k)] = True
        joined = touch @ touch.T
        np.fill_diagonal(joined, False)
        adjacency[k - 1] = joined
    return CigSequence(adjacency=adjacency, block_len=d.block_len, horizon=d.horizon)


def cluster_degree(c: CigSequence, i: int, k: int) -> int:
    """Degree of i in the k-th induced graph, counting i itself."""
    return 1 + int(c.adjacency[k - 1, i - 1].sum())


def cd_table(c: CigSequence) -> np.ndarray:
    """(n, K) table of cluster degrees."""
    return 1 + c.adjacency.sum(axis=2).T.astype(np.int64)


def lit(c: CigSequence, i: int, i_other: int, t: int) -> int | None:
    """Last interaction time: end round-number of the most recent block at or
    before t's block holding an (i, i') edge; None if they never interacted
    up to t.  Uses the nominal block length even for a short final block."""
    k = c.block_of_round(t)
    if i == i_other:
        return k * c.block_len
    ks = [kk for kk in c.interaction_blocks(i, i_other) if kk <= k]
    if not ks:
        return None
    return max(ks) * c.block_len


def exposure_lower_bound(c: CigSequence, d: VerticalDesign, i: int, t: int, r: int) -> float:
    """2^(-sum of CD_k(i)) over blocks whose rounds meet [t - r, t].

    Worst-case exact when every cluster-neighbor sits in its own spatial
    block; always a valid lower bound for the exact exposure probability.
    """
    if r < 0:
        raise ValueError(f"need r >= 0, got {r}")
    total = 0
    for k in range(1, d.n_time_blocks + 1):
        rounds = d.block_rounds(k)
        if rounds.start <= t and (rounds.stop - 1) >= t - r:
            total += cluster_degree(c, i, k)
    return math.ldexp(1.0, -total) if total <= 1074 else 0.0


def bias_bound(r: int, t_mix: float, constant: float = 2.0) -> float:
    """Decay bound on |E[estimate] - ATE|; the default constant follows the
    two-arm triangle-inequality argument."""
    if r < 0:
        raise ValueError(f"need r >= 0, got {r}")
    return constant * math.exp(-r / t_mix)


def variance_bound(
    cd_avg: float,
    p_min: float,
    block_len: int,
    r: int,
    t_mix: float,
    sigma: float,
    n: int,
    horizon: int,
    constant: float = 4.0,
) -> float:
    """Average-cluster-degree variance bound.

    constant * (1 + sigma^2) / p_min^2 * ((l + r)^2 / (l N T) * cd_avg
    + exp(-r / t_mix)).
    """
    if p_min <= 0:
        raise ValueError(f"need p_min > 0, got {p_min}")
    lead = constant * (1.0 + sigma**2) / p_min**2
    main = (block_len + r) ** 2 / (block_len * n * horizon) * cd_avg
    return lead * (main + math.exp(-r / t_mix))


def mse_bound(
    cd_avg: float,
    cd_max: float,
    t_mix: float,
    n: int,
    horizon: int,
    constant: float = 4.0,
) -> float:
    """MSE bound at the matched choice block_len = r = 2 t_mix log(NT)."""
    nt = n * horizon
    if nt < 2:
        raise ValueError("need N*T >= 2")
    return constant * t_mix * math.log(nt) / nt * 2.0 ** (4.0 * cd_max) * cd_avg


def auto_radius(t_mix: float, n: int, horizon: int) -> int:
    """ceil(2 t_mix log(NT)), the matched truncation radius and block length."""
    return math.ceil(2.0 * t_mix * math.log(n * horizon))


def cov_bound_lit(
    t: int,
    t_other: int,
    tau_star: int | None,
    r: int,
    p_it: float,
    p_other: float,
    t_mix: float,
    sigma: float = 0.0,
    constant: float = 4.0,
) -> float | None:
    """Last-interaction covariance bound for an ordered pair t >= t_other.

    Returns 0 for never-interacting pairs, None outside the stated regime
    t >= max(t_other, tau_star + r), else
    constant (1 + sigma^2) / (p p') * exp(-|t_other - tau_star| / t_mix).
    """
    if tau_star is None:
        return 0.0
    if t < max(t_other, tau_star + r):
        return None
    decay = math.exp(-abs(t_other - tau_star) / t_mix)
    return constant * (1.0 + sigma**2) / (p_it * p_other) * decay


class PairKind(Enum):
    CLOSE = "close"
    FAR = "far"


def close_pair_schedule(
    c: CigSequence, block_len: int, r: int, i: int, i_other: int
) -> dict[tuple[int, int], PairKind]:
    """Label every ordered round pair (t, t_other) with t_other <= t.

    CLOSE when some shared interaction block's extended window
    [(k-1)l, k l + r] contains both rounds; FAR pairs obey the
    exp(-r/t_mix) / (p p') covariance bound.
    """
    ks = c.interaction_blocks(i, i_other)
    windows = [((k - 1) * block_len, k * block_len + r) for k in ks]
    out: dict[tuple[int, int], PairKind] = {}
    for t in range(1, c.horizon + 1):
        for t_other in range(1, t + 1):
            close = any(lo <= t_other <= hi and lo <= t <= hi for lo, hi in windows)
            out[(t, t_other)] = PairKind.CLOSE if close else PairKind.FAR
    return out


@dataclass(frozen=True)
class BoundConstants:
    """Multiplicative constants used when bounds are checked against data."""

    bias: float = 2.0
    covariance: float = 4.0
    variance: float = 4.0
    mse: float = 4.0


@dataclass(frozen=True)
class BoundReport:
    """Cluster-degree table, minimal exposure probability, and bound values."""

    cd_per: np.ndarray  # (n, K)
    cd_avg: float
    cd_max: int
    p_min: float
    bias_bound: float
    variance_bound: float
    mse_bound: float
    mse_applicable: bool
    params: dict = field(default_factory=dict)

    def to_json_dict(self) -> dict:
        return {
            "cd_avg": self.cd_avg,
            "cd_max": self.cd_max,
            "p_min": self.p_min,
            "bias_bound": self.bias_bound,
            "variance_bound": self.variance_bound,
            "mse_bound": self.mse_bound,
            "mse_applicable": self.mse_applicable,
            "params": dict(self.params),
        }

    def cd_csv_text(self) -> str:
        out = io.StringIO()
        out.write("i,k,cd\n")
        n, k_total = self.cd_per.shape
        for i in range(n):
            for k in range(k_total):
                out.write(f"{i + 1},{k + 1},{int(self.cd_per[i, k])}\n")
        return out.getvalue()


def compute_bound_report(
    env: Environment,
    g: GraphSequence,
    d: VerticalDesign,
    r: int,
    constants: BoundConstants = BoundConstants(),
) -> BoundReport:
    """Evaluate every bound for one concrete instance.

    The minimal exposure probability scans all (i, t) cells exactly; the MSE
    bound value is always computed but flagged applicable only when
    block_len and r equal the matched choice ceil(2 t_mix log(NT)).
    """
    cig = build_cig(g, d)
    table = cd_table(cig)
    cd_avg = float(table.mean())
    cd_max = int(table.max())
    p_min = min(
        exposure_probability(g, d, i, t, r)
        for i in range(1, g.n + 1)
        for t in range(1, g.horizon + 1)
    )
    matched = auto_radius(env.t_mix, g.n, g.horizon)
    report = BoundReport(
        cd_per=table,
        cd_avg=cd_avg,
        cd_max=cd_max,
        p_min=p_min,
        bias_bound=bias_bound(r, env.t_mix, constants.bias),
        variance_bound=variance_bound(
            cd_avg, p_min, d.block_len, r, env.t_mix, env.sigma, g.n, g.horizon, constants.variance
        ),
        mse_bound=mse_bound(cd_avg, cd_max, env.t_mix, g.n, g.horizon, constants.mse),
        mse_applicable=(d.block_len == r == matched),
        params={
            "n": g.n,
            "horizon": g.horizon,
            "block_len": d.block_len,
            "r": r,
            "t_mix": env.t_mix,
            "sigma": env.sigma,
            "constants": {
                "bias": constants.bias,
                "covariance": constants.covariance,
                "variance": constants.variance,
                "mse": constants.mse,
            },
        },
    )
    return report
