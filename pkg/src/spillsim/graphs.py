"""Sequences of interference graphs and the generators that build them.

A graph sequence holds one undirected graph per round over a fixed set of
individuals.  Self-loops are implicit everywhere: an individual is always in
its own neighborhood and loops are never stored.  Individuals are numbered
1..n and rounds 1..horizon.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

Pair = tuple[int, int]


def _check_round(t: int, horizon: int) -> None:
    if not 1 <= t <= horizon:
        raise IndexError(f"round {t} out of range [1, {horizon}]")


def _check_individual(i: int, n: int) -> None:
    if not 1 <= i <= n:
        raise IndexError(f"individual {i} out of range [1, {n}]")


def _normalize_pair(pair: Pair, n: int) -> Pair:
    i, j = int(pair[0]), int(pair[1])
    if i == j:
        raise ValueError(f"self-loop ({i},{j}) must not be stored; loops are implicit")
    if not (1 <= i <= n and 1 <= j <= n):
        raise ValueError(f"pair ({i},{j}) out of range for n={n}")
    return (i, j) if i < j else (j, i)


class GraphSequence:
    """Immutable sequence of undirected interference graphs.

    Edges are stored per round as pairs (i, j) with 1 <= i < j <= n.  Reading
    from many threads is safe; there is no mutation API.
    """

    __slots__ = ("_n", "_horizon", "_edges", "_nbr_cache")

    def __init__(self, n: int, horizon: int, edges_per_round: Sequence[Iterable[Pair]]):
        if n < 1:
            raise ValueError(f"need n >= 1, got {n}")
        if horizon < 1:
            raise ValueError(f"need horizon >= 1, got {horizon}")
        if len(edges_per_round) != horizon:
            raise ValueError(
                f"expected {horizon} per-round edge sets, got {len(edges_per_round)}"
            )
        self._n = int(n)
        self._horizon = int(horizon)
        self._edges: tuple[frozenset[Pair], ...] = tuple(
            frozenset(_normalize_pair(p, n) for p in round_edges)
            for round_edges in edges_per_round
        )
        self._nbr_cache: dict[int, list[np.ndarray]] = {}

    @property
    def n(self) -> int:
        return self._n

    @property
    def horizon(self) -> int:
        return self._horizon

    def edges_at(self, t: int) -> frozenset[Pair]:
        _check_round(t, self._horizon)
        return self._edges[t - 1]

    def has_edge(self, i: int, j: int, t: int) -> bool:
        """Adjacency including the implicit self-loop."""
        _check_individual(i, self._n)
        _check_individual(j, self._n)
        if i == j:
            return True
        a, b = (i, j) if i < j else (j, i)
        return (a, b) in self.edges_at(t)

    def _neighbor_arrays(self, t: int) -> list[np.ndarray]:
        """0-based sorted neighbor indices per individual, self included."""
        cached = self._nbr_cache.get(t)
        if cached is not None:
            return cached
        sets: list[set[int]] = [{i} for i in range(self._n)]
        for (a, b) in self._edges[t - 1]:
            sets[a - 1].add(b - 1)
            sets[b - 1].add(a - 1)
        arrays = [np.array(sorted(s), dtype=np.int64) for s in sets]
        self._nbr_cache[t] = arrays
        return arrays

    def neighbors_index(self, i: int, t: int) -> np.ndarray:
        """0-based neighbor array of individual i at round t, self included."""
        _check_individual(i, self._n)
        _check_round(t, self._horizon)
        return self._neighbor_arrays(t)[i - 1]

    def neighborhood(self, i: int, t: int) -> frozenset[int]:
        """N_t(i): i together with everyone adjacent to i at round t."""
        return frozenset(int(j) + 1 for j in self.neighbors_index(i, t))

    def spatio_temporal_neighborhood(self, i: int, t: int, r: int) -> frozenset[tuple[int, int]]:
        """Union of N_tau(i) x {tau} for tau from max(1, t-r) to t."""
        if r < 0:
            raise ValueError(f"need r >= 0, got {r}")
        _check_individual(i, self._n)
        _check_round(t, self._horizon)
        cells: set[tuple[int, int]] = set()
        for tau in range(max(1, t - r), t + 1):
            for j in self.neighbors_index(i, tau):
                cells.add((int(j) + 1, tau))
        return frozenset(cells)

    def union_neighborhood(self, i: int, rounds: Iterable[int]) -> frozenset[int]:
        """Everyone adjacent to i in at least one of the given rounds, plus i."""
        out: set[int] = set()
        for tau in rounds:
            for j in self.neighbors_index(i, tau):
                out.add(int(j) + 1)
        return frozenset(out)

    def to_text(self) -> str:
        """Line format: header ``N T``, then per round ``t m i j i j ...``."""
        lines = [f"{self._n} {self._horizon}"]
        for t in range(1, self._horizon + 1):
            pairs = sorted(self._edges[t - 1])
            flat = " ".join(f"{i} {j}" for i, j in pairs)
            lines.append(f"{t} {len(pairs)}" + (f" {flat}" if flat else ""))
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text: str) -> "GraphSequence":
        lines = [ln for ln in text.splitlines() if ln.strip()]
        if not lines:
            raise ValueError("empty graph text")
        head = lines[0].split()
        if len(head) != 2:
            raise ValueError(f"bad header {lines[0]!r}, expected 'N T'")
        n, horizon = int(head[0]), int(head[1])
        if len(lines) != horizon + 1:
            raise ValueError(f"expected {horizon} round lines, found {len(lines) - 1}")
        rounds: list[list[Pair]] = []
        for ln in lines[1:]:
            tok = ln.split()
            t, m = int(tok[0]), int(tok[1])
            if t != len(rounds) + 1:
                raise ValueError(f"round lines out of order at {ln!r}")
            if len(tok) != 2 + 2 * m:
                raise ValueError(f"round {t}: expected {m} pairs, line {ln!r}")
            pairs = [(int(tok[2 + 2 * k]), int(tok[3 + 2 * k])) for k in range(m)]
            rounds.append(pairs)
        return cls(n, horizon, rounds)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, GraphSequence):
            return NotImplemented
        return (
            self._n == other._n
            and self._horizon == other._horizon
            and self._edges == other._edges
        )

    def __hash__(self) -> int:
        return hash((self._n, self._horizon, self._edges))

    def __repr__(self) -> str:
        m = sum(len(e) for e in self._edges)
        return f"GraphSequence(n={self._n}, horizon={self._horizon}, total_edges={m})"


@dataclass(frozen=True)
class ErParams:
    """Per-pair edge birth/death chain parameters."""

    p_init: float
    p_birth: float
    p_death: float

    def __post_init__(self) -> None:
        for name in ("p_init", "p_birth", "p_death"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"{name}={v} not in [0, 1]")


@dataclass(frozen=True)
class TrajectorySet:
    """Positions of moving individuals in the unit square.

    positions has shape (n, horizon, 2); per-round displacements must not
    exceed max_speed (checked with a 1e-12 slack for float round-off).
    """

    positions: np.ndarray
    max_speed: float

    def __post_init__(self) -> None:
        pos = np.asarray(self.positions, dtype=np.float64)
        if pos.ndim != 3 or pos.shape[2] != 2:
            raise ValueError(f"positions must have shape (n, horizon, 2), got {pos.shape}")
        if self.max_speed < 0:
            raise ValueError(f"max_speed must be >= 0, got {self.max_speed}")
        if pos.min() < -1e-12 or pos.max() > 1 + 1e-12:
            raise ValueError("positions must lie in the unit square")
        if pos.shape[1] > 1:
            steps = np.linalg.norm(np.diff(pos, axis=1), axis=2)
            worst = float(steps.max())
            if worst > self.max_speed + 1e-12:
                raise ValueError(
                    f"displacement {worst} exceeds max_speed {self.max_speed}"
                )
        pos.flags.writeable = False
        object.__setattr__(self, "positions", pos)

    @property
    def n(self) -> int:
        return self.positions.shape[0]

    @property
    def horizon(self) -> int:
        return self.positions.shape[1]


def make_static(n: int, t_horizon: int, base_edges: Iterable[Pair]) -> GraphSequence:
    """Same edge set at every round."""
    edges = [_normalize_pair(p, n) for p in base_edges]
    return GraphSequence(n, t_horizon, [edges] * t_horizon)


def make_dynamic_er(n: int, t_horizon: int, params: ErParams, seed: int) -> GraphSequence:
    """Independent per-pair birth/death chains.

    Round 1 includes each pair with probability p_init; afterwards an absent
    pair appears with probability p_birth and a present pair disappears with
    probability p_death, independently across pairs and rounds.
    """
    if n < 1 or t_horizon < 1:
        raise ValueError("need n >= 1 and t_horizon >= 1")
    rng = np.random.default_rng(seed)
    ii, jj = np.triu_indices(n, k=1)
    npairs = ii.size
    present = rng.random(npairs) < params.p_init
    rounds = [_pairs_from_mask(present, ii, jj)]
    for _ in range(t_horizon - 1):
        u = rng.random(npairs)
        present = np.where(present, u >= params.p_death, u < params.p_birth)
        rounds.append(_pairs_from_mask(present, ii, jj))
    return GraphSequence(n, t_horizon, rounds)


def _pairs_from_mask(mask: np.ndarray, ii: np.ndarray, jj: np.ndarray) -> list[Pair]:
    idx = np.flatnonzero(mask)
    return [(int(ii[k]) + 1, int(jj[k]) + 1) for k in idx]


def random_walk_trajectories(n: int, t_horizon: int, v_max: float, seed: int) -> TrajectorySet:
    """Uniform starts, per-round steps uniform in the disk of radius v_max,
    reflected at the unit-square boundary."""
    if v_max < 0:
        raise ValueError(f"need v_max >= 0, got {v_max}")
    rng = np.random.default_rng(seed)
    pos = np.empty((n, t_horizon, 2), dtype=np.float64)
    pos[:, 0, :] = rng.random((n, 2))
    for t in range(1, t_horizon):
        radius = v_max * np.sqrt(rng.random(n))
        angle = 2 * np.pi * rng.random(n)
        step = np.stack([radius * np.cos(angle), radius * np.sin(angle)], axis=1)
        pos[:, t, :] = _reflect(pos[:, t - 1, :] + step)
    return TrajectorySet(pos, v_max)


def _reflect(p: np.ndarray) -> np.ndarray:
    out = p.copy()
    # fold coordinates back into [0, 1]; repeats cover steps longer than the box
    for _ in range(16):
        below = out < 0.0
        above = out > 1.0
        if not (below.any() or above.any()):
            break
        out[below] = -out[below]
        out[above] = 2.0 - out[above]
    return np.clip(out, 0.0, 1.0)


def make_metric(traj: TrajectorySet, kappa: float) -> GraphSequence:
    """(i, j) is an edge at round t iff their Euclidean distance is <= kappa."""
    if kappa < 0:
        raise ValueError(f"need kappa >= 0, got {kappa}")
    n, horizon = traj.n, traj.horizon
    ii, jj = np.triu_indices(n, k=1)
    rounds = []
    for t in range(horizon):
        pts = traj.positions[:, t, :]
        dist = np.linalg.norm(pts[ii] - pts[jj], axis=1)
        rounds.append(_pairs_from_mask(dist <= kappa, ii, jj))
    return GraphSequence(n, horizon, rounds)


def neighborhood(g: GraphSequence, i: int, t: int) -> frozenset[int]:
    return g.neighborhood(i, t)


def spatio_temporal_neighborhood(g: GraphSequence, i: int, t: int, r: int) -> frozenset[tuple[int, int]]:
    return g.spatio_temporal_neighborhood(i, t, r)
