"""Vertical designs: time blocks crossed with per-block spatial partitions.

Time is cut into blocks of block_len rounds (the final block may be short
when the horizon is not divisible).  Within each time block k a partition
of the individuals defines the spatio-temporal clusters; every cluster gets
one independent Bernoulli(1/2) arm and all of its cells inherit that arm.
Cluster ids are (k, b) with blocks ordered by smallest member, so ids are
stable and assignments reproducible from a seed.
"""

from __future__ import annotations

import io
import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .graphs import GraphSequence, TrajectorySet

ClusterId = tuple[int, int]

Partition = tuple[frozenset[int], ...]


def _normalize_partition(blocks: Iterable[Iterable[int]], n: int, where: str) -> Partition:
    out = []
    seen: set[int] = set()
    for block in blocks:
        fs = frozenset(int(i) for i in block)
        if not fs:
            raise ValueError(f"{where}: empty spatial block")
        bad = [i for i in fs if not 1 <= i <= n]
        if bad:
            raise ValueError(f"{where}: member {bad[0]} out of range [1, {n}]")
        if seen & fs:
            raise ValueError(f"{where}: blocks overlap at {sorted(seen & fs)[0]}")
        seen |= fs
        out.append(fs)
    if seen != set(range(1, n + 1)):
        missing = sorted(set(range(1, n + 1)) - seen)
        raise ValueError(f"{where}: not a partition, missing {missing}")
    return tuple(sorted(out, key=min))


@dataclass(frozen=True)
class VerticalDesign:
    """Block length plus one spatial partition per time block."""

    block_len: int
    partitions: tuple[Partition, ...]
    n: int
    horizon: int
    _member_block: tuple[np.ndarray, ...] = field(init=False, repr=False, compare=False)
    _cluster_index: dict = field(init=False, repr=False, compare=False)

    def __post_init__(self) -> None:
        if self.block_len < 1:
            raise ValueError(f"need block_len >= 1, got {self.block_len}")
        if self.n < 1 or self.horizon < 1:
            raise ValueError("need n >= 1 and horizon >= 1")
        k_expected = math.ceil(self.horizon / self.block_len)
        if len(self.partitions) != k_expected:
            raise ValueError(
                f"expected {k_expected} partitions for horizon {self.horizon} "
                f"and block_len {self.block_len}, got {len(self.partitions)}"
            )
        normalized = tuple(
            _normalize_partition(part, self.n, f"partition {k + 1}")
            for k, part in enumerate(self.partitions)
        )
        object.__setattr__(self, "partitions", normalized)
        member_block = []
        for part in normalized:
            arr = np.empty(self.n, dtype=np.int64)
            for b, block in enumerate(part):
                for i in block:
                    arr[i - 1] = b
            member_block.append(arr)
        object.__setattr__(self, "_member_block", tuple(member_block))
        index = {}
        for k, part in enumerate(normalized, start=1):
            for b in range(1, len(part) + 1):
                index[(k, b)] = len(index)
        object.__setattr__(self, "_cluster_index", index)

    @property
    def n_time_blocks(self) -> int:
        return len(self.partitions)

    @property
    def clusters(self) -> tuple[ClusterId, ...]:
        return tuple(self._cluster_index)

    @property
    def n_clusters(self) -> int:
        return len(self._cluster_index)

    def block_of_round(self, t: int) -> int:
        if not 1 <= t <= self.horizon:
            raise IndexError(f"round {t} out of range [1, {self.horizon}]")
        return (t - 1) // self.block_len + 1

    def block_rounds(self, k: int) -> range:
        if not 1 <= k <= self.n_time_blocks:
            raise IndexError(f"time block {k} out of range [1, {self.n_time_blocks}]")
        start = (k - 1) * self.block_len + 1
        return range(start, min(k * self.block_len, self.horizon) + 1)

    def cluster_of(self, i: int, t: int) -> ClusterId:
        k = self.block_of_round(t)
        if not 1 <= i <= self.n:
            raise IndexError(f"individual {i} out of range [1, {self.n}]")
        return (k, int(self._member_block[k - 1][i - 1]) + 1)

    def cluster_index(self, cluster: ClusterId) -> int:
        return self._cluster_index[cluster]

    def cluster_members(self, cluster: ClusterId) -> frozenset[int]:
        k, b = cluster
        return self.partitions[k - 1][b - 1]

    def spatial_block_of(self, i: int, k: int) -> int:
        """0-based index of i's spatial block within partition k (1-based k)."""
        return int(self._member_block[k - 1][i - 1])

    def to_text(self) -> str:
        """Header ``L N T``; per block k a line ``k m`` then m member lines."""
        lines = [f"{self.block_len} {self.n} {self.horizon}"]
        for k, part in enumerate(self.partitions, start=1):
            lines.append(f"{k} {len(part)}")
            for block in part:
                lines.append(" ".join(str(i) for i in sorted(block)))
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text: str) -> "VerticalDesign":
        lines = [ln for ln in text.splitlines() if ln.strip()]
        if not lines:
            raise ValueError("empty design text")
        head = lines[0].split()
        if len(head) != 3:
            raise ValueError(f"bad header {lines[0]!r}, expected 'L N T'")
        block_len, n, horizon = (int(x) for x in head)
        partitions: list[list[list[int]]] = []
        pos = 1
        k_expected = math.ceil(horizon / block_len)
        for k in range(1, k_expected + 1):
            tok = lines[pos].split()
            if len(tok) != 2 or int(tok[0]) != k:
                raise ValueError(f"expected block header for k={k}, got {lines[pos]!r}")
            m = int(tok[1])
            pos += 1
            blocks = []
            for _ in range(m):
                blocks.append([int(x) for x in lines[pos].split()])
                pos += 1
            partitions.append(blocks)
        if pos != len(lines):
            raise ValueError("trailing lines in design text")
        return cls(block_len=block_len, partitions=tuple(tuple(map(frozenset, p)) for p in partitions), n=n, horizon=horizon)


def make_design(block_len: int, partitions: Sequence[Iterable[Iterable[int]]], horizon: int) -> VerticalDesign:
    """Build a vertical design; the individual count is inferred from the
    first partition's union."""
    parts = [tuple(frozenset(int(i) for i in block) for block in part) for part in partitions]
    if not parts:
        raise ValueError("need at least one partition")
    n = max(max(block) for block in parts[0])
    return VerticalDesign(block_len=block_len, partitions=tuple(parts), n=n, horizon=horizon)


@dataclass(frozen=True)
class AssignmentMatrix:
    """Realized 0/1 assignment with its generating cluster arms."""

    w: np.ndarray
    cluster_arms: dict

    def __post_init__(self) -> None:
        arr = np.asarray(self.w, dtype=np.int8)
        if arr.ndim != 2:
            raise ValueError(f"w must be 2-d, got shape {arr.shape}")
        if not np.isin(arr, (0, 1)).all():
            raise ValueError("w must be binary")
        arr.flags.writeable = False
        object.__setattr__(self, "w", arr)

    @property
    def n(self) -> int:
        return self.w.shape[0]

    @property
    def horizon(self) -> int:
        return self.w.shape[1]

    def to_csv_text(self) -> str:
        out = io.StringIO()
        out.write("i,t,w\n")
        for i in range(self.n):
            for t in range(self.horizon):
                out.write(f"{i + 1},{t + 1},{int(self.w[i, t])}\n")
        return out.getvalue()

    def arms_text(self) -> str:
        """Compact per-cluster arm list, one ``k b arm`` line per cluster."""
        lines = [f"{k} {b} {arm}" for (k, b), arm in sorted(self.cluster_arms.items())]
        return "\n".join(lines) + "\n"


def sample_assignment(d: VerticalDesign, seed: int) -> AssignmentMatrix:
    """One fair coin per cluster, drawn in cluster-id order from the seed."""
    rng = np.random.default_rng(seed)
    arms = rng.integers(0, 2, size=d.n_clusters)
    cluster_arms = {cid: int(arms[idx]) for cid, idx in d._cluster_index.items()}
    w = np.empty((d.n, d.horizon), dtype=np.int8)
    for k in range(1, d.n_time_blocks + 1):
        rounds = d.block_rounds(k)
        cols = slice(rounds.start - 1, rounds.stop - 1)
        for b, block in enumerate(d.partitions[k - 1], start=1):
            arm = cluster_arms[(k, b)]
            for i in block:
                w[i - 1, cols] = arm
    return AssignmentMatrix(w=w, cluster_arms=cluster_arms)


def clusters_touching(d: VerticalDesign, pts: Iterable[tuple[int, int]]) -> frozenset[ClusterId]:
    """Clusters whose (members x rounds) rectangle meets any given (i, t) cell."""
    return frozenset(d.cluster_of(i, t) for i, t in pts)


# ---------------------------------------------------------------------------
# Partition builders


def singleton_partition(n: int) -> Partition:
    return tuple(frozenset({i}) for i in range(1, n + 1))


def single_block_partition(n: int) -> Partition:
    return (frozenset(range(1, n + 1)),)


def region_partition(traj: TrajectorySet, t_anchor: int, cell_side: float) -> Partition:
    """Group individuals by the half-open grid cell holding their anchor-round
    position; a coordinate exactly on a boundary goes to the higher cell and
    the top edge of the unit square folds into the last cell."""
    if cell_side <= 0:
        raise ValueError(f"need cell_side > 0, got {cell_side}")
    if not 1 <= t_anchor <= traj.horizon:
        raise IndexError(f"anchor round {t_anchor} out of range [1, {traj.horizon}]")
    n_cells = max(1, math.ceil(1.0 / cell_side))
    groups: dict[tuple[int, int], set[int]] = {}
    for i in range(traj.n):
        x, y = traj.positions[i, t_anchor - 1]
        cx = min(int(math.floor(x / cell_side)), n_cells - 1)
        cy = min(int(math.floor(y / cell_side)), n_cells - 1)
        groups.setdefault((cx, cy), set()).add(i + 1)
    return tuple(sorted((frozenset(g) for g in groups.values()), key=min))


def union_component_partition(g: GraphSequence, rounds: Iterable[int]) -> Partition:
    """Connected components of the union of the given rounds' graphs."""
    parent = list(range(g.n + 1))

    def find(x: int) -> int:
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    for t in rounds:
        for (a, b) in g.edges_at(t):
            ra, rb = find(a), find(b)
            if ra != rb:
                parent[max(ra, rb)] = min(ra, rb)
    groups: dict[int, set[int]] = {}
    for i in range(1, g.n + 1):
        groups.setdefault(find(i), set()).add(i)
    return tuple(sorted((frozenset(v) for v in groups.values()), key=min))


def build_partitions(
    kind: str,
    g: GraphSequence,
    block_len: int,
    traj: TrajectorySet | None = None,
    cell_side: float = 0.5,
) -> tuple[Partition, ...]:
    """Per-block partitions from a named builder.

    kind is one of singleton, single, grid (region-based, anchored at each
    block's first round), components (union graph of the block's rounds).
    """
    n_blocks = math.ceil(g.horizon / block_len)
    parts: list[Partition] = []
    for k in range(1, n_blocks + 1):
        start = (k - 1) * block_len + 1
        rounds = range(start, min(k * block_len, g.horizon) + 1)
        if kind == "singleton":
            parts.append(singleton_partition(g.n))
        elif kind == "single":
            parts.append(single_block_partition(g.n))
        elif kind == "grid":
            if traj is None:
                raise ValueError("grid partitions need trajectories")
            parts.append(region_partition(traj, start, cell_side))
        elif kind == "components":
            parts.append(union_component_partition(g, rounds))
        else:
            raise ValueError(
                f"unknown partition kind {kind!r}; expected singleton, single, grid, components"
            )
    return tuple(parts)
