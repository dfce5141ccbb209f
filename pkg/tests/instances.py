"""Shared desk-scale test machinery: independent brute-force oracles and a
seeded random instance family.

The brute-force moment oracle enumerates every cluster assignment and every
joint state path; it shares no propagation code with the package and is the
reference the fast oracle is checked against.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np

import spillsim as sp
from spillsim.env import (
    outcome_mix,
    outcome_own_arm,
    outcome_state,
    outcome_state_arm_product,
    outcome_treated_frac,
)


def brute_force_moments(env, g, d, r):
    """Exact (mean, variance, pair covariance) by enumerating assignments and
    all joint state paths; noise enters through its analytic second moment."""
    n, horizon, n_states = g.n, g.horizon, env.n_states
    clusters = d.clusters
    m = len(clusters)
    n_cells = n * horizon
    cells = [(i, t) for i in range(1, n + 1) for t in range(1, horizon + 1)]
    e1 = 0.0
    e2 = 0.0
    pair = np.zeros((n_cells, n_cells))
    mean_cells = np.zeros(n_cells)
    for bits in itertools.product([0, 1], repeat=m):
        arms = dict(zip(clusters, bits))
        w = np.zeros((n, horizon), dtype=np.int8)
        for i, t in cells:
            w[i - 1, t - 1] = arms[d.cluster_of(i, t)]
        coef = np.zeros((n, horizon))
        for i, t in cells:
            cellset = g.spatio_temporal_neighborhood(i, t, r)
            count = len(sp.clusters_touching(d, cellset))
            patch = [w[j - 1, tau - 1] for j, tau in cellset]
            x1 = int(all(v == 1 for v in patch))
            x0 = int(all(v == 0 for v in patch))
            coef[i - 1, t - 1] = (x1 - x0) * 2.0**count
        ej = 0.0
        ej2 = 0.0
        cell_mean = np.zeros(n_cells)
        cell_second = np.zeros((n_cells, n_cells))
        for paths in itertools.product(range(n_states), repeat=n_cells):
            st = np.array(paths).reshape(n, horizon)
            prob = 1.0
            for i in range(1, n + 1):
                prob *= env.initial_dist[st[i - 1, 0]]
                for t in range(1, horizon):
                    nbr = g.neighbors_index(i, t)
                    rho = float(w[nbr, t - 1].mean())
                    kernel = env.kernel(i, t, int(w[i - 1, t - 1]), rho)
                    prob *= kernel[st[i - 1, t - 1], st[i - 1, t]]
            if prob == 0.0:
                continue
            values = np.zeros((n, horizon))
            for i, t in cells:
                nbr = g.neighbors_index(i, t)
                rho = float(w[nbr, t - 1].mean())
                values[i - 1, t - 1] = env.outcome_family(
                    i, t, int(st[i - 1, t - 1]), int(w[i - 1, t - 1]), rho
                )
            terms = (coef * values).flatten()
            estimate = terms.sum() / n_cells
            ej += prob * estimate
            ej2 += prob * estimate * estimate
            cell_mean += prob * terms
            cell_second += prob * np.outer(terms, terms)
        sigma2 = env.sigma**2
        ej2 += (coef.flatten() ** 2).sum() * sigma2 / n_cells**2
        cell_second[np.diag_indices(n_cells)] += coef.flatten() ** 2 * sigma2
        weight = 2.0**-m
        e1 += weight * ej
        e2 += weight * ej2
        pair += weight * cell_second
        mean_cells += weight * cell_mean
    pair -= np.outer(mean_cells, mean_cells)
    return e1, e2 - e1 * e1, pair


def brute_force_cig(g, d):
    """Clustering-induced edge sets straight from the definition: loop over
    blocks, pairs, and rounds, testing spatial-block intersections."""
    out = []
    for k in range(1, d.n_time_blocks + 1):
        rounds = list(d.block_rounds(k))
        edges = set()
        for i in range(1, g.n + 1):
            for i_other in range(i + 1, g.n + 1):
                hit = False
                for block in d.partitions[k - 1]:
                    union_i = set()
                    union_o = set()
                    for tau in rounds:
                        union_i |= set(g.neighborhood(i, tau))
                        union_o |= set(g.neighborhood(i_other, tau))
                    if block & union_i and block & union_o:
                        hit = True
                        break
                if hit:
                    edges.add((i, i_other))
        out.append(frozenset(edges))
    return out


def random_partition(rng, n):
    order = list(rng.permutation(np.arange(1, n + 1)))
    blocks = []
    pos = 0
    while pos < n:
        size = int(rng.integers(1, n - pos + 1))
        blocks.append(frozenset(int(x) for x in order[pos : pos + size]))
        pos += size
    return tuple(blocks)


@dataclass
class Instance:
    env: sp.Environment
    graphs: sp.GraphSequence
    design: sp.VerticalDesign
    r: int
    label: str


def _random_graphs(rng, n, horizon):
    kind = rng.choice(["static", "er", "metric"])
    if kind == "static":
        ii, jj = np.triu_indices(n, k=1)
        keep = rng.random(ii.size) < rng.uniform(0.1, 0.6)
        pairs = [(int(a) + 1, int(b) + 1) for a, b, k in zip(ii, jj, keep) if k]
        return sp.make_static(n, horizon, pairs), None, str(kind)
    if kind == "er":
        params = sp.ErParams(
            p_init=float(rng.uniform(0.2, 0.8)),
            p_birth=float(rng.uniform(0.05, 0.5)),
            p_death=float(rng.uniform(0.05, 0.5)),
        )
        return sp.make_dynamic_er(n, horizon, params, seed=int(rng.integers(1 << 30))), None, str(kind)
    traj = sp.random_walk_trajectories(n, horizon, float(rng.uniform(0.0, 0.2)), seed=int(rng.integers(1 << 30)))
    return sp.make_metric(traj, float(rng.uniform(0.15, 0.5))), traj, str(kind)


def _random_outcome(rng, n_states):
    pick = rng.choice(["state", "mix", "state_arm_product", "own_arm", "treated_frac"])
    if pick == "state":
        return outcome_state(n_states), str(pick)
    if pick == "own_arm":
        return outcome_own_arm(), str(pick)
    if pick == "treated_frac":
        return outcome_treated_frac(), str(pick)
    if pick == "state_arm_product":
        return outcome_state_arm_product(n_states), str(pick)
    fam = outcome_mix(
        n_states,
        bias=float(rng.uniform(0.0, 0.3)),
        w_state=float(rng.uniform(0.0, 0.5)),
        w_arm=float(rng.uniform(0.0, 0.3)),
        w_frac=float(rng.uniform(0.0, 0.3)),
        amplitude=float(rng.choice([0.0, 0.1])),
        period=float(rng.integers(3, 9)),
    )
    return fam, "mix"


def random_env(rng, n_states=2, t_mix_choices=(0.5, 1.0, 2.0, 4.0), sigma_choices=(0.0, 0.2)):
    q0 = rng.dirichlet(np.ones(n_states), size=n_states)
    q1 = rng.dirichlet(np.ones(n_states), size=n_states)
    a0 = rng.dirichlet(np.ones(n_states))
    a1 = rng.dirichlet(np.ones(n_states))
    outcome, name = _random_outcome(rng, n_states)
    return (
        sp.build_env(
            n_states=n_states,
            t_mix=float(rng.choice(t_mix_choices)),
            sigma=float(rng.choice(sigma_choices)),
            base_kernels={0: q0, 1: q1},
            anchor_dists={0: a0, 1: a1},
            outcome_family=outcome,
            initial_dist=rng.dirichlet(np.ones(n_states)),
        ),
        name,
    )


def random_instance(
    seed: int,
    n_max: int = 6,
    t_max: int = 12,
    max_clusters: int = 12,
    r_choices=(0, 1, 2, 3, 4, 5, 6),
    n_states: int = 2,
) -> Instance:
    """One member of the desk-scale family: random graph kind, design, and
    environment, capped at max_clusters total clusters."""
    rng = np.random.default_rng(seed)
    n = int(rng.integers(2, n_max + 1))
    horizon = int(rng.integers(4, t_max + 1))
    graphs, traj, graph_kind = _random_graphs(rng, n, horizon)
    design = None
    for _ in range(64):
        block_len = int(rng.integers(1, min(6, horizon) + 1))
        n_blocks = -(-horizon // block_len)
        choices = ["singleton", "single", "components", "random"]
        if traj is not None:
            choices.append("grid")
        pkind = str(rng.choice(choices))
        if pkind == "random":
            partitions = tuple(random_partition(rng, n) for _ in range(n_blocks))
        else:
            partitions = sp.build_partitions(
                pkind, graphs, block_len, traj=traj, cell_side=float(rng.choice([0.34, 0.5, 1.0]))
            )
        candidate = sp.VerticalDesign(
            block_len=block_len, partitions=partitions, n=n, horizon=horizon
        )
        if candidate.n_clusters <= max_clusters:
            design = candidate
            break
    if design is None:
        design = sp.VerticalDesign(
            block_len=horizon,
            partitions=(sp.single_block_partition(n),),
            n=n,
            horizon=horizon,
        )
        pkind = "single"
    env, outcome_name = random_env(rng, n_states=n_states)
    r = int(rng.choice(r_choices))
    label = (
        f"seed={seed} n={n} T={horizon} graph={graph_kind} partition={pkind} "
        f"l={design.block_len} r={r} t_mix={env.t_mix} sigma={env.sigma} outcome={outcome_name}"
    )
    return Instance(env=env, graphs=graphs, design=design, r=r, label=label)


def exposure_instance(seed: int):
    """(graphs, design, r) only, at exposure-test scale: N <= 10, T <= 16,
    with no cluster cap (nothing is enumerated)."""
    rng = np.random.default_rng(10_000 + seed)
    n = int(rng.integers(2, 11))
    horizon = int(rng.integers(4, 17))
    graphs, traj, _ = _random_graphs(rng, n, horizon)
    block_len = int(rng.integers(1, min(6, horizon) + 1))
    n_blocks = -(-horizon // block_len)
    choices = ["singleton", "single", "components", "random"]
    if traj is not None:
        choices.append("grid")
    pkind = str(rng.choice(choices))
    if pkind == "random":
        partitions = tuple(random_partition(rng, n) for _ in range(n_blocks))
    else:
        partitions = sp.build_partitions(
            pkind, graphs, block_len, traj=traj, cell_side=float(rng.choice([0.34, 0.5, 1.0]))
        )
    design = sp.VerticalDesign(block_len=block_len, partitions=partitions, n=n, horizon=horizon)
    return graphs, design, int(rng.integers(0, 7))


def matched_instance(seed: int, n: int = 5, horizon: int = 10, t_mix: float = 0.5) -> Instance:
    """Instance with block_len = r = ceil(2 t_mix log(NT)), the regime the
    MSE bound is stated for, kept within the 12-cluster cap."""
    rng = np.random.default_rng(seed)
    matched = sp.auto_radius(t_mix, n, horizon)
    graphs, traj, kind = _random_graphs(rng, n, horizon)
    n_blocks = -(-horizon // matched)
    for _ in range(64):
        partitions = tuple(random_partition(rng, n) for _ in range(n_blocks))
        design = sp.VerticalDesign(block_len=matched, partitions=partitions, n=n, horizon=horizon)
        if design.n_clusters <= 12:
            break
    env, outcome_name = random_env(rng, t_mix_choices=(t_mix,), sigma_choices=(0.0, 0.2))
    label = f"seed={seed} matched l=r={matched} graph={kind} outcome={outcome_name}"
    return Instance(env=env, graphs=graphs, design=design, r=matched, label=label)
