"""Batch experiment runner: config parsing, scenario build, estimation,
bound verification, and file emission.

Configs are flat INI-style key/value sections (diffable and hashable); any
value can be overridden through environment variables named
``SPILLSIM_<SECTION>__<KEY>``.  Every emitted CSV starts with a comment line
echoing the effective config hash, and reruns with the same config and seed
produce byte-identical bodies (the sweep wall-time column excepted).
"""

from __future__ import annotations

import argparse
import configparser
import hashlib
import json
import os
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

from .analysis import auto_radius, compute_bound_report
from .design import VerticalDesign, build_partitions, sample_assignment
from .env import env_from_spec, simulate
from .estimator import ht_estimate
from .graphs import ErParams, make_dynamic_er, make_metric, make_static, random_walk_trajectories
from .oracle import exact_moments, mc_moments, pair_table_rows, verify_bounds

ENV_PREFIX = "SPILLSIM_"

_KNOWN_KEYS = {
    "scenario": {"name"},
    "graph": {"kind", "n", "t", "edges", "p_init", "p_birth", "p_death", "v_max", "kappa"},
    "env": {
        "n_states",
        "t_mix",
        "sigma",
        "kernel_base",
        "kernel_anchor_gap",
        "kernel_mod_amplitude",
        "kernel_mod_period",
        "outcome",
        "outcome_value",
        "outcome_bias",
        "outcome_w_state",
        "outcome_w_arm",
        "outcome_w_frac",
        "outcome_amplitude",
        "outcome_period",
        "initial",
    },
    "design": {"block_len", "partition", "cell_side"},
    "estimator": {"r"},
    "oracle": {"mode", "budget", "replications"},
    "run": {"seed", "out"},
    "output": {"pairs"},
    "sweep": {"axis", "values"},
}

_REQUIRED = [
    ("graph", "kind"),
    ("graph", "n"),
    ("graph", "t"),
    ("env", "n_states"),
    ("env", "t_mix"),
    ("env", "sigma"),
    ("design", "block_len"),
    ("design", "partition"),
    ("estimator", "r"),
    ("oracle", "mode"),
    ("run", "seed"),
]

_SWEEP_AXES = {
    "N": ("graph", "n"),
    "T": ("graph", "t"),
    "r": ("estimator", "r"),
    "ell": ("design", "block_len"),
    "p_birth": ("graph", "p_birth"),
}


class ConfigError(Exception):
    """Configuration problem; the message names the offending key."""


def load_config(path: str | Path, environ=None) -> dict[str, dict[str, str]]:
    """Parse an INI config, apply environment overrides, validate keys."""
    parser = configparser.ConfigParser()
    text = Path(path).read_text()
    try:
        parser.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(f"unparseable config {path}: {exc}") from exc
    cfg: dict[str, dict[str, str]] = {
        section: dict(parser.items(section)) for section in parser.sections()
    }
    environ = os.environ if environ is None else environ
    for name, value in environ.items():
        if not name.startswith(ENV_PREFIX) or "__" not in name:
            continue
        section, key = name[len(ENV_PREFIX) :].split("__", 1)
        cfg.setdefault(section.lower(), {})[key.lower()] = value
    for section, keys in cfg.items():
        if section not in _KNOWN_KEYS:
            raise ConfigError(f"unknown config section [{section}]")
        for key in keys:
            if key not in _KNOWN_KEYS[section]:
                raise ConfigError(f"unknown config key {section}.{key}")
    for section, key in _REQUIRED:
        if key not in cfg.get(section, {}):
            raise ConfigError(f"missing config key {section}.{key}")
    return cfg


def config_hash(cfg: dict[str, dict[str, str]]) -> str:
    lines = [
        f"{section}.{key}={cfg[section][key]}"
        for section in sorted(cfg)
        for key in sorted(cfg[section])
    ]
    return hashlib.sha256("\n".join(lines).encode()).hexdigest()[:12]


def _get(cfg, section, key, cast, default=None):
    raw = cfg.get(section, {}).get(key)
    if raw is None:
        if default is not None:
            return default
        raise ConfigError(f"missing config key {section}.{key}")
    try:
        return cast(raw)
    except ValueError as exc:
        raise ConfigError(f"bad value for {section}.{key}: {raw!r}") from exc


def _parse_edges(text: str) -> list[tuple[int, int]]:
    text = text.strip()
    if not text:
        return []
    pairs = []
    for item in text.split(","):
        a, b = item.strip().split("-")
        pairs.append((int(a), int(b)))
    return pairs


class Scenario:
    """Everything one run needs, resolved from a config."""

    def __init__(self, cfg: dict[str, dict[str, str]]):
        self.cfg = cfg
        self.hash = config_hash(cfg)
        self.seed = _get(cfg, "run", "seed", int)
        n = _get(cfg, "graph", "n", int)
        horizon = _get(cfg, "graph", "t", int)
        kind = cfg["graph"]["kind"]
        self.traj = None
        if kind == "static":
            edges = _parse_edges(cfg["graph"].get("edges", ""))
            self.graphs = make_static(n, horizon, edges)
        elif kind == "dynamic_er":
            params = ErParams(
                p_init=_get(cfg, "graph", "p_init", float),
                p_birth=_get(cfg, "graph", "p_birth", float),
                p_death=_get(cfg, "graph", "p_death", float),
            )
            self.graphs = make_dynamic_er(n, horizon, params, seed=self.seed)
        elif kind == "metric":
            self.traj = random_walk_trajectories(
                n, horizon, _get(cfg, "graph", "v_max", float), seed=self.seed
            )
            self.graphs = make_metric(self.traj, _get(cfg, "graph", "kappa", float))
        else:
            raise ConfigError(f"bad value for graph.kind: {kind!r}")
        try:
            self.env = env_from_spec(cfg["env"])
        except (KeyError, ValueError) as exc:
            raise ConfigError(f"bad env spec: {exc}") from exc
        block_len = _get(cfg, "design", "block_len", int)
        try:
            partitions = build_partitions(
                cfg["design"]["partition"],
                self.graphs,
                block_len,
                traj=self.traj,
                cell_side=_get(cfg, "design", "cell_side", float, default=0.5),
            )
        except ValueError as exc:
            raise ConfigError(f"bad value for design.partition: {exc}") from exc
        self.design = VerticalDesign(
            block_len=block_len, partitions=partitions, n=n, horizon=horizon
        )
        raw_r = cfg["estimator"]["r"]
        if raw_r.strip().upper() == "AUTO":
            self.r = auto_radius(self.env.t_mix, n, horizon)
        else:
            self.r = _get(cfg, "estimator", "r", int)
        self.oracle_mode = cfg["oracle"]["mode"].lower()
        if self.oracle_mode not in ("exact", "mc"):
            raise ConfigError(f"bad value for oracle.mode: {self.oracle_mode!r}")
        self.budget = _get(cfg, "oracle", "budget", int, default=20)
        self.replications = _get(cfg, "oracle", "replications", int, default=100_000)

    def moments(self, want_pairs: bool):
        if self.oracle_mode == "exact":
            return exact_moments(
                self.env, self.graphs, self.design, self.r, budget=self.budget, want_pairs=want_pairs
            )
        return mc_moments(
            self.env,
            self.graphs,
            self.design,
            self.r,
            replications=self.replications,
            seed=self.seed + 3,
            want_pairs=want_pairs,
        )


def _write_csv(path: Path, cfg_hash: str, body: str) -> None:
    path.write_text(f"# config={cfg_hash}\n{body}")


def _write_json(path: Path, cfg_hash: str, payload: dict) -> None:
    doc = {"config": cfg_hash}
    doc.update(payload)
    path.write_text(json.dumps(doc, sort_keys=True, indent=2) + "\n")


def cmd_run(cfg: dict[str, dict[str, str]], out_dir: Path) -> int:
    sc = Scenario(cfg)
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / "graphs.txt").write_text(sc.graphs.to_text())
    (out_dir / "design.txt").write_text(sc.design.to_text())
    assignment = sample_assignment(sc.design, seed=sc.seed + 1)
    _write_csv(out_dir / "assignments.csv", sc.hash, assignment.to_csv_text())
    panel = simulate(sc.env, sc.graphs, assignment, seed=sc.seed + 2)
    _write_csv(out_dir / "outcomes.csv", sc.hash, panel.to_csv_text())
    report = ht_estimate(sc.graphs, sc.design, assignment, panel, sc.r)
    _write_csv(out_dir / "ht_report.csv", sc.hash, report.to_csv_text())
    bounds = compute_bound_report(sc.env, sc.graphs, sc.design, sc.r)
    payload = bounds.to_json_dict()
    payload["ht_summary"] = report.summary()
    _write_json(out_dir / "bounds.json", sc.hash, payload)
    ledger = verify_bounds(
        sc.env,
        sc.graphs,
        sc.design,
        sc.r,
        mode=sc.oracle_mode,
        budget=sc.budget,
        replications=sc.replications,
        seed=sc.seed + 3,
    )
    _write_json(out_dir / "ledger.json", sc.hash, ledger.to_json_dict())
    if cfg.get("output", {}).get("pairs", "false").lower() in ("true", "1", "yes"):
        moments = sc.moments(want_pairs=True)
        rows = pair_table_rows(sc.env, sc.graphs, sc.design, sc.r, moments)
        header = (
            "i,t,i_other,t_other,tau_star,gap_later,gap_earlier,cov,bound,"
            "in_regime,never_interacting"
        )
        body = "\n".join(
            [header]
            + [
                ",".join(str(row[col]) for col in header.split(","))
                for row in rows
            ]
        )
        extra = {"t_mix": sc.env.t_mix, "sigma": sc.env.sigma, "r": sc.r}
        _write_csv(out_dir / "pairs.csv", sc.hash, body + "\n")
        _write_json(out_dir / "pairs_meta.json", sc.hash, extra)
    return 0


_SWEEP_COLUMNS = [
    "axis",
    "value",
    "n",
    "horizon",
    "block_len",
    "r",
    "t_mix",
    "sigma",
    "estimate",
    "true_ate",
    "bias",
    "variance",
    "mse",
    "bias_bound",
    "variance_bound",
    "mse_bound",
    "cd_avg",
    "cd_max",
    "p_min",
    "wall_time_s",
]


def _sweep_row(args: tuple) -> dict:
    cfg, axis, value = args
    started = time.perf_counter()
    section, key = _SWEEP_AXES[axis]
    patched = {s: dict(kv) for s, kv in cfg.items()}
    patched[section][key] = value
    sc = Scenario(patched)
    moments = sc.moments(want_pairs=False)
    bounds = compute_bound_report(sc.env, sc.graphs, sc.design, sc.r)
    return {
        "axis": axis,
        "value": value,
        "n": sc.graphs.n,
        "horizon": sc.graphs.horizon,
        "block_len": sc.design.block_len,
        "r": sc.r,
        "t_mix": sc.env.t_mix,
        "sigma": sc.env.sigma,
        "estimate": moments.mean_estimate,
        "true_ate": moments.true_ate,
        "bias": moments.bias,
        "variance": moments.variance,
        "mse": moments.mse,
        "bias_bound": bounds.bias_bound,
        "variance_bound": bounds.variance_bound,
        "mse_bound": bounds.mse_bound,
        "cd_avg": bounds.cd_avg,
        "cd_max": bounds.cd_max,
        "p_min": bounds.p_min,
        "wall_time_s": round(time.perf_counter() - started, 6),
    }


def cmd_sweep(cfg, axis: str, values: list[str], out_path: Path, jobs: int) -> int:
    if axis not in _SWEEP_AXES:
        raise ConfigError(f"bad value for sweep.axis: {axis!r}")
    tasks = [(cfg, axis, value) for value in values]
    if jobs > 1 and tasks:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            rows = list(pool.map(_sweep_row, tasks))
    else:
        rows = [_sweep_row(task) for task in tasks]
    lines = [",".join(_SWEEP_COLUMNS)]
    for row in rows:
        lines.append(",".join(str(row[c]) for c in _SWEEP_COLUMNS))
    out_path.parent.mkdir(parents=True, exist_ok=True)
    _write_csv(out_path, config_hash(cfg), "\n".join(lines) + "\n")
    return 0


def cmd_verify(cfg, out_dir: Path) -> int:
    sc = Scenario(cfg)
    out_dir.mkdir(parents=True, exist_ok=True)
    ledger = verify_bounds(
        sc.env,
        sc.graphs,
        sc.design,
        sc.r,
        mode=sc.oracle_mode,
        budget=sc.budget,
        replications=sc.replications,
        seed=sc.seed + 3,
    )
    _write_json(out_dir / "ledger.json", sc.hash, ledger.to_json_dict())
    return 0 if ledger.all_pass() else 1


def cmd_gen_graphs(cfg, out_dir: Path) -> int:
    sc = Scenario(cfg)
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / "graphs.txt").write_text(sc.graphs.to_text())
    return 0


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="spillsim", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)
    for name in ("run", "verify", "gen-graphs"):
        p = sub.add_parser(name)
        p.add_argument("--config", required=True)
        p.add_argument("--seed", type=int, default=None, help="override run.seed")
        p.add_argument("--out", default=None, help="output directory")
    p = sub.add_parser("sweep")
    p.add_argument("--config", required=True)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--out", default=None, help="output CSV path")
    p.add_argument("--axis", default=None, choices=sorted(_SWEEP_AXES))
    p.add_argument("--values", default=None, help="comma-separated axis values")
    p.add_argument("--jobs", type=int, default=1)
    args = parser.parse_args(argv)
    try:
        cfg = load_config(args.config)
        if args.seed is not None:
            cfg.setdefault("run", {})["seed"] = str(args.seed)
        out = args.out if args.out is not None else cfg.get("run", {}).get("out", "out")
        if args.command == "run":
            return cmd_run(cfg, Path(out))
        if args.command == "verify":
            return cmd_verify(cfg, Path(out))
        if args.command == "gen-graphs":
            return cmd_gen_graphs(cfg, Path(out))
        axis = args.axis or cfg.get("sweep", {}).get("axis")
        if axis is None:
            raise ConfigError("missing config key sweep.axis")
        raw_values = (
            args.values if args.values is not None else cfg.get("sweep", {}).get("values", "")
        )
        values = [v.strip() for v in raw_values.split(",") if v.strip()]
        out_path = Path(out)
        if out_path.suffix != ".csv":
            out_path = out_path / "sweep.csv"
        return cmd_sweep(cfg, axis, values, out_path, jobs=args.jobs)
    except ConfigError as exc:
        print(f"spillsim: config error: {exc}", file=sys.stderr)
        return 2
    except (ValueError, OSError) as exc:
        print(f"spillsim: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
