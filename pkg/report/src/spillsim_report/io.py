"""Readers for the documented spillsim output schemas.

Every reader validates the column set it needs and raises SchemaError
naming the first offending column; nothing here imports the simulator.
"""

from __future__ import annotations

import json
from pathlib import Path


class SchemaError(ValueError):
    """An input file does not match its documented schema."""


def read_csv(path: str | Path, required: tuple[str, ...]) -> list[dict[str, str]]:
    """Parse a spillsim CSV (leading ``# config=`` comment lines allowed)."""
    lines = [ln for ln in Path(path).read_text().splitlines() if ln and not ln.startswith("#")]
    if not lines:
        raise SchemaError(f"{path}: empty file")
    header = lines[0].split(",")
    for column in required:
        if column not in header:
            raise SchemaError(f"{path}: missing column {column!r}")
    rows = []
    for ln in lines[1:]:
        parts = ln.split(",")
        if len(parts) != len(header):
            raise SchemaError(f"{path}: row width {len(parts)} != header width {len(header)}")
        rows.append(dict(zip(header, parts)))
    return rows


def read_json(path: str | Path, required: tuple[str, ...]) -> dict:
    doc = json.loads(Path(path).read_text())
    for key in required:
        if key not in doc:
            raise SchemaError(f"{path}: missing key {key!r}")
    return doc


PAIRS_COLUMNS = (
    "i",
    "t",
    "i_other",
    "t_other",
    "tau_star",
    "gap_later",
    "gap_earlier",
    "cov",
    "bound",
    "in_regime",
    "never_interacting",
)

SWEEP_COLUMNS = (
    "axis",
    "value",
    "n",
    "horizon",
    "r",
    "t_mix",
    "bias",
    "variance",
    "mse",
    "bias_bound",
    "mse_bound",
)


def read_pairs(path: str | Path) -> list[dict[str, str]]:
    return read_csv(path, PAIRS_COLUMNS)


def read_sweep(path: str | Path) -> list[dict[str, str]]:
    return read_csv(path, SWEEP_COLUMNS)


def read_ledger(path: str | Path) -> list[dict]:
    doc = read_json(path, ("rows",))
    rows = doc["rows"]
    for row in rows:
        for key in ("name", "measured", "bound", "verdict"):
            if key not in row:
                raise SchemaError(f"{path}: ledger row missing key {key!r}")
    return rows


def read_pairs_meta(path: str | Path) -> dict:
    return read_json(path, ("t_mix",))
