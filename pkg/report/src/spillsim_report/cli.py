"""Command-line entry points: one subcommand per figure kind plus make-all."""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from .figures import FigureSpec, plot
from .io import SchemaError


def _spec_from_args(kind: str, args) -> FigureSpec:
    if kind == "decay":
        inputs = {"pairs": args.pairs, "meta": args.meta}
    elif kind in ("bias", "scaling"):
        inputs = {"sweep": args.sweep}
    else:
        inputs = {"ledger": args.ledger}
    return FigureSpec(kind=kind, inputs=inputs, output=args.out)


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="spillsim-report", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("decay", help="covariance decay versus time since last interaction")
    p.add_argument("--pairs", required=True, help="pairs.csv from a run with output.pairs=true")
    p.add_argument("--meta", required=True, help="pairs_meta.json from the same run")
    p.add_argument("--out", required=True)

    for name in ("bias", "scaling"):
        p = sub.add_parser(name)
        p.add_argument("--sweep", required=True, help="sweep.csv from the spillsim sweep command")
        p.add_argument("--out", required=True)

    p = sub.add_parser("ledger-overlay")
    p.add_argument("--ledger", required=True, help="ledger.json from a run or verify")
    p.add_argument("--out", required=True)

    p = sub.add_parser("make-all", help="every figure whose inputs exist in a run directory")
    p.add_argument("--run-dir", required=True, help="spillsim run output directory")
    p.add_argument("--sweep", default=None, help="optional sweep.csv for bias/scaling figures")
    p.add_argument("--out-dir", required=True)

    args = parser.parse_args(argv)
    try:
        if args.command == "make-all":
            return _make_all(args)
        spec = _spec_from_args(args.command, args)
        result = plot(spec)
        path = result[0] if isinstance(result, tuple) else result
        print(path)
        return 0
    except (SchemaError, FileNotFoundError, ValueError) as exc:
        print(f"spillsim-report: error: {exc}", file=sys.stderr)
        return 1


def _make_all(args) -> int:
    run_dir = Path(args.run_dir)
    out_dir = Path(args.out_dir)
    made = []
    pairs = run_dir / "pairs.csv"
    meta = run_dir / "pairs_meta.json"
    if pairs.exists() and meta.exists():
        spec = FigureSpec(
            kind="decay",
            inputs={"pairs": str(pairs), "meta": str(meta)},
            output=str(out_dir / "decay.png"),
        )
        made.append(plot(spec)[0])
    ledger = run_dir / "ledger.json"
    if ledger.exists():
        spec = FigureSpec(
            kind="ledger-overlay",
            inputs={"ledger": str(ledger)},
            output=str(out_dir / "ledger.png"),
        )
        made.append(plot(spec))
    if args.sweep:
        for kind, name in (("bias", "bias.png"), ("scaling", "scaling.png")):
            spec = FigureSpec(
                kind=kind, inputs={"sweep": args.sweep}, output=str(out_dir / name)
            )
            made.append(plot(spec))
    if not made:
        print("spillsim-report: error: no usable inputs found", file=sys.stderr)
        return 1
    for path in made:
        print(path)
    return 0


if __name__ == "__main__":
    sys.exit(main())
