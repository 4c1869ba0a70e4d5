"""
Command-line front end.

    proteus committee --n 100 --target 8.9e-7
    proteus run --config honest.json --out metrics.json --trace-dir traces/
    proteus sweep --spec sweep.json --out sweep.csv

Exit codes: 0 success, 2 invalid flags/config/spec, 3 safety violation.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
from pathlib import Path
from statistics import mean, median

from .committee import InvalidCounts, NoFeasibleSize, committee_summary
from .sim import ConfigInvalid, SafetyViolation, SimulationConfig, run_simulation, trace_lines

EXIT_CONFIG = 2
EXIT_SAFETY = 3

SWEEP_COLUMNS = ("protocol", "n", "c", "f", "block_size", "seeds", "median_latency_ticks",
                 "messages_per_epoch", "tx_per_10k_ticks", "view_changes")
SWEEP_HEADER = """\
# proteus sweep: one row per (protocol, n, block_size) cell, seeds paired across protocols
# median_latency_ticks: median over seeds of the per-run median epoch latency
#   (pre-prepare of a block until the last correct replica commits it), in simulated ticks
# messages_per_epoch: mean over seeds of normal-mode messages per committed block,
#   self-sends excluded
# tx_per_10k_ticks: mean committed transactions per 10000 simulated ticks
# view_changes: total completed view changes over the cell's runs
"""


def _fail(msg: str, code: int = EXIT_CONFIG) -> int:
    print(f"error: {msg}", file=sys.stderr)
    return code


def _load_json(path: str) -> dict:
    try:
        with open(path) as fh:
            data = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigInvalid(f"cannot read {path}: {exc}") from exc
    if not isinstance(data, dict):
        raise ConfigInvalid(f"{path} must hold a JSON object")
    return data


def cmd_committee(args) -> int:
    if args.c is None and args.target is None:
        return _fail("one of --c or --target is required")
    try:
        record = committee_summary(args.n, args.f, args.c, args.target)
    except (InvalidCounts, NoFeasibleSize, ValueError) as exc:
        return _fail(str(exc))
    print(json.dumps(record))
    return 0


def cmd_run(args) -> int:
    try:
        data = _load_json(args.config)
        if args.seed is not None:
            data["seed"] = args.seed
        if args.trace_dir:
            data["trace"] = True
        cfg = SimulationConfig.from_dict(data)
    except ConfigInvalid as exc:
        return _fail(str(exc))
    try:
        metrics, trace = run_simulation(cfg)
    except SafetyViolation as exc:
        return _fail(f"safety violation: {exc}", EXIT_SAFETY)
    record = metrics.to_json()
    record["config"] = cfg.to_dict()
    if args.trace_dir:
        tdir = Path(args.trace_dir)
        tdir.mkdir(parents=True, exist_ok=True)
        tpath = tdir / f"trace-{cfg.protocol}-n{cfg.n}-{cfg.seed.decode(errors='replace')}.jsonl"
        tpath.write_text(trace_lines(trace))
        record["trace_path"] = str(tpath)
    text = json.dumps(record, indent=2, sort_keys=True)
    if args.out:
        Path(args.out).write_text(text + "\n")
    else:
        print(text)
    return 0


def _sweep_configs(spec: dict):
    """Yield (protocol, n, block_size, [configs]) cells in spec order."""
    try:
        ns = [int(x) for x in spec["n"]]
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigInvalid("sweep spec needs an integer list 'n'") from exc
    block_sizes = spec.get("block_sizes", [1])
    protocols = spec.get("protocols", ["proteus", "pbft"])
    seeds = spec.get("seeds", 1)
    seeds = [f"sweep-{k}" for k in range(seeds)] if isinstance(seeds, int) else list(seeds)
    base = {k: v for k, v in spec.items()
            if k not in ("n", "block_sizes", "protocols", "seeds", "committee")}
    committees = {int(k): int(v) for k, v in spec.get("committee", {}).items()}
    cells = []
    for proto in protocols:
        for n in ns:
            for bs in block_sizes:
                cfgs = []
                for s in seeds:
                    data = dict(base, n=n, block_size=bs, protocol=proto, seed=s)
                    if proto == "proteus" and n in committees:
                        data["c"] = committees[n]
                    cfgs.append(SimulationConfig.from_dict(data))
                cells.append((proto, n, bs, cfgs))
    return cells


def run_cell(cfgs) -> dict:
    runs = [run_simulation(cfg)[0] for cfg in cfgs]
    first = runs[0]
    return {
        "protocol": first.protocol, "n": first.n, "c": first.c, "f": first.f,
        "block_size": first.block_size, "seeds": len(runs),
        "median_latency_ticks": median(m.median_latency() for m in runs),
        "messages_per_epoch": mean(m.per_epoch_messages() for m in runs),
        "tx_per_10k_ticks": round(mean(m.throughput() for m in runs), 3),
        "view_changes": sum(m.view_changes for m in runs),
    }


def cmd_sweep(args) -> int:
    try:
        cells = _sweep_configs(_load_json(args.spec))
    except ConfigInvalid as exc:
        return _fail(str(exc))
    out = open(args.out, "w", newline="") if args.out else sys.stdout
    try:
        out.write(SWEEP_HEADER)
        writer = csv.DictWriter(out, fieldnames=SWEEP_COLUMNS)
        writer.writeheader()
        for _proto, _n, _bs, cfgs in cells:
            try:
                writer.writerow(run_cell(cfgs))
            except SafetyViolation as exc:
                return _fail(f"safety violation: {exc}", EXIT_SAFETY)
            out.flush()
    finally:
        if out is not sys.stdout:
            out.close()
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="proteus", description=__doc__.strip().split("\n\n")[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("committee", help="committee failure probability and sizing")
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--f", type=int, default=None)
    p.add_argument("--c", type=int, default=None)
    p.add_argument("--target", type=float, default=None)
    p.set_defaults(func=cmd_committee)

    p = sub.add_parser("run", help="run one simulation from a JSON config")
    p.add_argument("--config", required=True)
    p.add_argument("--out", default=None, help="metrics JSON path (default: stdout)")
    p.add_argument("--trace-dir", default=None)
    p.add_argument("--seed", default=None, help="override the config seed")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("sweep", help="n-sweep as CSV")
    p.add_argument("--spec", required=True)
    p.add_argument("--out", default=None, help="CSV path (default: stdout)")
    p.set_defaults(func=cmd_sweep)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
