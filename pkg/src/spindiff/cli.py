"""Command line: ``spindiff run|validate|list-experiments``."""

from __future__ import annotations

import argparse
import hashlib
import json
import logging
import os
import shutil
import sys
import tempfile
import time
from pathlib import Path

import numpy as np

from . import __version__
from .experiments import DESCRIPTIONS, RUNNERS, Table, describe
from .scenario import ScenarioError, load

log = logging.getLogger("spindiff")

EXIT_OK, EXIT_CHECK_FAILED, EXIT_INVALID, EXIT_RUNTIME = 0, 1, 2, 3


def format_value(x: float) -> str:
    return repr(float(x)) if np.isfinite(x) else str(float(x))


def write_table(path: Path, table: Table, header: list[str]) -> str:
    lines = [f"# {h}" for h in header]
    lines.append("# units: " + ", ".join(f"{c}={u}" for c, u in zip(table.columns, table.units)))
    lines.append(",".join(table.columns))
    for row in np.atleast_2d(table.rows):
        if row.size:
            lines.append(",".join(format_value(v) for v in row))
    data = ("\n".join(lines) + "\n").encode()
    path.write_bytes(data)
    return hashlib.sha256(data).hexdigest()


def cmd_run(args) -> int:
    try:
        sc = load(args.scenario)
    except ScenarioError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    if args.seed is not None:
        sc.seed = args.seed
    _, warns = describe(sc)
    for w in warns:
        log.warning(w)
    target = Path(args.out_dir) if args.out_dir else Path("out") / sc.name
    target.parent.mkdir(parents=True, exist_ok=True)
    start = time.perf_counter()
    try:
        result = RUNNERS[sc.kind](sc, args.workers)
    except (ValueError, RuntimeError) as exc:
        print(f"error: {sc.kind} failed: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    wall = time.perf_counter() - start
    tmp = Path(tempfile.mkdtemp(prefix=f".{target.name}-", dir=target.parent))
    try:
        header = [f"spindiff {__version__} {sc.kind}", f"scenario-sha256: {sc.digest}", f"seed: {sc.seed}"]
        manifest = {}
        for name, table in result.tables.items():
            fname = f"{name}.csv"
            manifest[fname] = write_table(tmp / fname, table, header)
        failed = [c for c in result.checks if not c.ok]
        report = {
            "scenario": str(args.scenario),
            "kind": sc.kind,
            "scenario_sha256": sc.digest,
            "seed": sc.seed,
            "wall_time_s": wall,
            "outputs": manifest,
            "checks": [c.__dict__ for c in result.checks],
            "status": "ok" if not failed else "check-failed",
        }
        (tmp / "report.json").write_text(json.dumps(report, indent=2) + "\n")
        if target.exists():
            shutil.rmtree(target)
        os.replace(tmp, target)
    except BaseException:
        shutil.rmtree(tmp, ignore_errors=True)
        raise
    for c in result.checks:
        log.info("check %-40s %.3g (limit %.3g) %s", c.name, c.value, c.limit, "ok" if c.ok else "FAILED")
    print(f"wrote {len(manifest)} tables to {target} in {wall:.2f} s")
    if failed:
        print("invariant checks failed: " + ", ".join(c.name for c in failed), file=sys.stderr)
        return EXIT_CHECK_FAILED
    return EXIT_OK


def cmd_validate(args) -> int:
    try:
        sc = load(args.scenario)
        lines, warns = describe(sc)
    except (ScenarioError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    for line in lines:
        print(line)
    for w in warns:
        print(f"warning: {w}")
    return EXIT_OK


def cmd_list(args) -> int:
    for kind in RUNNERS:
        print(f"{kind:22s} {DESCRIPTIONS[kind]}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="spindiff", description=__doc__)
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)
    run = sub.add_parser("run", help="run a scenario and write CSV tables plus report.json")
    run.add_argument("scenario")
    run.add_argument("--workers", type=int, default=None, help="worker processes (default: available CPUs)")
    run.add_argument("--seed", type=int, default=None, help="override the scenario seed")
    run.add_argument("--out-dir", default=None, help="output directory (default: out/<scenario name>)")
    run.set_defaults(func=cmd_run)
    val = sub.add_parser("validate", help="check a scenario and print derived quantities")
    val.add_argument("scenario")
    val.set_defaults(func=cmd_validate)
    lst = sub.add_parser("list-experiments", help="list scenario kinds")
    lst.set_defaults(func=cmd_list)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    return args.func(args)


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
