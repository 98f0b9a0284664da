"""Command-line front end.

Exit codes: 0 success, 1 parse or validation error, 2 mapping infeasible
(capacity), 3 analytical/oracle mismatch. Outputs are byte-deterministic
given identical inputs and seed.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys

from .arch import ArchError, parse_architecture
from .mapper import (
    MapperError, MapspaceSpec, case_study, pareto_filter, rows_to_csv,
    run_mapspace,
)
from .mapping import MappingError, parse_mapping
from .metrics import evaluate
from .oracle import OracleError, simulate
from .randgen import random_case
from .workload import WorkloadError, parse_workload

log = logging.getLogger("fusedflow")

PARSE_ERRORS = (WorkloadError, ArchError, MappingError, MapperError,
                OracleError, OSError, json.JSONDecodeError)


def _read(path: str) -> str:
    with open(path, "r", encoding="utf-8") as fh:
        return fh.read()


def _write(path: str | None, text: str):
    if path is None or path == "-":
        sys.stdout.write(text)
    else:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(text)


def _load_inputs(args, need_mapping=True):
    if not args.workload or not args.arch:
        raise SystemExit("fusedflow: --workload and --arch are required")
    if need_mapping and not getattr(args, "mapping", None):
        raise SystemExit("fusedflow: --mapping is required")
    try:
        w = parse_workload(_read(args.workload))
    except PARSE_ERRORS as exc:
        raise SystemExit(f"fusedflow: workload {args.workload}: {exc}")
    try:
        a = parse_architecture(_read(args.arch))
    except PARSE_ERRORS as exc:
        raise SystemExit(f"fusedflow: architecture {args.arch}: {exc}")
    m = None
    if need_mapping:
        try:
            m = parse_mapping(_read(args.mapping), w, a)
        except PARSE_ERRORS as exc:
            raise SystemExit(f"fusedflow: mapping {args.mapping}: {exc}")
    return w, a, m


def cmd_evaluate(args) -> int:
    w, a, m = _load_inputs(args)
    res = evaluate(w, m, a)
    _write(args.out, res.metrics.to_json() + "\n")
    if not res.metrics.feasible:
        log.warning("mapping infeasible: %s",
                    "; ".join(res.metrics.capacity_violations))
        return 2
    return 0


def cmd_search(args) -> int:
    w, a, _ = _load_inputs(args, need_mapping=False)
    if not args.mapspace:
        raise SystemExit("fusedflow: --mapspace is required")
    try:
        doc = json.loads(_read(args.mapspace))
        spec = MapspaceSpec.from_dict(doc)
    except PARSE_ERRORS as exc:
        raise SystemExit(f"fusedflow: mapspace {args.mapspace}: {exc}")
    try:
        rows = run_mapspace("search", spec, w, a, jobs=args.jobs)
    except MapperError as exc:
        raise SystemExit(f"fusedflow: {exc}")
    front = pareto_filter(rows, ["occupancy_words", "offchip_words",
                                 "recompute_ops", "latency_cycles",
                                 "energy_pj"])
    _write(args.out, rows_to_csv(front))
    log.info("searched %d mappings, front size %d", len(rows), len(front))
    return 0


def cmd_case_study(args) -> int:
    shapes = None
    if args.shapes:
        try:
            shapes = json.loads(args.shapes)
        except json.JSONDecodeError as exc:
            raise SystemExit(f"fusedflow: --shapes: {exc}")
    arch = None
    if args.arch:
        try:
            arch = parse_architecture(_read(args.arch))
        except PARSE_ERRORS as exc:
            raise SystemExit(f"fusedflow: architecture {args.arch}: {exc}")
    try:
        rows = case_study(args.name, shapes, arch, jobs=args.jobs)
    except PARSE_ERRORS as exc:
        raise SystemExit(f"fusedflow: {exc}")
    _write(args.out, rows_to_csv(rows))
    return 0


_COUNTERS = ("fills", "reads", "updates", "noc_hops", "compute_ops",
             "recompute_ops", "offchip_words", "peak_occupancy_words",
             "occupancy_per_tensor")


def _check_one(w, a, m, op_limit) -> str | None:
    """Returns the first divergent counter description, or None."""
    res = evaluate(w, m, a)
    sim = simulate(w, m, a, op_limit=op_limit)
    analytical = {
        "fills": dict(res.totals.fills),
        "reads": dict(res.totals.reads),
        "updates": dict(res.totals.updates),
        "noc_hops": dict(res.totals.noc_hops),
        "compute_ops": res.totals.compute_ops,
        "recompute_ops": res.analysis.recompute_ops(),
        "offchip_words": res.metrics.offchip_words,
        "peak_occupancy_words": res.metrics.peak_occupancy_words,
        "occupancy_per_tensor": res.metrics.occupancy_per_tensor,
    }
    reference = {
        "fills": dict(sim.fills),
        "reads": dict(sim.reads),
        "updates": dict(sim.updates),
        "noc_hops": dict(sim.noc_hops),
        "compute_ops": sim.compute_ops,
        "recompute_ops": sim.recompute_ops,
        "offchip_words": sim.offchip_words,
        "peak_occupancy_words": sim.peak_occupancy_words,
        "occupancy_per_tensor": sim.occupancy_per_tensor,
    }
    corrupt = os.environ.get("FUSEDFLOW_TEST_CORRUPT")
    if corrupt == "compute_ops":
        analytical["compute_ops"] += 1
    elif corrupt:
        analytical[corrupt] = "corrupted"
    for key in _COUNTERS:
        if analytical[key] != reference[key]:
            return (f"counter {key} diverges: analytical={analytical[key]!r} "
                    f"oracle={reference[key]!r}")
    return None


def cmd_oracle_check(args) -> int:
    if args.fuzz:
        failures = 0
        for i in range(args.fuzz):
            w, a, m = random_case(args.seed + i)
            diag = _check_one(w, a, m, args.op_limit)
            if diag:
                print(f"case {args.seed + i}: {diag}")
                failures += 1
        if failures:
            print(f"{failures}/{args.fuzz} fuzz cases diverged")
            return 3
        print(f"all {args.fuzz} fuzz cases match exactly")
        return 0
    w, a, m = _load_inputs(args)
    diag = _check_one(w, a, m, args.op_limit)
    if args.trace:
        sim = simulate(w, m, a, op_limit=args.op_limit)
        lines = ["step,level,tensor,occupancy"]
        lines += [f"{s},{lvl},{t},{n}" for s, lvl, t, n in sim.trace_rows()]
        _write(args.trace, "\n".join(lines) + "\n")
    if diag:
        print(diag)
        return 3
    print("analytical and oracle counters match exactly")
    return 0


def cmd_report(args) -> int:
    try:
        doc = json.loads(_read(args.metrics))
    except PARSE_ERRORS as exc:
        raise SystemExit(f"fusedflow: metrics {args.metrics}: {exc}")
    lines = []
    lines.append(f"latency:          {doc['latency']} cycles")
    lines.append(f"  compute:        {doc['compute_latency']} cycles")
    for lvl, cyc in doc.get("memory_latency", {}).items():
        lines.append(f"  {lvl + ' memory:':<16}{cyc} cycles")
    lines.append(f"energy:           {doc['energy']['total']} pJ")
    for part, pj in doc["energy"]["breakdown"].items():
        lines.append(f"  {part + ':':<16}{pj} pJ")
    lines.append(f"off-chip traffic: {doc['offchip_words']} words")
    for lvl, occ in doc.get("occupancy", {}).items():
        lines.append(f"occupancy {lvl}:    {occ['total']} words")
        for t, n in occ["per_tensor"].items():
            lines.append(f"  {t + ':':<16}{n} words")
    total_rc = sum(doc.get("recompute_ops", {}).values())
    lines.append(f"recomputed ops:   {total_rc}")
    lines.append(f"feasible:         {doc.get('feasible', True)}")
    _write(args.out, "\n".join(lines) + "\n")
    return 0


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="fusedflow",
        description="Cost model and mapspace explorer for fused-layer "
                    "dataflow accelerators")
    sub = ap.add_subparsers(dest="command", required=True)

    def common(p, mapping=False, mapspace=False):
        p.add_argument("--workload", help="workload JSON file")
        p.add_argument("--arch", help="architecture JSON file")
        if mapping:
            p.add_argument("--mapping", help="mapping JSON file")
        if mapspace:
            p.add_argument("--mapspace", help="mapspace JSON file")
        p.add_argument("--out", default=None, help="output path (default stdout)")
        p.add_argument("--op-limit", type=int, default=1_000_000,
                       dest="op_limit")
        p.add_argument("--seed", type=int, default=0)
        p.add_argument("--jobs", type=int, default=1)

    p = sub.add_parser("evaluate", help="evaluate one mapping")
    common(p, mapping=True)
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("search", help="enumerate a mapspace, emit Pareto CSV")
    common(p, mapspace=True)
    p.set_defaults(func=cmd_search)

    p = sub.add_parser("case-study", help="run a named case study")
    p.add_argument("name")
    p.add_argument("--shapes", help="JSON object of template shape overrides")
    common(p)
    p.set_defaults(func=cmd_case_study)

    p = sub.add_parser("oracle-check",
                       help="compare analytical counters against the "
                            "brute-force simulator")
    common(p, mapping=True)
    p.add_argument("--fuzz", type=int, default=0,
                   help="check N seeded random scenarios instead of files")
    p.add_argument("--trace", default=None,
                   help="also dump the simulator occupancy trace as CSV")
    p.set_defaults(func=cmd_oracle_check)

    p = sub.add_parser("report", help="render a metrics JSON as text")
    p.add_argument("--metrics", required=True)
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_report)
    return ap


def main(argv=None) -> int:
    logging.basicConfig(
        level=os.environ.get("FUSEDFLOW_LOG", "WARNING").upper(),
        format="%(levelname)s %(name)s: %(message)s")
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except PARSE_ERRORS as exc:
        print(f"fusedflow: {exc}", file=sys.stderr)
        return 1


def run():  # console entry point
    raise SystemExit(main())


if __name__ == "__main__":
    raise SystemExit(main())
