"""Bounded mapspace enumeration, Pareto fronts, and case-study datasets.

Search is exhaustive over a finite, explicitly bounded space; the only
pruning is capacity infeasibility. Rows come out in a deterministic order so
CSV output is reproducible byte for byte.
"""

from __future__ import annotations

import json
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from itertools import permutations, product

from .arch import Architecture, Compute, Level
from .mapping import (
    InterLayerMapping, Mapping, Parallelism, Partition, RetentionChoice,
    validate_mapping, with_defaults,
)
from .metrics import EvalResult, evaluate
from .templates import conv_chain, conv_conv, pwise_dwise_pwise
from .workload import FusionSet, TensorRole


class MapperError(Exception):
    pass


CSV_COLUMNS = ("study", "schedule", "partitions", "retention", "parallelism",
               "occupancy_words", "offchip_words", "recompute_ops",
               "latency_cycles", "energy_pj", "breakdown_json")


def divisors(n: int) -> list[int]:
    return [d for d in range(1, n + 1) if n % d == 0]


def powers_of_two(n: int) -> list[int]:
    out = []
    d = 1
    while d < n:
        out.append(d)
        d *= 2
    out.append(n)
    return out


@dataclass
class MapspaceSpec:
    """A finite mapspace: which knobs to sweep and how far."""

    rank_orders: list[tuple[str, ...]] | None = None
    rank_pool: list[str] | None = None
    max_ranks: int = 2
    tile_sizes: str | dict[str, list[int]] = "divisors"
    retention_mode: str = "per_tensor"          # or "uniform"
    depths: list[int] | str = "all"
    levels: dict[str, list[str]] = field(default_factory=dict)
    parallelism: list[Parallelism] = field(
        default_factory=lambda: [Parallelism.SEQUENTIAL])

    @staticmethod
    def from_dict(doc: dict) -> "MapspaceSpec":
        spec = MapspaceSpec()
        if "partition_ranks" in doc:
            spec.rank_orders = [tuple(x) for x in doc["partition_ranks"]]
        if "rank_pool" in doc:
            spec.rank_pool = list(doc["rank_pool"])
        spec.max_ranks = int(doc.get("max_ranks", 2))
        spec.tile_sizes = doc.get("tile_sizes", "divisors")
        ret = doc.get("retention", {})
        spec.retention_mode = ret.get("mode", "per_tensor")
        spec.depths = ret.get("depths", "all")
        spec.levels = {k: list(v) for k, v in ret.get("levels", {}).items()}
        spec.parallelism = [Parallelism(p) for p in
                            doc.get("parallelism", ["sequential"])]
        return spec


def _ladder(spec: MapspaceSpec, rank: str, shape: int) -> list[int]:
    if isinstance(spec.tile_sizes, dict):
        return [s for s in spec.tile_sizes.get(rank, divisors(shape))
                if 1 <= s <= shape]
    if spec.tile_sizes == "pow2":
        return powers_of_two(shape)
    return divisors(shape)


def _rank_orders(spec: MapspaceSpec, w: FusionSet) -> list[tuple[str, ...]]:
    if spec.rank_orders is not None:
        return list(spec.rank_orders)
    ranks = [r for r in w.last.rank_order
             if spec.rank_pool is None or r in spec.rank_pool]
    orders: list[tuple[str, ...]] = [()]
    for n in range(1, min(spec.max_ranks, len(ranks)) + 1):
        orders.extend(permutations(ranks, n))
    return orders


def _level_choices(spec: MapspaceSpec, w: FusionSet, a: Architecture,
                   tensor: str) -> list[str]:
    opts = spec.levels.get(tensor, spec.levels.get("default",
                                                   [a.innermost.name]))
    if w.tensor_roles[tensor] is TensorRole.INTERMEDIATE:
        opts = [l for l in opts if not a.is_top(l)] or [a.innermost.name]
    return opts


def _distinct_depths(w: FusionSet, tensor: str,
                     parts: tuple[Partition, ...], options: list[int],
                     relevant: dict[str, frozenset[str]]) -> list[int]:
    """Drop depths that key the tensor's eviction group identically.

    Depths whose relevant-partition prefixes coincide behave the same, so a
    per-tensor sweep only needs one representative (the shallowest).
    """
    seen = set()
    out = []
    for d in options:
        key = tuple(j for j, p in enumerate(parts[:d])
                    if p.rank in relevant[tensor])
        if key not in seen:
            seen.add(key)
            out.append(d)
    return out


def enumerate_mapspace(spec: MapspaceSpec, w: FusionSet, a: Architecture):
    """Yield every valid mapping of the space, in a deterministic order."""
    from .workload import relevance_map
    tensors = w.tensors()
    relevant = relevance_map(w)
    for order in _rank_orders(spec, w):
        ladders = []
        skip = False
        for r in order:
            if r not in w.last.rank_order:
                skip = True
                break
            sizes = [s for s in _ladder(spec, r, w.last.rank_shapes[r])
                     if s < w.last.rank_shapes[r]]
            ladders.append(sizes)
        if skip:
            continue
        for sizes in product(*ladders):
            parts = tuple(Partition(r, s) for r, s in zip(order, sizes))
            depth_options = (list(range(len(parts) + 1))
                             if spec.depths == "all" else
                             [d for d in spec.depths if d <= len(parts)])
            if not depth_options:
                continue
            level_options = [_level_choices(spec, w, a, t) for t in tensors]
            if spec.retention_mode == "uniform":
                depth_combos = [[d] * len(tensors) for d in depth_options]
            else:
                per_tensor = [_distinct_depths(w, t, parts, depth_options,
                                               relevant) for t in tensors]
                depth_combos = list(product(*per_tensor))
            for par in spec.parallelism:
                for depths in depth_combos:
                    for levels in product(*level_options):
                        retention = tuple(
                            RetentionChoice(t, d, lvl)
                            for t, d, lvl in zip(tensors, depths, levels))
                        m = with_defaults(
                            Mapping(InterLayerMapping(parts, par), retention),
                            w, a)
                        if not validate_mapping(m, w, a):
                            yield m


# ---------------------------------------------------------------------------
# Pareto


def pareto_filter(points: list[dict], objectives: list[str]) -> list[dict]:
    """Maximal non-dominated subset, minimizing every objective.

    Duplicate objective vectors keep the earliest point (stable order).
    """
    if not objectives:
        raise MapperError("need at least one objective")
    vecs = [tuple(p[o] for o in objectives) for p in points]
    seen = set()
    out = []
    for i, (p, v) in enumerate(zip(points, vecs)):
        if v in seen:
            continue
        dominated = any(u != v and all(a <= b for a, b in zip(u, v))
                        for u in vecs)
        if not dominated:
            seen.add(v)
            out.append(p)
    return out


# ---------------------------------------------------------------------------
# Evaluation rows


def _onchip_occupancy(res: EvalResult, a: Architecture) -> int:
    return sum(n for lvl, n in res.metrics.peak_occupancy_words.items()
               if not a.is_top(lvl))


def _breakdown(res: EvalResult, a: Architecture) -> dict[str, int]:
    merged: dict[str, int] = {}
    for lvl, per_tensor in res.metrics.occupancy_per_tensor.items():
        if a.is_top(lvl):
            continue
        for t, n in per_tensor.items():
            merged[t] = max(merged.get(t, 0), n)
    return dict(sorted(merged.items()))


def evaluate_row(study: str, w: FusionSet, m: Mapping, a: Architecture) -> dict:
    res = evaluate(w, m, a)
    return {
        "study": study,
        "schedule": m.schedule_label(),
        "partitions": ";".join(f"{p.rank}:{p.tile_size}"
                               for p in m.inter.partitions) or "untiled",
        "retention": ",".join(f"{rc.tensor}@{rc.level}:d{rc.depth}"
                              for rc in m.retention),
        "parallelism": m.inter.parallelism.value,
        "occupancy_words": _onchip_occupancy(res, a),
        "offchip_words": res.metrics.offchip_words,
        "recompute_ops": sum(res.metrics.recompute_ops.values()),
        "latency_cycles": res.metrics.latency_cycles,
        "energy_pj": round(res.metrics.energy_pj, 3),
        "breakdown_json": json.dumps(_breakdown(res, a),
                                     separators=(",", ":")),
        "feasible": res.metrics.feasible,
        "_mapping": m,
    }


def _eval_packed(args):
    return evaluate_row(*args)


def run_mapspace(study: str, spec: MapspaceSpec, w: FusionSet,
                 a: Architecture, jobs: int = 1) -> list[dict]:
    mappings = list(enumerate_mapspace(spec, w, a))
    if not mappings:
        raise MapperError("empty mapspace")
    tasks = [(study, w, m, a) for m in mappings]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            rows = list(pool.map(_eval_packed, tasks, chunksize=8))
    else:
        rows = [evaluate_row(*t) for t in tasks]
    return [r for r in rows if r["feasible"]]


def rows_to_csv(rows: list[dict]) -> str:
    lines = [",".join(CSV_COLUMNS)]
    for r in rows:
        cells = []
        for col in CSV_COLUMNS:
            v = r[col]
            text = f"{v}"
            if any(ch in text for ch in ",\""):
                text = '"' + text.replace('"', '""') + '"'
            cells.append(text)
        lines.append(",".join(cells))
    return "\n".join(lines) + "\n"


# ---------------------------------------------------------------------------
# Case studies


def default_study_arch(fanout: int = 4) -> Architecture:
    """Two levels, unbounded on-chip buffer: studies report required capacity."""
    return Architecture(
        levels=(Level("DRAM", bandwidth=4, read_energy=200.0,
                      write_energy=200.0),
                Level("GLB", bandwidth=32, read_energy=2.0, write_energy=2.0,
                      fanout=fanout, hop_energy=0.05)),
        compute=Compute(units=16, ops_per_cycle_per_unit=1, op_energy=0.25,
                        pipeline_stages_supported=8),
    )


DEFAULT_SHAPES = {
    "tiling_choice": {"p2": 8, "q2": 8, "c1": 4, "m1": 4, "m2": 4},
    "recompute_tradeoff": {"p3": 6, "q3": 6, "c1": 4, "m1": 4, "m3": 4},
    "per_tensor_retain": {"p2": 8, "q2": 8, "c1": 4, "m1": 4, "m2": 4},
    "per_fmap_choice": {"p": 6, "q": 6, "channels": [2, 2, 2, 2]},
    "fuse_or_not": {"p2": 8, "q2": 8, "c1": 4, "m1": 4, "m2": 4},
}


def _study_tiling_choice(shapes, a, jobs):
    w = conv_conv(**shapes)
    spec = MapspaceSpec(max_ranks=2, rank_pool=["M2", "P2", "Q2", "C2"],
                        retention_mode="per_tensor", tile_sizes="pow2",
                        depths="all")
    rows = run_mapspace("tiling_choice", spec, w, a, jobs)
    # The study asks for minimum-capacity mappings at algorithmic-minimum
    # off-chip traffic with no recomputation; keep those rows only.
    floor = min(r["offchip_words"] for r in rows)
    return [r for r in rows
            if r["offchip_words"] == floor and r["recompute_ops"] == 0]


def _study_recompute_tradeoff(shapes, a, jobs):
    w = pwise_dwise_pwise(**shapes)
    spec = MapspaceSpec(max_ranks=2, rank_pool=["M3", "P3", "Q3", "C3"],
                        retention_mode="per_tensor", tile_sizes="pow2",
                        depths="all")
    rows = run_mapspace("recompute_tradeoff", spec, w, a, jobs)
    floor = min(r["offchip_words"] for r in rows)
    return [r for r in rows if r["offchip_words"] == floor]


def _study_per_tensor_retain(shapes, a, jobs):
    w = conv_conv(**shapes)
    out = []
    for mode in ("uniform", "per_tensor"):
        spec = MapspaceSpec(max_ranks=2, rank_pool=["M2", "P2", "Q2", "C2"],
                            retention_mode=mode, tile_sizes="pow2",
                            depths="all")
        out.extend(run_mapspace(f"per_tensor_retain:{mode}", spec, w, a, jobs))
    return out


def _study_per_fmap_choice(shapes, a, jobs):
    w = conv_chain(3, shapes["p"], shapes["q"], shapes["channels"])
    p_rank = f"P{len(w.einsums)}"
    q_rank = f"Q{len(w.einsums)}"
    spec = MapspaceSpec(
        rank_orders=[(p_rank, q_rank)],
        tile_sizes="pow2",
        retention_mode="per_tensor",
        depths="all",
    )
    rows = run_mapspace("per_fmap_choice", spec, w, a, jobs)
    floor = min(r["offchip_words"] for r in rows)
    return [r for r in rows if r["offchip_words"] == floor]


def _single_layer_set(e) -> FusionSet:
    return FusionSet((e,))


def _study_fuse_or_not(shapes, a, jobs):
    w = conv_conv(**shapes)
    spec = MapspaceSpec(
        rank_orders=[(), ("P2",), ("Q2",), ("P2", "Q2"), ("C2",), ("M2",)],
        retention_mode="per_tensor", tile_sizes="pow2", depths="all")
    fused = run_mapspace("fuse_or_not:fused", spec, w, a, jobs)

    # Layer-by-layer baseline: each layer as its own fusion set, buffers
    # reused between layers (max occupancy), off-chip traffic added up.
    per_layer_rows = []
    for i, e in enumerate(w.einsums, start=1):
        lw = _single_layer_set(e)
        lspec = MapspaceSpec(
            rank_orders=[(), (f"P{i}",), (f"Q{i}",), (f"P{i}", f"Q{i}"),
                         (f"C{i}",), (f"M{i}",)],
            retention_mode="per_tensor", tile_sizes="pow2", depths="all")
        rows = run_mapspace("baseline_layer", lspec, lw, a, jobs)
        per_layer_rows.append(
            pareto_filter(rows, ["occupancy_words", "offchip_words"]))
    combined = []
    for combo in product(*per_layer_rows):
        combined.append({
            "study": "fuse_or_not:baseline",
            "schedule": "+".join(r["schedule"] for r in combo),
            "partitions": "+".join(r["partitions"] for r in combo),
            "retention": "+".join(r["retention"] for r in combo),
            "parallelism": "sequential",
            "occupancy_words": max(r["occupancy_words"] for r in combo),
            "offchip_words": sum(r["offchip_words"] for r in combo),
            "recompute_ops": sum(r["recompute_ops"] for r in combo),
            "latency_cycles": sum(r["latency_cycles"] for r in combo),
            "energy_pj": round(sum(r["energy_pj"] for r in combo), 3),
            "breakdown_json": "{}",
            "feasible": True,
        })
    return fused + pareto_filter(
        combined, ["occupancy_words", "offchip_words"])


STUDIES = {
    "tiling_choice": _study_tiling_choice,
    "recompute_tradeoff": _study_recompute_tradeoff,
    "per_tensor_retain": _study_per_tensor_retain,
    "per_fmap_choice": _study_per_fmap_choice,
    "fuse_or_not": _study_fuse_or_not,
}


def case_study(name: str, shapes: dict | None = None,
               a: Architecture | None = None, jobs: int = 1) -> list[dict]:
    if name not in STUDIES:
        raise MapperError(f"unknown study {name!r}; "
                          f"choose from {sorted(STUDIES)}")
    if a is None:
        a = default_study_arch()
    merged = dict(DEFAULT_SHAPES[name])
    if shapes:
        merged.update(shapes)
    return STUDIES[name](merged, a, jobs)
