"""Brute-force reference simulator.

Enumerates every operation in schedule order, maintains exact buffer
contents as plain hash sets under the retention semantics, and tallies every
hardware action. Shares only the workload/mapping IR with the analytical
path; all set reasoning here is pointwise, so agreement between the two is
meaningful evidence of correctness.
"""

from __future__ import annotations

from collections import defaultdict
from dataclasses import dataclass, field
from math import ceil

from .arch import Architecture
from .geometry import enumerate_points
from .mapping import (
    LoopKind, Mapping, Parallelism, iteration_space, op_tile, validate_mapping,
)
from .workload import FusionSet, TensorRole, operation_space, relevance_map


class OracleError(Exception):
    pass


@dataclass
class SimResult:
    fills: dict[tuple[str, str], int] = field(default_factory=dict)
    reads: dict[tuple[str, str], int] = field(default_factory=dict)
    updates: dict[tuple[str, str], int] = field(default_factory=dict)
    noc_hops: dict[str, int] = field(default_factory=dict)
    compute_ops: int = 0
    executed_ops: dict[str, int] = field(default_factory=dict)
    recompute_ops: dict[str, int] = field(default_factory=dict)
    offchip_words: int = 0
    peak_occupancy_words: dict[str, int] = field(default_factory=dict)
    occupancy_per_tensor: dict[str, dict[str, int]] = field(default_factory=dict)
    occupancy_trace: list[dict[str, dict[str, int]]] = field(default_factory=list)
    layer_latencies: dict[str, list[int]] = field(default_factory=dict)
    compute_latency_cycles: int = 0

    def trace_rows(self) -> list[tuple[int, str, str, int]]:
        rows = []
        for step, by_level in enumerate(self.occupancy_trace):
            for lvl in sorted(by_level):
                for t in sorted(by_level[lvl]):
                    rows.append((step, lvl, t, by_level[lvl][t]))
        return rows


def _bump(d: dict, key, n: int):
    if n:
        d[key] = d.get(key, 0) + n


def _leaf_of(x: int, lo: int, hi: int, sizes: list[int]) -> tuple[int, int]:
    a, b = lo, hi
    for s in sizes:
        start = a + (x - a) // s * s
        a, b = start, min(b, start + s)
    return a, b


class _NestView:
    """Pointwise view of a layer's intra nest over one concrete tile."""

    def __init__(self, ranks, nest, points):
        self.ranks = list(ranks)
        pos = {r: i for i, r in enumerate(self.ranks)}
        mins = {r: min(p[i] for p in points) for i, r in enumerate(self.ranks)}
        maxs = {r: max(p[i] for p in points) for i, r in enumerate(self.ranks)}
        temporal: dict[str, list[int]] = defaultdict(list)
        spatial_ranks: set[str] = set()
        self.level_order: list[str] = []
        # Per level, spatial loops in nest order: (rank pos, lo, size, trips).
        self.spatial_by_level: dict[str, list[tuple[int, int, int, int]]] = {}
        for loop in nest:
            if loop.kind is LoopKind.TEMPORAL:
                temporal[loop.rank].append(loop.tile_size)
            else:
                spatial_ranks.add(loop.rank)
                if loop.level not in self.level_order:
                    self.level_order.append(loop.level)
                r = loop.rank
                trips = (maxs[r] - mins[r]) // loop.tile_size + 1
                self.spatial_by_level.setdefault(loop.level, []).append(
                    (pos[r], mins[r], loop.tile_size, trips))
        self.id_pos: list[int] = []
        self.sliced: list[tuple[int, int, int, list[int]]] = []
        for r in self.ranks:
            if r in spatial_ranks:
                continue
            sizes = temporal.get(r)
            if not sizes or min(sizes) == 1:
                self.id_pos.append(pos[r])
            else:
                self.sliced.append((pos[r], mins[r], maxs[r] + 1, sizes))

    def temporal_key(self, point) -> tuple:
        key = [point[i] for i in self.id_pos]
        for i, lo, hi, sizes in self.sliced:
            key.append(_leaf_of(point[i], lo, hi, sizes))
        return tuple(key)

    def flat_children(self, point) -> list[tuple[str, int]]:
        """(level, flattened child index) per spatial level, in nest order."""
        out = []
        for level in self.level_order:
            flat = 0
            for i, lo, size, trips in self.spatial_by_level[level]:
                flat = flat * trips + (point[i] - lo) // size
            out.append((level, flat))
        return out


def _chain_hops(word_max_child: dict) -> int:
    # One word delivered to children S on a linear chain costs max(S)+1 hops.
    return sum(furthest + 1 for furthest in word_max_child.values())


def simulate(w: FusionSet, m: Mapping, a: Architecture,
             op_limit: int = 1_000_000) -> SimResult:
    problems = validate_mapping(m, w, a)
    if problems:
        raise OracleError("; ".join(problems))

    res = SimResult()
    res.executed_ops = {e.name: 0 for e in w.einsums}
    coords = iteration_space(m, w)
    n_layers = len(w.einsums)
    top = a.top.name
    tensors = w.tensors()
    roles = w.tensor_roles

    units = a.compute.units
    if m.inter.parallelism is Parallelism.PIPELINE:
        units = max(1, units // n_layers)
    throughput = units * a.compute.ops_per_cycle_per_unit

    # Precompute, per producer layer, output point -> operation points.
    producer_index: dict[str, dict[tuple, list[tuple]]] = {}
    budget = op_limit
    for e in w.einsums[:-1]:
        space = operation_space(e)
        if space.count() > budget:
            raise OracleError(f"operation space of {e.name} exceeds op limit")
        idx: dict[tuple, list[tuple]] = defaultdict(list)
        out_pos = [e.rank_order.index(r) for r in e.output_ranks]
        for op in enumerate_points(space, op_limit):
            idx[tuple(op[i] for i in out_pos)].append(op)
        producer_index[e.name] = idx

    projections = {
        e.name: {proj.tensor: proj.exprs for proj in (e.output, *e.inputs)}
        for e in w.einsums}

    def project(e, tensor, op):
        env = dict(zip(e.rank_order, op))
        return tuple(x.evaluate(env) for x in projections[e.name][tensor])

    relevant = relevance_map(w)
    key_positions = {
        rc.tensor: tuple(j for j, p in enumerate(m.inter.partitions[:rc.depth])
                         if p.rank in relevant[rc.tensor])
        for rc in m.retention}
    retained: dict[str, set] = {t: set() for t in tensors}
    group_key: dict[str, tuple | None] = {t: None for t in tensors}
    residents_hist: list[dict[str, set]] = []
    union_hist: list[dict[str, set]] = []
    res.layer_latencies = {e.name: [] for e in w.einsums}
    drained = {t: 0 for t in tensors
               if roles[t] is TensorRole.EXTERNAL_OUTPUT}
    total_ops = 0

    for coord in coords:
        for t in tensors:
            key = tuple(coord[j] for j in key_positions[t])
            if key != group_key[t]:
                group_key[t] = key
                if t in drained:
                    drained[t] += len(retained[t])
                retained[t] = set()

        ops_of: dict[str, list[tuple]] = {}
        needed_new: dict[str, set] = defaultdict(set)
        touched: dict[str, set] = defaultdict(set)
        new_of: dict[str, dict[str, set]] = {}

        for k in range(n_layers - 1, -1, -1):
            e = w.einsums[k]
            if k == n_layers - 1:
                ops = enumerate_points(op_tile(m, w, coord), op_limit)
            else:
                idx = producer_index[e.name]
                ops = []
                for pt in sorted(needed_new.get(e.output.tensor, ())):
                    ops.extend(idx[pt])
            total_ops += len(ops)
            if total_ops > op_limit:
                raise OracleError(f"op limit {op_limit} exceeded")
            res.executed_ops[e.name] += len(ops)
            ops_of[e.name] = ops
            new_of[e.name] = {}

            out_t = e.output.tensor
            produced = {project(e, out_t, op) for op in ops}
            new_of[e.name][out_t] = produced
            touched[out_t] |= produced
            for proj in e.inputs:
                t = proj.tensor
                tile = {project(e, t, op) for op in ops}
                fresh = tile - retained[t]
                new_of[e.name][t] = fresh
                touched[t] |= tile
                if roles[t] is TensorRole.INTERMEDIATE:
                    needed_new[t] |= fresh

        # Action tallies per layer tile.
        for e in w.einsums:
            ops = ops_of[e.name]
            res.compute_ops += len(ops)
            res.layer_latencies[e.name].append(ceil(len(ops) / throughput))
            if not ops:
                continue
            view = _NestView(e.rank_order, m.nest_of(e.name), ops)

            def tally_delivery(tensor, per_step):
                pairs = set()
                per_level_words: dict[str, dict] = defaultdict(dict)
                for op in ops:
                    word = project(e, tensor, op)
                    tkey = view.temporal_key(op) if per_step else ()
                    pairs.add((tkey, word))
                    prefix = ()
                    for level, flat in view.flat_children(op):
                        inst = (tkey, prefix)
                        cur = per_level_words[level].setdefault(inst, {})
                        cur[word] = max(cur.get(word, -1), flat)
                        prefix = prefix + (flat,)
                for level, insts in per_level_words.items():
                    _bump(res.noc_hops, level,
                          sum(_chain_hops(ws) for ws in insts.values()))
                return len(pairs)

            for proj in e.inputs:
                t = proj.tensor
                rc = m.retention_of(t)
                delivered = tally_delivery(t, per_step=True)
                fresh = len(new_of[e.name][t])
                if roles[t] is TensorRole.INTERMEDIATE:
                    _bump(res.reads, (rc.level, t), delivered)
                elif rc.level == top:
                    _bump(res.reads, (top, t), delivered)
                else:
                    _bump(res.reads, (rc.level, t), delivered)
                    _bump(res.fills, (rc.level, t), fresh)
                    _bump(res.reads, (top, t), fresh)

            out_t = e.output.tensor
            rc = m.retention_of(out_t)
            produced = len(new_of[e.name][out_t])
            tally_delivery(out_t, per_step=False)
            _bump(res.updates, (top if rc.level == top else rc.level, out_t),
                  produced)

        snapshot_res: dict[str, set] = {}
        snapshot_union: dict[str, set] = {}
        for t in tensors:
            retained[t] |= touched.get(t, set())
            snapshot_res[t] = set(retained[t])
            snapshot_union[t] = set(touched.get(t, set()))
        residents_hist.append(snapshot_res)
        union_hist.append(snapshot_union)

    # Occupancy, mirroring the stage-offset overlap rule for pipelines.
    level_of = {t: m.retention_of(t).level for t in tensors}
    layer_idx = {e.name: k for k, e in enumerate(w.einsums)}
    span = {}
    for t in tensors:
        ks = [layer_idx[c.name] for c in w.consumers_of(t)]
        prod = w.producer_of(t)
        if prod is not None:
            ks.append(layer_idx[prod.name])
        span[t] = (min(ks), max(ks))
    pipelined = m.inter.parallelism is Parallelism.PIPELINE
    n_iter = len(coords)
    n_steps = n_iter + n_layers - 1 if pipelined else n_iter
    res.peak_occupancy_words = {l.name: 0 for l in a.levels}
    res.occupancy_per_tensor = {l.name: {} for l in a.levels}
    for s in range(n_steps):
        by_level: dict[str, dict[str, int]] = {}
        for t in tensors:
            lvl = level_of[t]
            if a.is_top(lvl):
                continue
            if not pipelined:
                words = len(residents_hist[s][t])
            else:
                first, last = span[t]
                i_c = s - last
                i_p = min(s - first, n_iter - 1)
                live = set()
                if 0 <= i_c < n_iter:
                    live |= residents_hist[i_c][t]
                for i in range(max(i_c + 1, 0), i_p + 1):
                    live |= union_hist[i][t]
                words = len(live)
            if words:
                by_level.setdefault(lvl, {})[t] = words
        res.occupancy_trace.append(by_level)
        for lvl, per_t in by_level.items():
            res.peak_occupancy_words[lvl] = max(
                res.peak_occupancy_words[lvl], sum(per_t.values()))
            for t, n in per_t.items():
                res.occupancy_per_tensor[lvl][t] = max(
                    res.occupancy_per_tensor[lvl].get(t, 0), n)

    for t in drained:
        drained[t] += len(retained[t])
        level = m.retention_of(t).level
        if level != top and drained[t]:
            _bump(res.reads, (level, t), drained[t])
            _bump(res.updates, (top, t), drained[t])

    for e in w.einsums:
        res.recompute_ops[e.name] = (res.executed_ops[e.name]
                                     - operation_space(e).count())
    res.offchip_words = (
        sum(n for (l, _), n in res.fills.items() if l == top)
        + sum(n for (l, _), n in res.reads.items() if l == top)
        + sum(n for (l, _), n in res.updates.items() if l == top))

    if pipelined:
        finish = [0] * n_layers
        for i in range(n_iter):
            prev = 0
            for l, e in enumerate(w.einsums):
                finish[l] = max(finish[l], prev) + res.layer_latencies[e.name][i]
                prev = finish[l]
        res.compute_latency_cycles = finish[-1] if n_iter else 0
    else:
        res.compute_latency_cycles = sum(
            sum(v) for v in res.layer_latencies.values())
    return res
