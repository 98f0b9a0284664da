"""Tile-shape inference and per-tile hardware action counting.

Tile inference walks each schedule iteration from the last layer backwards:
the mapping fixes the last layer's operation tile, data dependencies give the
data tiles, the retained set (per the retention depth-prefix rule) is
subtracted, and whatever intermediate data is left must be produced, which
fixes the producer's operation tile. Recomputation is never a directive: it
emerges when evicted intermediate data is needed again.

Action counting follows explicit data orchestration. Each tensor lives in
exactly one retention buffer; data moves off-chip -> buffer (fills, for
backed tensors), compute -> buffer (updates, for produced outputs), and
buffer -> compute (reads). External outputs accumulate in their buffer and
drain off-chip once per eviction group. Deliveries happen once per temporal
step per word, where a step is one iteration of the finest temporal slicing
(the default nest delivers operand words op by op); spatial siblings
needing the same word in the same step share one read (multicast), and NoC
hops follow a unidirectional linear chain: serving children S costs
max(S)+1 hops.
"""

from __future__ import annotations

from collections import defaultdict
from dataclasses import dataclass, field
from itertools import product
from math import ceil

from . import geometry as g
from .arch import Architecture
from .geometry import Region, StridedInterval
from .mapping import LoopKind, Mapping, Parallelism, iteration_space, op_tile
from .workload import FusionSet, TensorRole, operation_space, relevance_map


class AnalysisError(Exception):
    pass


@dataclass(frozen=True)
class LayerTile:
    """One layer's share of one schedule iteration."""

    einsum: str
    iteration: tuple[int, ...]
    ops: Region
    data: dict[str, Region]
    new_data: dict[str, Region]


@dataclass
class ActionCounts:
    fills: dict[tuple[str, str], int] = field(default_factory=dict)
    reads: dict[tuple[str, str], int] = field(default_factory=dict)
    updates: dict[tuple[str, str], int] = field(default_factory=dict)
    noc_hops: dict[str, int] = field(default_factory=dict)
    compute_ops: int = 0
    compute_latency_cycles: int = 0

    def add(self, other: "ActionCounts", times: int = 1):
        for mine, theirs in ((self.fills, other.fills),
                             (self.reads, other.reads),
                             (self.updates, other.updates)):
            for k, n in theirs.items():
                mine[k] = mine.get(k, 0) + n * times
        for k, n in other.noc_hops.items():
            self.noc_hops[k] = self.noc_hops.get(k, 0) + n * times
        self.compute_ops += other.compute_ops * times
        self.compute_latency_cycles += other.compute_latency_cycles * times

    def level_traffic(self, level: str) -> int:
        return (sum(n for (l, _), n in self.fills.items() if l == level)
                + sum(n for (l, _), n in self.reads.items() if l == level)
                + sum(n for (l, _), n in self.updates.items() if l == level))


@dataclass
class TileAnalysis:
    """Everything infer_tiles learns about one (workload, mapping) pair."""

    workload: FusionSet
    mapping: Mapping
    iterations: list[tuple[int, ...]]
    tiles: list[dict[str, LayerTile]]          # per iteration, by einsum name
    residents: list[dict[str, Region]]         # per iteration, by tensor
    data_unions: list[dict[str, Region]]       # per iteration, by tensor
    executed_ops: dict[str, int]
    drained_words: dict[str, int]              # external outputs: buffer->top

    def recompute_ops(self) -> dict[str, int]:
        out = {}
        for e in self.workload.einsums:
            out[e.name] = self.executed_ops[e.name] - operation_space(e).count()
        return out


def retention_key_positions(w: FusionSet, m: Mapping) -> dict[str, tuple[int, ...]]:
    """Partition indices whose coordinate evicts each tensor's retained set.

    A tensor's buffer group is keyed only by partitions of ranks its tiles
    actually vary along (within the retention depth); iterating an
    irrelevant rank reuses the identical tile in place.
    """
    relevant = relevance_map(w)
    out = {}
    for rc in m.retention:
        out[rc.tensor] = tuple(
            j for j, p in enumerate(m.inter.partitions[:rc.depth])
            if p.rank in relevant[rc.tensor])
    return out


def infer_tiles(w: FusionSet, m: Mapping) -> TileAnalysis:
    """Back-propagate operation and data tiles through the fusion set."""
    coords = iteration_space(m, w)
    tensors = w.tensors()
    key_positions = retention_key_positions(w, m)
    retained: dict[str, Region] = {
        t: Region.empty(w.tensor_axes[t]) for t in tensors}
    group_key: dict[str, tuple] = {t: None for t in tensors}

    tiles_per_iter: list[dict[str, LayerTile]] = []
    residents: list[dict[str, Region]] = []
    data_unions: list[dict[str, Region]] = []
    executed = {e.name: 0 for e in w.einsums}
    # External outputs accumulate partial results in their buffer and drain
    # once per eviction group (re-produced points are coalesced in place).
    drained = {t: 0 for t in tensors
               if w.tensor_roles[t] is TensorRole.EXTERNAL_OUTPUT}

    for coord in coords:
        # Evict tensors whose retention group key changed.
        for t in tensors:
            key = tuple(coord[j] for j in key_positions[t])
            if key != group_key[t]:
                group_key[t] = key
                if t in drained:
                    drained[t] += retained[t].count()
                retained[t] = Region.empty(w.tensor_axes[t])

        needed_new: dict[str, Region] = {}
        iter_tiles: dict[str, LayerTile] = {}
        touched: dict[str, list[Region]] = defaultdict(list)

        for k in range(len(w.einsums) - 1, -1, -1):
            e = w.einsums[k]
            if k == len(w.einsums) - 1:
                ops = op_tile(m, w, coord)
            else:
                need = needed_new.get(e.output.tensor)
                ops = (g.producer_ops(need, e) if need is not None
                       and not need.is_empty()
                       else Region.empty(e.rank_order))
            full = operation_space(e)
            if not g.diff(ops, full).is_empty():
                raise AnalysisError(
                    f"{e.name}: inferred tile escapes the operation space")
            data: dict[str, Region] = {}
            new: dict[str, Region] = {}
            out_t = e.output.tensor
            if ops.is_empty():
                data[out_t] = Region.empty(w.tensor_axes[out_t])
                new[out_t] = data[out_t]
            else:
                data[out_t] = g.image(w.data_relation(e, out_t), ops)
                new[out_t] = data[out_t]
            touched[out_t].append(data[out_t])
            for proj in e.inputs:
                t = proj.tensor
                if ops.is_empty():
                    tile = Region.empty(w.tensor_axes[t])
                else:
                    tile = g.image(w.data_relation(e, t), ops)
                data[t] = tile
                fresh = g.diff(tile, retained[t])
                new[t] = fresh
                touched[t].append(tile)
                if w.tensor_roles[t] is TensorRole.INTERMEDIATE:
                    prev = needed_new.get(t)
                    needed_new[t] = fresh if prev is None else g.union(prev, fresh)
            executed[e.name] += ops.count()
            iter_tiles[e.name] = LayerTile(e.name, coord, ops, data, new)

        du: dict[str, Region] = {}
        res: dict[str, Region] = {}
        for t in tensors:
            regions = touched.get(t)
            du[t] = (g.union_all(regions) if regions
                     else Region.empty(w.tensor_axes[t]))
            retained[t] = g.union(retained[t], du[t])
            res[t] = retained[t]
        tiles_per_iter.append(iter_tiles)
        residents.append(res)
        data_unions.append(du)

    for t in drained:
        drained[t] += retained[t].count()
    return TileAnalysis(w, m, coords, tiles_per_iter, residents, data_unions,
                        executed, drained)


def recompute_ops(analysis: TileAnalysis) -> dict[str, int]:
    return analysis.recompute_ops()


# ---------------------------------------------------------------------------
# Unique tile classes


@dataclass
class TileClass:
    einsum: str
    signature: tuple
    representative: LayerTile
    iterations: list[int]

    @property
    def multiplicity(self) -> int:
        return len(self.iterations)


def _signature(tile: LayerTile) -> tuple:
    parts = [g.normalized(tile.ops).boxes]
    for t in sorted(tile.new_data):
        parts.append((t, g.normalized(tile.new_data[t]).boxes))
    for t in sorted(tile.data):
        parts.append((t, g.normalized(tile.data[t]).boxes))
    return tuple(parts)


def dedupe_tiles(analysis: TileAnalysis) -> dict[str, list[TileClass]]:
    """Group iterations whose tiles have identical shape signatures."""
    out: dict[str, list[TileClass]] = {}
    for e in analysis.workload.einsums:
        classes: dict[tuple, TileClass] = {}
        for i, per_layer in enumerate(analysis.tiles):
            tile = per_layer[e.name]
            sig = _signature(tile)
            tc = classes.get(sig)
            if tc is None:
                classes[sig] = TileClass(e.name, sig, tile, [i])
            else:
                tc.iterations.append(i)
        out[e.name] = list(classes.values())
    return out


# ---------------------------------------------------------------------------
# Per-tile action counts


def _layer_throughput(a: Architecture, parallelism: Parallelism,
                      n_layers: int) -> int:
    units = a.compute.units
    if parallelism is Parallelism.PIPELINE:
        units = max(1, units // n_layers)
    return units * a.compute.ops_per_cycle_per_unit


def _leaf_segments(lo: int, hi: int, sizes: list[int]) -> list[tuple[int, int]]:
    """Nested slicing of the half-open coordinate range [lo, hi)."""
    segs = [(lo, hi)]
    for s in sizes:
        nxt = []
        for a, b in segs:
            x = a
            while x < b:
                nxt.append((x, min(b, x + s)))
                x += s
        segs = nxt
    return segs


def _restrict(region: Region, rank_bounds: dict[str, tuple[int, int]]) -> Region:
    intervals = []
    for k, r in enumerate(region.ranks):
        if r in rank_bounds:
            a, b = rank_bounds[r]
            intervals.append(StridedInterval(a, b - 1))
        else:
            lo = min(box[k].lo for box in region.boxes)
            hi = max(box[k].hi for box in region.boxes)
            intervals.append(StridedInterval(lo, hi))
    return g.intersect(region, Region.from_intervals(region.ranks, intervals))


@dataclass
class _NestPlan:
    """Delivery structure of one layer's intra nest over one ops region."""

    id_ranks: tuple[str, ...]
    temporal: list[tuple[str, list[tuple[int, int]]]]   # rank -> leaf segments
    spatial: list[tuple[str, list[tuple[str, list[tuple[int, int]]]]]]
    # spatial: per level (in nest order): list of (rank, child segments)


def _plan_nest(e_ranks, nest, region: Region) -> _NestPlan:
    if region.is_empty():
        return _NestPlan(tuple(e_ranks), [], [])
    bbox = dict(zip(region.ranks, region.bounding_intervals()))
    temporal_sizes: dict[str, list[int]] = defaultdict(list)
    spatial_size: dict[str, int] = {}
    order: list[str] = []
    for loop in nest:
        if loop.kind is LoopKind.TEMPORAL:
            temporal_sizes[loop.rank].append(loop.tile_size)
        else:
            spatial_size[loop.rank] = loop.tile_size
            if loop.level not in order:
                order.append(loop.level)
    ids = []
    temporal = []
    for r in e_ranks:
        if r in spatial_size:
            continue
        sizes = temporal_sizes.get(r)
        if not sizes or min(sizes) == 1:
            ids.append(r)
            continue
        iv = bbox[r]
        temporal.append((r, _leaf_segments(iv.lo, iv.hi + 1, sizes)))
    spatial = []
    for level in order:
        loops = []
        for loop in nest:
            if loop.kind is LoopKind.SPATIAL and loop.level == level:
                iv = bbox[loop.rank]
                loops.append((loop.rank,
                              _leaf_segments(iv.lo, iv.hi + 1,
                                             [loop.tile_size])))
        spatial.append((level, loops))
    return _NestPlan(tuple(ids), temporal, spatial)


def _spatial_hops(region: Region, groups, id_ranks, exprs,
                  acc: dict[str, int]):
    if not groups or region.is_empty():
        return
    level, loops = groups[0]
    ranks = [r for r, _ in loops]
    child_boxes = [dict(zip(ranks, combo))
                   for combo in product(*(segs for _, segs in loops))]
    pieces = [_restrict(region, cb) for cb in child_boxes]
    suffix = None
    for piece in reversed(pieces):
        suffix = piece if suffix is None else g.union(suffix, piece)
        acc[level] = acc.get(level, 0) + g.pair_count(suffix, id_ranks, exprs)
    for piece in pieces:
        if not piece.is_empty():
            _spatial_hops(piece, groups[1:], id_ranks, exprs, acc)


def _delivery(region: Region, plan: _NestPlan, exprs,
              per_iteration: bool) -> tuple[int, dict[str, int]]:
    """Words delivered (multicast-deduped) and per-level NoC hops.

    Inputs dedupe per temporal step; outputs (`per_iteration`) dedupe once
    over the whole tile.
    """
    if region.is_empty():
        return 0, {}
    id_ranks = () if per_iteration else plan.id_ranks
    temporal = [] if per_iteration else plan.temporal
    words = 0
    hops: dict[str, int] = {}
    for combo in product(*(segs for _, segs in temporal)) if temporal else [()]:
        bounds = {r: seg for (r, _), seg in zip(temporal, combo)}
        piece = _restrict(region, bounds) if bounds else region
        if piece.is_empty():
            continue
        words += g.pair_count(piece, id_ranks, exprs)
        _spatial_hops(piece, plan.spatial, id_ranks, exprs, hops)
    return words, hops


def per_tile_counts(w: FusionSet, m: Mapping, a: Architecture,
                    tile: LayerTile) -> ActionCounts:
    """Timeloop-style fills/reads/updates/hops for one tile execution."""
    counts = ActionCounts()
    e = w.einsum(tile.einsum)
    ops = tile.ops
    counts.compute_ops = ops.count()
    thr = _layer_throughput(a, m.inter.parallelism, len(w.einsums))
    counts.compute_latency_cycles = ceil(counts.compute_ops / thr)
    if ops.is_empty():
        return counts

    plan = _plan_nest(e.rank_order, m.nest_of(e.name), ops)
    top = a.top.name

    for proj in e.inputs:
        t = proj.tensor
        rc = m.retention_of(t)
        delivered, hops = _delivery(ops, plan, proj.exprs, per_iteration=False)
        for lvl, n in hops.items():
            counts.noc_hops[lvl] = counts.noc_hops.get(lvl, 0) + n
        fresh = tile.new_data[t].count()
        if w.tensor_roles[t] is TensorRole.INTERMEDIATE:
            counts.reads[(rc.level, t)] = (
                counts.reads.get((rc.level, t), 0) + delivered)
        elif rc.level == top:
            counts.reads[(top, t)] = counts.reads.get((top, t), 0) + delivered
        else:
            counts.reads[(rc.level, t)] = (
                counts.reads.get((rc.level, t), 0) + delivered)
            counts.fills[(rc.level, t)] = (
                counts.fills.get((rc.level, t), 0) + fresh)
            counts.reads[(top, t)] = counts.reads.get((top, t), 0) + fresh

    out_t = e.output.tensor
    rc = m.retention_of(out_t)
    produced = tile.new_data[out_t].count()
    _, out_hops = _delivery(ops, plan, e.output.exprs, per_iteration=True)
    for lvl, n in out_hops.items():
        counts.noc_hops[lvl] = counts.noc_hops.get(lvl, 0) + n
    level = top if rc.level == top else rc.level
    counts.updates[(level, out_t)] = (
        counts.updates.get((level, out_t), 0) + produced)
    return counts


def total_counts(w: FusionSet, m: Mapping, a: Architecture,
                 analysis: TileAnalysis,
                 classes: dict[str, list[TileClass]] | None = None,
                 ) -> tuple[ActionCounts, dict[str, list[int]]]:
    """Aggregate counts over all tiles, analyzing once per unique class.

    Also returns per-layer per-iteration compute latencies for the latency
    model.
    """
    if classes is None:
        classes = dedupe_tiles(analysis)
    totals = ActionCounts()
    n_iter = len(analysis.iterations)
    lat: dict[str, list[int]] = {e.name: [0] * n_iter for e in w.einsums}
    for e in w.einsums:
        for tc in classes[e.name]:
            counts = per_tile_counts(w, m, a, tc.representative)
            totals.add(counts, times=tc.multiplicity)
            for i in tc.iterations:
                lat[e.name][i] = counts.compute_latency_cycles
    # Drain each external output's accumulated group once: read out of its
    # buffer, written off-chip.
    top = a.top.name
    for t, words in analysis.drained_words.items():
        level = m.retention_of(t).level
        if level == top or not words:
            continue
        totals.reads[(level, t)] = totals.reads.get((level, t), 0) + words
        totals.updates[(top, t)] = totals.updates.get((top, t), 0) + words
    return totals, lat
