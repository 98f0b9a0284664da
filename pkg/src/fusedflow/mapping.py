"""Mappings: inter-layer partitions and schedule, parallelism, per-tensor
retention, and per-layer intra-layer loop nests.

The partition list is ordered outermost to innermost; that order IS the tile
processing schedule (raster order over the trip counts). Ceiling division
gives imperfect factorizations: edge tiles are real tiles with smaller
extents, and a coordinate may even denote an empty tile when an outer edge
tile is shorter than one inner tile.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from enum import Enum
from itertools import product
from math import ceil

from .arch import Architecture
from .geometry import Region, StridedInterval
from .workload import FusionSet, TensorRole


class MappingError(Exception):
    pass


class Parallelism(Enum):
    SEQUENTIAL = "sequential"
    PIPELINE = "pipeline"


class LoopKind(Enum):
    TEMPORAL = "temporal"
    SPATIAL = "spatial"


@dataclass(frozen=True)
class Partition:
    rank: str
    tile_size: int

    def __post_init__(self):
        if self.tile_size < 1:
            raise MappingError(f"tile size of {self.rank} must be >= 1")


@dataclass(frozen=True)
class InterLayerMapping:
    partitions: tuple[Partition, ...] = ()
    parallelism: Parallelism = Parallelism.SEQUENTIAL


@dataclass(frozen=True)
class RetentionChoice:
    """Keep, at `level`, the union of a tensor's tiles over all iterations
    sharing the first `depth` partition coordinates. Depth 0 retains the
    full tensor; depth == #partitions retains only the current tile."""

    tensor: str
    depth: int
    level: str


@dataclass(frozen=True)
class IntraLayerLoop:
    rank: str
    tile_size: int
    kind: LoopKind
    level: str

    def __post_init__(self):
        if self.tile_size < 1:
            raise MappingError(f"tile size of {self.rank} must be >= 1")


@dataclass(frozen=True)
class Mapping:
    inter: InterLayerMapping = InterLayerMapping()
    retention: tuple[RetentionChoice, ...] = ()
    intra: dict[str, tuple[IntraLayerLoop, ...]] = field(default_factory=dict)

    def retention_of(self, tensor: str) -> RetentionChoice:
        for rc in self.retention:
            if rc.tensor == tensor:
                return rc
        raise MappingError(f"no retention choice for {tensor}")

    def nest_of(self, einsum_name: str) -> tuple[IntraLayerLoop, ...]:
        return self.intra.get(einsum_name, ())

    def summary(self) -> str:
        parts = ";".join(f"{p.rank}:{p.tile_size}" for p in self.inter.partitions)
        ret = ",".join(f"{rc.tensor}@{rc.level}:d{rc.depth}"
                       for rc in sorted(self.retention, key=lambda r: r.tensor))
        intra = ",".join(
            f"{name}[" + ";".join(
                f"{l.rank}:{l.tile_size}:{l.kind.value[0]}@{l.level}"
                for l in nest) + "]"
            for name, nest in sorted(self.intra.items()) if nest)
        return f"{parts or 'untiled'}|{self.inter.parallelism.value}|{ret}|{intra}"

    def schedule_label(self) -> str:
        seen = []
        for p in self.inter.partitions:
            if p.rank not in seen:
                seen.append(p.rank)
        return ",".join(seen) if seen else "untiled"


def with_defaults(m: Mapping, w: FusionSet, a: Architecture) -> Mapping:
    """Fill in a retention choice for every tensor missing one.

    Defaults keep only the current tile (depth = #partitions) at the
    innermost buffer; the omitted intra nest already means a single temporal
    point loop over all remaining ranks at the innermost level.
    """
    have = {rc.tensor for rc in m.retention}
    depth = len(m.inter.partitions)
    extra = [RetentionChoice(t, depth, a.innermost.name)
             for t in w.tensors() if t not in have]
    choices = sorted(m.retention + tuple(extra), key=lambda rc: rc.tensor)
    return Mapping(m.inter, tuple(choices), dict(m.intra))


# ---------------------------------------------------------------------------
# Validation


def nominal_extent(w: FusionSet, einsum_name: str, rank: str,
                   partitions: tuple[Partition, ...]) -> int:
    """Extent an intra loop of `rank` sees: the innermost inter tile for the
    last layer's partitioned ranks, the full shape otherwise."""
    e = w.einsum(einsum_name)
    extent = e.rank_shapes[rank]
    if e is w.last:
        for p in partitions:
            if p.rank == rank:
                extent = min(extent, p.tile_size)
    return extent


def validate_mapping(m: Mapping, w: FusionSet, a: Architecture) -> list[str]:
    """Rule violations as data; an empty list means the mapping is evaluable."""
    v: list[str] = []
    last = w.last
    last_ranks = set(last.rank_order)

    sizes: dict[str, int] = {}
    for p in m.inter.partitions:
        if p.rank not in last_ranks:
            v.append(f"partition rank {p.rank} is not a rank of {last.name}")
            continue
        shape = last.rank_shapes[p.rank]
        if p.tile_size > shape:
            v.append(f"partition {p.rank}:{p.tile_size} exceeds shape {shape}")
        prev = sizes.get(p.rank)
        if prev is not None and p.tile_size >= prev:
            v.append(f"repeated partitions of {p.rank} must strictly decrease")
        sizes[p.rank] = p.tile_size

    tensors = set(w.tensors())
    seen = set()
    depth_max = len(m.inter.partitions)
    for rc in m.retention:
        if rc.tensor not in tensors:
            v.append(f"retention names unknown tensor {rc.tensor}")
            continue
        if rc.tensor in seen:
            v.append(f"tensor {rc.tensor} has more than one retention choice")
        seen.add(rc.tensor)
        if not 0 <= rc.depth <= depth_max:
            v.append(f"retention depth {rc.depth} of {rc.tensor} outside "
                     f"[0, {depth_max}]")
        if not a.has_level(rc.level):
            v.append(f"retention of {rc.tensor} names unknown level {rc.level}")
        elif (a.is_top(rc.level)
              and w.tensor_roles[rc.tensor] is TensorRole.INTERMEDIATE):
            v.append(f"intermediate {rc.tensor} retained at the off-chip level "
                     f"{rc.level}; intermediates exist only on-chip")
    for t in tensors - seen:
        v.append(f"tensor {t} has no retention choice")

    for name, nest in m.intra.items():
        try:
            e = w.einsum(name)
        except Exception:
            v.append(f"intra nest names unknown Einsum {name}")
            continue
        gran: dict[str, int] = {}
        kinds: dict[str, list[LoopKind]] = {}
        spatial_per_level: dict[str, int] = {}
        for loop in nest:
            if loop.rank not in e.rank_order:
                v.append(f"{name}: intra loop over unknown rank {loop.rank}")
                continue
            if not a.has_level(loop.level):
                v.append(f"{name}: intra loop names unknown level {loop.level}")
                continue
            kinds.setdefault(loop.rank, []).append(loop.kind)
            if len(set(kinds[loop.rank])) > 1:
                v.append(f"{name}: rank {loop.rank} mixes temporal and "
                         f"spatial loops")
            if kinds[loop.rank].count(LoopKind.SPATIAL) > 1:
                v.append(f"{name}: rank {loop.rank} has two spatial loops")
            prev = gran.get(loop.rank)
            base = nominal_extent(w, name, loop.rank, m.inter.partitions)
            if prev is None:
                if loop.tile_size > base:
                    v.append(f"{name}: loop size {loop.tile_size} over "
                             f"{loop.rank} exceeds extent {base}")
            elif loop.tile_size >= prev:
                v.append(f"{name}: loop sizes over {loop.rank} must strictly "
                         f"decrease (got {loop.tile_size} under {prev})")
            if loop.kind is LoopKind.SPATIAL:
                trips = ceil((prev if prev is not None else base)
                             / loop.tile_size)
                spatial_per_level[loop.level] = (
                    spatial_per_level.get(loop.level, 1) * trips)
            gran[loop.rank] = min(prev if prev is not None else base,
                                  loop.tile_size)
        for lvl, trips in spatial_per_level.items():
            if trips > a.level(lvl).fanout:
                v.append(f"{name}: spatial trips {trips} exceed fanout "
                         f"{a.level(lvl).fanout} of {lvl}")

    if m.inter.parallelism is Parallelism.PIPELINE:
        n = len(w.einsums)
        if n > a.compute.pipeline_stages_supported:
            v.append(f"pipeline needs {n} stages but the compute array "
                     f"supports {a.compute.pipeline_stages_supported}")
        if a.compute.units < n:
            v.append(f"pipeline needs one compute partition per layer "
                     f"({n} > {a.compute.units} units)")
        for t, role in w.tensor_roles.items():
            if role is TensorRole.INTERMEDIATE and len(w.consumers_of(t)) > 1:
                v.append(f"pipeline requires a pure chain; {t} has several "
                         f"consumers")
    return v


# ---------------------------------------------------------------------------
# Iteration space and tile slices


def trip_counts(m: Mapping, w: FusionSet) -> tuple[int, ...]:
    last = w.last
    extent: dict[str, int] = dict(last.rank_shapes)
    trips = []
    for p in m.inter.partitions:
        trips.append(ceil(extent[p.rank] / p.tile_size))
        extent[p.rank] = p.tile_size
    return tuple(trips)


def iteration_space(m: Mapping, w: FusionSet) -> list[tuple[int, ...]]:
    """Raster-order coordinates; the innermost partition varies fastest."""
    return list(product(*(range(t) for t in trip_counts(m, w))))


def tile_slices(m: Mapping, w: FusionSet,
                coord: tuple[int, ...]) -> dict[str, tuple[int, int]] | None:
    """Half-open [lo, hi) slice per partitioned rank; None if the tile is
    empty (an inner coordinate past an outer edge tile)."""
    last = w.last
    lo: dict[str, int] = {}
    hi: dict[str, int] = {}
    for p, c in zip(m.inter.partitions, coord):
        r = p.rank
        base = lo.get(r, 0)
        top = hi.get(r, last.rank_shapes[r])
        start = base + c * p.tile_size
        stop = min(top, start + p.tile_size)
        if start >= stop:
            return None
        lo[r], hi[r] = start, stop
    return {r: (lo[r], hi[r]) for r in lo}


def op_tile(m: Mapping, w: FusionSet, coord: tuple[int, ...]) -> Region:
    """Operation tile of the last Einsum at an iteration coordinate."""
    last = w.last
    slices = tile_slices(m, w, coord)
    if slices is None:
        return Region.empty(last.rank_order)
    intervals = []
    for r in last.rank_order:
        if r in slices:
            a, b = slices[r]
            intervals.append(StridedInterval(a, b - 1))
        else:
            intervals.append(StridedInterval(0, last.rank_shapes[r] - 1))
    return Region.from_intervals(last.rank_order, intervals)


# ---------------------------------------------------------------------------
# File format


def parse_mapping_dict(doc: dict, w: FusionSet, a: Architecture) -> Mapping:
    if not isinstance(doc, dict):
        raise MappingError("mapping file must be a JSON object")
    parts = []
    for i, raw in enumerate(doc.get("partitions", [])):
        try:
            parts.append(Partition(raw["rank"], int(raw["tile_size"])))
        except KeyError as exc:
            raise MappingError(f"partitions[{i}]: missing {exc}") from exc
    par_raw = doc.get("parallelism", "sequential")
    try:
        par = Parallelism(par_raw)
    except ValueError:
        raise MappingError(f"unknown parallelism {par_raw!r}")
    retention = []
    for i, raw in enumerate(doc.get("retention", [])):
        try:
            retention.append(RetentionChoice(raw["tensor"], int(raw["depth"]),
                                             raw["level"]))
        except KeyError as exc:
            raise MappingError(f"retention[{i}]: missing {exc}") from exc
    intra = {}
    for name, loops in doc.get("intra", {}).items():
        nest = []
        for i, raw in enumerate(loops):
            try:
                nest.append(IntraLayerLoop(raw["rank"], int(raw["tile_size"]),
                                           LoopKind(raw["kind"]), raw["level"]))
            except KeyError as exc:
                raise MappingError(f"intra.{name}[{i}]: missing {exc}") from exc
            except ValueError as exc:
                raise MappingError(f"intra.{name}[{i}]: {exc}") from exc
        intra[name] = tuple(nest)
    m = with_defaults(Mapping(InterLayerMapping(tuple(parts), par),
                              tuple(retention), intra), w, a)
    problems = validate_mapping(m, w, a)
    if problems:
        raise MappingError("; ".join(problems))
    return m


def parse_mapping(text: str, w: FusionSet, a: Architecture) -> Mapping:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise MappingError(f"syntax error at line {exc.lineno}: {exc.msg}") from exc
    return parse_mapping_dict(doc, w, a)


def serialize_mapping(m: Mapping) -> str:
    doc = {
        "partitions": [{"rank": p.rank, "tile_size": p.tile_size}
                       for p in m.inter.partitions],
        "parallelism": m.inter.parallelism.value,
        "retention": [{"tensor": rc.tensor, "depth": rc.depth,
                       "level": rc.level}
                      for rc in sorted(m.retention, key=lambda r: r.tensor)],
        "intra": {name: [{"rank": l.rank, "tile_size": l.tile_size,
                          "kind": l.kind.value, "level": l.level}
                         for l in nest]
                  for name, nest in sorted(m.intra.items()) if nest},
    }
    return json.dumps(doc, indent=2)
