"""Seeded random fusion sets, architectures, and mappings for fuzz checks.

Chains are built back to front from conv / pwise / dwise / fc layer kinds so
every intermediate is consumed exactly and shapes stay consistent. All draws
come from one random.Random, so a seed pins the whole scenario.
"""

from __future__ import annotations

import random
from math import ceil

from .arch import Architecture, Compute, Level
from .geometry import AffineExpr
from .mapping import (
    InterLayerMapping, IntraLayerLoop, LoopKind, Mapping, Parallelism,
    Partition, RetentionChoice, nominal_extent, validate_mapping, with_defaults,
)
from .templates import conv1d
from .workload import Einsum, FusionSet, TensorProjection, TensorRole


def _var(r):
    return AffineExpr.var(r)


def random_fusion_set(rng: random.Random, max_layers: int = 3,
                      max_shape: int = 8) -> FusionSet:
    while True:
        fs = _draw_fusion_set(rng, max_layers, max_shape)
        if max(max(e.rank_shapes.values()) for e in fs.einsums) <= max_shape:
            return fs


def _draw_fusion_set(rng: random.Random, max_layers: int,
                     max_shape: int) -> FusionSet:
    n = rng.randint(2, max_layers)
    kinds = [rng.choice(["conv", "pwise", "dwise", "fc"]) for _ in range(n)]
    # Draw the last layer's spatial extent, then grow halos backwards.
    p = rng.randint(1, max(1, max_shape - 2 * n))
    chans = [rng.randint(1, 4) for _ in range(n + 1)]
    einsums: list[Einsum] = []
    for k in range(n - 1, -1, -1):
        i = k + 1
        kind = kinds[k]
        fm_in, fm_out = f"Fmap{i}", f"Fmap{i + 1}"
        if kind == "conv":
            r = rng.randint(2, 3)
            stride = rng.choice([1, 1, 2]) if r >= 2 else 1
            e = conv1d(f"L{i}", i, fm_in, fm_out, c=chans[k], m=chans[k + 1],
                       p=p, r=r, stride=stride,
                       declare_input_bounds=(k == 0))
            p = stride * (p - 1) + r
        elif kind == "pwise":
            e = Einsum(
                name=f"L{i}",
                output=TensorProjection(fm_out, (_var(f"M{i}"), _var(f"P{i}"))),
                inputs=(
                    TensorProjection(fm_in, (_var(f"C{i}"), _var(f"P{i}"))),
                    TensorProjection(f"Filter{i}",
                                     (_var(f"M{i}"), _var(f"C{i}"))),
                ),
                rank_shapes={f"M{i}": chans[k + 1], f"P{i}": p,
                             f"C{i}": chans[k]},
            )
        elif kind == "dwise":
            r = rng.randint(2, 3)
            e = Einsum(
                name=f"L{i}",
                output=TensorProjection(fm_out, (_var(f"M{i}"), _var(f"P{i}"))),
                inputs=(
                    TensorProjection(fm_in, (_var(f"M{i}"),
                                             AffineExpr(((1, f"P{i}"),
                                                         (1, f"R{i}"))))),
                    TensorProjection(f"Filter{i}",
                                     (_var(f"M{i}"), _var(f"R{i}"))),
                ),
                rank_shapes={f"M{i}": chans[k + 1], f"P{i}": p, f"R{i}": r},
            )
            chans[k] = chans[k + 1]  # depthwise keeps the channel count
            p = p + r - 1
        else:  # fc: collapse the spatial rank into a batch-like rank
            e = Einsum(
                name=f"L{i}",
                output=TensorProjection(fm_out, (_var(f"M{i}"), _var(f"B{i}"))),
                inputs=(
                    TensorProjection(fm_in, (_var(f"D{i}"), _var(f"B{i}"))),
                    TensorProjection(f"Filter{i}",
                                     (_var(f"M{i}"), _var(f"D{i}"))),
                ),
                rank_shapes={f"M{i}": chans[k + 1], f"B{i}": p,
                             f"D{i}": chans[k]},
            )
        einsums.insert(0, e)
    return FusionSet(tuple(einsums))


def random_architecture(rng: random.Random) -> Architecture:
    n_mid = rng.randint(1, 2)
    levels = [Level("DRAM", bandwidth=rng.choice([1, 2, 4]),
                    read_energy=float(rng.randint(50, 200)),
                    write_energy=float(rng.randint(50, 200)))]
    for i in range(n_mid):
        levels.append(Level(
            f"B{i}", bandwidth=rng.choice([2, 4, 8, 16]),
            read_energy=float(rng.randint(1, 8)),
            write_energy=float(rng.randint(1, 8)),
            capacity=None,
            fanout=rng.choice([1, 2, 4]),
            hop_energy=round(rng.random(), 2)))
    return Architecture(tuple(levels), Compute(
        units=rng.choice([4, 8]),
        ops_per_cycle_per_unit=rng.choice([1, 2]),
        op_energy=round(rng.random(), 2),
        pipeline_stages_supported=rng.choice([1, 4])))


def random_mapping(rng: random.Random, w: FusionSet, a: Architecture,
                   allow_pipeline: bool = True) -> Mapping:
    last = w.last
    ranks = list(last.rank_order)
    rng.shuffle(ranks)
    parts = []
    for rank in ranks[:rng.randint(0, min(3, len(ranks)))]:
        shape = last.rank_shapes[rank]
        size = rng.randint(1, shape)
        parts.append(Partition(rank, size))
        if shape > 2 and size > 1 and rng.random() < 0.25:
            parts.append(Partition(rank, rng.randint(1, size - 1)))
    rng.shuffle(parts)
    # A shuffled multi-level split may repeat a rank with growing sizes; drop
    # later offenders.
    seen: dict[str, int] = {}
    clean = []
    for pt in parts:
        if pt.rank in seen and pt.tile_size >= seen[pt.rank]:
            continue
        seen[pt.rank] = pt.tile_size
        clean.append(pt)
    parts = clean

    par = Parallelism.SEQUENTIAL
    if (allow_pipeline and rng.random() < 0.3
            and len(w.einsums) <= a.compute.pipeline_stages_supported
            and a.compute.units >= len(w.einsums)):
        par = Parallelism.PIPELINE

    onchip = [l.name for l in a.levels[1:]]
    retention = []
    for t in w.tensors():
        if w.tensor_roles[t] is TensorRole.INTERMEDIATE:
            level = rng.choice(onchip)
        else:
            level = rng.choice(onchip + [a.top.name])
        retention.append(RetentionChoice(t, rng.randint(0, len(parts)), level))

    intra = {}
    for e in w.einsums:
        if rng.random() < 0.5:
            continue
        nest = []
        avail = {l.name: l.fanout for l in a.levels[1:]}
        loop_ranks = rng.sample(list(e.rank_order),
                                k=rng.randint(1, min(2, len(e.rank_order))))
        for rank in loop_ranks:
            extent = nominal_extent(w, e.name, rank, tuple(parts))
            if extent < 2:
                continue
            if rng.random() < 0.45:
                fits = [name for name, f in avail.items() if f >= 2]
                if not fits:
                    continue
                level = rng.choice(fits)
                size = max(ceil(extent / avail[level]),
                           rng.randint(1, extent))
                avail[level] //= ceil(extent / size)
                nest.append(IntraLayerLoop(rank, size, LoopKind.SPATIAL, level))
            else:
                size = rng.randint(2, extent)
                nest.append(IntraLayerLoop(rank, size, LoopKind.TEMPORAL,
                                           rng.choice(onchip)))
                if size > 2 and rng.random() < 0.3:
                    nest.append(IntraLayerLoop(rank, rng.randint(1, size - 1),
                                               LoopKind.TEMPORAL,
                                               rng.choice(onchip)))
        if nest:
            intra[e.name] = tuple(nest)

    m = with_defaults(Mapping(InterLayerMapping(tuple(parts), par),
                              tuple(retention), intra), w, a)
    assert validate_mapping(m, w, a) == [], validate_mapping(m, w, a)
    return m


def random_case(seed: int, max_shape: int = 8,
                allow_pipeline: bool = True):
    """One reproducible (workload, architecture, mapping) scenario."""
    rng = random.Random(seed)
    w = random_fusion_set(rng, max_shape=max_shape)
    a = random_architecture(rng)
    m = random_mapping(rng, w, a, allow_pipeline=allow_pipeline)
    return w, a, m
