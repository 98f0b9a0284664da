"""Final metrics: latency, energy, buffer occupancy, off-chip transfers.

Pipeline latency follows the dependency-respecting makespan
    finish[l][i] = max(finish[l][i-1], finish[l-1][i]) + L[l][i],
evaluated over run-length-encoded iteration classes so cost tracks the
number of unique tile shapes, not the number of iterations. The classic
closed form for layer-uniform costs (fill + steady drain) is kept as a fast
path and must agree with the recurrence wherever both are defined.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from math import ceil

from . import geometry as g
from .analysis import ActionCounts, TileAnalysis, dedupe_tiles, total_counts
from .arch import Architecture
from .mapping import Mapping, MappingError, Parallelism, validate_mapping
from .workload import FusionSet


class MetricsError(Exception):
    pass


# ---------------------------------------------------------------------------
# Latency


def sequential_latency(per_layer: list[list[int]]) -> int:
    """Tiles run one after another: total is the plain sum."""
    return sum(sum(row) for row in per_layer)


def pipeline_latency_uniform(costs: list[int], iterations: int) -> int:
    """Closed form when every iteration of layer l costs costs[l]."""
    if iterations <= 0:
        return 0
    return sum(costs) + (iterations - 1) * max(costs)


def pipeline_latency(per_layer: list[list[int]]) -> int:
    """Dependency-respecting makespan over run-length-encoded iterations."""
    n_layers = len(per_layer)
    if n_layers == 0:
        return 0
    n_iter = len(per_layer[0])
    if n_iter == 0:
        return 0
    if all(len(set(row)) == 1 for row in per_layer):
        return pipeline_latency_uniform([row[0] for row in per_layer], n_iter)

    # Run-length encode the per-iteration cost vectors.
    runs: list[tuple[tuple[int, ...], int]] = []
    for i in range(n_iter):
        vec = tuple(per_layer[l][i] for l in range(n_layers))
        if runs and runs[-1][0] == vec:
            runs[-1] = (vec, runs[-1][1] + 1)
        else:
            runs.append((vec, 1))

    # Within a constant-cost run of n iterations, the recurrence is a
    # longest-path problem on a staircase grid: a path entering at layer j
    # pays the j..l column once plus n-1 repeats of the slowest stage in it.
    finish = [0] * n_layers
    for costs, n in runs:
        nxt = [0] * n_layers
        for j in range(n_layers):
            col = 0
            slowest = 0
            for l in range(j, n_layers):
                col += costs[l]
                slowest = max(slowest, costs[l])
                cand = finish[j] + col + (n - 1) * slowest
                if cand > nxt[l]:
                    nxt[l] = cand
        finish = nxt
    return finish[-1]


def memory_latency(totals: ActionCounts, a: Architecture) -> dict[str, int]:
    """Per level: total traffic divided by bandwidth, rounded up."""
    out = {}
    for level in a.levels:
        if level.bandwidth <= 0:
            raise MetricsError(f"level {level.name} has zero bandwidth")
        out[level.name] = ceil(totals.level_traffic(level.name) / level.bandwidth)
    return out


# ---------------------------------------------------------------------------
# Energy


def energy(totals: ActionCounts, a: Architecture) -> tuple[float, dict[str, float]]:
    breakdown: dict[str, float] = {}
    for level in a.levels:
        name = level.name
        reads = sum(n for (l, _), n in totals.reads.items() if l == name)
        writes = (sum(n for (l, _), n in totals.fills.items() if l == name)
                  + sum(n for (l, _), n in totals.updates.items() if l == name))
        if reads:
            breakdown[f"{name}.read"] = reads * level.read_energy
        if writes:
            breakdown[f"{name}.write"] = writes * level.write_energy
        hops = totals.noc_hops.get(name, 0)
        if hops:
            breakdown[f"{name}.noc"] = hops * level.hop_energy
    if totals.compute_ops:
        breakdown["compute"] = totals.compute_ops * a.compute.op_energy
    return sum(breakdown.values()), breakdown


# ---------------------------------------------------------------------------
# Occupancy


def occupancy_trace(analysis: TileAnalysis, m: Mapping, a: Architecture
                    ) -> list[dict[str, dict[str, int]]]:
    """Per step, per level, per tensor: words resident.

    Sequential schedules have one step per iteration. Pipelines overlap
    stages: layer k runs iteration i at step i + k, so a step's occupancy
    sums each tensor's retained set at its consumer's clock plus tiles in
    flight between producer and consumer stages.
    """
    w = analysis.workload
    n_layers = len(w.einsums)
    n_iter = len(analysis.iterations)
    tensors = w.tensors()
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
    n_steps = n_iter + n_layers - 1 if pipelined else n_iter
    trace: list[dict[str, dict[str, int]]] = []
    for s in range(n_steps):
        by_level: dict[str, dict[str, int]] = {}
        for t in tensors:
            lvl = level_of[t]
            if a.is_top(lvl):
                continue
            if not pipelined:
                words = analysis.residents[s][t].count()
            else:
                first, last = span[t]
                i_c = s - last
                i_p = min(s - first, n_iter - 1)
                regions = []
                if 0 <= i_c < n_iter:
                    regions.append(analysis.residents[i_c][t])
                for i in range(max(i_c + 1, 0), i_p + 1):
                    regions.append(analysis.data_unions[i][t])
                words = g.union_all(regions).count() if regions else 0
            if words:
                by_level.setdefault(lvl, {})[t] = words
        trace.append(by_level)
    return trace


def peak_occupancy(analysis: TileAnalysis, m: Mapping, a: Architecture
                   ) -> tuple[dict[str, int], dict[str, dict[str, int]]]:
    """Per-level peak of summed resident words, plus per-tensor peaks."""
    trace = occupancy_trace(analysis, m, a)
    peak: dict[str, int] = {l.name: 0 for l in a.levels}
    per_tensor: dict[str, dict[str, int]] = {l.name: {} for l in a.levels}
    for step in trace:
        for lvl, tensors in step.items():
            peak[lvl] = max(peak[lvl], sum(tensors.values()))
            for t, n in tensors.items():
                per_tensor[lvl][t] = max(per_tensor[lvl].get(t, 0), n)
    return peak, per_tensor


def offchip_transfers(totals: ActionCounts, a: Architecture) -> int:
    """Fills + reads + updates at the top (off-chip) level."""
    return totals.level_traffic(a.top.name)


# ---------------------------------------------------------------------------
# Putting it together


@dataclass
class Metrics:
    latency_cycles: int
    compute_latency_cycles: int
    memory_latency_cycles: dict[str, int]
    energy_pj: float
    energy_breakdown: dict[str, float]
    peak_occupancy_words: dict[str, int]
    occupancy_per_tensor: dict[str, dict[str, int]]
    offchip_words: int
    recompute_ops: dict[str, int]
    feasible: bool = True
    capacity_violations: list[str] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "latency": self.latency_cycles,
            "compute_latency": self.compute_latency_cycles,
            "memory_latency": dict(sorted(self.memory_latency_cycles.items())),
            "energy": {
                "total": round(self.energy_pj, 3),
                "breakdown": {k: round(v, 3) for k, v in
                              sorted(self.energy_breakdown.items())},
            },
            "occupancy": {
                lvl: {"total": self.peak_occupancy_words[lvl],
                      "per_tensor": dict(sorted(
                          self.occupancy_per_tensor[lvl].items()))}
                for lvl in sorted(self.peak_occupancy_words)
            },
            "offchip_words": self.offchip_words,
            "recompute_ops": dict(sorted(self.recompute_ops.items())),
            "feasible": self.feasible,
            "capacity_violations": list(self.capacity_violations),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)


@dataclass
class EvalResult:
    metrics: Metrics
    totals: ActionCounts
    analysis: TileAnalysis


def evaluate(w: FusionSet, m: Mapping, a: Architecture,
             analysis: TileAnalysis | None = None) -> EvalResult:
    """Run the full analytical model for one mapping."""
    problems = validate_mapping(m, w, a)
    if problems:
        raise MappingError("; ".join(problems))
    from .analysis import infer_tiles
    if analysis is None:
        analysis = infer_tiles(w, m)
    classes = dedupe_tiles(analysis)
    totals, lat = total_counts(w, m, a, analysis, classes)
    per_layer = [lat[e.name] for e in w.einsums]
    if m.inter.parallelism is Parallelism.PIPELINE:
        compute_total = pipeline_latency(per_layer)
    else:
        compute_total = sequential_latency(per_layer)
    mem = memory_latency(totals, a)
    latency = max([compute_total, *mem.values()])
    total_pj, breakdown = energy(totals, a)
    peak, per_tensor = peak_occupancy(analysis, m, a)
    violations = []
    for level in a.levels:
        if level.capacity is not None and peak[level.name] > level.capacity:
            violations.append(
                f"level {level.name}: occupancy {peak[level.name]} exceeds "
                f"capacity {level.capacity}")
    metrics = Metrics(
        latency_cycles=latency,
        compute_latency_cycles=compute_total,
        memory_latency_cycles=mem,
        energy_pj=total_pj,
        energy_breakdown=breakdown,
        peak_occupancy_words=peak,
        occupancy_per_tensor=per_tensor,
        offchip_words=offchip_transfers(totals, a),
        recompute_ops=analysis.recompute_ops(),
        feasible=not violations,
        capacity_violations=violations,
    )
    return EvalResult(metrics, totals, analysis)
