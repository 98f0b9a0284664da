"""Latency, energy, occupancy, off-chip transfer metrics."""

import random

import pytest

from fusedflow import templates
from fusedflow.analysis import ActionCounts
from fusedflow.arch import Architecture, Compute, Level
from fusedflow.mapping import (
    InterLayerMapping, Mapping, Partition, RetentionChoice, with_defaults,
)
from fusedflow.metrics import (
    energy, evaluate, memory_latency, pipeline_latency,
    pipeline_latency_uniform, sequential_latency,
)


def arch(bandwidth=4, **kw):
    return Architecture(
        levels=(Level("DRAM", bandwidth=bandwidth, read_energy=100.0,
                      write_energy=100.0),
                Level("GLB", bandwidth=16, read_energy=1.0, write_energy=1.0,
                      fanout=4, hop_energy=0.1, capacity=kw.get("capacity"))),
        compute=Compute(units=4, op_energy=0.5, pipeline_stages_supported=4),
    )


def plain_dp(L):
    n_layers, n_iter = len(L), len(L[0])
    finish = [[0] * n_iter for _ in range(n_layers)]
    for i in range(n_iter):
        for l in range(n_layers):
            up = finish[l][i - 1] if i else 0
            left = finish[l - 1][i] if l else 0
            finish[l][i] = max(up, left) + L[l][i]
    return finish[-1][-1]


def test_sequential_latency_examples():
    assert sequential_latency([[10, 10], [5, 5]]) == 30
    assert sequential_latency([[7]]) == 7
    assert sequential_latency([[12, 10], [5, 5]]) == 32


def test_pipeline_latency_examples():
    assert pipeline_latency([[4, 2, 3]]) == 9  # one layer = sequential
    assert pipeline_latency([[1, 1, 1], [1, 1, 1]]) == 4
    assert pipeline_latency([[3, 1, 1], [1, 1, 1]]) == 6


def test_pipeline_uniform_closed_form():
    for stages in (1, 2, 3, 5):
        for trips in (1, 2, 7):
            for c in (1, 3):
                L = [[c] * trips for _ in range(stages)]
                want = (stages + trips - 1) * c
                assert pipeline_latency(L) == want
                assert pipeline_latency_uniform([c] * stages, trips) == want


def test_pipeline_rle_matches_plain_dp():
    rng = random.Random(5)
    for _ in range(200):
        n_layers = rng.randint(1, 4)
        n_iter = rng.randint(1, 30)
        L = []
        for _ in range(n_layers):
            # Runs of equal costs with occasional jumps, like real tiles.
            row, cost = [], rng.randint(1, 9)
            for _ in range(n_iter):
                if rng.random() < 0.2:
                    cost = rng.randint(1, 9)
                row.append(cost)
            L.append(row)
        assert pipeline_latency(L) == plain_dp(L)
        assert pipeline_latency(L) <= sequential_latency(L)


def test_memory_latency_examples():
    a = arch(bandwidth=4)
    c = ActionCounts(reads={("DRAM", "X"): 1000})
    assert memory_latency(c, a)["DRAM"] == 250
    assert memory_latency(ActionCounts(), a)["DRAM"] == 0
    a3 = arch(bandwidth=3)
    c10 = ActionCounts(reads={("DRAM", "X"): 10})
    assert memory_latency(c10, a3)["DRAM"] == 4


def test_energy_examples():
    a = Architecture(
        levels=(Level("DRAM", bandwidth=1, read_energy=1.0, write_energy=1.0),),
        compute=Compute(units=1, op_energy=0.5))
    c = ActionCounts(reads={("DRAM", "X"): 100}, compute_ops=50)
    total, breakdown = energy(c, a)
    assert total == pytest.approx(125.0)
    assert breakdown == {"DRAM.read": 100.0, "compute": 25.0}
    assert energy(ActionCounts(), a) == (0, {})


def test_untiled_fusion_occupancy_holds_whole_intermediate():
    w = templates.conv_conv(4, 4, 2, 3, 2)
    a = arch()
    m = with_defaults(Mapping(
        retention=(RetentionChoice("Fmap2", 0, "GLB"),)), w, a)
    res = evaluate(w, m, a)
    per_tensor = res.metrics.occupancy_per_tensor["GLB"]
    assert per_tensor["Fmap2"] == w.tensor_size("Fmap2")


def test_occupancy_depth_monotone():
    w = templates.conv_conv(6, 4, 2, 3, 2)
    a = arch()
    peaks = []
    for depth in (0, 1):
        m = with_defaults(Mapping(
            InterLayerMapping((Partition("P2", 2),)),
            (RetentionChoice("Fmap2", depth, "GLB"),)), w, a)
        res = evaluate(w, m, a)
        peaks.append(res.metrics.occupancy_per_tensor["GLB"]["Fmap2"])
    assert peaks[0] >= peaks[1]


def test_offchip_minimum_for_ideal_fusion():
    w = templates.conv_conv(4, 4, 2, 3, 2)
    a = arch()
    m = with_defaults(Mapping(
        retention=tuple(RetentionChoice(t, 0, "GLB") for t in w.tensors())),
        w, a)
    res = evaluate(w, m, a)
    want = (w.tensor_size("Fmap1") + w.tensor_size("Filter1")
            + w.tensor_size("Filter2") + w.tensor_size("Fmap3"))
    assert res.metrics.offchip_words == want
    assert res.metrics.recompute_ops == {"Conv1": 0, "Conv2": 0}


def test_capacity_violation_marks_infeasible():
    w = templates.conv_conv(4, 4, 2, 3, 2)
    a = arch(capacity=8)
    m = with_defaults(Mapping(
        retention=(RetentionChoice("Fmap2", 0, "GLB"),)), w, a)
    res = evaluate(w, m, a)
    assert not res.metrics.feasible
    assert any("GLB" in v for v in res.metrics.capacity_violations)


def test_latency_is_max_of_compute_and_memory():
    w = templates.eq2_conv()
    a = arch(bandwidth=1)
    m = with_defaults(Mapping(), w, a)
    res = evaluate(w, m, a)
    assert res.metrics.latency_cycles == max(
        res.metrics.compute_latency_cycles,
        *res.metrics.memory_latency_cycles.values())


def test_metrics_json_shape():
    w = templates.eq2_conv()
    a = arch()
    m = with_defaults(Mapping(), w, a)
    d = evaluate(w, m, a).metrics.to_dict()
    for key in ("latency", "energy", "occupancy", "offchip_words",
                "recompute_ops", "feasible"):
        assert key in d
    assert set(d["energy"]) == {"total", "breakdown"}
    assert "total" in d["occupancy"]["GLB"]
