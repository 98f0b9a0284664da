"""Workload parsing, roles, reuse classification, data relations."""

import json

import pytest

from fusedflow import geometry as g
from fusedflow import templates
from fusedflow.workload import (
    ReuseClass, TensorRole, WorkloadError, classify_reuse, data_relation,
    operation_space, parse_workload, serialize_workload,
)


EQ2_TEXT = json.dumps({
    "einsums": [{
        "name": "Conv1",
        "output": {"tensor": "Output", "indices": ["M1", "P1"]},
        "inputs": [
            {"tensor": "Input",
             "indices": ["C1", [[1, "P1"], [1, "R1"], 0]]},
            {"tensor": "Filter", "indices": ["M1", "C1", "R1"]},
        ],
        "rank_shapes": {"M1": 4, "P1": 6, "C1": 3, "H1": 8, "R1": 3},
    }]
})


def test_parse_eq2_conv():
    fs = parse_workload(EQ2_TEXT)
    assert len(fs.einsums) == 1
    assert fs.tensor_roles["Input"] is TensorRole.EXTERNAL_INPUT
    assert fs.tensor_roles["Filter"] is TensorRole.FILTER
    assert fs.tensor_roles["Output"] is TensorRole.EXTERNAL_OUTPUT
    assert fs.tensor_extents["Input"] == (3, 8)
    assert fs.tensor_axes["Input"] == ("C1", "H1")


def test_role_inference_on_chain():
    fs = templates.conv_conv(4, 4, 2, 3, 2)
    assert fs.tensor_roles["Fmap2"] is TensorRole.INTERMEDIATE
    assert fs.tensor_roles["Fmap1"] is TensorRole.EXTERNAL_INPUT
    assert fs.tensor_roles["Filter1"] is TensorRole.FILTER
    assert fs.tensor_roles["Fmap3"] is TensorRole.EXTERNAL_OUTPUT


def test_halo_shape_error():
    bad = EQ2_TEXT.replace('"H1": 8', '"H1": 7')
    with pytest.raises(WorkloadError, match="H1"):
        parse_workload(bad)


def test_syntax_error_reports_position():
    with pytest.raises(WorkloadError, match="line"):
        parse_workload("{ not json")


def test_broken_chain_reports_tensor():
    fs = templates.conv_conv(4, 4, 2, 3, 2)
    doc = json.loads(serialize_workload(fs))
    doc["einsums"][1]["inputs"][0]["tensor"] = "Elsewhere"
    with pytest.raises(WorkloadError, match="Fmap2|chain"):
        parse_workload(json.dumps(doc))


def test_classify_reuse_eq2():
    fs = parse_workload(EQ2_TEXT)
    e = fs.einsums[0]
    assert classify_reuse(e, "P1") == {
        "Input": ReuseClass.CONV, "Output": ReuseClass.NONE,
        "Filter": ReuseClass.FULL}
    assert classify_reuse(e, "C1") == {
        "Input": ReuseClass.NONE, "Output": ReuseClass.FULL,
        "Filter": ReuseClass.NONE}
    assert classify_reuse(e, "M1") == {
        "Input": ReuseClass.FULL, "Output": ReuseClass.NONE,
        "Filter": ReuseClass.NONE}
    with pytest.raises(WorkloadError):
        classify_reuse(e, "Z9")


def test_operation_space_counts():
    fs = parse_workload(EQ2_TEXT)
    ops = operation_space(fs.einsums[0])
    assert ops.count() == 216
    assert ops.ranks == ("M1", "P1", "C1", "R1")
    small = templates.conv1d("C", 9, "A", "B", c=1, m=1, p=1, r=1)
    assert operation_space(small).count() == 1
    narrow = templates.conv1d("C", 9, "A", "B", c=3, m=4, p=1, r=3)
    assert operation_space(narrow).count() == 36


def test_data_relations():
    fs = parse_workload(EQ2_TEXT)
    e = fs.einsums[0]
    rel = data_relation(e, "Input")
    assert rel.apply((2, 3, 1, 2)) == (1, 5)
    assert data_relation(e, "Output").apply((2, 3, 1, 2)) == (2, 3)
    assert data_relation(e, "Filter").apply((2, 3, 1, 2)) == (2, 1, 2)
    with pytest.raises(WorkloadError):
        data_relation(e, "Nope")


def test_full_class_rank_covers_whole_tensor():
    # Partitioning a FULL-class rank leaves each tensor tile the whole tensor.
    fs = parse_workload(EQ2_TEXT)
    e = fs.einsums[0]
    ops = operation_space(e)
    half = g.intersect(ops, g.Region.from_intervals(
        ops.ranks, (g.StridedInterval(0, 1), g.StridedInterval(0, 5),
                    g.StridedInterval(0, 2), g.StridedInterval(0, 2))))
    img = g.image(fs.data_relation(e, "Filter"), half)
    # M1 partitioned: filter tile is not full; P1 partition leaves it full.
    p_half = g.intersect(ops, g.Region.from_intervals(
        ops.ranks, (g.StridedInterval(0, 3), g.StridedInterval(0, 2),
                    g.StridedInterval(0, 2), g.StridedInterval(0, 2))))
    full_img = g.image(fs.data_relation(e, "Filter"), p_half)
    assert full_img.count() == fs.tensor_size("Filter")
    assert img.count() < fs.tensor_size("Filter")


def test_none_class_rank_gives_disjoint_tiles():
    fs = parse_workload(EQ2_TEXT)
    e = fs.einsums[0]
    ops = operation_space(e)
    rel = fs.data_relation(e, "Input")
    lo = g.intersect(ops, g.Region.from_intervals(
        ops.ranks, (g.StridedInterval(0, 3), g.StridedInterval(0, 5),
                    g.StridedInterval(0, 0), g.StridedInterval(0, 2))))
    hi = g.intersect(ops, g.Region.from_intervals(
        ops.ranks, (g.StridedInterval(0, 3), g.StridedInterval(0, 5),
                    g.StridedInterval(1, 2), g.StridedInterval(0, 2))))
    assert g.intersect(g.image(rel, lo), g.image(rel, hi)).is_empty()


def test_producer_ops_examples():
    fs = parse_workload(EQ2_TEXT)
    e = fs.einsums[0]
    needed = g.Region.from_intervals(("M1", "P1"),
                                     (g.StridedInterval(0, 3),
                                      g.StridedInterval(3, 5)))
    ops = g.producer_ops(needed, e)
    assert ops.count() == 108
    single = g.Region.from_intervals(("M1", "P1"),
                                     (g.StridedInterval(1, 1),
                                      g.StridedInterval(2, 2)))
    assert g.producer_ops(single, e).count() == 9
    assert g.producer_ops(g.Region.empty(("M1", "P1")), e).is_empty()
    too_big = g.Region.from_intervals(("M1", "P1"),
                                      (g.StridedInterval(0, 4),
                                       g.StridedInterval(0, 5)))
    with pytest.raises(g.GeometryError):
        g.producer_ops(too_big, e)


def test_roundtrip_all_templates():
    sets = [
        templates.eq2_conv(),
        templates.conv_conv(4, 4, 2, 3, 2),
        templates.pwise_dwise_pwise(4, 4, 2, 3, 2),
        templates.fc_fc(4, 3, 3, 2),
        templates.conv_chain(3, 3, 3, [2, 2, 2, 2]),
    ]
    for fs in sets:
        again = parse_workload(serialize_workload(fs))
        assert again == fs
        assert serialize_workload(again) == serialize_workload(fs)


def test_shared_rank_template():
    fs = templates.pwise_dwise_pwise(4, 4, 2, 3, 2)
    # The depthwise layer shares its channel rank with the first pointwise.
    assert "M1" in fs.einsums[0].rank_shapes
    assert "M1" in fs.einsums[1].rank_shapes
    assert fs.tensor_axes["Fmap3"] == ("M1", "P2", "Q2")


def test_intermediate_coverage_mismatch_rejected():
    # Producer makes 5 rows but the consumer window only reads 4 of them.
    doc = {
        "einsums": [
            {"name": "A",
             "output": {"tensor": "T", "indices": ["M1", "P1"]},
             "inputs": [{"tensor": "X", "indices": ["C1", "P1"]},
                        {"tensor": "F1", "indices": ["M1", "C1"]}],
             "rank_shapes": {"M1": 2, "P1": 5, "C1": 2}},
            {"name": "B",
             "output": {"tensor": "U", "indices": ["M2", "P2"]},
             "inputs": [{"tensor": "T",
                         "indices": ["C2", [[1, "P2"], [1, "R2"], 0]]},
                        {"tensor": "F2", "indices": ["M2", "C2", "R2"]}],
             "rank_shapes": {"M2": 2, "P2": 2, "C2": 2, "R2": 3}},
        ]
    }
    with pytest.raises(WorkloadError, match="shape inconsistency"):
        parse_workload(json.dumps(doc))
