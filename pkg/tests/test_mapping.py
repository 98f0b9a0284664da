"""Mapping parsing, validation, iteration space, tile slicing."""

import json

import pytest

from fusedflow import templates
from fusedflow.arch import Architecture, Compute, Level
from fusedflow.mapping import (
    InterLayerMapping, LoopKind, Mapping, MappingError, Parallelism, Partition,
    RetentionChoice, iteration_space, op_tile, parse_mapping, serialize_mapping,
    tile_slices, validate_mapping, with_defaults,
)


def two_level_arch(fanout=4, units=8, stages=4):
    return Architecture(
        levels=(
            Level("DRAM", bandwidth=4, read_energy=100.0, write_energy=100.0),
            Level("GLB", bandwidth=16, read_energy=1.0, write_energy=1.0,
                  capacity=None, fanout=fanout, hop_energy=0.1),
        ),
        compute=Compute(units=units, ops_per_cycle_per_unit=1, op_energy=0.5,
                        pipeline_stages_supported=stages),
    )


@pytest.fixture
def conv_conv():
    return templates.conv_conv(6, 4, 2, 3, 2)


def mk(w, a, partitions=(), retention=(), parallelism=Parallelism.SEQUENTIAL,
       intra=None):
    m = Mapping(InterLayerMapping(tuple(partitions), parallelism),
                tuple(retention), intra or {})
    return with_defaults(m, w, a)


def test_parse_with_defaults(conv_conv):
    a = two_level_arch()
    text = json.dumps({
        "partitions": [{"rank": "P2", "tile_size": 3}],
        "parallelism": "sequential",
        "retention": [{"tensor": "Fmap2", "depth": 1, "level": "GLB"},
                      {"tensor": "Filter1", "depth": 0, "level": "GLB"}],
    })
    m = parse_mapping(text, conv_conv, a)
    assert len(iteration_space(m, conv_conv)) == 2
    assert m.retention_of("Fmap2").depth == 1
    assert m.retention_of("Filter1").depth == 0
    # Unlisted tensors default to current-tile retention at the innermost level.
    assert m.retention_of("Fmap1").level == "GLB"
    assert m.retention_of("Fmap1").depth == 1
    assert m.nest_of("Conv1") == ()


def test_untiled_fusion_is_degenerate(conv_conv):
    a = two_level_arch()
    m = mk(conv_conv, a)
    assert iteration_space(m, conv_conv) == [()]
    tile = op_tile(m, conv_conv, ())
    from fusedflow.workload import operation_space
    assert tile == operation_space(conv_conv.last)


def test_iteration_space_examples(conv_conv):
    a = two_level_arch()
    m = mk(conv_conv, a, [Partition("P2", 3)])
    assert iteration_space(m, conv_conv) == [(0,), (1,)]
    m = mk(conv_conv, a, [Partition("P2", 4)])
    assert iteration_space(m, conv_conv) == [(0,), (1,)]
    assert tile_slices(m, conv_conv, (1,)) == {"P2": (4, 6)}
    m = mk(conv_conv, a, [Partition("P2", 3), Partition("Q2", 2)])
    assert iteration_space(m, conv_conv) == [(0, 0), (0, 1), (1, 0), (1, 1)]


def test_multilevel_partition_and_empty_edge(conv_conv):
    a = two_level_arch()
    m = mk(conv_conv, a, [Partition("P2", 4), Partition("P2", 3)])
    coords = iteration_space(m, conv_conv)
    assert coords == [(0, 0), (0, 1), (1, 0), (1, 1)]
    assert tile_slices(m, conv_conv, (0, 1)) == {"P2": (3, 4)}
    assert tile_slices(m, conv_conv, (1, 0)) == {"P2": (4, 6)}
    assert tile_slices(m, conv_conv, (1, 1)) is None
    assert op_tile(m, conv_conv, (1, 1)).is_empty()


def test_validation_rules(conv_conv):
    a = two_level_arch()
    w = conv_conv

    bad_rank = mk(w, a, [Partition("P1", 2)])
    assert any("not a rank" in x for x in validate_mapping(bad_rank, w, a))

    off_chip_intermediate = mk(
        w, a, retention=[RetentionChoice("Fmap2", 0, "DRAM")])
    assert any("only on-chip" in x
               for x in validate_mapping(off_chip_intermediate, w, a))

    deep = Mapping(InterLayerMapping((Partition("P2", 3), Partition("Q2", 2))),
                   (RetentionChoice("Fmap2", 3, "GLB"),))
    deep = with_defaults(deep, w, a)
    assert any("depth" in x for x in validate_mapping(deep, w, a))

    ok = mk(w, a, [Partition("P2", 3), Partition("Q2", 2)],
            [RetentionChoice("Fmap2", 1, "GLB")])
    assert validate_mapping(ok, w, a) == []


def test_spatial_fanout_check(conv_conv):
    from fusedflow.mapping import IntraLayerLoop
    a = two_level_arch(fanout=2)
    nest = (IntraLayerLoop("M2", 1, LoopKind.SPATIAL, "GLB"),)
    m = mk(conv_conv, a, intra={"Conv2": nest})
    # M2 shape 2 => 2 spatial trips, fits fanout 2.
    assert validate_mapping(m, conv_conv, a) == []
    a1 = two_level_arch(fanout=1)
    assert any("fanout" in x for x in validate_mapping(m, conv_conv, a1))


def test_pipeline_requirements(conv_conv):
    a = two_level_arch(units=1)
    m = mk(conv_conv, a, parallelism=Parallelism.PIPELINE)
    assert any("compute partition" in x or "units" in x
               for x in validate_mapping(m, conv_conv, a))
    a2 = two_level_arch(units=8, stages=1)
    m2 = mk(conv_conv, a2, parallelism=Parallelism.PIPELINE)
    assert any("stages" in x for x in validate_mapping(m2, conv_conv, a2))


def test_reorder_preserves_tile_multiset(conv_conv):
    a = two_level_arch()
    m1 = mk(conv_conv, a, [Partition("P2", 3), Partition("Q2", 2)])
    m2 = mk(conv_conv, a, [Partition("Q2", 2), Partition("P2", 3)])
    tiles1 = sorted(op_tile(m1, conv_conv, c).boxes
                    for c in iteration_space(m1, conv_conv))
    tiles2 = sorted(op_tile(m2, conv_conv, c).boxes
                    for c in iteration_space(m2, conv_conv))
    assert tiles1 == tiles2


def test_mapping_roundtrip(conv_conv):
    a = two_level_arch()
    m = mk(conv_conv, a, [Partition("P2", 3)],
           [RetentionChoice("Fmap2", 1, "GLB")])
    again = parse_mapping(serialize_mapping(m), conv_conv, a)
    assert again == m


def test_parse_rejects_unknowns(conv_conv):
    a = two_level_arch()
    with pytest.raises(MappingError, match="unknown tensor"):
        parse_mapping(json.dumps({
            "retention": [{"tensor": "Nope", "depth": 0, "level": "GLB"}]}),
            conv_conv, a)
    with pytest.raises(MappingError, match="parallelism"):
        parse_mapping(json.dumps({"parallelism": "warp"}), conv_conv, a)
