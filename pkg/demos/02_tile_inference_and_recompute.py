"""How retention choices turn into reuse, refetch, or recomputation.

Two chained 2-D convolutions are partitioned along the second layer's
output rows. The intermediate feature map tiles overlap by the window halo;
whether that halo is kept in the buffer decides whether the first layer
re-executes operations.
"""

from fusedflow import templates
from fusedflow.analysis import dedupe_tiles, infer_tiles
from fusedflow.arch import Architecture, Compute, Level
from fusedflow.mapping import (
    InterLayerMapping, Mapping, Partition, RetentionChoice, with_defaults,
)
from fusedflow.workload import operation_space

fs = templates.conv_conv(6, 4, 2, 3, 2)
arch = Architecture(
    levels=(Level("DRAM", bandwidth=4, read_energy=200.0, write_energy=200.0),
            Level("GLB", bandwidth=32, read_energy=2.0, write_energy=2.0)),
    compute=Compute(units=16))

print(f"Fusion set: {' -> '.join(e.name for e in fs.einsums)}")
print(f"Conv1 operation space: {operation_space(fs.einsums[0]).count()} ops")
print(f"Conv2 operation space: {operation_space(fs.einsums[1]).count()} ops")

for depth, label in ((0, "keep the whole produced band (depth 0)"),
                     (1, "evict between row tiles (depth 1)")):
    m = with_defaults(Mapping(
        InterLayerMapping((Partition("P2", 3),)),
        (RetentionChoice("Fmap2", depth, "GLB"),)), fs, arch)
    analysis = infer_tiles(fs, m)
    rc = analysis.recompute_ops()
    print(f"\nRetention: {label}")
    for i, per_layer in enumerate(analysis.tiles):
        tile = per_layer["Conv1"]
        fresh = tile.new_data["Fmap2"].count()
        print(f"  iteration {i}: Conv1 executes {tile.ops.count():4d} ops, "
              f"produces {fresh:3d} new Fmap2 words")
    print(f"  recomputed Conv1 ops: {rc['Conv1']}")

print("""
With the halo kept, iteration 1 only produces the rows it has not seen;
evicting it makes Conv1 regenerate the two overlap rows from scratch.""")

m = with_defaults(Mapping(
    InterLayerMapping((Partition("P2", 1),)),
    (RetentionChoice("Fmap2", 0, "GLB"),)), fs, arch)
classes = dedupe_tiles(infer_tiles(fs, m))
print("Unique Conv1 tile shapes under a row-by-row schedule:"
      f" {[(tc.multiplicity) for tc in classes['Conv1']]} (multiplicities)."
      " The analysis runs once per unique shape, not once per iteration.")
