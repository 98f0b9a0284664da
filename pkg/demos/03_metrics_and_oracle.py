"""Evaluating one mapping end to end and checking it against the simulator.

The analytical model computes latency, energy, peak occupancy, and off-chip
traffic from tile shapes alone. The brute-force simulator executes every
operation with explicit buffer contents; on anything desk-sized the two must
agree to the word.
"""

import json

from fusedflow import templates
from fusedflow.arch import Architecture, Compute, Level
from fusedflow.mapping import (
    InterLayerMapping, Mapping, Parallelism, Partition, RetentionChoice,
    with_defaults,
)
from fusedflow.metrics import evaluate
from fusedflow.oracle import simulate

fs = templates.conv_conv(6, 6, 2, 4, 4)
arch = Architecture(
    levels=(Level("DRAM", bandwidth=4, read_energy=200.0, write_energy=200.0),
            Level("GLB", bandwidth=32, read_energy=2.0, write_energy=2.0,
                  fanout=4, hop_energy=0.05)),
    compute=Compute(units=16, op_energy=0.25, pipeline_stages_supported=8))

m = with_defaults(Mapping(
    InterLayerMapping((Partition("P2", 2), Partition("Q2", 2)),
                      Parallelism.SEQUENTIAL),
    (RetentionChoice("Fmap2", 1, "GLB"),
     RetentionChoice("Filter1", 0, "GLB"),
     RetentionChoice("Filter2", 0, "GLB"))), fs, arch)

res = evaluate(fs, m, arch)
print("Analytical metrics:")
print(json.dumps(res.metrics.to_dict(), indent=2)[:800], "...")

sim = simulate(fs, m, arch)
print("\nSimulator cross-check:")
print(f"  compute ops      {res.totals.compute_ops} == {sim.compute_ops}")
print(f"  off-chip words   {res.metrics.offchip_words} == {sim.offchip_words}")
print(f"  peak occupancy   {res.metrics.peak_occupancy_words['GLB']}"
      f" == {sim.peak_occupancy_words['GLB']}")
print(f"  recompute        {res.analysis.recompute_ops()}"
      f" == {sim.recompute_ops}")
assert dict(res.totals.reads) == dict(sim.reads)
assert dict(res.totals.fills) == dict(sim.fills)
assert dict(res.totals.updates) == dict(sim.updates)
print("  every fill/read/update counter matches exactly")

print("\nFirst occupancy trace rows (step, level, tensor, words):")
for row in sim.trace_rows()[:8]:
    print("  ", row)
