"""Describing layers as extended Einsums and reading off their reuse.

A 1-D convolution with M=4 output channels, P=6 output rows, C=3 input
channels and a window of R=3 reads its input at c, p+r: partitioning
different ranks slices the tensors in characteristically different ways.
"""

from fusedflow import templates
from fusedflow.workload import (
    classify_reuse, data_relation, operation_space, serialize_workload,
)

fs = templates.eq2_conv()
conv = fs.einsums[0]

print("The workload file for this layer looks like:")
print(serialize_workload(fs))

ops = operation_space(conv)
print(f"\nOperation space ranks: {ops.ranks}")
print(f"Total operations: {ops.count()}  (= 4 * 6 * 3 * 3)")

print("\nWhere one operation's data lives:")
for tensor in ("Input", "Filter1", "Output"):
    rel = data_relation(conv, tensor)
    print(f"  op (m=2, p=3, c=1, r=2) touches {tensor}{rel.apply((2, 3, 1, 2))}")

print("\nReuse class of each tensor when partitioning one rank:")
for rank in ("P1", "C1", "M1"):
    classes = classify_reuse(conv, rank)
    pretty = ", ".join(f"{t}={c.value}" for t, c in classes.items())
    print(f"  partition {rank}: {pretty}")

print("""
Reading the table: partitioning P1 slides a window over the Input
(convolutional reuse), slices the Output into disjoint pieces, and leaves
the Filter untouched (every tile needs all of it).""")
