"""Sweeping a mapspace and reading the capacity/traffic/recompute trade-offs.

Enumerates schedules and retention choices for a small two-convolution
fusion set, then prints the Pareto front over required buffer capacity and
off-chip traffic, plus how per-tensor retention beats uniform retention.
"""

from fusedflow import templates
from fusedflow.mapper import (
    MapspaceSpec, case_study, default_study_arch, pareto_filter, run_mapspace,
)

fs = templates.conv_conv(6, 4, 2, 3, 2)
arch = default_study_arch()

spec = MapspaceSpec(rank_orders=[(), ("P2",), ("Q2",), ("P2", "Q2"), ("C2",)],
                    tile_sizes="pow2", retention_mode="per_tensor",
                    depths="all")
rows = run_mapspace("demo", spec, fs, arch)
print(f"Evaluated {len(rows)} valid mappings")

front = pareto_filter(rows, ["occupancy_words", "offchip_words"])
print("\nCapacity vs off-chip front (words):")
for r in sorted(front, key=lambda r: r["occupancy_words"]):
    print(f"  schedule {r['schedule']:>8}  capacity {r['occupancy_words']:5d}"
          f"  off-chip {r['offchip_words']:5d}  recompute {r['recompute_ops']}")

print("\nPer-tensor vs uniform retention (case study shapes):")
study = case_study("per_tensor_retain",
                   {"p2": 6, "q2": 4, "c1": 2, "m1": 3, "m2": 2})
for mode in ("uniform", "per_tensor"):
    pts = [r for r in study if r["study"].endswith(f":{mode}")]
    f = pareto_filter(pts, ["occupancy_words", "offchip_words"])
    best = min(f, key=lambda r: r["offchip_words"])
    print(f"  {mode:>10}: fewest off-chip {best['offchip_words']} words needs "
          f"{best['occupancy_words']} words of buffer")
