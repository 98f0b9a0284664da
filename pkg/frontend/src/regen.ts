// Regenerates the golden SVGs from the shipped fixtures (run after a
// deliberate rendering change, then review the diff).
import { readFileSync, writeFileSync, mkdirSync } from "node:fs";
import { dirname, join } from "node:path";
import { fileURLToPath } from "node:url";
import { ChartKind, render } from "./charts.js";

const root = join(dirname(fileURLToPath(import.meta.url)), "..");
mkdirSync(join(root, "golden"), { recursive: true });

const jobs: [string, ChartKind, boolean][] = [
  ["per_tensor_retain.csv", "breakdown_bars", false],
  ["recompute_tradeoff.csv", "pareto_curve", false],
  ["fuse_or_not.csv", "step_curve", true],
];
for (const [fixture, kind, normalize] of jobs) {
  const csv = readFileSync(join(root, "fixtures", fixture), "utf-8");
  const svg = render(csv, { kind, normalize });
  const out = join(root, "golden", `${kind}.svg`);
  writeFileSync(out, svg);
  console.log(`wrote ${out}`);
}
