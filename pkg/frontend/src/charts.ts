/** The three chart kinds over mapper CSV rows.
 *
 * Everything is keyed and ordered deterministically (sorted labels, fixed
 * palette, fixed formatting) so a given CSV always yields identical bytes.
 */

import { CsvError, numeric, parseCsv, requireColumns, Table } from "./csv.js";
import {
  axes, fmt, HEIGHT, legend, linearScale, MARGIN, PALETTE, SvgDoc, WIDTH,
} from "./svg.js";

export type ChartKind = "breakdown_bars" | "pareto_curve" | "step_curve";

export interface ChartSpec {
  kind: ChartKind;
  normalize: boolean;
  title?: string;
}

export function render(csvText: string, spec: ChartSpec): string {
  const table = parseCsv(csvText);
  switch (spec.kind) {
    case "breakdown_bars":
      return breakdownBars(table, spec);
    case "pareto_curve":
      return paretoCurve(table, spec);
    case "step_curve":
      return stepCurve(table, spec);
    default:
      throw new CsvError(`unknown chart kind ${String(spec.kind)}`);
  }
}

function groupBy(table: Table, col: string): Map<string, Table["rows"]> {
  const groups = new Map<string, Table["rows"]>();
  for (const row of table.rows) {
    const key = row[col];
    if (!groups.has(key)) groups.set(key, []);
    groups.get(key)!.push(row);
  }
  return new Map([...groups.entries()].sort((a, b) =>
    a[0] < b[0] ? -1 : a[0] > b[0] ? 1 : 0));
}

/** Per schedule: the smallest-capacity row, stacked by per-tensor words. */
function breakdownBars(table: Table, spec: ChartSpec): string {
  requireColumns(table, ["schedule", "occupancy_words", "breakdown_json"]);
  const picks: { label: string; parts: Map<string, number>; total: number }[] =
    [];
  for (const [label, rows] of groupBy(table, "schedule")) {
    let best = rows[0];
    for (const r of rows) {
      if (numeric(r, "occupancy_words") < numeric(best, "occupancy_words")) {
        best = r;
      }
    }
    let parsed: Record<string, number>;
    try {
      parsed = JSON.parse(best["breakdown_json"]) as Record<string, number>;
    } catch {
      throw new CsvError("column breakdown_json: not valid JSON");
    }
    const parts = new Map(Object.entries(parsed).sort());
    picks.push({ label, parts, total: numeric(best, "occupancy_words") });
  }
  const tensors = [...new Set(picks.flatMap((p) => [...p.parts.keys()]))]
    .sort();
  const maxTotal = Math.max(...picks.map((p) => p.total)) || 1;
  const scaleDiv = spec.normalize ? maxTotal : 1;

  const doc = new SvgDoc(spec.title ?? (spec.normalize
    ? "required capacity per schedule (normalized)"
    : "required capacity per schedule (words)"));
  const ys = linearScale(0, maxTotal / scaleDiv,
                         HEIGHT - MARGIN.bottom, MARGIN.top);
  const x0 = MARGIN.left;
  const span = WIDTH - MARGIN.right - x0;
  const slot = span / picks.length;
  const barW = Math.min(48, slot * 0.6);
  picks.forEach((p, i) => {
    const cx = x0 + slot * i + slot / 2;
    let yBase = ys.apply(0);
    for (const t of tensors) {
      const v = (p.parts.get(t) ?? 0) / scaleDiv;
      if (v <= 0) continue;
      const h = ys.apply(0) - ys.apply(v);
      yBase -= h;
      doc.rect(cx - barW / 2, yBase, barW, h,
               PALETTE[tensors.indexOf(t) % PALETTE.length]);
    }
    doc.text(cx, HEIGHT - MARGIN.bottom + 14, p.label, "end", -35);
    doc.text(cx, yBase - 4, fmt(p.total / scaleDiv), "middle");
  });
  axesYOnly(doc, ys, spec.normalize ? "capacity (normalized)"
                                    : "capacity (words)");
  legend(doc, tensors);
  return doc.finish();
}

function axesYOnly(doc: SvgDoc, ys: ReturnType<typeof linearScale>,
                   yLabel: string): void {
  const x0 = MARGIN.left;
  const y0 = HEIGHT - MARGIN.bottom;
  doc.line(x0, y0, WIDTH - MARGIN.right, y0, "#000000");
  doc.line(x0, y0, x0, MARGIN.top, "#000000");
  for (const t of ys.ticks()) {
    const py = ys.apply(t);
    doc.line(x0 - 4, py, x0, py, "#000000");
    doc.text(x0 - 6, py + 3, fmt(t), "end");
  }
  doc.text(16, (y0 + MARGIN.top) / 2, yLabel, "middle", -90);
}

/** Per schedule: the non-dominated (capacity, recompute) staircase. */
function paretoCurve(table: Table, spec: ChartSpec): string {
  requireColumns(table, ["schedule", "occupancy_words", "recompute_ops"]);
  const groups = groupBy(table, "schedule");
  const allX: number[] = [];
  const allY: number[] = [];
  const fronts = new Map<string, [number, number][]>();
  for (const [label, rows] of groups) {
    const pts = rows.map((r) => [numeric(r, "occupancy_words"),
                                 numeric(r, "recompute_ops")] as
                         [number, number]);
    const front = paretoMin(pts);
    fronts.set(label, front);
    for (const [x, y] of front) {
      allX.push(x);
      allY.push(y);
    }
  }
  const xDiv = spec.normalize ? Math.max(...allX) || 1 : 1;
  const yDiv = spec.normalize ? Math.max(...allY) || 1 : 1;
  const doc = new SvgDoc(spec.title ?? "recomputation vs required capacity");
  const xs = linearScale(0, Math.max(...allX) / xDiv,
                         MARGIN.left, WIDTH - MARGIN.right);
  const ys = linearScale(0, Math.max(...allY) / yDiv,
                         HEIGHT - MARGIN.bottom, MARGIN.top);
  axes(doc, xs, ys,
       spec.normalize ? "capacity (normalized)" : "capacity (words)",
       spec.normalize ? "recompute (normalized)" : "recomputed ops");
  let i = 0;
  for (const [label, front] of fronts) {
    const color = PALETTE[i % PALETTE.length];
    const pts = front.map(([x, y]) =>
      [xs.apply(x / xDiv), ys.apply(y / yDiv)] as [number, number]);
    if (pts.length > 1) doc.path(pts, color);
    for (const [px, py] of pts) doc.circle(px, py, 3, color);
    i++;
  }
  legend(doc, [...fronts.keys()]);
  return doc.finish();
}

function paretoMin(pts: [number, number][]): [number, number][] {
  const sorted = [...pts].sort((a, b) => a[0] - b[0] || a[1] - b[1]);
  const out: [number, number][] = [];
  let bestY = Infinity;
  for (const [x, y] of sorted) {
    if (y < bestY) {
      out.push([x, y]);
      bestY = y;
    }
  }
  return out;
}

/** Per study label: best off-chip traffic as a step function of capacity. */
function stepCurve(table: Table, spec: ChartSpec): string {
  requireColumns(table, ["study", "occupancy_words", "offchip_words"]);
  const groups = groupBy(table, "study");
  const curves = new Map<string, [number, number][]>();
  const allX: number[] = [];
  const allY: number[] = [];
  for (const [label, rows] of groups) {
    const pts = rows.map((r) => [numeric(r, "occupancy_words"),
                                 numeric(r, "offchip_words")] as
                         [number, number]);
    const front = paretoMin(pts);
    curves.set(label, front);
    for (const [x, y] of front) {
      allX.push(x);
      allY.push(y);
    }
  }
  const xDiv = spec.normalize ? Math.max(...allX) || 1 : 1;
  const yDiv = spec.normalize ? Math.max(...allY) || 1 : 1;
  const doc = new SvgDoc(spec.title ?? "off-chip transfers vs capacity");
  const xs = linearScale(0, Math.max(...allX) / xDiv,
                         MARGIN.left, WIDTH - MARGIN.right);
  const ys = linearScale(0, Math.max(...allY) / yDiv,
                         HEIGHT - MARGIN.bottom, MARGIN.top);
  axes(doc, xs, ys,
       spec.normalize ? "capacity (normalized)" : "capacity (words)",
       spec.normalize ? "off-chip (normalized)" : "off-chip words");
  let i = 0;
  for (const [label, front] of curves) {
    const color = PALETTE[i % PALETTE.length];
    const pts: [number, number][] = [];
    front.forEach(([x, y], j) => {
      if (j > 0) pts.push([xs.apply(x / xDiv), pts[pts.length - 1][1]]);
      pts.push([xs.apply(x / xDiv), ys.apply(y / yDiv)]);
    });
    if (pts.length > 1) doc.path(pts, color);
    for (const [x, y] of front) {
      doc.circle(xs.apply(x / xDiv), ys.apply(y / yDiv), 3, color);
    }
    i++;
  }
  legend(doc, [...curves.keys()]);
  return doc.finish();
}
