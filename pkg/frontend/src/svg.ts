/** Deterministic SVG assembly: fixed canvas, fonts, palette, and number
 * formatting so identical inputs produce identical bytes. */

export const WIDTH = 640;
export const HEIGHT = 400;
export const MARGIN = { top: 36, right: 150, bottom: 52, left: 68 };
export const FONT = "font-family=\"monospace\" font-size=\"11\"";

export const PALETTE = [
  "#4878a8", "#e49444", "#d1615d", "#85b6b2", "#6a9f58",
  "#e7ca60", "#a87c9f", "#967662", "#b8b0ac", "#5f5a41",
];

export function fmt(x: number): string {
  if (Number.isInteger(x)) return String(x);
  return x.toFixed(2).replace(/\.?0+$/, "");
}

export interface Scale {
  domain: [number, number];
  range: [number, number];
  apply(x: number): number;
  ticks(): number[];
}

export function linearScale(lo: number, hi: number,
                            r0: number, r1: number): Scale {
  const span = hi - lo || 1;
  const step = tickStep(lo, hi);
  return {
    domain: [lo, hi],
    range: [r0, r1],
    apply: (x) => r0 + ((x - lo) / span) * (r1 - r0),
    ticks: () => {
      const out: number[] = [];
      for (let t = Math.ceil(lo / step) * step; t <= hi + 1e-9; t += step) {
        out.push(Math.abs(t) < 1e-9 ? 0 : t);
      }
      return out;
    },
  };
}

function tickStep(lo: number, hi: number): number {
  const span = hi - lo || 1;
  const raw = span / 5;
  const mag = Math.pow(10, Math.floor(Math.log10(raw)));
  for (const m of [1, 2, 5, 10]) {
    if (raw <= m * mag) return m * mag;
  }
  return 10 * mag;
}

export class SvgDoc {
  private parts: string[] = [];

  constructor(title: string) {
    this.parts.push(
      `<svg xmlns="http://www.w3.org/2000/svg" width="${WIDTH}" ` +
      `height="${HEIGHT}" viewBox="0 0 ${WIDTH} ${HEIGHT}">`,
      `<rect width="${WIDTH}" height="${HEIGHT}" fill="#ffffff"/>`,
      `<text x="${WIDTH / 2}" y="20" text-anchor="middle" ` +
      `font-family="monospace" font-size="14">${escapeXml(title)}</text>`,
    );
  }

  rect(x: number, y: number, w: number, h: number, fill: string,
       title?: string): void {
    const core = `<rect x="${fmt(x)}" y="${fmt(y)}" width="${fmt(w)}" ` +
      `height="${fmt(h)}" fill="${fill}"/>`;
    this.parts.push(title
      ? `<g>${core.slice(0, -2)}><title>${escapeXml(title)}</title></rect></g>`
      : core);
  }

  line(x1: number, y1: number, x2: number, y2: number, stroke: string,
       width = 1): void {
    this.parts.push(
      `<line x1="${fmt(x1)}" y1="${fmt(y1)}" x2="${fmt(x2)}" ` +
      `y2="${fmt(y2)}" stroke="${stroke}" stroke-width="${fmt(width)}"/>`);
  }

  path(points: [number, number][], stroke: string): void {
    const d = points
      .map(([x, y], i) => `${i ? "L" : "M"}${fmt(x)} ${fmt(y)}`)
      .join(" ");
    this.parts.push(
      `<path d="${d}" fill="none" stroke="${stroke}" stroke-width="1.5"/>`);
  }

  circle(x: number, y: number, r: number, fill: string): void {
    this.parts.push(
      `<circle cx="${fmt(x)}" cy="${fmt(y)}" r="${fmt(r)}" fill="${fill}"/>`);
  }

  text(x: number, y: number, s: string, anchor = "start",
       rotate?: number): void {
    const transform = rotate !== undefined
      ? ` transform="rotate(${fmt(rotate)} ${fmt(x)} ${fmt(y)})"` : "";
    this.parts.push(
      `<text x="${fmt(x)}" y="${fmt(y)}" text-anchor="${anchor}" ` +
      `${FONT}${transform}>${escapeXml(s)}</text>`);
  }

  finish(): string {
    return this.parts.join("\n") + "\n</svg>\n";
  }
}

export function escapeXml(s: string): string {
  return s.replace(/&/g, "&amp;").replace(/</g, "&lt;")
    .replace(/>/g, "&gt;").replace(/"/g, "&quot;");
}

export function axes(doc: SvgDoc, xs: Scale, ys: Scale,
                     xLabel: string, yLabel: string): void {
  const x0 = MARGIN.left;
  const x1 = WIDTH - MARGIN.right;
  const y0 = HEIGHT - MARGIN.bottom;
  const y1 = MARGIN.top;
  doc.line(x0, y0, x1, y0, "#000000");
  doc.line(x0, y0, x0, y1, "#000000");
  for (const t of xs.ticks()) {
    const px = xs.apply(t);
    doc.line(px, y0, px, y0 + 4, "#000000");
    doc.text(px, y0 + 16, fmt(t), "middle");
  }
  for (const t of ys.ticks()) {
    const py = ys.apply(t);
    doc.line(x0 - 4, py, x0, py, "#000000");
    doc.text(x0 - 6, py + 3, fmt(t), "end");
  }
  doc.text((x0 + x1) / 2, HEIGHT - 12, xLabel, "middle");
  doc.text(16, (y0 + y1) / 2, yLabel, "middle", -90);
}

export function legend(doc: SvgDoc, labels: string[]): void {
  const x = WIDTH - MARGIN.right + 12;
  labels.forEach((label, i) => {
    const y = MARGIN.top + 8 + i * 16;
    doc.rect(x, y - 8, 10, 10, PALETTE[i % PALETTE.length]);
    doc.text(x + 14, y, label);
  });
}
