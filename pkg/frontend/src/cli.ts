#!/usr/bin/env node
/** fusedflow-plot --csv <path> --kind <k> --out <img> [--normalize] */

import { readFileSync, writeFileSync } from "node:fs";
import { render, ChartKind } from "./charts.js";
import { CsvError } from "./csv.js";

const KINDS = ["breakdown_bars", "pareto_curve", "step_curve"];

interface Args {
  csv: string;
  kind: ChartKind;
  out: string;
  normalize: boolean;
  title?: string;
}

export function parseArgs(argv: string[]): Args {
  const args: Partial<Args> = { normalize: false };
  for (let i = 0; i < argv.length; i++) {
    const a = argv[i];
    const next = () => {
      if (i + 1 >= argv.length) throw new CsvError(`${a} needs a value`);
      return argv[++i];
    };
    switch (a) {
      case "--csv": args.csv = next(); break;
      case "--kind": args.kind = next() as ChartKind; break;
      case "--out": args.out = next(); break;
      case "--title": args.title = next(); break;
      case "--normalize": args.normalize = true; break;
      default: throw new CsvError(`unknown argument ${a}`);
    }
  }
  if (!args.csv || !args.kind || !args.out) {
    throw new CsvError("usage: fusedflow-plot --csv <path> --kind " +
      `<${KINDS.join("|")}> --out <img.svg> [--normalize] [--title <t>]`);
  }
  if (!KINDS.includes(args.kind)) {
    throw new CsvError(`unknown chart kind ${args.kind}; ` +
      `choose from ${KINDS.join(", ")}`);
  }
  return args as Args;
}

export function main(argv: string[]): number {
  let args: Args;
  try {
    args = parseArgs(argv);
  } catch (e) {
    console.error(`fusedflow-plot: ${(e as Error).message}`);
    return 2;
  }
  try {
    const text = readFileSync(args.csv, "utf-8");
    const svg = render(text, {
      kind: args.kind,
      normalize: args.normalize,
      title: args.title,
    });
    writeFileSync(args.out, svg);
  } catch (e) {
    console.error(`fusedflow-plot: ${(e as Error).message}`);
    return 1;
  }
  return 0;
}

if (process.argv[1] && process.argv[1].endsWith("cli.js")) {
  process.exit(main(process.argv.slice(2)));
}
