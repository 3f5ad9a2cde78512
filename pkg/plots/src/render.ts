#!/usr/bin/env node
/**
 * render --kind <trajectory|energy|convergence|report> --in <files...> --out <image>
 *
 * Reads simulator outputs (never modifies them) and writes one SVG or
 * PNG figure, chosen by the output extension. The convergence figure
 * annotates the fitted log-log slope; report figures show lhs, rhs and
 * a +-3 SE band per input report.
 *
 * Exit codes: 0 ok, 1 malformed or missing data, 2 usage error.
 */

import { writeFileSync } from "fs";
import { DataError, readReport, readTable } from "./csv.js";
import {
  FigureKind,
  Scene,
  convergenceScene,
  energyScene,
  reportScene,
  trajectoryScene,
} from "./scene.js";
import { sceneToSvg } from "./svg.js";
import { sceneToPng } from "./png.js";

const KINDS: FigureKind[] = ["trajectory", "energy", "convergence", "report"];

export interface RenderRequest {
  kind: FigureKind;
  inputs: string[];
  out: string;
}

export function parseArgs(argv: string[]): RenderRequest {
  let kind: string | undefined;
  const inputs: string[] = [];
  let out: string | undefined;
  for (let i = 0; i < argv.length; i++) {
    const arg = argv[i];
    if (arg === "--kind") {
      kind = argv[++i];
    } else if (arg === "--in") {
      while (i + 1 < argv.length && !argv[i + 1].startsWith("--")) {
        inputs.push(argv[++i]);
      }
    } else if (arg === "--out") {
      out = argv[++i];
    } else {
      throw new UsageError(`unknown argument '${arg}'`);
    }
  }
  if (!kind || !KINDS.includes(kind as FigureKind)) {
    throw new UsageError(`--kind must be one of ${KINDS.join(", ")}`);
  }
  if (inputs.length === 0) {
    throw new UsageError("--in needs at least one file");
  }
  if (!out) {
    throw new UsageError("--out is required");
  }
  return { kind: kind as FigureKind, inputs, out };
}

export class UsageError extends Error {}

export function buildScene(req: RenderRequest): Scene {
  switch (req.kind) {
    case "trajectory":
      return trajectoryScene(readTable(req.inputs[0], ["t", "point_index"]));
    case "energy":
      return energyScene(readTable(req.inputs[0], ["t", "energy"]));
    case "convergence":
      return convergenceScene(readTable(req.inputs[0], ["dt", "error"]));
    case "report":
      return reportScene(req.inputs.map(readReport));
  }
}

export function renderToFile(req: RenderRequest): Scene {
  const scene = buildScene(req);
  if (req.out.toLowerCase().endsWith(".svg")) {
    writeFileSync(req.out, sceneToSvg(scene), "utf-8");
  } else {
    writeFileSync(req.out, sceneToPng(scene));
  }
  return scene;
}

export function main(argv: string[]): number {
  let req: RenderRequest;
  try {
    req = parseArgs(argv);
  } catch (err) {
    console.error(`usage error: ${(err as Error).message}`);
    return 2;
  }
  try {
    const scene = renderToFile(req);
    const notes = Object.entries(scene.annotations)
      .map(([k, v]) => `${k}=${v}`)
      .join(" ");
    console.log(`wrote ${req.out}${notes ? ` (${notes})` : ""}`);
    return 0;
  } catch (err) {
    if (err instanceof DataError || err instanceof Error) {
      console.error(`render error: ${err.message}`);
      return 1;
    }
    throw err;
  }
}

const invokedDirectly =
  process.argv[1] !== undefined &&
  import.meta.url === new URL(`file://${process.argv[1]}`).href;
if (invokedDirectly) {
  process.exit(main(process.argv.slice(2)));
}
