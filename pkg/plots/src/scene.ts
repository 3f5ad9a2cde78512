/**
 * Figure construction: each kind of plot becomes a device-independent
 * scene (lines, rects, circles, text) that the SVG and PNG backends
 * both draw. Annotations that tests care about (fitted slope, pass
 * verdicts) are carried on the scene object as structured data too.
 */

import { Table, Report, column } from "./csv.js";
import { logLogSlope } from "./fit.js";

export type Primitive =
  | { kind: "line"; x1: number; y1: number; x2: number; y2: number; color: string }
  | { kind: "polyline"; points: [number, number][]; color: string }
  | { kind: "rect"; x: number; y: number; w: number; h: number; fill: string }
  | { kind: "circle"; cx: number; cy: number; r: number; fill: string }
  | { kind: "text"; x: number; y: number; text: string; color: string; size: number };

export interface Scene {
  width: number;
  height: number;
  primitives: Primitive[];
  annotations: Record<string, string>;
}

export type FigureKind = "trajectory" | "energy" | "convergence" | "report";

const W = 640;
const H = 420;
const MARGIN = { left: 70, right: 20, top: 36, bottom: 46 };
const PALETTE = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"];
const AXIS = "#333333";

interface Frame {
  xmin: number;
  xmax: number;
  ymin: number;
  ymax: number;
  logx: boolean;
  logy: boolean;
}

function pad(lo: number, hi: number): [number, number] {
  if (lo === hi) {
    const eps = lo === 0 ? 1 : Math.abs(lo) * 1e-3;
    return [lo - eps, hi + eps];
  }
  const gap = (hi - lo) * 0.06;
  return [lo - gap, hi + gap];
}

function frameOf(xs: number[], ys: number[], logx = false, logy = false): Frame {
  const tx = logx ? xs.map(Math.log10) : xs;
  const ty = logy ? ys.map(Math.log10) : ys;
  const [xmin, xmax] = pad(Math.min(...tx), Math.max(...tx));
  const [ymin, ymax] = pad(Math.min(...ty), Math.max(...ty));
  return { xmin, xmax, ymin, ymax, logx, logy };
}

function mapper(frame: Frame) {
  const sx = (W - MARGIN.left - MARGIN.right) / (frame.xmax - frame.xmin);
  const sy = (H - MARGIN.top - MARGIN.bottom) / (frame.ymax - frame.ymin);
  return (x: number, y: number): [number, number] => {
    const tx = frame.logx ? Math.log10(x) : x;
    const ty = frame.logy ? Math.log10(y) : y;
    return [
      MARGIN.left + (tx - frame.xmin) * sx,
      H - MARGIN.bottom - (ty - frame.ymin) * sy,
    ];
  };
}

function fmtTick(v: number): string {
  if (v === 0) return "0";
  const a = Math.abs(v);
  if (a >= 1e4 || a < 1e-3) return v.toExponential(1);
  return Number(v.toPrecision(4)).toString();
}

function axes(scene: Scene, frame: Frame, xlabel: string, ylabel: string, title: string) {
  const x0 = MARGIN.left;
  const x1 = W - MARGIN.right;
  const y0 = H - MARGIN.bottom;
  const y1 = MARGIN.top;
  scene.primitives.push({ kind: "line", x1: x0, y1: y0, x2: x1, y2: y0, color: AXIS });
  scene.primitives.push({ kind: "line", x1: x0, y1: y0, x2: x0, y2: y1, color: AXIS });
  for (let i = 0; i <= 4; i++) {
    const fx = frame.xmin + ((frame.xmax - frame.xmin) * i) / 4;
    const fy = frame.ymin + ((frame.ymax - frame.ymin) * i) / 4;
    const px = x0 + ((x1 - x0) * i) / 4;
    const py = y0 - ((y0 - y1) * i) / 4;
    scene.primitives.push({ kind: "line", x1: px, y1: y0, x2: px, y2: y0 + 4, color: AXIS });
    scene.primitives.push({ kind: "line", x1: x0 - 4, y1: py, x2: x0, y2: py, color: AXIS });
    const xv = frame.logx ? Math.pow(10, fx) : fx;
    const yv = frame.logy ? Math.pow(10, fy) : fy;
    scene.primitives.push({
      kind: "text", x: px - 14, y: y0 + 16, text: fmtTick(xv), color: AXIS, size: 10,
    });
    scene.primitives.push({
      kind: "text", x: 6, y: py + 4, text: fmtTick(yv), color: AXIS, size: 10,
    });
  }
  scene.primitives.push({ kind: "text", x: (x0 + x1) / 2 - 4 * xlabel.length, y: H - 8, text: xlabel, color: AXIS, size: 12 });
  scene.primitives.push({ kind: "text", x: 8, y: 16, text: ylabel, color: AXIS, size: 12 });
  scene.primitives.push({ kind: "text", x: x0, y: 16, text: "", color: AXIS, size: 12 });
  scene.primitives.push({ kind: "text", x: (x0 + x1) / 2 - 4 * title.length, y: y1 - 10, text: title, color: AXIS, size: 12 });
}

function emptyScene(): Scene {
  return {
    width: W,
    height: H,
    primitives: [{ kind: "rect", x: 0, y: 0, w: W, h: H, fill: "#ffffff" }],
    annotations: {},
  };
}

/** Metric (and velocity) components at lattice point 0 against time. */
export function trajectoryScene(table: Table): Scene {
  const scene = emptyScene();
  const pointIdx = column(table, "point_index");
  const keep = pointIdx.map((p) => p === 0);
  const ts = column(table, "t").filter((_, i) => keep[i]);
  const comps = table.columns.filter((c) => c.startsWith("g") && c !== "g");
  const series = comps.map((c) => column(table, c).filter((_, i) => keep[i]));
  const frame = frameOf(ts, series.flat());
  const map = mapper(frame);
  axes(scene, frame, "t", "component", "metric components at point 0");
  series.forEach((ys, k) => {
    const color = PALETTE[k % PALETTE.length];
    scene.primitives.push({
      kind: "polyline",
      points: ts.map((t, i) => map(t, ys[i])),
      color,
    });
    scene.primitives.push({
      kind: "text", x: W - MARGIN.right - 40, y: MARGIN.top + 14 * (k + 1),
      text: comps[k], color, size: 10,
    });
  });
  scene.annotations["series"] = comps.join(",");
  return scene;
}

/** Kinetic energy along a trajectory; flat for exact geodesics. */
export function energyScene(table: Table): Scene {
  const scene = emptyScene();
  const ts = column(table, "t");
  const es = column(table, "energy");
  const frame = frameOf(ts, es);
  const map = mapper(frame);
  axes(scene, frame, "t", "energy", "kinetic energy along the run");
  scene.primitives.push({
    kind: "polyline",
    points: ts.map((t, i) => map(t, es[i])),
    color: PALETTE[0],
  });
  const spread = (Math.max(...es) - Math.min(...es)) / Math.abs(es[0] || 1);
  scene.annotations["relative_spread"] = spread.toExponential(2);
  return scene;
}

/** Log-log error-versus-step plot with the fitted order annotated. */
export function convergenceScene(table: Table): Scene {
  const scene = emptyScene();
  const dts = column(table, "dt");
  const errs = column(table, "error");
  const fitted = logLogSlope(dts, errs);
  const frame = frameOf(dts, errs, true, true);
  const map = mapper(frame);
  axes(scene, frame, "dt", "error", "convergence study");
  scene.primitives.push({
    kind: "polyline",
    points: dts.map((dt, i) => map(dt, errs[i])),
    color: PALETTE[0],
  });
  for (let i = 0; i < dts.length; i++) {
    const [cx, cy] = map(dts[i], errs[i]);
    scene.primitives.push({ kind: "circle", cx, cy, r: 3, fill: PALETTE[0] });
  }
  const label = `slope = ${fitted.toFixed(2)}`;
  scene.primitives.push({
    kind: "text", x: MARGIN.left + 12, y: MARGIN.top + 16, text: label,
    color: PALETTE[1], size: 12,
  });
  scene.annotations["slope"] = fitted.toFixed(2);
  return scene;
}

/** lhs/rhs bars per report with a +-3 SE band around the right side. */
export function reportScene(reports: Report[]): Scene {
  if (reports.length === 0) {
    throw new Error("no reports to draw");
  }
  const scene = emptyScene();
  const values = reports.flatMap((r) => [r.lhs, r.rhs - 3 * r.se, r.rhs + 3 * r.se, 0]);
  const frame = frameOf([0, reports.length], values);
  const map = mapper(frame);
  axes(scene, frame, "report", "value", "verification: lhs vs rhs with 3 SE band");
  reports.forEach((r, k) => {
    const [xl] = map(k + 0.15, 0);
    const [xr] = map(k + 0.5, 0);
    const [xe] = map(k + 0.85, 0);
    const [, y0] = map(0, Math.max(frame.ymin, 0) === frame.ymin && frame.ymin > 0 ? frame.ymin : 0);
    const bar = (xc: number, v: number, color: string) => {
      const [, yv] = map(0, v);
      scene.primitives.push({
        kind: "rect",
        x: xc - 12, y: Math.min(y0, yv), w: 24, h: Math.abs(y0 - yv) || 1,
        fill: color,
      });
    };
    bar(xl, r.lhs, PALETTE[0]);
    bar(xr, r.rhs, PALETTE[2]);
    const [, yb0] = map(0, r.rhs - 3 * r.se);
    const [, yb1] = map(0, r.rhs + 3 * r.se);
    scene.primitives.push({
      kind: "rect", x: xl - 14, y: Math.min(yb0, yb1), w: xe - xl + 14, h: Math.max(Math.abs(yb0 - yb1), 1),
      fill: "rgba(44,160,44,0.25)",
    });
    scene.primitives.push({
      kind: "text", x: xl - 10, y: H - MARGIN.bottom + 28,
      text: r.pass ? "pass" : "fail", color: r.pass ? PALETTE[2] : PALETTE[1], size: 11,
    });
  });
  scene.annotations["verdicts"] = reports.map((r) => (r.pass ? "pass" : "fail")).join(",");
  return scene;
}
