/**
 * Raster backend: draws the scene onto an RGBA buffer (Bresenham lines,
 * filled rects and discs, bitmap text) and encodes it with pngjs.
 */

import { PNG } from "pngjs";
import { Scene } from "./scene.js";
import { GLYPH_H, GLYPH_W, glyphOf } from "./font.js";

type RGBA = [number, number, number, number];

function parseColor(spec: string): RGBA {
  if (spec.startsWith("#")) {
    const v = parseInt(spec.slice(1), 16);
    return [(v >> 16) & 0xff, (v >> 8) & 0xff, v & 0xff, 255];
  }
  const m = spec.match(/rgba?\(([^)]*)\)/);
  if (m) {
    const parts = m[1].split(",").map((s) => Number(s.trim()));
    return [parts[0], parts[1], parts[2], parts.length > 3 ? Math.round(parts[3] * 255) : 255];
  }
  return [0, 0, 0, 255];
}

class Raster {
  png: PNG;

  constructor(width: number, height: number) {
    this.png = new PNG({ width, height });
  }

  set(x: number, y: number, [r, g, b, a]: RGBA): void {
    const xi = Math.round(x);
    const yi = Math.round(y);
    if (xi < 0 || yi < 0 || xi >= this.png.width || yi >= this.png.height) return;
    const idx = (this.png.width * yi + xi) << 2;
    const alpha = a / 255;
    this.png.data[idx] = Math.round(r * alpha + this.png.data[idx] * (1 - alpha));
    this.png.data[idx + 1] = Math.round(g * alpha + this.png.data[idx + 1] * (1 - alpha));
    this.png.data[idx + 2] = Math.round(b * alpha + this.png.data[idx + 2] * (1 - alpha));
    this.png.data[idx + 3] = 255;
  }

  line(x1: number, y1: number, x2: number, y2: number, color: RGBA): void {
    let x = Math.round(x1);
    let y = Math.round(y1);
    const ex = Math.round(x2);
    const ey = Math.round(y2);
    const dx = Math.abs(ex - x);
    const dy = -Math.abs(ey - y);
    const sx = x < ex ? 1 : -1;
    const sy = y < ey ? 1 : -1;
    let err = dx + dy;
    for (;;) {
      this.set(x, y, color);
      if (x === ex && y === ey) break;
      const e2 = 2 * err;
      if (e2 >= dy) {
        err += dy;
        x += sx;
      }
      if (e2 <= dx) {
        err += dx;
        y += sy;
      }
    }
  }

  rect(x: number, y: number, w: number, h: number, color: RGBA): void {
    for (let yy = Math.round(y); yy < Math.round(y + h); yy++) {
      for (let xx = Math.round(x); xx < Math.round(x + w); xx++) {
        this.set(xx, yy, color);
      }
    }
  }

  disc(cx: number, cy: number, r: number, color: RGBA): void {
    for (let yy = Math.floor(cy - r); yy <= Math.ceil(cy + r); yy++) {
      for (let xx = Math.floor(cx - r); xx <= Math.ceil(cx + r); xx++) {
        if ((xx - cx) ** 2 + (yy - cy) ** 2 <= r * r) this.set(xx, yy, color);
      }
    }
  }

  text(x: number, y: number, s: string, color: RGBA, size: number): void {
    // y is the text baseline, matching the SVG backend
    const scale = Math.max(1, Math.round(size / GLYPH_H));
    let cursor = Math.round(x);
    const top = Math.round(y) - GLYPH_H * scale;
    for (const ch of s) {
      const glyph = glyphOf(ch);
      if (glyph) {
        for (let row = 0; row < GLYPH_H; row++) {
          for (let col = 0; col < GLYPH_W; col++) {
            if ((glyph[row] >> (GLYPH_W - 1 - col)) & 1) {
              this.rect(cursor + col * scale, top + row * scale, scale, scale, color);
            }
          }
        }
      }
      cursor += (GLYPH_W + 1) * scale;
    }
  }
}

export function sceneToPng(scene: Scene): Buffer {
  const raster = new Raster(scene.width, scene.height);
  for (const p of scene.primitives) {
    switch (p.kind) {
      case "line":
        raster.line(p.x1, p.y1, p.x2, p.y2, parseColor(p.color));
        break;
      case "polyline": {
        const color = parseColor(p.color);
        for (let i = 1; i < p.points.length; i++) {
          raster.line(p.points[i - 1][0], p.points[i - 1][1], p.points[i][0], p.points[i][1], color);
        }
        break;
      }
      case "rect":
        raster.rect(p.x, p.y, p.w, p.h, parseColor(p.fill));
        break;
      case "circle":
        raster.disc(p.cx, p.cy, p.r, parseColor(p.fill));
        break;
      case "text":
        raster.text(p.x, p.y, p.text, parseColor(p.color), p.size);
        break;
    }
  }
  return PNG.sync.write(raster.png);
}
