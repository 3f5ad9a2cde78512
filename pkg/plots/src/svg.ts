import { Scene, Primitive } from "./scene.js";

function esc(s: string): string {
  return s.replace(/&/g, "&amp;").replace(/</g, "&lt;").replace(/>/g, "&gt;");
}

function draw(p: Primitive): string {
  switch (p.kind) {
    case "line":
      return `<line x1="${p.x1}" y1="${p.y1}" x2="${p.x2}" y2="${p.y2}" stroke="${p.color}" stroke-width="1"/>`;
    case "polyline": {
      const pts = p.points.map(([x, y]) => `${x.toFixed(2)},${y.toFixed(2)}`).join(" ");
      return `<polyline points="${pts}" fill="none" stroke="${p.color}" stroke-width="1.5"/>`;
    }
    case "rect":
      return `<rect x="${p.x}" y="${p.y}" width="${p.w}" height="${p.h}" fill="${p.fill}"/>`;
    case "circle":
      return `<circle cx="${p.cx}" cy="${p.cy}" r="${p.r}" fill="${p.fill}"/>`;
    case "text":
      return `<text x="${p.x}" y="${p.y}" font-family="monospace" font-size="${p.size}" fill="${p.color}">${esc(p.text)}</text>`;
  }
}

export function sceneToSvg(scene: Scene): string {
  const body = scene.primitives.map(draw).join("\n  ");
  return (
    `<svg xmlns="http://www.w3.org/2000/svg" width="${scene.width}" height="${scene.height}" ` +
    `viewBox="0 0 ${scene.width} ${scene.height}">\n  ${body}\n</svg>\n`
  );
}
