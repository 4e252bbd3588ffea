import type { ChartPoint } from "./state.js";

const WIDTH = 460;
const HEIGHT = 220;
const PAD = 34;

function scale(points: ChartPoint[]) {
  const xs = points.map((p) => p.x);
  const xMax = Math.max(1, ...xs);
  const sx = (x: number) => PAD + (x / xMax) * (WIDTH - 2 * PAD);
  const sy = (y: number) => HEIGHT - PAD - y * (HEIGHT - 2 * PAD);
  return { sx, sy, xMax };
}

/** Standalone SVG markup: test accuracy (y, fixed [0,1]) vs budget used (x). */
export function renderChartSvg(points: ChartPoint[]): string {
  if (points.length === 0) return "";
  const { sx, sy, xMax } = scale(points);
  const poly = points.map((p) => `${sx(p.x).toFixed(1)},${sy(p.y).toFixed(1)}`).join(" ");
  const dots = points
    .map(
      (p) =>
        `<circle class="pt" cx="${sx(p.x).toFixed(1)}" cy="${sy(p.y).toFixed(1)}" r="3">` +
        `<title>budget ${p.x}: ${(p.y * 100).toFixed(1)}%</title></circle>`,
    )
    .join("");
  const yTicks = [0, 0.25, 0.5, 0.75, 1]
    .map(
      (t) =>
        `<text class="tick" x="${PAD - 6}" y="${sy(t) + 4}" text-anchor="end">${t}</text>` +
        `<line class="grid" x1="${PAD}" y1="${sy(t)}" x2="${WIDTH - PAD}" y2="${sy(t)}"/>`,
    )
    .join("");
  return (
    `<svg viewBox="0 0 ${WIDTH} ${HEIGHT}" role="img" aria-label="test accuracy against budget used">` +
    yTicks +
    `<line class="axis" x1="${PAD}" y1="${HEIGHT - PAD}" x2="${WIDTH - PAD}" y2="${HEIGHT - PAD}"/>` +
    `<line class="axis" x1="${PAD}" y1="${PAD}" x2="${PAD}" y2="${HEIGHT - PAD}"/>` +
    `<text class="label" x="${WIDTH / 2}" y="${HEIGHT - 6}" text-anchor="middle">Budget used (max ${xMax})</text>` +
    `<text class="label" x="10" y="${HEIGHT / 2}" transform="rotate(-90 10 ${HEIGHT / 2})" text-anchor="middle">Test accuracy</text>` +
    `<polyline class="curve" fill="none" points="${poly}"/>` +
    dots +
    `</svg>`
  );
}
