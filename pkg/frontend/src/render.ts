// Pure SVG renderers: easy to test without a browser, cheap to re-render on
// every stream update. Each returns a complete <svg> string.

import type { CandidateRow, ImportancePayload, ProjectionPoint } from "./types.js";

const FONT = `font-family="system-ui, sans-serif" font-size="10"`;

function esc(value: string): string {
  return value.replace(/&/g, "&amp;").replace(/</g, "&lt;").replace(/>/g, "&gt;")
    .replace(/"/g, "&quot;");
}

function colorFor(value: number, lo: number, hi: number): string {
  const t = hi > lo ? (value - lo) / (hi - lo) : 0.5;
  const hue = 250 - 210 * Math.max(0, Math.min(1, t)); // blue (low) to red (high)
  return `hsl(${hue.toFixed(0)}, 75%, 50%)`;
}

export interface ParallelCoordsOptions {
  width?: number;
  height?: number;
  margin?: number;
}

/**
 * One vertical axis per flattened parameter path (server order) plus a
 * reward axis. A candidate is a polyline; parameters inactive for it break
 * the line into separate segments (gaps).
 */
export function renderParallelCoordinates(candidates: CandidateRow[], paths: string[],
                                          options: ParallelCoordsOptions = {}): string {
  const width = options.width ?? 900;
  const height = options.height ?? 320;
  const margin = options.margin ?? 36;
  const rows = candidates.filter((c) => c.scalar_reward !== null);
  if (rows.length === 0) {
    return `<svg xmlns="http://www.w3.org/2000/svg" width="${width}" height="${height}" ` +
      `class="parallel-coords empty"><text x="${width / 2}" y="${height / 2}" ` +
      `text-anchor="middle" ${FONT}>no candidates yet</text></svg>`;
  }
  const axes = [...paths, "reward"];
  const step = (width - 2 * margin) / Math.max(1, axes.length - 1);
  const xOf = (i: number) => margin + i * step;

  // per-axis value domains
  const domains = axes.map((axis) => {
    const values: Array<number | string> = [];
    for (const row of rows) {
      const value = axis === "reward" ? row.scalar_reward : row.config[axis];
      if (value !== undefined && value !== null) values.push(value);
    }
    const numeric = values.every((v) => typeof v === "number");
    if (numeric) {
      const nums = values as number[];
      return { numeric: true as const, lo: Math.min(...nums), hi: Math.max(...nums),
               categories: [] as string[] };
    }
    return { numeric: false as const, lo: 0, hi: 1,
             categories: [...new Set(values.map(String))].sort() };
  });

  const yOf = (axisIndex: number, value: number | string): number => {
    const domain = domains[axisIndex]!;
    let t: number;
    if (domain.numeric) {
      t = domain.hi > domain.lo ? ((value as number) - domain.lo) / (domain.hi - domain.lo) : 0.5;
    } else {
      const index = domain.categories.indexOf(String(value));
      t = domain.categories.length > 1 ? index / (domain.categories.length - 1) : 0.5;
    }
    return height - margin - t * (height - 2 * margin);
  };

  const rewards = rows.map((r) => r.scalar_reward as number);
  const rewardLo = Math.min(...rewards);
  const rewardHi = Math.max(...rewards);

  const parts: string[] = [];
  axes.forEach((axis, i) => {
    parts.push(`<line x1="${xOf(i)}" y1="${margin}" x2="${xOf(i)}" y2="${height - margin}" ` +
      `stroke="#bbb"/>`);
    parts.push(`<text x="${xOf(i)}" y="${margin - 14}" text-anchor="middle" ${FONT} ` +
      `transform="rotate(-18 ${xOf(i)} ${margin - 14})">${esc(axis)}</text>`);
  });
  for (const row of rows) {
    const segments: string[] = [];
    let current: string[] = [];
    axes.forEach((axis, i) => {
      const value = axis === "reward" ? row.scalar_reward : row.config[axis];
      if (value === undefined || value === null) {
        if (current.length > 1) segments.push(current.join(" "));
        current = []; // inactive parameter: gap in the polyline
        return;
      }
      current.push(`${current.length === 0 ? "M" : "L"}${xOf(i).toFixed(1)},` +
        `${yOf(i, value as number | string).toFixed(1)}`);
    });
    if (current.length > 1) segments.push(current.join(" "));
    const stroke = colorFor(row.scalar_reward as number, rewardLo, rewardHi);
    for (const d of segments) {
      parts.push(`<path class="candidate-line" data-task="${row.task_id}" d="${d}" ` +
        `fill="none" stroke="${stroke}" stroke-opacity="0.65"/>`);
    }
  }
  return `<svg xmlns="http://www.w3.org/2000/svg" width="${width}" height="${height}" ` +
    `class="parallel-coords">${parts.join("")}</svg>`;
}

export interface MapLayout {
  width: number;
  height: number;
  margin: number;
  toScreen: (p: ProjectionPoint) => { x: number; y: number };
}

export function projectionLayout(points: ProjectionPoint[], width = 520, height = 420,
                                 margin = 24): MapLayout {
  const xs = points.map((p) => p.x);
  const ys = points.map((p) => p.y);
  const xLo = Math.min(...xs, 0);
  const xHi = Math.max(...xs, 0);
  const yLo = Math.min(...ys, 0);
  const yHi = Math.max(...ys, 0);
  const toScreen = (p: ProjectionPoint) => ({
    x: margin + (xHi > xLo ? (p.x - xLo) / (xHi - xLo) : 0.5) * (width - 2 * margin),
    y: height - margin - (yHi > yLo ? (p.y - yLo) / (yHi - yLo) : 0.5) * (height - 2 * margin),
  });
  return { width, height, margin, toScreen };
}

/** Scatter of the server's 2D projection, colored by reward. */
export function renderCandidateMap(points: ProjectionPoint[], layout?: MapLayout): string {
  const resolved = layout ?? projectionLayout(points);
  if (points.length === 0) {
    return `<svg xmlns="http://www.w3.org/2000/svg" width="${resolved.width}" ` +
      `height="${resolved.height}" class="candidate-map empty">` +
      `<text x="${resolved.width / 2}" y="${resolved.height / 2}" text-anchor="middle" ` +
      `${FONT}>no projection yet</text></svg>`;
  }
  const rewards = points.map((p) => p.reward);
  const lo = Math.min(...rewards);
  const hi = Math.max(...rewards);
  const circles = points.map((p) => {
    const s = resolved.toScreen(p);
    return `<circle class="candidate-dot" data-task="${p.task_id}" cx="${s.x.toFixed(1)}" ` +
      `cy="${s.y.toFixed(1)}" r="5" fill="${colorFor(p.reward, lo, hi)}" ` +
      `fill-opacity="0.85"/>`;
  });
  return `<svg xmlns="http://www.w3.org/2000/svg" width="${resolved.width}" ` +
    `height="${resolved.height}" class="candidate-map">${circles.join("")}</svg>`;
}

/** Horizontal bars of the server-computed importance fractions. */
export function renderImportanceBars(importance: ImportancePayload, width = 520): string {
  const entries = Object.entries(importance.fractions).sort((a, b) => b[1] - a[1]);
  const rowHeight = 20;
  const labelWidth = 200;
  const height = Math.max(40, entries.length * rowHeight + 16);
  if (entries.length === 0 || importance.constant) {
    return `<svg xmlns="http://www.w3.org/2000/svg" width="${width}" height="40" ` +
      `class="importance empty"><text x="8" y="24" ${FONT}>no importance signal</text></svg>`;
  }
  const maxFraction = Math.max(...entries.map(([, v]) => v), 1e-9);
  const bars = entries.map(([path, fraction], i) => {
    const y = 8 + i * rowHeight;
    const barWidth = (fraction / maxFraction) * (width - labelWidth - 60);
    return `<text x="${labelWidth - 6}" y="${y + 13}" text-anchor="end" ${FONT}>` +
      `${esc(path)}</text>` +
      `<rect class="importance-bar" data-path="${esc(path)}" x="${labelWidth}" y="${y}" ` +
      `width="${Math.max(1, barWidth).toFixed(1)}" height="${rowHeight - 6}" fill="#4a7dbd"/>` +
      `<text x="${labelWidth + barWidth + 6}" y="${y + 13}" ${FONT}>` +
      `${(fraction * 100).toFixed(1)}%</text>`;
  });
  return `<svg xmlns="http://www.w3.org/2000/svg" width="${width}" height="${height}" ` +
    `class="importance">${bars.join("")}</svg>`;
}
