// Lasso selection on the candidate map emits a numeric-range edit proposal:
// the bounding box of the selected candidates' parameter values, widened by
// 10% of the original range width and clamped to it (int bounds round
// outward before clamping). The arithmetic mirrors the server's quantile-box
// rule exactly, so selecting every point reproduces the advisor suggestion
// at q = 1.0.

import type { CandidateRow, DiffEntry } from "./types.js";
import { flattenSpace, nodePathOf, type SpaceNode } from "./spaceModel.js";
import type { SpaceDoc } from "./types.js";

export const SHRINK_MARGIN = 0.1;

export interface Point {
  x: number;
  y: number;
}

/** Ray-casting point-in-polygon; the polygon is the drawn lasso path. */
export function pointInPolygon(point: Point, polygon: Point[]): boolean {
  let inside = false;
  for (let i = 0, j = polygon.length - 1; i < polygon.length; j = i++) {
    const a = polygon[i]!;
    const b = polygon[j]!;
    const crosses = a.y > point.y !== b.y > point.y &&
      point.x < ((b.x - a.x) * (point.y - a.y)) / (b.y - a.y) + a.x;
    if (crosses) inside = !inside;
  }
  return inside;
}

function shrunkRange(node: SpaceNode & { kind: "int" | "float" },
                     values: number[]): [number, number] | null {
  const width = node.hi - node.lo;
  if (width <= 0) return null;
  let newLo = Math.max(node.lo, Math.min(...values) - SHRINK_MARGIN * width);
  let newHi = Math.min(node.hi, Math.max(...values) + SHRINK_MARGIN * width);
  if (node.kind === "int") {
    newLo = Math.max(Math.trunc(node.lo), Math.floor(newLo));
    newHi = Math.min(Math.trunc(node.hi), Math.ceil(newHi));
  }
  if (newLo === node.lo && newHi === node.hi) return null;
  return [newLo, newHi];
}

export interface LassoProposal {
  entries: DiffEntry[];
  flaggedValues: Record<string, string[]>;
  selected: number[];
}

/**
 * Build the edit proposal for a set of selected candidates. Numeric nodes
 * shrink to the selection's box; categorical values absent from the
 * selection are flagged, never auto-removed. An empty selection proposes
 * nothing.
 */
export function lassoProposal(selectedTaskIds: number[], candidates: CandidateRow[],
                              spaceDoc: SpaceDoc): LassoProposal {
  const selected = new Set(selectedTaskIds);
  const rows = candidates.filter((c) => selected.has(c.task_id));
  if (rows.length === 0) {
    return { entries: [], flaggedValues: {}, selected: [] };
  }
  const byNode = new Map<string, Array<number | string>>();
  for (const row of rows) {
    for (const [path, value] of Object.entries(row.config)) {
      const nodePath = nodePathOf(path);
      const bucket = byNode.get(nodePath) ?? [];
      bucket.push(value);
      byNode.set(nodePath, bucket);
    }
  }
  const entries: DiffEntry[] = [];
  const flaggedValues: Record<string, string[]> = {};
  for (const node of flattenSpace(spaceDoc)) {
    const values = byNode.get(node.path);
    if (!values || values.length === 0) continue;
    if (node.kind === "choice") {
      const seen = new Set(values.map(String));
      const unused = node.values.filter((v) => !seen.has(v));
      if (unused.length > 0) flaggedValues[node.path] = unused;
      continue;
    }
    const shrunk = shrunkRange(node, values.map(Number));
    if (shrunk !== null) {
      entries.push({ path: node.path, kind: "range-narrowed",
                     old: [node.lo, node.hi], new: shrunk });
    }
  }
  return { entries, flaggedValues, selected: [...selected].sort((a, b) => a - b) };
}
