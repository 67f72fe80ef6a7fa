// Walk a space document into flat node descriptors. Node paths use the same
// grammar the server uses: name segments joined by dots, with conditional
// branch values as their own segments (repetition indices never appear at
// the definition level).

import type { SpaceDoc, SpaceNodeDoc } from "./types.js";

export interface NumericNode {
  path: string;
  kind: "int" | "float";
  lo: number;
  hi: number;
}

export interface ChoiceNode {
  path: string;
  kind: "choice";
  values: string[];
}

export type SpaceNode = NumericNode | ChoiceNode;

export function flattenSpace(doc: SpaceDoc, prefix = ""): SpaceNode[] {
  const out: SpaceNode[] = [];
  for (const [name, node] of Object.entries(doc)) {
    const path = prefix ? `${prefix}.${name}` : name;
    if (node.type === "choice") {
      const values = (node.range as Array<number | string>).map(String);
      out.push({ path, kind: "choice", values });
      const submodule = (node.submodule ?? {}) as Record<string, SpaceDoc>;
      for (const [value, branch] of Object.entries(submodule)) {
        out.push(...flattenSpace(branch, `${path}.${value}`));
      }
    } else {
      const [lo, hi] = parseNumericRange(node);
      out.push({ path, kind: node.type, lo, hi });
      if (node.submodule) {
        out.push(...flattenSpace(node.submodule as SpaceDoc, path));
      }
    }
  }
  return out;
}

function parseNumericRange(node: SpaceNodeDoc): [number, number] {
  const range = node.range as Array<number | string>;
  if (range.length === 1 && typeof range[0] === "string") {
    const match = /^\s*(.+?)\s*\.\.\.\s*(.+?)\s*$/.exec(range[0]);
    if (match) return [Number(match[1]), Number(match[2])];
  }
  return [Number(range[0]), Number(range[1])];
}

/** Definition-level path of an instance path: strip repetition indices. */
export function nodePathOf(instancePath: string): string {
  return instancePath.replace(/\[\d+\]/g, "");
}
