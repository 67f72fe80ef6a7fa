// Space editor model: dual sliders narrow numeric ranges, value toggles edit
// choice sets. Gestures accumulate into an edit list; confirm() creates the
// new server-side version, fetches the server-computed diff for the preview,
// and (for a running job) rebinds the search to the new version.

import { ApiClient, ApiError } from "./api.js";
import { flattenSpace, type SpaceNode } from "./spaceModel.js";
import type { DiffEntry, SpaceDoc } from "./types.js";

export interface EditorError {
  path: string | null;
  message: string;
}

export class SpaceEditor {
  private edits = new Map<string, DiffEntry>();
  readonly nodes: SpaceNode[];

  constructor(private spaceId: string, private baseVersion: number,
              doc: SpaceDoc) {
    this.nodes = flattenSpace(doc);
  }

  private node(path: string): SpaceNode {
    const node = this.nodes.find((n) => n.path === path);
    if (!node) throw new Error(`no parameter at ${path}`);
    return node;
  }

  /** Dual-slider gesture on a numeric parameter. */
  setRange(path: string, lo: number, hi: number): void {
    const node = this.node(path);
    if (node.kind === "choice") throw new Error(`${path} is categorical`);
    if (lo === node.lo && hi === node.hi) {
      this.edits.delete(path);
      return;
    }
    const narrowing = lo >= node.lo && hi <= node.hi;
    const widening = lo <= node.lo && hi >= node.hi;
    this.edits.set(path, {
      path,
      kind: narrowing ? "range-narrowed" : widening ? "range-widened" : "values-changed",
      old: [node.lo, node.hi],
      new: [lo, hi],
    });
  }

  /** Ball-toggle gesture on a categorical value. */
  toggleValue(path: string, value: string, enabled: boolean): void {
    const node = this.node(path);
    if (node.kind !== "choice") throw new Error(`${path} is numeric`);
    const existing = this.edits.get(path);
    const current = new Set((existing?.new as string[]) ?? node.values);
    if (enabled) current.add(value);
    else current.delete(value);
    const next = node.values.filter((v) => current.has(v));
    for (const value of current) {
      if (!node.values.includes(value)) next.push(value);
    }
    if (next.length === node.values.length && next.every((v, i) => v === node.values[i])) {
      this.edits.delete(path);
      return;
    }
    this.edits.set(path, { path, kind: "values-changed",
                           old: [...node.values], new: next });
  }

  editList(): DiffEntry[] {
    return [...this.edits.values()];
  }

  get dirty(): boolean {
    return this.edits.size > 0;
  }

  /**
   * Create the new version and return the server-computed diff preview.
   * The caller shows the preview and then calls applyToJob() on confirm.
   */
  async preview(api: ApiClient, note = ""):
      Promise<{ version: number; entries: DiffEntry[] } | EditorError> {
    try {
      const created = await api.newSpaceVersion(this.spaceId, this.editList(), note);
      const diff = await api.spaceDiff(this.spaceId, this.baseVersion, created.version);
      return { version: created.version, entries: diff.entries };
    } catch (error) {
      if (error instanceof ApiError) {
        return { path: error.path, message: String(error.message) };
      }
      throw error;
    }
  }

  async applyToJob(api: ApiClient, jobId: string, version: number):
      Promise<true | EditorError> {
    try {
      await api.applySpaceEdit(jobId, version);
      return true;
    } catch (error) {
      if (error instanceof ApiError) {
        return { path: error.path, message: String(error.message) };
      }
      throw error;
    }
  }
}
