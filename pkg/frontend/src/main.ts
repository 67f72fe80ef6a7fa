// Browser entry point: wires the panels to the /v1 API and the event stream.
// All analytics are server values; this file only fetches, renders and turns
// gestures (lasso, sliders, toggles) into documented POSTs.

import { ApiClient } from "./api.js";
import { SpaceEditor } from "./editor.js";
import { lassoProposal, pointInPolygon, type Point } from "./lasso.js";
import { projectionLayout, renderCandidateMap, renderImportanceBars,
         renderParallelCoordinates } from "./render.js";
import { SseSubscription } from "./sse.js";
import { CandidateStore } from "./store.js";
import { nodePathOf } from "./spaceModel.js";
import type { ProjectionPoint } from "./types.js";

const TERMINAL = new Set(["COMPLETE", "FAILED", "STOPPED"]);

function el(id: string): HTMLElement {
  const node = document.getElementById(id);
  if (!node) throw new Error(`missing #${id}`);
  return node;
}

async function boot(): Promise<void> {
  const params = new URLSearchParams(window.location.search);
  const jobParam = params.get("job");
  if (!jobParam) {
    el("status").textContent = "add ?job=<job_id> to the URL";
    return;
  }
  const jobId: string = jobParam;
  const api = new ApiClient("");
  const store = new CandidateStore();
  let projection: ProjectionPoint[] = [];
  let paths: string[] = [];
  let editor: SpaceEditor | null = null;
  let previewVersion: number | null = null;

  const summary = await api.job(jobId);
  store.status = summary.status;
  store.mergeRows(await api.candidates(jobId));
  if (summary.space_id && summary.space_version !== null) {
    const space = await api.spaceVersion(summary.space_id, summary.space_version);
    editor = new SpaceEditor(summary.space_id, space.version, space.doc);
    renderEditor(space.doc);
  }

  function renderAll(): void {
    el("status").textContent =
      `${jobId} — ${store.status} — ${store.completed().length} completed`;
    const completed = store.completed();
    if (paths.length === 0 && completed.length > 0) {
      const seen = new Set<string>();
      for (const row of completed) {
        for (const path of Object.keys(row.config)) seen.add(path);
      }
      paths = [...seen]; // server emission order is insertion order
    }
    el("parallel").innerHTML = renderParallelCoordinates(completed, paths);
    el("map").innerHTML = renderCandidateMap(projection);
    attachLasso();
  }

  async function refreshAnalytics(): Promise<void> {
    try {
      projection = await api.projection(jobId);
      el("importance").innerHTML = renderImportanceBars(await api.importance(jobId));
    } catch {
      // not enough observations yet
    }
    renderAll();
  }

  function attachLasso(): void {
    const svg = el("map").querySelector("svg");
    if (!svg) return;
    let polygon: Point[] = [];
    let drawing = false;
    svg.addEventListener("pointerdown", (event) => {
      drawing = true;
      polygon = [{ x: event.offsetX, y: event.offsetY }];
    });
    svg.addEventListener("pointermove", (event) => {
      if (drawing) polygon.push({ x: event.offsetX, y: event.offsetY });
    });
    svg.addEventListener("pointerup", async () => {
      drawing = false;
      if (polygon.length < 3) return;
      const layout = projectionLayout(projection);
      const selected = projection
        .filter((p) => pointInPolygon(layout.toScreen(p), polygon))
        .map((p) => p.task_id);
      const summary = await api.job(jobId);
      if (!summary.space_id || summary.space_version === null) return;
      const space = await api.spaceVersion(summary.space_id, summary.space_version);
      const proposal = lassoProposal(selected, store.all(), space.doc);
      el("proposal").textContent = proposal.entries.length === 0
        ? "lasso selection produced no range proposal"
        : JSON.stringify(proposal.entries, null, 2);
    });
  }

  function renderEditor(doc: Record<string, unknown>): void {
    if (!editor) return;
    const container = el("editor");
    container.innerHTML = "";
    for (const node of editor.nodes) {
      const row = document.createElement("div");
      row.className = "editor-row";
      const label = document.createElement("span");
      label.textContent = node.path;
      row.appendChild(label);
      if (node.kind === "choice") {
        for (const value of node.values) {
          const ball = document.createElement("button");
          ball.className = "ball on";
          ball.textContent = value;
          ball.addEventListener("click", () => {
            const enabled = ball.classList.toggle("on");
            editor!.toggleValue(node.path, value, enabled);
          });
          row.appendChild(ball);
        }
      } else {
        const lo = document.createElement("input");
        const hi = document.createElement("input");
        for (const [input, value] of [[lo, node.lo], [hi, node.hi]] as const) {
          input.type = "range";
          input.min = String(node.lo);
          input.max = String(node.hi);
          input.step = node.kind === "int" ? "1" : "any";
          input.value = String(value);
          input.addEventListener("change", () => {
            editor!.setRange(node.path, Number(lo.value), Number(hi.value));
          });
          row.appendChild(input);
        }
      }
      container.appendChild(row);
    }
    el("preview-btn").onclick = async () => {
      const result = await editor!.preview(api, "steering-ui edit");
      if ("message" in result) {
        el("editor-error").textContent =
          `${result.path ? result.path + ": " : ""}${result.message}`;
        return;
      }
      previewVersion = result.version;
      el("diff-preview").textContent = JSON.stringify(result.entries, null, 2);
    };
    el("apply-btn").onclick = async () => {
      if (previewVersion === null) return;
      const result = await editor!.applyToJob(api, jobId, previewVersion);
      el("editor-error").textContent = result === true
        ? `rebound to version ${previewVersion}`
        : `${result.path ? result.path + ": " : ""}${result.message}`;
    };
  }

  store.onChange(renderAll);
  await refreshAnalytics();

  const subscription = new SseSubscription(api.eventsUrl(jobId), {
    onEvent: (message) => {
      store.applyEvent(message.data);
      if (message.data.type === "observation") void refreshAnalytics();
    },
    shouldReconnect: () => !TERMINAL.has(store.status),
    onClose: () => renderAll(),
  });
  void subscription.run();
}

void boot();
