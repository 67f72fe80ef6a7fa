// Integration helpers: spawn the real control plane, run a small job, wait.

import { spawn, type ChildProcess } from "node:child_process";
import { mkdtempSync, writeFileSync } from "node:fs";
import { tmpdir } from "node:os";
import { join } from "node:path";

export interface ServerHandle {
  base: string;
  dataDir: string;
  process: ChildProcess;
  stop: () => void;
}

export async function startServer(): Promise<ServerHandle> {
  const dataDir = mkdtempSync(join(tmpdir(), "hyperfab-ui-"));
  const port = 17000 + Math.floor(Math.random() * 8000);
  const proc = spawn("python3", ["-m", "hyperfab.plane.cli", "serve",
                                 "--data-dir", dataDir, "--port", String(port)],
                     { stdio: ["ignore", "pipe", "pipe"] });
  const base = `http://127.0.0.1:${port}`;
  const deadline = Date.now() + 20_000;
  for (;;) {
    try {
      const response = await fetch(`${base}/v1/jobs`);
      if (response.ok) break;
    } catch {
      // not up yet
    }
    if (Date.now() > deadline) {
      proc.kill();
      throw new Error("server did not become ready");
    }
    await sleep(100);
  }
  return { base, dataDir, process: proc, stop: () => proc.kill() };
}

export function writeEvaluator(dataDir: string): string {
  const path = join(dataDir, "evaluator.py");
  writeFileSync(path, [
    "import json, sys",
    "job = json.loads(sys.stdin.readline())",
    "cfg = job['config']",
    "x = float(cfg['x'])",
    "depth = int(cfg['depth'])",
    "bonus = 0.2 if cfg['mode'] == 'a' else 0.0",
    "score = -((x - 0.4) ** 2) - 0.05 * abs(depth - 3) + bonus",
    "print(json.dumps({'metrics': {'score': score}}))",
    "",
  ].join("\n"));
  return path;
}

export const JOB_SPACE = {
  x: { type: "float", range: [0.0, 1.0] },
  depth: { type: "int", range: [2, 5] },
  mode: { type: "choice", range: ["a", "b"] },
};

export async function submitAndFinishJob(base: string, dataDir: string,
                                         maxEvaluations = 14): Promise<string> {
  const evaluator = writeEvaluator(dataDir);
  const spec = {
    name: "ui-job",
    space: JOB_SPACE,
    strategy: "random",
    objective: { key: "score", direction: "maximize" },
    batch_size: 7,
    max_evaluations: maxEvaluations,
    parallelism: 4,
    t_min: 2.0,
    seed: 8,  // deterministic draw whose value box genuinely shrinks the range
    evaluator_cmd: ["python3", evaluator],
  };
  const created = await fetch(`${base}/v1/jobs`, {
    method: "POST",
    headers: { "content-type": "application/json" },
    body: JSON.stringify(spec),
  });
  if (!created.ok) throw new Error(`submit failed: ${await created.text()}`);
  const { job_id: jobId } = await created.json() as { job_id: string };
  const deadline = Date.now() + 60_000;
  for (;;) {
    const summary = await (await fetch(`${base}/v1/jobs/${jobId}`)).json() as
      { status: string };
    if (summary.status === "COMPLETE") return jobId;
    if (summary.status === "FAILED") throw new Error("job failed");
    if (Date.now() > deadline) throw new Error("job did not finish in time");
    await sleep(150);
  }
}

export function sleep(ms: number): Promise<void> {
  return new Promise((resolve) => setTimeout(resolve, ms));
}
