// Client-side candidate store. Everything merges by task id, so replays,
// reconnections and out-of-order events are harmless.

import type { CandidateRow, ObservationEvent, StreamEvent } from "./types.js";

export class CandidateStore {
  private rows = new Map<number, CandidateRow>();
  status: string = "PENDING";
  private listeners: Array<() => void> = [];

  onChange(listener: () => void): void {
    this.listeners.push(listener);
  }

  private notify(): void {
    for (const listener of this.listeners) listener();
  }

  mergeRows(rows: CandidateRow[]): void {
    for (const row of rows) this.rows.set(row.task_id, { ...this.rows.get(row.task_id), ...row });
    this.notify();
  }

  applyEvent(event: StreamEvent): void {
    switch (event.type) {
      case "task_published": {
        const taskId = event.task_id as number;
        if (!this.rows.has(taskId)) {
          this.rows.set(taskId, {
            task_id: taskId,
            state: "PENDING",
            iteration: (event.iteration as number) ?? 0,
            config: (event.config as Record<string, never>) ?? {},
            space_version: (event.space_version as number) ?? null,
            fidelity: (event.fidelity as CandidateRow["fidelity"]) ?? null,
            attempts: 1,
            scalar_reward: null,
            duration_s: null,
            timed_out: false,
          });
        }
        break;
      }
      case "task_reserved":
        this.patch(event.task_id as number, { state: "RUNNING" });
        break;
      case "task_requeued":
        this.patch(event.task_id as number, { state: "PENDING" });
        break;
      case "task_completed":
        this.patch(event.task_id as number,
                   { state: "COMPLETED", duration_s: (event.duration as number) ?? null });
        break;
      case "task_failed":
        this.patch(event.task_id as number, { state: "FAILED" });
        break;
      case "task_timeout":
        this.patch(event.task_id as number, { timed_out: true });
        break;
      case "observation": {
        const observation = event as ObservationEvent;
        this.patch(observation.task_id, { scalar_reward: observation.reward });
        break;
      }
      case "job_status":
        this.status = event.status as string;
        break;
      default:
        return;
    }
    this.notify();
  }

  private patch(taskId: number, changes: Partial<CandidateRow>): void {
    const row = this.rows.get(taskId);
    if (row) Object.assign(row, changes);
  }

  get size(): number {
    return this.rows.size;
  }

  all(): CandidateRow[] {
    return [...this.rows.values()].sort((a, b) => a.task_id - b.task_id);
  }

  completed(): CandidateRow[] {
    return this.all().filter((row) => row.state === "COMPLETED");
  }
}
