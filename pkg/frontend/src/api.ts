// Thin typed client for the /v1 control-plane API. All server mutations go
// through the documented POST endpoints; everything else is a read.

import type { CandidateRow, DiffEntry, ImportancePayload, JobSummary,
              ProjectionPoint, SpaceVersionPayload, SuggestionPayload } from "./types.js";

export class ApiError extends Error {
  constructor(public status: number, public detail: unknown) {
    super(typeof detail === "string" ? detail : JSON.stringify(detail));
  }

  /** Server-side validation errors carry the offending parameter path. */
  get path(): string | null {
    if (this.detail && typeof this.detail === "object" && "path" in this.detail) {
      return String((this.detail as { path: unknown }).path);
    }
    return null;
  }
}

export class ApiClient {
  constructor(private base: string, private fetchFn: typeof fetch = fetch) {}

  private async request<T>(method: string, path: string, body?: unknown): Promise<T> {
    const response = await this.fetchFn(`${this.base}${path}`, {
      method,
      headers: body !== undefined ? { "content-type": "application/json" } : undefined,
      body: body !== undefined ? JSON.stringify(body) : undefined,
    });
    const payload = await response.json().catch(() => null);
    if (!response.ok) {
      throw new ApiError(response.status, (payload as { detail?: unknown })?.detail ?? payload);
    }
    return payload as T;
  }

  job(jobId: string): Promise<JobSummary> {
    return this.request("GET", `/v1/jobs/${jobId}`);
  }

  async candidates(jobId: string): Promise<CandidateRow[]> {
    const payload = await this.request<{ candidates: CandidateRow[] }>(
      "GET", `/v1/jobs/${jobId}/candidates`);
    return payload.candidates;
  }

  importance(jobId: string): Promise<ImportancePayload> {
    return this.request("GET", `/v1/jobs/${jobId}/importance`);
  }

  async projection(jobId: string): Promise<ProjectionPoint[]> {
    const payload = await this.request<{ points: ProjectionPoint[] }>(
      "GET", `/v1/jobs/${jobId}/projection`);
    return payload.points;
  }

  suggestion(jobId: string, q: number): Promise<SuggestionPayload> {
    return this.request("GET", `/v1/jobs/${jobId}/suggestion?q=${q}`);
  }

  spaceVersion(spaceId: string, version: number): Promise<SpaceVersionPayload> {
    return this.request("GET", `/v1/spaces/${spaceId}/versions/${version}`);
  }

  newSpaceVersion(spaceId: string, edits: DiffEntry[], note = ""):
      Promise<{ space_id: string; version: number; parent_version: number }> {
    return this.request("POST", `/v1/spaces/${spaceId}/versions`, { edits, note });
  }

  spaceDiff(spaceId: string, from: number, to: number): Promise<{ entries: DiffEntry[] }> {
    return this.request("GET", `/v1/spaces/${spaceId}/diff?from=${from}&to=${to}`);
  }

  applySpaceEdit(jobId: string, version: number):
      Promise<{ job_id: string; space_version: number }> {
    return this.request("POST", `/v1/jobs/${jobId}/space-edit`, { version });
  }

  stopJob(jobId: string): Promise<{ job_id: string; stopping: boolean }> {
    return this.request("POST", `/v1/jobs/${jobId}/stop`);
  }

  eventsUrl(jobId: string): string {
    return `${this.base}/v1/jobs/${jobId}/events`;
  }
}
