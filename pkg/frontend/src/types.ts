// Client mirrors of the /v1 payloads. The UI renders these as served and
// never recomputes analytics; the only client-side arithmetic is turning a
// lasso selection or a slider gesture into an edit-list proposal.

export type ParamValue = number | string;

export interface JobSummary {
  job_id: string;
  name: string | null;
  status: "PENDING" | "RUNNING" | "COMPLETE" | "FAILED" | "STOPPED";
  diagnostic: string | null;
  iteration: number;
  space_id: string | null;
  space_version: number | null;
  tasks: Record<string, number>;
  n_observations: number;
  best: { task_id: number; loss: number; reward: number; config: Record<string, ParamValue> } | null;
}

export interface CandidateRow {
  task_id: number;
  state: string;
  iteration: number;
  config: Record<string, ParamValue>;
  space_version: number | null;
  fidelity: { resource: number; is_final: boolean } | null;
  attempts: number;
  scalar_reward: number | null;
  duration_s: number | null;
  timed_out: boolean;
  [extra: string]: unknown;
}

export interface ImportancePayload {
  fractions: Record<string, number>;
  activation_rates: Record<string, number>;
  total_variance: number;
  n_observations: number;
  constant: boolean;
}

export interface ProjectionPoint {
  x: number;
  y: number;
  reward: number;
  task_id: number;
}

export interface DiffEntry {
  path: string;
  kind: "added" | "removed" | "range-narrowed" | "range-widened" | "values-changed";
  old: unknown;
  new: unknown;
}

export interface SuggestionPayload {
  diff: DiffEntry[];
  flagged_values: Record<string, string[]>;
  incumbent_task_ids: number[];
  quantile: number;
  rationale: string;
}

export interface SpaceNodeDoc {
  type: "int" | "float" | "choice";
  range: Array<number | string> | string[];
  log_scale?: boolean;
  submodule?: Record<string, SpaceNodeDoc> | Record<string, Record<string, SpaceNodeDoc>>;
}

export type SpaceDoc = Record<string, SpaceNodeDoc>;

export interface SpaceVersionPayload {
  space_id: string;
  version: number;
  parent_version: number | null;
  note: string;
  doc: SpaceDoc;
  document: string;
}

export interface StreamEvent {
  type: string;
  [key: string]: unknown;
}

export interface ObservationEvent extends StreamEvent {
  type: "observation";
  task_id: number;
  config: Record<string, ParamValue>;
  loss: number;
  reward: number;
  metrics: Record<string, number>;
}
