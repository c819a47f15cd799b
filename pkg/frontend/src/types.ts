/** Payload shapes of the backend's /api/v1 interface. */

export interface SegmentView {
  id: number;
  sentence: number;
  label: string;
  root: boolean;
  dummy: boolean;
  removability: "removable" | "unremovable";
  parent: number | null;
  children: number[];
  alternatives: string[];
  merged: boolean;
}

export interface SentenceView {
  index: number;
  text: string;
  pinned: boolean;
  tree: string | null;
}

export interface TaskView {
  v: number;
  task_id: string;
  prototype_text: string;
  template: string;
  evaluators: EvaluatorView[];
  pinned_spans: [number, number][];
  sentences: SentenceView[];
  m: number;
  segment_ids: number[];
  count_valid: number;
  segments: SegmentView[];
}

export interface EvaluatorView {
  operator: string;
  argument: string;
  name: string;
}

export interface ShapDiagnostics {
  condition_estimate: number;
  residual_norm: number;
  not_identifiable: number[];
}

export interface ShapPayload {
  phi0: number;
  phi: number[];
  segment_ids: number[];
  diagnostics: ShapDiagnostics;
}

export interface BoxStats {
  min: number;
  q1: number;
  median: number;
  q3: number;
  max: number;
  whisker_low: number;
  whisker_high: number;
  outlier_ids: number[];
}

export interface ResultRow {
  cf_id: number;
  bits: string;
  text: string;
  word_count: number;
  outcome: number;
}

export interface ResultsPayload {
  v: number;
  run_id: string;
  task_id: string;
  evaluator: EvaluatorView;
  prototype_text: string;
  segments: SegmentView[];
  segment_ids: number[];
  shap: ShapPayload | { error: { code: string; message: string } } | null;
  stats: BoxStats | null;
  rows: ResultRow[];
}

export interface AnnotationSpan {
  start: number;
  end: number;
  state: "Included" | "Excluded" | "Varies";
}

export interface GroupRow {
  selection: number[];
  pattern: ("Included" | "Excluded")[];
  member_cf_ids: number[];
  stats: BoxStats;
  influenced_segments: number[];
  spans: AnnotationSpan[];
}

export interface GroupByPayload {
  v: number;
  run_id: string;
  selection: number[];
  groups: GroupRow[];
}

export interface RunStatus {
  state: "queued" | "running" | "done" | "failed";
  progress: number;
  error: string | null;
  run_id: string;
  updated_at: string;
}

export interface RunInfo {
  v: number;
  run_id: string;
  task_id: string;
  status: RunStatus;
  config: Record<string, unknown> | null;
}

export function isShapResult(
  shap: ResultsPayload["shap"],
): shap is ShapPayload {
  return shap !== null && "phi" in shap;
}
