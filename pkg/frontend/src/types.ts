/** Wire types mirroring the annotation service's JSON bodies. */

export type Status =
  | "idle"
  | "awaiting_labels"
  | "training"
  | "done"
  | "error"
  | "aborted";

export interface SessionState {
  status: Status;
  budget_used: number;
  budget_total: number | null;
  current_round: number;
  error: string | null;
}

export interface QueryCard {
  vertex: number;
  top_features: [number, number][];
  neighbors: { id: number; label: string | null }[];
  class_distribution: number[];
}

export interface QueryBatch {
  vertices: QueryCard[];
  known_classes: string[];
  allow_new_class: boolean;
}

export interface MetricRecord {
  run_id: string;
  seed: number;
  round: number;
  budget_used: number;
  test_accuracy: number | null;
}

export function idleState(): SessionState {
  return {
    status: "idle",
    budget_used: 0,
    budget_total: null,
    current_round: 0,
    error: null,
  };
}
