import type { MetricRecord, QueryBatch, SessionState } from "./types.js";
import { idleState } from "./types.js";

/**
 * Client-side session model.
 *
 * Holds nothing the server cannot restore: the polled state, the current
 * query batch, the metric history, and the in-flight label draft (which a
 * reload legitimately drops — the server re-serves the same batch).
 */
export class SessionView {
  state: SessionState = idleState();
  batch: QueryBatch | null = null;
  records: MetricRecord[] = [];
  draft = new Map<number, string>();
  connectionError: string | null = null;

  applyState(state: SessionState): void {
    this.state = state;
    if (state.status !== "awaiting_labels") {
      // Any other status invalidates the outstanding query batch.
      this.batch = null;
      this.draft.clear();
    }
  }

  applyBatch(batch: QueryBatch): void {
    const incoming = batch.vertices.map((c) => c.vertex).sort((a, b) => a - b);
    const current = this.batch?.vertices.map((c) => c.vertex).sort((a, b) => a - b);
    if (!current || incoming.join(",") !== current.join(",")) {
      this.draft.clear();
    }
    this.batch = batch;
  }

  applyRecords(records: MetricRecord[]): void {
    this.records = records;
  }

  /** Labels are accepted only for vertices of the current batch. */
  setLabel(vertex: number, className: string): boolean {
    if (this.state.status !== "awaiting_labels" || !this.batch) return false;
    if (!this.batch.vertices.some((c) => c.vertex === vertex)) return false;
    if (className === "") {
      this.draft.delete(vertex);
    } else {
      this.draft.set(vertex, className);
    }
    return true;
  }

  /** Submission needs an awaiting batch with every card labeled. */
  canSubmit(): boolean {
    return (
      this.state.status === "awaiting_labels" &&
      this.batch !== null &&
      this.batch.vertices.length > 0 &&
      this.batch.vertices.every((c) => this.draft.has(c.vertex))
    );
  }

  labelsPayload(): Record<string, string> {
    if (!this.canSubmit() || !this.batch) {
      throw new Error("labels are not ready for submission");
    }
    const payload: Record<string, string> = {};
    for (const card of this.batch.vertices) {
      payload[String(card.vertex)] = this.draft.get(card.vertex)!;
    }
    return payload;
  }

  /** Rendered budget is clamped so it never exceeds the total. */
  budgetDisplay(): { used: number; total: number | null } {
    const total = this.state.budget_total;
    const used =
      total === null ? this.state.budget_used : Math.min(this.state.budget_used, total);
    return { used, total };
  }
}

/** Rows of the repeat currently on screen (the latest run_id in the stream). */
export function latestRunRecords(records: MetricRecord[]): MetricRecord[] {
  if (records.length === 0) return [];
  const last = records[records.length - 1]!.run_id;
  return records.filter((r) => r.run_id === last);
}

export interface ChartPoint {
  x: number;
  y: number;
}

/** Accuracy-vs-budget polyline data; null accuracies (no ground truth) drop out. */
export function chartPoints(records: MetricRecord[]): ChartPoint[] {
  return latestRunRecords(records)
    .filter((r) => r.test_accuracy !== null)
    .map((r) => ({ x: r.budget_used, y: r.test_accuracy! }));
}

/** The chart is hidden entirely when no record carries a test accuracy. */
export function chartVisible(records: MetricRecord[]): boolean {
  return chartPoints(records).length > 0;
}

export function xValuesNondecreasing(points: ChartPoint[]): boolean {
  return points.every((p, i) => i === 0 || p.x >= points[i - 1]!.x);
}
