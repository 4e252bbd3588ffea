import type { MetricRecord, QueryBatch, SessionState } from "./types.js";

export class ApiError extends Error {
  constructor(public status: number, message: string) {
    super(message);
  }
}

async function parse<T>(resp: Response): Promise<T> {
  if (!resp.ok) {
    let detail = resp.statusText;
    try {
      const body = await resp.json();
      if (body && typeof body.detail === "string") detail = body.detail;
    } catch {
      // non-JSON error body; keep the status text
    }
    throw new ApiError(resp.status, detail);
  }
  return (await resp.json()) as T;
}

/** Thin typed client for the annotation service. */
export class ApiClient {
  constructor(private baseUrl: string = "") {}

  private url(path: string): string {
    return `${this.baseUrl}${path}`;
  }

  async createSession(config: Record<string, unknown>): Promise<void> {
    await parse(
      await fetch(this.url("/session"), {
        method: "POST",
        headers: { "Content-Type": "application/json" },
        body: JSON.stringify({ config }),
      }),
    );
  }

  async resumeSession(token: string): Promise<void> {
    await parse(
      await fetch(this.url("/session"), {
        method: "POST",
        headers: { "Content-Type": "application/json" },
        body: JSON.stringify({ resume_token: token }),
      }),
    );
  }

  async state(): Promise<SessionState> {
    return parse(await fetch(this.url("/session/state")));
  }

  async query(): Promise<QueryBatch> {
    return parse(await fetch(this.url("/session/query")));
  }

  async submitLabels(labels: Record<string, string>): Promise<void> {
    await parse(
      await fetch(this.url("/session/labels"), {
        method: "POST",
        headers: { "Content-Type": "application/json" },
        body: JSON.stringify({ labels }),
      }),
    );
  }

  /** Records so far; an absent session reads as no records. */
  async metrics(): Promise<MetricRecord[]> {
    try {
      const body = await parse<{ records: MetricRecord[] }>(
        await fetch(this.url("/session/metrics")),
      );
      return body.records;
    } catch (err) {
      if (err instanceof ApiError && err.status === 404) return [];
      throw err;
    }
  }

  async abort(): Promise<string> {
    const body = await parse<{ resume_token: string }>(
      await fetch(this.url("/session"), { method: "DELETE" }),
    );
    return body.resume_token;
  }
}
