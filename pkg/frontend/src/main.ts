import { ApiClient, ApiError } from "./api.js";
import { render } from "./app.js";
import { SessionView } from "./state.js";

const POLL_MS = 1000;

export function startApp(root: HTMLElement, baseUrl = ""): { stop(): void } {
  const api = new ApiClient(baseUrl);
  const view = new SessionView();

  const handlers = {
    onLabel(vertex: number, name: string): void {
      view.setLabel(vertex, name);
      paint();
    },
    async onSubmit(): Promise<void> {
      if (!view.canSubmit()) return;
      try {
        await api.submitLabels(view.labelsPayload());
        view.state = { ...view.state, status: "training" };
        view.batch = null;
        view.draft.clear();
      } catch (err) {
        // A 409 means the engine moved on; the next poll resyncs.
        if (!(err instanceof ApiError)) view.connectionError = String(err);
      }
      paint();
      void tick();
    },
    async onStart(config: Record<string, unknown>): Promise<void> {
      try {
        await api.createSession(config);
      } catch (err) {
        view.connectionError = err instanceof Error ? err.message : String(err);
      }
      void tick();
    },
    async onAbort(): Promise<void> {
      try {
        const token = await api.abort();
        window.prompt("session aborted; resume token:", token);
      } catch {
        // already gone
      }
      void tick();
    },
  };

  function paint(): void {
    render(root, view, handlers);
  }

  async function tick(): Promise<void> {
    try {
      const state = await api.state();
      view.applyState(state);
      if (state.status === "awaiting_labels") {
        try {
          view.applyBatch(await api.query());
        } catch (err) {
          // Race: the batch may have been answered between the two calls.
          if (!(err instanceof ApiError && err.status === 409)) throw err;
        }
      }
      view.applyRecords(await api.metrics());
      view.connectionError = null;
    } catch (err) {
      view.connectionError = err instanceof Error ? err.message : String(err);
    }
    paint();
  }

  void tick();
  const timer = setInterval(tick, POLL_MS);
  return {
    stop() {
      clearInterval(timer);
    },
  };
}
