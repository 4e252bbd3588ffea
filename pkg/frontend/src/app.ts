import { renderChartSvg } from "./chart.js";
import { SessionView, chartPoints, chartVisible } from "./state.js";
import type { QueryCard } from "./types.js";

export interface Handlers {
  onLabel(vertex: number, name: string): void;
  onSubmit(): void;
  onStart(config: Record<string, unknown>): void;
  onAbort(): void;
}

function el(doc: Document, tag: string, className?: string, text?: string): HTMLElement {
  const node = doc.createElement(tag);
  if (className) node.className = className;
  if (text !== undefined) node.textContent = text;
  return node;
}

function snapshot(view: SessionView): string {
  return JSON.stringify([
    view.state,
    view.batch,
    [...view.draft.entries()],
    view.records.length,
    view.connectionError,
  ]);
}

function renderHeader(doc: Document, view: SessionView): HTMLElement {
  const header = el(doc, "header", "topbar");
  header.appendChild(el(doc, "h1", "", "graphfew annotation"));
  const pill = el(doc, "span", `pill pill-${view.state.status}`, view.state.status);
  pill.setAttribute("data-testid", "status");
  header.appendChild(pill);

  const { used, total } = view.budgetDisplay();
  const meter = el(doc, "div", "budget");
  meter.setAttribute("data-testid", "budget");
  meter.textContent = total === null ? `budget ${used}` : `budget ${used} / ${total}`;
  if (total !== null && total > 0) {
    const bar = el(doc, "div", "budget-bar");
    const fill = el(doc, "div", "budget-fill");
    fill.style.width = `${Math.min(100, (100 * used) / total).toFixed(1)}%`;
    bar.appendChild(fill);
    meter.appendChild(bar);
  }
  header.appendChild(meter);
  header.appendChild(el(doc, "span", "round", `round ${view.state.current_round}`));
  return header;
}

function renderStartForm(doc: Document, handlers: Handlers): HTMLElement {
  const form = el(doc, "form", "start-form");
  form.setAttribute("data-testid", "start-form");
  const fields: [string, string, string[] | null, string][] = [
    ["dataset", "dataset", null, "sbm"],
    ["model", "model", ["gpn", "gcn", "lp"], "gpn"],
    ["sampler", "sampler", ["medoid", "random", "entropy", "pagerank", "featprop"], "medoid"],
    ["setting", "setting", ["unbalanced", "balanced", "unknown_k"], "unbalanced"],
    ["rounds", "rounds", null, "5"],
    ["repeats", "repeats", null, "1"],
  ];
  for (const [name, label, options, initial] of fields) {
    const wrap = el(doc, "label", "field", `${label} `);
    let input: HTMLElement;
    if (options) {
      input = doc.createElement("select");
      for (const option of options) {
        const o = doc.createElement("option");
        o.value = option;
        o.textContent = option;
        (input as HTMLSelectElement).appendChild(o);
      }
      (input as HTMLSelectElement).value = initial;
    } else {
      input = doc.createElement("input");
      (input as HTMLInputElement).value = initial;
    }
    input.setAttribute("name", name);
    wrap.appendChild(input);
    form.appendChild(wrap);
  }
  const lp = el(doc, "label", "field", "label propagation ");
  const lpBox = doc.createElement("input");
  lpBox.type = "checkbox";
  lpBox.name = "label_prop";
  lp.appendChild(lpBox);
  form.appendChild(lp);

  const start = el(doc, "button", "primary", "start session") as HTMLButtonElement;
  start.type = "submit";
  form.appendChild(start);
  form.addEventListener("submit", (ev) => {
    ev.preventDefault();
    const get = (name: string) =>
      (form.querySelector(`[name=${name}]`) as HTMLInputElement | HTMLSelectElement).value;
    handlers.onStart({
      dataset: get("dataset"),
      model: get("model"),
      sampler: get("sampler"),
      setting: get("setting"),
      rounds: Number(get("rounds")),
      repeats: Number(get("repeats")),
      use_label_propagation: (form.querySelector("[name=label_prop]") as HTMLInputElement)
        .checked,
    });
  });
  return form;
}

function renderDistribution(doc: Document, dist: number[]): HTMLElement {
  const wrap = el(doc, "div", "dist");
  dist.forEach((p, i) => {
    const row = el(doc, "div", "dist-row");
    row.appendChild(el(doc, "span", "dist-label", String(i)));
    const bar = el(doc, "div", "dist-bar");
    const fill = el(doc, "div", "dist-fill");
    fill.style.width = `${(100 * p).toFixed(1)}%`;
    bar.appendChild(fill);
    row.appendChild(bar);
    row.appendChild(el(doc, "span", "dist-val", `${(100 * p).toFixed(0)}%`));
    wrap.appendChild(row);
  });
  return wrap;
}

function renderCard(
  doc: Document,
  card: QueryCard,
  view: SessionView,
  handlers: Handlers,
): HTMLElement {
  const box = el(doc, "article", "card");
  box.setAttribute("data-testid", "card");
  box.appendChild(el(doc, "h3", "", `vertex ${card.vertex}`));

  const feats = el(doc, "div", "features");
  feats.appendChild(el(doc, "h4", "", "top features"));
  const list = el(doc, "ul");
  for (const [idx, val] of card.top_features) {
    list.appendChild(el(doc, "li", "", `#${idx}: ${val.toPrecision(3)}`));
  }
  if (card.top_features.length === 0) list.appendChild(el(doc, "li", "muted", "none"));
  feats.appendChild(list);
  box.appendChild(feats);

  const nbrs = el(doc, "div", "neighbors");
  nbrs.appendChild(el(doc, "h4", "", `neighbors (${card.neighbors.length})`));
  const chips = el(doc, "div", "chips");
  for (const n of card.neighbors.slice(0, 12)) {
    chips.appendChild(
      el(doc, "span", n.label ? "chip labeled" : "chip", n.label ? `${n.id}:${n.label}` : String(n.id)),
    );
  }
  nbrs.appendChild(chips);
  box.appendChild(nbrs);

  box.appendChild(el(doc, "h4", "", "model distribution"));
  box.appendChild(renderDistribution(doc, card.class_distribution));

  const known = view.batch?.known_classes ?? [];
  const current = view.draft.get(card.vertex) ?? "";
  const names = [...known];
  if (current && !names.includes(current)) names.push(current);

  const picker = el(doc, "div", "picker");
  const select = doc.createElement("select");
  select.setAttribute("data-testid", `label-${card.vertex}`);
  const blank = doc.createElement("option");
  blank.value = "";
  blank.textContent = "choose class…";
  select.appendChild(blank);
  for (const name of names) {
    const o = doc.createElement("option");
    o.value = name;
    o.textContent = name;
    select.appendChild(o);
  }
  if (view.batch?.allow_new_class) {
    const o = doc.createElement("option");
    o.value = "__new__";
    o.textContent = "new class…";
    select.appendChild(o);
  }
  select.value = current;
  select.addEventListener("change", () => {
    if (select.value === "__new__") {
      input.style.display = "";
      input.focus();
    } else {
      handlers.onLabel(card.vertex, select.value);
    }
  });
  picker.appendChild(select);

  const input = doc.createElement("input");
  input.type = "text";
  input.placeholder = "new class name";
  input.setAttribute("data-testid", `new-class-${card.vertex}`);
  input.style.display = "none";
  const commit = () => {
    if (input.value.trim()) handlers.onLabel(card.vertex, input.value.trim());
  };
  input.addEventListener("keydown", (ev) => {
    if ((ev as KeyboardEvent).key === "Enter") {
      ev.preventDefault();
      commit();
    }
  });
  input.addEventListener("blur", commit);
  if (!view.batch?.allow_new_class) input.disabled = true;
  picker.appendChild(input);
  box.appendChild(picker);
  return box;
}

function renderBatch(doc: Document, view: SessionView, handlers: Handlers): HTMLElement {
  const section = el(doc, "section", "batch");
  const cards = el(doc, "div", "cards");
  for (const card of view.batch!.vertices) {
    cards.appendChild(renderCard(doc, card, view, handlers));
  }
  section.appendChild(cards);
  const submit = el(
    doc,
    "button",
    "primary submit",
    `submit ${view.draft.size} / ${view.batch!.vertices.length} labels`,
  ) as HTMLButtonElement;
  submit.setAttribute("data-testid", "submit");
  submit.disabled = !view.canSubmit();
  submit.addEventListener("click", () => handlers.onSubmit());
  section.appendChild(submit);
  return section;
}

function renderMetrics(doc: Document, view: SessionView): HTMLElement {
  const section = el(doc, "section", "metrics");
  if (chartVisible(view.records)) {
    const chart = el(doc, "div", "chart");
    chart.setAttribute("data-testid", "chart");
    chart.innerHTML = renderChartSvg(chartPoints(view.records));
    section.appendChild(chart);
  }
  return section;
}

/** Full re-render; skipped when nothing observable changed (keeps focus). */
export function render(root: HTMLElement, view: SessionView, handlers: Handlers): void {
  const doc = root.ownerDocument;
  const snap = snapshot(view);
  if (root.getAttribute("data-snapshot") === snap) return;
  root.setAttribute("data-snapshot", snap);
  root.textContent = "";

  root.appendChild(renderHeader(doc, view));

  if (view.connectionError) {
    const banner = el(doc, "div", "banner", `connection lost, retrying… (${view.connectionError})`);
    banner.setAttribute("data-testid", "retry-banner");
    root.appendChild(banner);
  }

  const status = view.state.status;
  if (status === "idle") {
    root.appendChild(renderStartForm(doc, handlers));
  } else if (status === "awaiting_labels" && view.batch) {
    root.appendChild(renderBatch(doc, view, handlers));
  } else if (status === "training") {
    const busy = el(doc, "div", "progress", "training…");
    busy.setAttribute("data-testid", "training");
    root.appendChild(busy);
  } else if (status === "done" || status === "aborted") {
    root.appendChild(el(doc, "div", "final", `session ${status}`));
  } else if (status === "error") {
    root.appendChild(el(doc, "div", "final error", `engine error: ${view.state.error}`));
  }

  if (status !== "idle") {
    const abort = el(doc, "button", "ghost abort", "abort session") as HTMLButtonElement;
    abort.setAttribute("data-testid", "abort");
    abort.disabled = status === "done" || status === "aborted" || status === "error";
    abort.addEventListener("click", () => handlers.onAbort());
    root.appendChild(abort);
    root.appendChild(renderMetrics(doc, view));
  }
}
