// DOM rendering. Wipes and redraws from the view each time; the view is
// small enough that diffing would be overkill.

import { KnowledgeChip } from "./protocol.js";
import { Bubble, SessionView } from "./state.js";

function el(tag: string, cls: string, text?: string): HTMLElement {
  const node = document.createElement(tag);
  node.className = cls;
  if (text !== undefined) node.textContent = text;
  return node;
}

function chipLabel(chip: KnowledgeChip): string {
  // full triple verbatim; weight to two places
  return `${chip.subject} ${chip.predicate} ${chip.object} · ${chip.weight.toFixed(2)}`;
}

function renderBubble(bubble: Bubble): HTMLElement {
  const wrap = el("div", `bubble ${bubble.speaker}${bubble.pending ? " pending" : ""}`);
  wrap.appendChild(el("div", "text", bubble.text));
  if (bubble.speaker === "recommender" && bubble.goal) {
    const meta = el("div", "meta");
    meta.appendChild(el("span", "badge", `${bubble.goal.type}: ${bubble.goal.topic}`));
    if (bubble.completionProb !== null) {
      const gauge = el("span", "gauge");
      const fill = el("span", "fill");
      fill.style.width = `${Math.round(bubble.completionProb * 100)}%`;
      gauge.appendChild(fill);
      gauge.title = `completion ${bubble.completionProb.toFixed(2)}`;
      meta.appendChild(gauge);
    }
    for (const chip of bubble.chips.slice(0, 6)) {
      if (chip.weight > 0) meta.appendChild(el("span", "chip", chipLabel(chip)));
    }
    wrap.appendChild(meta);
  }
  return wrap;
}

export function renderView(view: SessionView, root: HTMLElement): void {
  root.textContent = "";
  if (view.banner) {
    root.appendChild(el("div", "banner", view.banner));
  }
  if (view.sessionId) {
    const head = el("div", "head",
      `session ${view.sessionId} · ${view.model} · ${view.template}` +
      (view.closed ? " · closed" : ""));
    root.appendChild(head);
  }
  const log = el("div", "log");
  for (const bubble of view.bubbles) log.appendChild(renderBubble(bubble));
  root.appendChild(log);
  log.scrollTop = log.scrollHeight;
}

export function renderRatingLock(form: HTMLElement, rated: boolean): void {
  for (const input of Array.from(form.querySelectorAll("input, button, select"))) {
    (input as HTMLInputElement).disabled = rated;
  }
  const note = form.querySelector(".rated-note") as HTMLElement | null;
  if (note) note.style.display = rated ? "" : "none";
}
