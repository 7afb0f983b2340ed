// Page wiring: one session per tab, send box, rating form.

import { ApiClient, ApiError, SendQueue } from "./api.js";
import { Rating, TurnScores } from "./protocol.js";
import {
  applyCreate,
  applyFailure,
  applyTurn,
  applyUserSend,
  emptyView,
  SessionView,
  validateRating,
  viewFromState,
} from "./state.js";
import { renderRatingLock, renderView } from "./render.js";

const api = new ApiClient("");
const queue = new SendQueue();
let view: SessionView = emptyView();

function $(id: string): HTMLElement {
  const node = document.getElementById(id);
  if (!node) throw new Error(`missing #${id}`);
  return node;
}

function refresh(): void {
  renderView(view, $("console"));
  ($("send") as HTMLButtonElement).disabled =
    view.sessionId === null || view.closed;
  renderRatingLock($("rating-form"), view.rated);
  // keep the session in the URL so a reload restores the same view
  if (view.sessionId) {
    const url = new URL(location.href);
    url.searchParams.set("session", view.sessionId);
    history.replaceState(null, "", url);
  }
}

async function startSession(): Promise<void> {
  const model = ($("model") as HTMLSelectElement).value;
  const template = parseInt(($("template") as HTMLInputElement).value, 10);
  try {
    const created = await api.createSession(
      model,
      Number.isNaN(template) ? undefined : template,
    );
    view = applyCreate(created);
  } catch (err) {
    view = applyFailure(view, describe(err));
  }
  refresh();
}

function describe(err: unknown): string {
  if (err instanceof ApiError) {
    return err.status === 0
      ? `${err.message} — retry when the service is back`
      : `server said (${err.status}): ${err.message}`;
  }
  return String(err);
}

function sendCurrent(): void {
  const box = $("input") as HTMLInputElement;
  const text = box.value.trim();
  const sid = view.sessionId;
  if (!text || !sid || view.closed) return;
  box.value = "";
  view = applyUserSend(view, text);
  refresh();
  // the queue keeps rapid double-sends in user order
  void queue.push(async () => {
    try {
      const reply = await api.sendMessage(sid, text);
      view = applyTurn(view, reply);
    } catch (err) {
      view = applyFailure(view, describe(err));
    }
    refresh();
  });
}

function readRatingForm(): Rating {
  const num = (id: string) =>
    parseInt(($(id) as HTMLInputElement).value, 10);
  const rating: Rating = {
    goal_success: num("goal-success"),
    coherence: num("coherence"),
    turns: [],
  };
  const turnRow = $("turn-scores") as HTMLElement;
  if ((turnRow.querySelector("input.enabled") as HTMLInputElement)?.checked) {
    const turn: TurnScores = {
      fluency: num("fluency"),
      appropriateness: num("appropriateness"),
      informativeness: num("informativeness"),
      proactivity: num("proactivity"),
    };
    rating.turns.push(turn);
  }
  return rating;
}

async function submitRating(event: Event): Promise<void> {
  event.preventDefault();
  if (!view.sessionId) return;
  const rating = readRatingForm();
  const problems = validateRating(rating);
  const note = $("rating-problems");
  if (problems.length) {
    note.textContent = problems.join("; ");
    return;
  }
  note.textContent = "";
  try {
    await api.submitRating(view.sessionId, rating);
    view = { ...view, rated: true };
  } catch (err) {
    if (err instanceof ApiError && err.status === 409) {
      view = { ...view, rated: true, banner: "already rated" };
    } else {
      view = applyFailure(view, describe(err));
    }
  }
  refresh();
}

async function boot(): Promise<void> {
  const sid = new URL(location.href).searchParams.get("session");
  if (sid) {
    try {
      view = viewFromState(await api.getState(sid));
    } catch {
      view = emptyView();
    }
  }
  refresh();
}

document.addEventListener("DOMContentLoaded", () => {
  $("start").addEventListener("click", () => void startSession());
  $("send").addEventListener("click", sendCurrent);
  $("input").addEventListener("keydown", (event) => {
    if ((event as KeyboardEvent).key === "Enter") sendCurrent();
  });
  $("rating-form").addEventListener("submit", (e) => void submitRating(e));
  void boot();
});
