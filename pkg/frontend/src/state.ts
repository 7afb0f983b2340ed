/**
 * View state and the pure transitions that produce it.
 *
 * The transcript shown is exactly the server transcript; the only
 * client-side additions are optimistic user bubbles for in-flight sends,
 * which the authoritative reply replaces. Reloading a session rebuilds
 * the identical view from GET /state alone.
 */

import {
  CreateSessionResponse,
  GoalBadge,
  KnowledgeChip,
  MessageResponse,
  PROACTIVITY_MAX,
  PROACTIVITY_MIN,
  Rating,
  SCORE_MAX,
  SCORE_MIN,
  StateResponse,
  TranscriptRow,
} from "./protocol.js";

export interface Bubble {
  speaker: "seeker" | "recommender";
  text: string;
  goal: GoalBadge | null;
  completionProb: number | null;
  chips: KnowledgeChip[];
  pending: boolean;
}

export interface SessionView {
  sessionId: string | null;
  model: string;
  template: string;
  closed: boolean;
  rated: boolean;
  activeGoal: GoalBadge | null;
  bubbles: Bubble[];
  banner: string | null;
}

export function emptyView(): SessionView {
  return {
    sessionId: null,
    model: "",
    template: "",
    closed: false,
    rated: false,
    activeGoal: null,
    bubbles: [],
    banner: null,
  };
}

function bubbleFromRow(row: TranscriptRow): Bubble {
  return {
    speaker: row.speaker,
    text: row.text,
    goal: row.goal,
    completionProb: row.completion_prob ?? null,
    chips: row.used_knowledge ?? [],
    pending: false,
  };
}

/** Rebuild the whole view from the server state (the reload path). */
export function viewFromState(state: StateResponse): SessionView {
  return {
    sessionId: state.session_id,
    model: state.model,
    template: state.template,
    closed: state.closed,
    rated: state.rated,
    activeGoal: state.active_goal,
    bubbles: state.transcript.map(bubbleFromRow),
    banner: null,
  };
}

export function applyCreate(resp: CreateSessionResponse): SessionView {
  const view = emptyView();
  view.sessionId = resp.session_id;
  view.model = resp.model;
  view.template = resp.template;
  if (resp.opening_turn) {
    view.activeGoal = resp.opening_turn.active_goal;
    view.bubbles = [
      {
        speaker: "recommender",
        text: resp.opening_turn.reply,
        goal: resp.opening_turn.active_goal,
        completionProb: resp.opening_turn.completion_prob,
        chips: resp.opening_turn.used_knowledge,
        pending: false,
      },
    ];
  }
  return view;
}

/** Optimistic user bubble; the server reply confirms it later. */
export function applyUserSend(view: SessionView, text: string): SessionView {
  return {
    ...view,
    bubbles: [
      ...view.bubbles,
      {
        speaker: "seeker",
        text,
        goal: null,
        completionProb: null,
        chips: [],
        pending: true,
      },
    ],
  };
}

/**
 * Settle the oldest pending bubble and place the bot reply directly after
 * it, so rapid double-sends render in the same interleaved order the
 * server transcript has.
 */
export function applyTurn(
  view: SessionView,
  resp: MessageResponse,
): SessionView {
  const bubbles = view.bubbles.slice();
  const i = bubbles.findIndex((b) => b.pending);
  const reply: Bubble = {
    speaker: "recommender",
    text: resp.reply,
    goal: resp.active_goal,
    completionProb: resp.completion_prob,
    chips: resp.used_knowledge,
    pending: false,
  };
  if (i >= 0) {
    bubbles[i] = { ...bubbles[i], goal: resp.active_goal, pending: false };
    bubbles.splice(i + 1, 0, reply);
  } else {
    bubbles.push(reply);
  }
  return {
    ...view,
    closed: resp.closed,
    activeGoal: resp.active_goal,
    bubbles,
    banner: null,
  };
}

export function applyFailure(view: SessionView, message: string): SessionView {
  // drop unconfirmed bubbles so the view falls back to server truth
  return {
    ...view,
    bubbles: view.bubbles.filter((b) => !b.pending),
    banner: message,
  };
}

function intIn(value: number, lo: number, hi: number): boolean {
  return Number.isInteger(value) && value >= lo && value <= hi;
}

/**
 * Client-side rubric enforcement, mirroring the server's bounds. Returns
 * the list of violations; an empty list means the form may be submitted.
 */
export function validateRating(rating: Rating): string[] {
  const problems: string[] = [];
  const dialogLevel: Array<[string, number]> = [
    ["goal_success", rating.goal_success],
    ["coherence", rating.coherence],
  ];
  for (const [name, value] of dialogLevel) {
    if (!intIn(value, SCORE_MIN, SCORE_MAX)) {
      problems.push(`${name} must be an integer in [${SCORE_MIN}, ${SCORE_MAX}]`);
    }
  }
  rating.turns.forEach((turn, i) => {
    for (const name of ["fluency", "appropriateness", "informativeness"] as const) {
      if (!intIn(turn[name], SCORE_MIN, SCORE_MAX)) {
        problems.push(`turn ${i}: ${name} out of range`);
      }
    }
    if (!intIn(turn.proactivity, PROACTIVITY_MIN, PROACTIVITY_MAX)) {
      problems.push(`turn ${i}: proactivity must be in {-1, 0, 1}`);
    }
  });
  return problems;
}
