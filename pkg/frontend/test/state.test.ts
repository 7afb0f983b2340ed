import { describe, expect, it } from "vitest";

import {
  CreateSessionResponse,
  MessageResponse,
  StateResponse,
} from "../src/protocol.js";
import {
  applyCreate,
  applyFailure,
  applyTurn,
  applyUserSend,
  emptyView,
  validateRating,
  viewFromState,
} from "../src/state.js";

const goal = { type: "qa", topic: "周杰伦" };
const chip = { subject: "周杰伦", predicate: "代表作", object: "七里香", weight: 0.9 };

function turn(reply: string, closed = false): MessageResponse {
  return {
    v: 1,
    session_id: "s000001",
    closed,
    reply,
    active_goal: goal,
    completion_prob: 0.3,
    goal_changed: false,
    used_knowledge: [chip],
  };
}

describe("view transitions", () => {
  it("renders the opening bot turn when the server initiates", () => {
    const created: CreateSessionResponse = {
      v: 1,
      session_id: "s000001",
      model: "retrieval",
      template: "u1-d0",
      opening_turn: {
        reply: "你好!",
        active_goal: goal,
        completion_prob: 0,
        goal_changed: false,
        used_knowledge: [],
      },
    };
    const view = applyCreate(created);
    expect(view.sessionId).toBe("s000001");
    expect(view.bubbles).toHaveLength(1);
    expect(view.bubbles[0].speaker).toBe("recommender");
  });

  it("keeps rapid sends in order and settles pending bubbles", () => {
    let view = applyCreate({
      v: 1, session_id: "s1", model: "retrieval", template: "t",
      opening_turn: null,
    });
    view = applyUserSend(view, "第一句");
    view = applyUserSend(view, "第二句");
    expect(view.bubbles.map((b) => b.pending)).toEqual([true, true]);
    view = applyTurn(view, turn("回一"));
    view = applyTurn(view, turn("回二", true));
    expect(view.bubbles.map((b) => b.text)).toEqual([
      "第一句", "回一", "第二句", "回二",
    ]);
    expect(view.bubbles.every((b) => !b.pending)).toBe(true);
    expect(view.closed).toBe(true);
  });

  it("bot turns carry badge, gauge value, and chips verbatim", () => {
    let view = applyCreate({
      v: 1, session_id: "s1", model: "retrieval", template: "t",
      opening_turn: null,
    });
    view = applyUserSend(view, "hi");
    view = applyTurn(view, turn("reply"));
    const bot = view.bubbles[1];
    expect(bot.goal).toEqual(goal);
    expect(bot.completionProb).toBeCloseTo(0.3);
    expect(bot.chips[0]).toEqual(chip);
  });

  it("failure drops optimistic bubbles and raises a banner", () => {
    let view = applyUserSend(emptyView(), "掉线了");
    view = applyFailure(view, "service unreachable");
    expect(view.bubbles).toHaveLength(0);
    expect(view.banner).toContain("unreachable");
  });

  it("reload rebuilds the identical view from the state endpoint", () => {
    const state: StateResponse = {
      v: 1,
      session_id: "s9",
      model: "generation",
      template: "u2-d1",
      closed: false,
      active_goal: goal,
      rated: true,
      transcript: [
        { speaker: "seeker", text: "hi", goal },
        {
          speaker: "recommender", text: "hello", goal,
          completion_prob: 0.5, used_knowledge: [chip],
        },
      ],
    };
    const view = viewFromState(state);
    expect(viewFromState(state)).toEqual(view); // pure
    expect(view.rated).toBe(true);
    expect(view.bubbles.map((b) => [b.speaker, b.text])).toEqual([
      ["seeker", "hi"],
      ["recommender", "hello"],
    ]);
    expect(view.bubbles[0].chips).toEqual([]);
    expect(view.bubbles[1].completionProb).toBe(0.5);
  });
});

describe("rubric enforcement", () => {
  const turnRow = {
    fluency: 2, appropriateness: 1, informativeness: 0, proactivity: -1,
  };

  it("accepts every in-range combination", () => {
    for (let gs = 0; gs <= 2; gs++) {
      for (let p = -1; p <= 1; p++) {
        const rating = {
          goal_success: gs,
          coherence: 2 - gs,
          turns: [{ ...turnRow, proactivity: p }],
        };
        expect(validateRating(rating)).toEqual([]);
      }
    }
  });

  it("rejects out-of-range and fractional scores", () => {
    expect(validateRating({ goal_success: 3, coherence: 0, turns: [] }))
      .toHaveLength(1);
    expect(validateRating({ goal_success: -1, coherence: 5, turns: [] }))
      .toHaveLength(2);
    expect(validateRating({ goal_success: 1.5, coherence: 0, turns: [] }))
      .toHaveLength(1);
    const bad = validateRating({
      goal_success: 1, coherence: 1,
      turns: [{ ...turnRow, proactivity: 2 }],
    });
    expect(bad[0]).toContain("proactivity");
  });
});
