/**
 * Headless round trip against a live service, used by CI and by hand:
 *
 *   node dist/smoke.js http://127.0.0.1:8040
 *
 * Creates a session, holds a five-turn conversation, verifies the state
 * endpoint mirrors the transcript, checks the client-side rubric guard,
 * submits a {goal_success: 2, coherence: 1} rating with one turn row,
 * confirms the duplicate is refused and the summary includes the scores.
 * Exits 0 on success.
 */

import { ApiClient, ApiError } from "./api.js";
import { validateRating } from "./state.js";

const LINES = [
  "你好,最近怎么样?",
  "有什么好听的歌吗?",
  "这首歌是谁唱的?",
  "还有别的推荐吗?",
  "好的,谢谢你。",
];

function fail(message: string): never {
  console.error(`smoke failed: ${message}`);
  process.exit(1);
}

async function main(): Promise<void> {
  const base = process.argv[2] ?? "http://127.0.0.1:8040";
  const api = new ApiClient(base);

  const created = await api.createSession("retrieval");
  if (!created.session_id) fail("no session id");
  const sid = created.session_id;
  const opening = created.opening_turn ? 1 : 0;

  for (const line of LINES) {
    const turn = await api.sendMessage(sid, line);
    if (!turn.reply) fail(`empty reply to ${line}`);
    if (!turn.active_goal.type) fail("reply without a goal badge");
    if (!(turn.completion_prob >= 0 && turn.completion_prob <= 1)) {
      fail(`completion gauge out of range: ${turn.completion_prob}`);
    }
  }

  const state = await api.getState(sid);
  if (state.transcript.length !== opening + 2 * LINES.length) {
    fail(`transcript holds ${state.transcript.length} rows, expected ${opening + 2 * LINES.length}`);
  }
  if (state.rated) fail("session rated before any rating was sent");

  // out-of-range scores never leave the client
  const blocked = validateRating({ goal_success: 3, coherence: 0, turns: [] });
  if (blocked.length === 0) fail("client accepted goal_success=3");

  const rating = {
    goal_success: 2,
    coherence: 1,
    turns: [
      { fluency: 2, appropriateness: 2, informativeness: 1, proactivity: 1 },
    ],
  };
  if (validateRating(rating).length) fail("valid rating rejected client-side");
  const recorded = await api.submitRating(sid, rating);
  if (!recorded.recorded) fail("rating not recorded");

  try {
    await api.submitRating(sid, rating);
    fail("duplicate rating accepted");
  } catch (err) {
    if (!(err instanceof ApiError) || err.status !== 409) {
      fail(`duplicate rating: expected 409, got ${String(err)}`);
    }
  }

  const summary = await api.ratingsSummary();
  const entry = summary.models["retrieval"];
  if (!entry || entry.n < 1) fail("summary missing the submitted rating");

  console.log(
    `smoke ok: session ${sid}, ${LINES.length} turns, rating recorded, ` +
      `summary n=${entry.n}`,
  );
}

main().catch((err) => fail(err instanceof Error ? err.message : String(err)));
