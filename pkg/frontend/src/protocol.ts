/**
 * Wire types for the session service. This file is the whole contract
 * between the console and the backend; nothing else is shared.
 *
 * Every response body carries `v: 1`. Scores are integers: dialog-level
 * and turn-level rubric items range over {0,1,2}, proactivity alone over
 * {-1,0,1}.
 */

export const PROTOCOL_VERSION = 1;

export const SCORE_MIN = 0;
export const SCORE_MAX = 2;
export const PROACTIVITY_MIN = -1;
export const PROACTIVITY_MAX = 1;

export interface GoalBadge {
  type: string;
  topic: string;
}

export interface KnowledgeChip {
  subject: string;
  predicate: string;
  object: string;
  weight: number;
}

export interface TurnView {
  reply: string;
  active_goal: GoalBadge;
  completion_prob: number;
  goal_changed: boolean;
  used_knowledge: KnowledgeChip[];
}

export interface CreateSessionResponse {
  v: number;
  session_id: string;
  model: string;
  template: string;
  opening_turn: TurnView | null;
}

export interface MessageResponse extends TurnView {
  v: number;
  session_id: string;
  closed: boolean;
}

export interface TranscriptRow {
  speaker: "seeker" | "recommender";
  text: string;
  goal: GoalBadge;
  completion_prob?: number;
  used_knowledge?: KnowledgeChip[];
}

export interface StateResponse {
  v: number;
  session_id: string;
  model: string;
  template: string;
  closed: boolean;
  active_goal: GoalBadge;
  transcript: TranscriptRow[];
  rated: boolean;
}

export interface TurnScores {
  fluency: number;
  appropriateness: number;
  informativeness: number;
  proactivity: number;
}

export interface Rating {
  goal_success: number;
  coherence: number;
  turns: TurnScores[];
}

export interface RatingResponse {
  v: number;
  session_id: string;
  recorded: boolean;
}

export interface ModelSummary {
  n: number;
  goal_success: number;
  coherence: number;
  n_turns?: number;
  fluency?: number;
  appropriateness?: number;
  informativeness?: number;
  proactivity?: number;
}

export interface SummaryResponse {
  v: number;
  models: Record<string, ModelSummary>;
}

export interface ErrorBody {
  v: number;
  error: string;
}
