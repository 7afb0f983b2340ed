/**
 * Thin fetch client over the session protocol. Every helper resolves to
 * the parsed body after checking the status code and protocol version;
 * failures throw ApiError with whatever the server said.
 */

import {
  CreateSessionResponse,
  MessageResponse,
  PROTOCOL_VERSION,
  Rating,
  RatingResponse,
  StateResponse,
  SummaryResponse,
} from "./protocol.js";

export class ApiError extends Error {
  status: number;

  constructor(status: number, message: string) {
    super(message);
    this.status = status;
  }
}

async function request<T extends { v: number }>(
  url: string,
  init?: RequestInit,
): Promise<T> {
  let response: Response;
  try {
    response = await fetch(url, init);
  } catch (err) {
    throw new ApiError(0, `service unreachable: ${String(err)}`);
  }
  const body = await response.json().catch(() => ({}));
  if (!response.ok) {
    throw new ApiError(response.status, body.error ?? response.statusText);
  }
  if (body.v !== PROTOCOL_VERSION) {
    throw new ApiError(0, `unsupported protocol version ${body.v}`);
  }
  return body as T;
}

function post(payload: unknown): RequestInit {
  return {
    method: "POST",
    headers: { "Content-Type": "application/json" },
    body: JSON.stringify(payload),
  };
}

export class ApiClient {
  constructor(private base: string) {}

  createSession(
    model: string,
    templateId?: number,
  ): Promise<CreateSessionResponse> {
    const payload: Record<string, unknown> = { model };
    if (templateId !== undefined) payload.template_id = templateId;
    return request(`${this.base}/api/session`, post(payload));
  }

  sendMessage(sessionId: string, text: string): Promise<MessageResponse> {
    return request(
      `${this.base}/api/session/${sessionId}/message`,
      post({ text }),
    );
  }

  getState(sessionId: string): Promise<StateResponse> {
    return request(`${this.base}/api/session/${sessionId}/state`);
  }

  submitRating(sessionId: string, rating: Rating): Promise<RatingResponse> {
    return request(
      `${this.base}/api/session/${sessionId}/rating`,
      post(rating),
    );
  }

  ratingsSummary(): Promise<SummaryResponse> {
    return request(`${this.base}/api/ratings/summary`);
  }
}

/**
 * Serializes sends so rapid double-submits reach the server, and render,
 * in the order the user produced them.
 */
export class SendQueue {
  private tail: Promise<unknown> = Promise.resolve();

  push<T>(job: () => Promise<T>): Promise<T> {
    const next = this.tail.then(job, job);
    this.tail = next.catch(() => undefined);
    return next;
  }
}
