/** Thin fetch client for the review service. */

import {
  type Decision,
  type DecisionResult,
  type Session,
  decisionResultSchema,
  exportResultSchema,
  sessionSchema,
  videoListSchema,
} from "./types.js";

export class ApiError extends Error {
  constructor(
    public readonly status: number,
    message: string,
  ) {
    super(message);
  }
}

async function request(url: string, init?: RequestInit): Promise<unknown> {
  const res = await fetch(url, init);
  if (!res.ok) {
    const body = await res.text();
    throw new ApiError(res.status, `${res.status} ${res.statusText}: ${body}`);
  }
  return res.json();
}

export class ReviewClient {
  constructor(private readonly baseUrl: string = "") {}

  async listVideos(): Promise<string[]> {
    const data = await request(`${this.baseUrl}/videos`);
    return videoListSchema.parse(data).videos;
  }

  async getSession(videoId: string): Promise<Session> {
    const data = await request(`${this.baseUrl}/session/${videoId}`);
    return sessionSchema.parse(data);
  }

  async postDecision(videoId: string, decision: Decision): Promise<DecisionResult> {
    const data = await request(`${this.baseUrl}/session/${videoId}/decision`, {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify(decision),
    });
    return decisionResultSchema.parse(data);
  }

  async exportDecisions(videoId: string): Promise<{ path: string; decision_count: number }> {
    const data = await request(`${this.baseUrl}/session/${videoId}/export`, {
      method: "POST",
    });
    return exportResultSchema.parse(data);
  }
}
