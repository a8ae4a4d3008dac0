/** Thin typed client for the gateway REST + SSE surface.
 *
 * The fetch implementation is injectable so contract tests can run against
 * an in-memory mock server. The client holds no business logic: every value
 * it returns came out of an API response.
 */

import { SseParser } from "./sse";
import type {
  FeedbackRecord,
  FeedbackSubmission,
  SessionDetail,
  StreamEvent,
} from "./types";

export type FetchLike = (
  url: string,
  init?: RequestInit
) => Promise<Response>;

export class GatewayError extends Error {
  constructor(public status: number, detail: string) {
    super(`gateway ${status}: ${detail}`);
  }
}

export class GatewayClient {
  constructor(
    private baseUrl: string,
    private token: string,
    private fetchImpl: FetchLike = (u, i) => fetch(u, i)
  ) {}

  private headers(extra: Record<string, string> = {}): Record<string, string> {
    return { Authorization: `Bearer ${this.token}`, ...extra };
  }

  private async checked(response: Response): Promise<Response> {
    if (!response.ok) {
      const detail = await response.text().catch(() => "");
      throw new GatewayError(response.status, detail);
    }
    return response;
  }

  async createSession(): Promise<string> {
    const response = await this.checked(
      await this.fetchImpl(`${this.baseUrl}/sessions`, {
        method: "POST",
        headers: this.headers(),
      })
    );
    return (await response.json()).session_id as string;
  }

  async getSession(sessionId: string): Promise<SessionDetail> {
    const response = await this.checked(
      await this.fetchImpl(`${this.baseUrl}/sessions/${sessionId}`, {
        headers: this.headers(),
      })
    );
    return (await response.json()) as SessionDetail;
  }

  /** POST a message and invoke onEvent for every stream event, in order. */
  async sendMessage(
    sessionId: string,
    content: string,
    onEvent: (event: StreamEvent) => void
  ): Promise<{ taskId: string }> {
    const response = await this.checked(
      await this.fetchImpl(`${this.baseUrl}/sessions/${sessionId}/messages`, {
        method: "POST",
        headers: this.headers({ "Content-Type": "application/json" }),
        body: JSON.stringify({ content }),
      })
    );
    const taskId = response.headers.get("x-task-id") ?? "";
    const parser = new SseParser();
    const body = await response.text();
    for (const event of parser.push(body)) onEvent(event);
    for (const event of parser.flush()) onEvent(event);
    return { taskId };
  }

  async uploadFile(
    sessionId: string,
    filename: string,
    data: Blob | string,
    mediaType: string
  ): Promise<{ file_id: string; page_count: number }> {
    const response = await this.checked(
      await this.fetchImpl(
        `${this.baseUrl}/sessions/${sessionId}/files?filename=${encodeURIComponent(filename)}`,
        {
          method: "POST",
          headers: this.headers({ "Content-Type": mediaType }),
          body: data,
        }
      )
    );
    return await response.json();
  }

  async submitFeedback(
    submission: FeedbackSubmission
  ): Promise<{ feedback_id: string }> {
    const response = await this.checked(
      await this.fetchImpl(`${this.baseUrl}/feedback`, {
        method: "POST",
        headers: this.headers({ "Content-Type": "application/json" }),
        body: JSON.stringify(submission),
      })
    );
    return await response.json();
  }

  async getFeedback(feedbackId: string): Promise<FeedbackRecord> {
    const response = await this.checked(
      await this.fetchImpl(`${this.baseUrl}/feedback/${feedbackId}`, {
        headers: this.headers(),
      })
    );
    return (await response.json()) as FeedbackRecord;
  }
}
