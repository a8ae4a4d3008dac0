/** In-memory mock of the gateway's REST + SSE contract for UI tests. */

import type { FetchLike } from "../src/gateway";
import type { FeedbackRecord, StreamEvent } from "../src/types";

export interface MockGatewayState {
  sessions: Map<string, { user: string }>;
  feedback: Map<string, FeedbackRecord>;
  scriptedEvents: Array<Omit<StreamEvent, "id">>;
}

export function makeMockGateway(token = "tok-test"): {
  fetchImpl: FetchLike;
  state: MockGatewayState;
} {
  const state: MockGatewayState = {
    sessions: new Map(),
    feedback: new Map(),
    scriptedEvents: [],
  };
  let counter = 0;

  const fetchImpl: FetchLike = async (url, init = {}) => {
    const auth = headerOf(init, "Authorization");
    if (auth !== `Bearer ${token}`) {
      return json(401, { detail: "unknown token" });
    }
    const { pathname } = new URL(url, "http://mock");
    const method = init.method ?? "GET";

    if (method === "POST" && pathname === "/sessions") {
      const id = `sess-${++counter}`;
      state.sessions.set(id, { user: token });
      return json(200, { session_id: id });
    }

    const message = pathname.match(/^\/sessions\/([^/]+)\/messages$/);
    if (method === "POST" && message) {
      if (!state.sessions.has(message[1])) return json(404, { detail: "no such session" });
      const body = state.scriptedEvents
        .map((event, id) =>
          `id: ${id}\nevent: ${event.type}\ndata: ${JSON.stringify(event.data)}\n\n`
        )
        .join("");
      return new Response(body, {
        status: 200,
        headers: {
          "Content-Type": "text/event-stream",
          "X-Task-Id": `task-${++counter}`,
        },
      });
    }

    if (method === "POST" && pathname === "/feedback") {
      const payload = JSON.parse(String(init.body));
      if (!state.sessions.has(payload.session_id)) {
        return json(404, { detail: "no such session" });
      }
      if (payload.edited_response == null && payload.suggestion == null) {
        return json(422, { detail: "edited_response or suggestion required" });
      }
      const id = `fb-${++counter}`;
      state.feedback.set(id, {
        feedback_id: id,
        user_id: token,
        session_id: payload.session_id,
        turn_index: payload.turn_index,
        original_messages: payload.original_messages,
        edited_response: payload.edited_response ?? null,
        suggestion: payload.suggestion ?? null,
        created_at: Date.now() / 1000,
      });
      return json(201, { feedback_id: id });
    }

    const feedback = pathname.match(/^\/feedback\/([^/]+)$/);
    if (method === "GET" && feedback) {
      const record = state.feedback.get(feedback[1]);
      return record ? json(200, record) : json(404, { detail: "no such feedback" });
    }

    return json(404, { detail: `unhandled ${method} ${pathname}` });
  };

  return { fetchImpl, state };
}

function headerOf(init: RequestInit, name: string): string | null {
  const headers = (init.headers ?? {}) as Record<string, string>;
  for (const key of Object.keys(headers)) {
    if (key.toLowerCase() === name.toLowerCase()) return headers[key];
  }
  return null;
}

function json(status: number, body: unknown): Response {
  return new Response(JSON.stringify(body), {
    status,
    headers: { "Content-Type": "application/json" },
  });
}
