/** Chat controller: session lifecycle, streamed turns, annotation flow. */

import { annotatableTurns, AnnotationDraft } from "./annotation";
import { GatewayClient, GatewayError } from "./gateway";
import { TraceView } from "./traceView";
import type { SessionTurn, StreamEvent } from "./types";

export interface ChatTurnView {
  role: "user" | "assistant";
  content: string;
  pending: boolean;
  annotatable: boolean;
}

export class ConsoleApp {
  trace = new TraceView();
  turns: SessionTurn[] = [];
  annotationMode = false;
  lastError: string | null = null;
  private sessionId: string | null = null;

  constructor(private client: GatewayClient) {}

  async openSession(): Promise<string> {
    this.sessionId = await this.client.createSession();
    this.turns = [];
    this.trace = new TraceView();
    return this.sessionId;
  }

  get session(): string {
    if (this.sessionId === null) throw new Error("no open session");
    return this.sessionId;
  }

  /** compose -> POST -> render stream -> final answer (or inline error). */
  async send(content: string): Promise<void> {
    const optimisticIndex = this.turns.length;
    this.turns.push({
      index: optimisticIndex,
      role: "user",
      content,
      task_ref: null,
    });
    let answer = "";
    try {
      await this.client.sendMessage(this.session, content, (event: StreamEvent) => {
        this.trace.appendEvent(event);
        if (event.type === "final_answer") {
          answer = String(event.data["answer"] ?? "");
        }
      });
      this.lastError = null;
    } catch (error) {
      this.lastError =
        error instanceof GatewayError ? error.message : String(error);
      this.turns.pop(); // roll back the optimistic user turn
      return;
    }
    this.turns.push({
      index: this.turns.length,
      role: "assistant",
      content: answer,
      task_ref: null,
    });
  }

  turnViews(): ChatTurnView[] {
    const annotatable = new Set(
      annotatableTurns(this.turns, this.annotationMode).map((t) => t.index)
    );
    return this.turns.map((t) => ({
      role: t.role,
      content: t.content,
      pending: false,
      annotatable: annotatable.has(t.index),
    }));
  }

  draftFor(turnIndex: number): AnnotationDraft {
    const turn = this.turns.find((t) => t.index === turnIndex);
    if (!turn || turn.role !== "assistant") {
      throw new Error(`turn ${turnIndex} is not an annotatable assistant turn`);
    }
    return new AnnotationDraft(turn, this.turns);
  }

  async submitAnnotation(draft: AnnotationDraft): Promise<string> {
    const result = await this.client.submitFeedback(
      draft.toSubmission(this.session)
    );
    return result.feedback_id;
  }
}
