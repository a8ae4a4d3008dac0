/** Annotation mode: per-turn drafts that become feedback submissions. */

import type { FeedbackSubmission, SessionTurn } from "./types";

export class AnnotationDraft {
  readonly turnIndex: number;
  readonly originalMessages: Array<{ role: string; content: string }>;
  editedResponse: string;
  suggestion: string;
  private readonly initialResponse: string;

  constructor(turn: SessionTurn, history: SessionTurn[]) {
    this.turnIndex = turn.index;
    this.originalMessages = history
      .filter((t) => t.index <= turn.index)
      .map((t) => ({ role: t.role, content: t.content }));
    this.initialResponse = turn.content;
    this.editedResponse = turn.content;
    this.suggestion = "";
  }

  get dirty(): boolean {
    return (
      this.editedResponse !== this.initialResponse ||
      this.suggestion.trim() !== ""
    );
  }

  /** Submit is blocked client-side until something actually changed. */
  get canSubmit(): boolean {
    return this.dirty;
  }

  toSubmission(sessionId: string): FeedbackSubmission {
    if (!this.canSubmit) {
      throw new Error("nothing to submit: the draft has no changes");
    }
    const submission: FeedbackSubmission = {
      session_id: sessionId,
      turn_index: this.turnIndex,
      original_messages: this.originalMessages,
    };
    if (this.editedResponse !== this.initialResponse) {
      submission.edited_response = this.editedResponse;
    }
    if (this.suggestion.trim() !== "") {
      submission.suggestion = this.suggestion;
    }
    return submission;
  }
}

/** Which turns show an Annotate button: assistant turns, annotation mode on. */
export function annotatableTurns(
  turns: SessionTurn[],
  annotationMode: boolean
): SessionTurn[] {
  if (!annotationMode) return [];
  return turns.filter((t) => t.role === "assistant");
}
