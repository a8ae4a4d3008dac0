/** Wire types shared with the gateway (event schema events/v1). */

export const EVENT_SCHEMA = "events/v1";

export type EventType =
  | "plan_generated"
  | "action_executed"
  | "observation"
  | "perception_started"
  | "final_answer"
  | "error";

export interface StreamEvent {
  id: number;
  type: EventType;
  data: Record<string, unknown> & { schema: string };
}

export interface SessionTurn {
  index: number;
  role: "user" | "assistant";
  content: string;
  task_ref: string | null;
}

export interface SessionDetail {
  session_id: string;
  created_at: number;
  turns: SessionTurn[];
}

export interface FeedbackRecord {
  feedback_id: string;
  user_id: string;
  session_id: string;
  turn_index: number;
  original_messages: Array<{ role: string; content: string }>;
  edited_response: string | null;
  suggestion: string | null;
  created_at: number;
}

export interface FeedbackSubmission {
  session_id: string;
  turn_index: number;
  original_messages: Array<{ role: string; content: string }>;
  edited_response?: string;
  suggestion?: string;
}
