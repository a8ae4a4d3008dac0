/** TraceView model: ordered rendered rows mirroring the event stream.
 *
 * Every received event becomes exactly one row, in stream order.
 * Observation rows are collapsed by default; plans and actions are always
 * expanded. perception_started events raise the depth badge applied to the
 * rows of the nested task that follows them.
 */

import type { StreamEvent } from "./types";

export interface TraceRow {
  eventId: number;
  kind: StreamEvent["type"];
  depth: number;
  label: string;
  body: string;
  collapsible: boolean;
  collapsed: boolean;
}

export class TraceView {
  rows: TraceRow[] = [];
  private currentDepth = 0;
  private seen = new Set<number>();

  appendEvent(event: StreamEvent): TraceRow | null {
    if (this.seen.has(event.id)) return null; // render each event once
    this.seen.add(event.id);

    if (event.type === "perception_started") {
      this.currentDepth = Number(event.data["depth"] ?? this.currentDepth + 1);
    }
    const row: TraceRow = {
      eventId: event.id,
      kind: event.type,
      depth: this.depthOf(event),
      label: this.labelOf(event),
      body: this.bodyOf(event),
      collapsible: event.type === "observation",
      collapsed: event.type === "observation",
    };
    this.rows.push(row);
    if (event.type === "final_answer") this.currentDepth = 0;
    return row;
  }

  toggle(eventId: number): void {
    const row = this.rows.find((r) => r.eventId === eventId);
    if (row && row.collapsible) row.collapsed = !row.collapsed;
  }

  /** "d2" style badge text; empty at the top level. */
  badgeOf(row: TraceRow): string {
    return row.depth > 0 ? `d${row.depth}` : "";
  }

  private depthOf(event: StreamEvent): number {
    if (event.type === "perception_started") {
      return Number(event.data["depth"] ?? this.currentDepth);
    }
    if (event.type === "final_answer") return 0;
    return this.currentDepth;
  }

  private labelOf(event: StreamEvent): string {
    switch (event.type) {
      case "plan_generated":
        return "plan";
      case "action_executed":
        return `action: ${String(event.data["kind"] ?? "")}`;
      case "observation":
        return `observation (${String(event.data["source"] ?? "")})`;
      case "perception_started":
        return `perception: ${String(event.data["kind"] ?? "")}`;
      case "final_answer":
        return "final answer";
      case "error":
        return "error";
    }
  }

  private bodyOf(event: StreamEvent): string {
    const d = event.data;
    if (event.type === "plan_generated") return String(d["plan"] ?? "");
    if (event.type === "observation") return String(d["content"] ?? "");
    if (event.type === "final_answer") return String(d["answer"] ?? "");
    if (event.type === "error") return String(d["message"] ?? "");
    const { schema: _schema, ...rest } = d;
    return JSON.stringify(rest);
  }
}
