/** Incremental parser for the gateway's server-sent event stream. */

import type { StreamEvent } from "./types";

/**
 * Feed arbitrary chunk boundaries; complete events are returned as they
 * close (blank line). Call flush() at end-of-stream for a trailing block.
 */
export class SseParser {
  private buffer = "";

  push(chunk: string): StreamEvent[] {
    this.buffer += chunk;
    const events: StreamEvent[] = [];
    let sep = this.buffer.indexOf("\n\n");
    while (sep >= 0) {
      const block = this.buffer.slice(0, sep);
      this.buffer = this.buffer.slice(sep + 2);
      const parsed = parseBlock(block);
      if (parsed) events.push(parsed);
      sep = this.buffer.indexOf("\n\n");
    }
    return events;
  }

  flush(): StreamEvent[] {
    const rest = this.buffer;
    this.buffer = "";
    const parsed = parseBlock(rest);
    return parsed ? [parsed] : [];
  }
}

function parseBlock(block: string): StreamEvent | null {
  const fields: Record<string, string> = {};
  for (const line of block.split("\n")) {
    const colon = line.indexOf(": ");
    if (colon < 0) continue;
    fields[line.slice(0, colon)] = line.slice(colon + 2);
  }
  if (!("event" in fields) || !("data" in fields)) return null;
  return {
    id: Number(fields["id"] ?? -1),
    type: fields["event"] as StreamEvent["type"],
    data: JSON.parse(fields["data"]),
  };
}
