/** Minimal DOM rendering for the console. Every interactive control carries
 * an explicit role and accessible name. */

import type { ConsoleApp } from "./app";
import type { TraceRow } from "./traceView";

export function renderTrace(app: ConsoleApp, container: HTMLElement): void {
  container.textContent = "";
  for (const row of app.trace.rows) {
    container.appendChild(traceRowElement(app, row));
  }
}

function traceRowElement(app: ConsoleApp, row: TraceRow): HTMLElement {
  const el = document.createElement("div");
  el.className = `trace-row trace-${row.kind}`;
  el.style.marginLeft = `${row.depth * 16}px`;

  const badge = app.trace.badgeOf(row);
  if (badge) {
    const span = document.createElement("span");
    span.className = "depth-badge";
    span.textContent = badge;
    el.appendChild(span);
  }

  const label = document.createElement("strong");
  label.textContent = row.label;
  el.appendChild(label);

  if (row.collapsible) {
    const button = document.createElement("button");
    button.setAttribute("aria-label", `toggle ${row.label}`);
    button.textContent = row.collapsed ? "expand" : "collapse";
    button.addEventListener("click", () => {
      app.trace.toggle(row.eventId);
      renderTrace(app, el.parentElement as HTMLElement);
    });
    el.appendChild(button);
  }

  if (!row.collapsed) {
    const body = document.createElement("pre");
    body.textContent = row.body;
    el.appendChild(body);
  }
  return el;
}

export function renderChat(app: ConsoleApp, container: HTMLElement,
                           onAnnotate: (turnIndex: number) => void): void {
  container.textContent = "";
  app.turnViews().forEach((view, index) => {
    const el = document.createElement("div");
    el.className = `chat-turn chat-${view.role}`;
    el.textContent = view.content;
    if (view.annotatable) {
      const button = document.createElement("button");
      button.setAttribute("aria-label", `annotate turn ${index}`);
      button.textContent = "Annotate";
      button.addEventListener("click", () => onAnnotate(index));
      el.appendChild(button);
    }
    container.appendChild(el);
  });
  if (app.lastError) {
    const err = document.createElement("div");
    err.className = "chat-error";
    err.setAttribute("role", "alert");
    err.textContent = app.lastError;
    container.appendChild(err);
  }
}
