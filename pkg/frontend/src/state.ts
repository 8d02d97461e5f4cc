// Session view-model: a pure reducer over trajectory events. The server is
// the source of truth; the only client-side state beyond this derived view
// is the stream cursor inside the SSE reader.

import type { TrajectoryEvent } from "./sse.js";

export interface ChatMessage {
  seq: number;
  role: "user" | "assistant" | "ask_user";
  text: string;
}

export interface TodoViewItem {
  status: string;
  content: string;
}

export interface SessionView {
  sessionId: string;
  messages: ChatMessage[];
  todos: TodoViewItem[];
  todoRevision: number;
  requiresReply: boolean;
  finished: boolean;
  pendingSkillProposal: string | null;
  registeredSkills: { name: string; version: number }[];
  events: TrajectoryEvent[];
  lastSeq: number;
}

export function emptyView(sessionId: string): SessionView {
  return {
    sessionId,
    messages: [],
    todos: [],
    todoRevision: 0,
    requiresReply: false,
    finished: false,
    pendingSkillProposal: null,
    registeredSkills: [],
    events: [],
    lastSeq: -1,
  };
}

export function applyEvent(view: SessionView, event: TrajectoryEvent): SessionView {
  const next: SessionView = {
    ...view,
    messages: [...view.messages],
    todos: [...view.todos],
    registeredSkills: [...view.registeredSkills],
    events: [...view.events, event],
    lastSeq: event.seq,
  };
  const payload = event.payload ?? {};
  switch (event.kind) {
    case "user_message": {
      next.messages.push({ seq: event.seq, role: "user", text: String(payload.text ?? "") });
      next.requiresReply = false;
      break;
    }
    case "assistant_action": {
      const kind = String(payload.kind ?? "");
      if (kind === "final") {
        next.messages.push({ seq: event.seq, role: "assistant", text: String(payload.text ?? "") });
        next.requiresReply = false;
        next.finished = true;
      } else if (kind === "ask_user") {
        next.messages.push({ seq: event.seq, role: "ask_user", text: String(payload.text ?? "") });
        next.requiresReply = true;
      } else if (kind === "tool_call" && payload.tool === "register_skill") {
        const args = (payload.args ?? {}) as Record<string, unknown>;
        next.pendingSkillProposal = String(args.name ?? "unnamed skill");
      }
      break;
    }
    case "todo_write": {
      next.todos = ((payload.items ?? []) as TodoViewItem[]).map((item) => ({
        status: item.status,
        content: item.content,
      }));
      next.todoRevision = Number(payload.revision ?? view.todoRevision + 1);
      break;
    }
    case "skill_registered": {
      next.registeredSkills.push({
        name: String(payload.name ?? ""),
        version: Number(payload.version ?? 0),
      });
      next.pendingSkillProposal = null;
      break;
    }
    default:
      break;
  }
  return next;
}

export function allTodosCompleted(view: SessionView): boolean {
  return view.todos.length > 0 && view.todos.every((item) => item.status === "completed");
}

// Invariant guard: rendered event order must equal stream sequence order.
export function eventsInStreamOrder(view: SessionView): boolean {
  return view.events.every(
    (event, index) => index === 0 || view.events[index - 1].seq < event.seq,
  );
}
