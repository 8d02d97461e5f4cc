// DOM renderers. Each render function owns one container and redraws it
// from the view-model; no incremental diffing at this scale.

import type { RunSkillResult, SkillMeta } from "./api.js";
import type { TrajectoryEvent } from "./sse.js";
import type { SessionView } from "./state.js";

function el<K extends keyof HTMLElementTagNameMap>(
  doc: Document,
  tag: K,
  className?: string,
  text?: string,
): HTMLElementTagNameMap[K] {
  const node = doc.createElement(tag);
  if (className) node.className = className;
  if (text !== undefined) node.textContent = text;
  return node;
}

export function renderChat(container: HTMLElement, view: SessionView): void {
  const doc = container.ownerDocument;
  container.replaceChildren();
  for (const message of view.messages) {
    const row = el(doc, "div", `message ${message.role}`);
    row.dataset.seq = String(message.seq);
    const who = message.role === "user" ? "you" : message.role === "ask_user" ? "agent asks" : "agent";
    row.append(el(doc, "span", "who", who), el(doc, "span", "text", message.text));
    container.append(row);
  }
  if (view.requiresReply) {
    container.append(el(doc, "div", "reply-hint", "The agent is waiting for your reply."));
  }
}

export function renderTodos(container: HTMLElement, view: SessionView): void {
  const doc = container.ownerDocument;
  container.replaceChildren();
  container.append(el(doc, "h3", undefined, `Plan (revision ${view.todoRevision})`));
  if (!view.todos.length) {
    container.append(el(doc, "p", "empty", "No plan yet."));
    return;
  }
  const list = el(doc, "ul", "todo-list");
  for (const item of view.todos) {
    const li = el(doc, "li", `todo ${item.status}`);
    li.append(el(doc, "span", "badge", item.status), el(doc, "span", "content", item.content));
    list.append(li);
  }
  container.append(list);
}

export function renderSkills(
  container: HTMLElement,
  skills: SkillMeta[],
  onShow: (name: string) => void,
): void {
  const doc = container.ownerDocument;
  container.replaceChildren();
  if (!skills.length) {
    container.append(el(doc, "p", "empty", "No skills registered yet."));
    return;
  }
  const list = el(doc, "ul", "skill-list");
  for (const skill of skills) {
    const li = el(doc, "li", "skill");
    const title = el(doc, "button", "skill-name", `${skill.name} v${skill.version}`);
    title.type = "button";
    title.addEventListener("click", () => onShow(skill.name));
    li.append(title, el(doc, "span", "description", skill.description));
    list.append(li);
  }
  container.append(list);
}

export function renderSkillRunResult(container: HTMLElement, result: RunSkillResult): void {
  const doc = container.ownerDocument;
  container.replaceChildren();
  const card = el(doc, "div", `result-card ${result.exit_status}`);
  card.append(el(doc, "h4", undefined, `run: ${result.exit_status}`));
  const paths = Object.keys(result.drive).sort();
  card.append(
    el(
      doc,
      "p",
      "summary",
      `${paths.length} files in drive, ${result.bridge_call_count} tool calls`,
    ),
  );
  const list = el(doc, "ul", "drive-list");
  for (const path of paths) {
    list.append(el(doc, "li", "drive-path", `${path} (${result.drive[path].size} bytes)`));
  }
  card.append(list);
  if (result.stdout_tail.trim()) {
    card.append(el(doc, "pre", "stdout", result.stdout_tail));
  }
  container.append(card);
}

export function renderTrajectory(container: HTMLElement, events: TrajectoryEvent[]): void {
  const doc = container.ownerDocument;
  container.replaceChildren();
  for (const event of events) {
    const row = el(doc, "div", `event ${event.kind}`);
    row.dataset.seq = String(event.seq);
    row.append(el(doc, "span", "kind", `#${event.seq} ${event.kind}`));
    if (event.kind === "execution_result") {
      const source = String(event.payload.source ?? "");
      if (source) row.append(el(doc, "pre", "code", source));
      row.append(el(doc, "pre", "stdout", String(event.payload.stdout_tail ?? "")));
      row.append(el(doc, "span", "status", String(event.payload.exit_status ?? "")));
    } else if (event.kind === "assistant_action" || event.kind === "tool_result") {
      row.append(el(doc, "pre", "text", String(event.payload.visible_text ?? "")));
    } else if (event.kind === "invocation") {
      row.append(
        el(doc, "span", "text", `${event.payload.tool} ok=${String(event.payload.ok)}`),
      );
    }
    container.append(row);
  }
}
