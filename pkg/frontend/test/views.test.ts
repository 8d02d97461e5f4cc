// DOM-level view tests in a simulated browser document (happy-dom Window).

import { Window } from "happy-dom";
import { beforeEach, describe, expect, it } from "vitest";

import type { RunSkillResult } from "../src/api.js";
import { applyEvent, emptyView } from "../src/state.js";
import { renderChat, renderSkillRunResult, renderTodos } from "../src/views.js";

let window: Window;
let container: HTMLElement;

beforeEach(() => {
  window = new Window();
  container = window.document.createElement("div") as unknown as HTMLElement;
  window.document.body.appendChild(container as never);
});

describe("chat view", () => {
  it("highlights ask_user messages and shows the reply hint", () => {
    let view = emptyView("s1");
    view = applyEvent(view, {
      seq: 0,
      kind: "assistant_action",
      at: "",
      payload: { kind: "ask_user", text: "Would you like me to add a memory?" },
    });
    renderChat(container, view);
    const asked = container.querySelector(".message.ask_user");
    expect(asked?.textContent).toContain("Would you like me to add a memory?");
    expect(container.querySelector(".reply-hint")).not.toBeNull();
  });
});

describe("todo panel", () => {
  it("renders one badge per item with its status", () => {
    let view = emptyView("s1");
    view = applyEvent(view, {
      seq: 0,
      kind: "todo_write",
      at: "",
      payload: {
        revision: 2,
        items: [
          { status: "completed", content: "Load functions" },
          { status: "in_progress", content: "Fetch emails" },
          { status: "pending", content: "Upload attachments" },
        ],
      },
    });
    renderTodos(container, view);
    const badges = [...container.querySelectorAll(".todo .badge")].map(
      (node) => node.textContent,
    );
    expect(badges).toEqual(["completed", "in_progress", "pending"]);
    expect(container.querySelector("h3")?.textContent).toContain("revision 2");
  });
});

describe("run-skill result card", () => {
  it("summarizes the upload outcome", () => {
    const result: RunSkillResult = {
      session_id: "s2",
      execution_id: "x1",
      exit_status: "success",
      stdout_tail: '{"uploaded": 4}\n',
      bridge_call_count: 9,
      drive: {
        "Email Attachments December/Acme/acme_invoice.pdf": { size: 80, sha256: "aa" },
        "Email Attachments December/Globex/globex_report.xlsx": { size: 55, sha256: "bb" },
      },
    };
    renderSkillRunResult(container, result);
    const card = container.querySelector(".result-card.success");
    expect(card).not.toBeNull();
    expect(card?.querySelector(".summary")?.textContent).toBe(
      "2 files in drive, 9 tool calls",
    );
    expect(card?.querySelectorAll(".drive-path")).toHaveLength(2);
  });
});
