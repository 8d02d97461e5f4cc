// Console assembly: chat center, todo rail, skills/trajectory tabs. All
// state is derived from the event stream; user input goes through plain
// POSTs and comes back as streamed events.

import { ApiClient, type ApiConfig, type RunSkillResult } from "./api.js";
import { openEventStream, type ConnectionState, type StreamHandle } from "./sse.js";
import { applyEvent, emptyView, type SessionView } from "./state.js";
import {
  renderChat,
  renderSkillRunResult,
  renderSkills,
  renderTodos,
  renderTrajectory,
} from "./views.js";

export interface App {
  api: ApiClient;
  view: SessionView | null;
  root: HTMLElement;
  newSession(options: { scenario?: string; driver?: string }): Promise<string>;
  sendMessage(text: string): Promise<void>;
  refreshSkills(): Promise<void>;
  runSkill(name: string, args: Record<string, unknown>): Promise<RunSkillResult>;
  close(): void;
}

export function createApp(root: HTMLElement, config: ApiConfig): App {
  const api = new ApiClient(config);
  let stream: StreamHandle | null = null;

  root.innerHTML = `
    <div id="banner" class="banner hidden"></div>
    <header>
      <form id="session-form">
        <input id="driver-input" placeholder="driver (e.g. replay:/path/trace.jsonl)" />
        <select id="scenario-input"><option value="builtin">builtin scenario</option>
          <option value="">no fixture</option></select>
        <button id="new-session" type="submit">new session</button>
      </form>
      <span id="session-label"></span>
    </header>
    <main>
      <section id="chat-pane">
        <div id="chat"></div>
        <form id="chat-form">
          <input id="chat-input" placeholder="message the agent" autocomplete="off" />
          <button id="chat-send" type="submit">send</button>
        </form>
      </section>
      <aside id="todo-panel"></aside>
    </main>
    <nav id="tabs">
      <button data-tab="skills" type="button">skills</button>
      <button data-tab="trajectory" type="button">trajectory</button>
    </nav>
    <section id="skills-tab" class="tab hidden">
      <div id="skills-list"></div>
      <form id="run-skill-form">
        <input id="run-skill-name" placeholder="skill name" />
        <input id="run-skill-args" placeholder='args JSON, e.g. {"days_back": 15}' />
        <button id="run-skill-button" type="submit">run skill</button>
      </form>
      <div id="skill-run-result"></div>
      <pre id="skill-source" class="hidden"></pre>
    </section>
    <section id="trajectory-tab" class="tab hidden">
      <div id="trajectory"></div>
    </section>
  `;

  const $ = <T extends HTMLElement>(selector: string): T => {
    const node = root.querySelector(selector);
    if (!node) throw new Error(`missing element ${selector}`);
    return node as T;
  };

  const chatInput = $<HTMLInputElement>("#chat-input");
  const banner = $<HTMLDivElement>("#banner");

  const app: App = {
    api,
    view: null,
    root,

    async newSession(options) {
      stream?.close();
      const info = await api.createSession({
        scenario: options.scenario ?? "builtin",
        driver: options.driver,
      });
      app.view = emptyView(info.session_id);
      $("#session-label").textContent = `session ${info.session_id}`;
      stream = openEventStream(
        api.eventStreamUrl(info.session_id),
        {
          onEvent(event) {
            if (!app.view) return;
            app.view = applyEvent(app.view, event);
            redraw();
          },
          onState(state: ConnectionState) {
            banner.textContent =
              state === "open" ? "" : `connection: ${state} (will resume automatically)`;
            banner.classList.toggle("hidden", state === "open");
          },
        },
        { headers: api.headers() },
      );
      redraw();
      return info.session_id;
    },

    async sendMessage(text) {
      if (!app.view) throw new Error("no session");
      await api.postMessage(app.view.sessionId, text);
    },

    async refreshSkills() {
      const { skills } = await api.listSkills();
      renderSkills($("#skills-list"), skills, async (name) => {
        const detail = await api.getSkill(name);
        const source = $("#skill-source");
        source.textContent = detail.source;
        source.classList.remove("hidden");
      });
    },

    async runSkill(name, args) {
      const result = await api.runSkill(name, args);
      renderSkillRunResult($("#skill-run-result"), result);
      return result;
    },

    close() {
      stream?.close();
    },
  };

  function redraw(): void {
    if (!app.view) return;
    renderChat($("#chat"), app.view);
    renderTodos($("#todo-panel"), app.view);
    renderTrajectory($("#trajectory"), app.view.events);
    chatInput.classList.toggle("reply-required", app.view.requiresReply);
    if (app.view.requiresReply) chatInput.focus();
  }

  $("#session-form").addEventListener("submit", (event: Event) => {
    event.preventDefault();
    const driver = $<HTMLInputElement>("#driver-input").value.trim() || undefined;
    const scenario = $<HTMLSelectElement>("#scenario-input").value || undefined;
    void app.newSession({ driver, scenario });
  });

  $("#chat-form").addEventListener("submit", (event: Event) => {
    event.preventDefault();
    const text = chatInput.value.trim();
    if (!text) return;
    chatInput.value = "";
    void app.sendMessage(text);
  });

  $("#tabs").addEventListener("click", (event: Event) => {
    const target = event.target as HTMLElement;
    const tab = target.dataset.tab;
    if (!tab) return;
    $("#skills-tab").classList.toggle("hidden", tab !== "skills");
    $("#trajectory-tab").classList.toggle("hidden", tab !== "trajectory");
    if (tab === "skills") void app.refreshSkills();
  });

  $("#run-skill-form").addEventListener("submit", (event: Event) => {
    event.preventDefault();
    const name = $<HTMLInputElement>("#run-skill-name").value.trim();
    const rawArgs = $<HTMLInputElement>("#run-skill-args").value.trim() || "{}";
    void app.runSkill(name, JSON.parse(rawArgs) as Record<string, unknown>);
  });

  return app;
}
