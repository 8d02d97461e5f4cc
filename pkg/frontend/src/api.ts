// Typed client for the codemem HTTP API. Every request is built from the
// ENDPOINTS table below; the contract test checks that table against the
// server's documented endpoint list, so the console cannot quietly grow a
// dependency on an undocumented route.

export interface ApiConfig {
  baseUrl: string;
  token?: string;
}

export const ENDPOINTS = {
  health: ["GET", "/healthz"],
  importManifest: ["POST", "/registry/manifests"],
  registrySearch: ["GET", "/registry/search"],
  listSkills: ["GET", "/skills"],
  getSkill: ["GET", "/skills/{name}"],
  registerSkill: ["POST", "/skills"],
  runSkill: ["POST", "/skills/{name}/run"],
  createSession: ["POST", "/sessions"],
  postMessage: ["POST", "/sessions/{id}/messages"],
  events: ["GET", "/sessions/{id}/events"],
  getTodos: ["GET", "/sessions/{id}/todos"],
  putTodos: ["PUT", "/sessions/{id}/todos"],
  metrics: ["GET", "/sessions/{id}/metrics"],
  drive: ["GET", "/sessions/{id}/fixture/drive"],
} as const;

export type EndpointName = keyof typeof ENDPOINTS;

export interface SessionInfo {
  session_id: string;
  status: string;
  loaded_tools: string[];
}

export interface TodoItem {
  status: string;
  content: string;
}

export interface SkillMeta {
  name: string;
  version: number;
  description: string;
  signature: string;
  content_hash: string;
  deprecated: boolean;
}

export interface SkillDetail extends SkillMeta {
  source: string;
}

export interface RunSkillResult {
  session_id: string;
  execution_id: string;
  exit_status: string;
  stdout_tail: string;
  bridge_call_count: number;
  drive: Record<string, { size: number; sha256: string }>;
}

export function buildPath(name: EndpointName, params: Record<string, string> = {}): string {
  let path: string = ENDPOINTS[name][1];
  for (const [key, value] of Object.entries(params)) {
    path = path.replace(`{${key}}`, encodeURIComponent(value));
  }
  return path;
}

export class ApiClient {
  constructor(readonly config: ApiConfig) {}

  headers(): Record<string, string> {
    const headers: Record<string, string> = { "Content-Type": "application/json" };
    if (this.config.token) headers["Authorization"] = `Bearer ${this.config.token}`;
    return headers;
  }

  url(name: EndpointName, params: Record<string, string> = {}, query?: Record<string, string>): string {
    const path = buildPath(name, params);
    const qs = query ? `?${new URLSearchParams(query)}` : "";
    return `${this.config.baseUrl}${path}${qs}`;
  }

  private async request<T>(
    name: EndpointName,
    params: Record<string, string> = {},
    options: { query?: Record<string, string>; body?: unknown } = {},
  ): Promise<T> {
    const [method] = ENDPOINTS[name];
    const response = await fetch(this.url(name, params, options.query), {
      method,
      headers: this.headers(),
      body: options.body === undefined ? undefined : JSON.stringify(options.body),
    });
    if (!response.ok) {
      const detail = await response.text().catch(() => "");
      throw new Error(`${method} ${buildPath(name, params)} -> ${response.status} ${detail}`);
    }
    return (await response.json()) as T;
  }

  health(): Promise<{ status: string; version: string }> {
    return this.request("health");
  }

  createSession(body: {
    scenario?: string;
    driver?: string;
    session_id?: string;
  }): Promise<SessionInfo> {
    return this.request("createSession", {}, { body });
  }

  postMessage(sessionId: string, text: string): Promise<{ status: string; events_appended: number }> {
    return this.request("postMessage", { id: sessionId }, { body: { text } });
  }

  getTodos(sessionId: string): Promise<{ revision: number; items: TodoItem[] }> {
    return this.request("getTodos", { id: sessionId });
  }

  putTodos(sessionId: string, items: TodoItem[]): Promise<{ revision: number; items: TodoItem[] }> {
    return this.request("putTodos", { id: sessionId }, { body: { items } });
  }

  listSkills(): Promise<{ skills: SkillMeta[] }> {
    return this.request("listSkills");
  }

  getSkill(name: string, version?: number): Promise<SkillDetail> {
    const query = version === undefined ? undefined : { version: String(version) };
    return this.request("getSkill", { name }, { query });
  }

  runSkill(name: string, args: Record<string, unknown>, sessionId?: string): Promise<RunSkillResult> {
    const body: Record<string, unknown> = { arguments: args };
    if (sessionId) body.session_id = sessionId;
    return this.request("runSkill", { name }, { body });
  }

  registrySearch(q: string, k = 5): Promise<{ results: { name: string; summary: string }[] }> {
    return this.request("registrySearch", {}, { query: { q, k: String(k) } });
  }

  metrics(sessionId: string, mode: "react" | "codemem" = "codemem"): Promise<unknown> {
    return this.request("metrics", { id: sessionId }, { query: { mode } });
  }

  drive(sessionId: string): Promise<{ files: Record<string, { size: number; sha256: string }> }> {
    return this.request("drive", { id: sessionId });
  }

  eventStreamUrl(sessionId: string, after?: number): string {
    const query: Record<string, string> = {};
    if (after !== undefined) query.after = String(after);
    return this.url("events", { id: sessionId }, Object.keys(query).length ? query : undefined);
  }
}
