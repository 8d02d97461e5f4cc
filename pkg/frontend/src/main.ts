// Browser entry point: read connection settings, mount the console.

import { createApp } from "./app.js";

function setting(key: string, prompt_text: string, fallback: string): string {
  const params = new URLSearchParams(window.location.search);
  const fromQuery = params.get(key);
  if (fromQuery) {
    window.localStorage.setItem(`codemem.${key}`, fromQuery);
    return fromQuery;
  }
  const stored = window.localStorage.getItem(`codemem.${key}`);
  if (stored) return stored;
  const entered = window.prompt(prompt_text, fallback) ?? fallback;
  window.localStorage.setItem(`codemem.${key}`, entered);
  return entered;
}

const baseUrl = setting("api", "codemem API base URL", "http://127.0.0.1:8321");
const token = setting("token", "API token (empty if auth is disabled)", "");

const root = document.getElementById("app");
if (!root) throw new Error("missing #app element");
createApp(root, { baseUrl, token: token || undefined });
