// Fetch-based server-sent-events reader. EventSource is browser-only and
// cannot send Authorization headers, so the console reads the stream off a
// plain fetch body instead; this also makes the reader testable under node.
// Reconnects resume from the last seen id (no gaps, no duplicates).

export interface TrajectoryEvent {
  seq: number;
  kind: string;
  at: string;
  payload: Record<string, unknown>;
}

export type ConnectionState = "connecting" | "open" | "reconnecting" | "closed";

export interface StreamHandle {
  close(): void;
}

export interface StreamCallbacks {
  onEvent(event: TrajectoryEvent): void;
  onState?(state: ConnectionState): void;
}

interface StreamOptions {
  headers?: Record<string, string>;
  retryDelayMs?: number;
  lastEventId?: number;
}

function parseMessage(block: string): TrajectoryEvent | null {
  let data = "";
  for (const line of block.split("\n")) {
    if (line.startsWith("data: ")) data += line.slice(6);
  }
  if (!data) return null;
  try {
    return JSON.parse(data) as TrajectoryEvent;
  } catch {
    return null;
  }
}

export function openEventStream(
  url: string,
  callbacks: StreamCallbacks,
  options: StreamOptions = {},
): StreamHandle {
  let closed = false;
  let lastId = options.lastEventId ?? -1;
  const retryDelay = options.retryDelayMs ?? 500;

  const setState = (state: ConnectionState) => callbacks.onState?.(state);

  async function readOnce(): Promise<void> {
    const separator = url.includes("?") ? "&" : "?";
    const target = lastId >= 0 ? `${url}${separator}after=${lastId}` : url;
    const response = await fetch(target, {
      headers: { Accept: "text/event-stream", ...(options.headers ?? {}) },
    });
    if (!response.ok || !response.body) {
      throw new Error(`event stream failed: ${response.status}`);
    }
    setState("open");
    const reader = response.body.getReader();
    const decoder = new TextDecoder();
    let buffer = "";
    while (!closed) {
      const { value, done } = await reader.read();
      if (done) break;
      buffer += decoder.decode(value, { stream: true });
      let index;
      while ((index = buffer.indexOf("\n\n")) !== -1) {
        const block = buffer.slice(0, index);
        buffer = buffer.slice(index + 2);
        const event = parseMessage(block);
        if (event && event.seq > lastId) {
          lastId = event.seq;
          callbacks.onEvent(event);
        }
      }
    }
    reader.cancel().catch(() => undefined);
  }

  (async () => {
    setState("connecting");
    while (!closed) {
      try {
        await readOnce();
        if (closed) break;
        setState("reconnecting");
      } catch {
        if (closed) break;
        setState("reconnecting");
      }
      await new Promise((resolve) => setTimeout(resolve, retryDelay));
    }
    setState("closed");
  })();

  return {
    close() {
      closed = true;
    },
  };
}
