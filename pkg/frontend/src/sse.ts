// Server-sent-events subscription over fetch streaming, with reconnection.
// On reconnect the client sends Last-Event-ID, and all consumers merge
// idempotently by task id, so a dropped connection never duplicates points.

import type { StreamEvent } from "./types.js";

export interface SseMessage {
  id: number | null;
  event: string;
  data: StreamEvent;
}

/** Incremental text/event-stream parser; feed chunks, collect messages. */
export class SseParser {
  private buffer = "";

  push(chunk: string): SseMessage[] {
    this.buffer += chunk;
    const messages: SseMessage[] = [];
    let boundary: number;
    while ((boundary = this.buffer.indexOf("\n\n")) >= 0) {
      const block = this.buffer.slice(0, boundary);
      this.buffer = this.buffer.slice(boundary + 2);
      const message = parseBlock(block);
      if (message) messages.push(message);
    }
    return messages;
  }
}

function parseBlock(block: string): SseMessage | null {
  let id: number | null = null;
  let event = "message";
  const dataLines: string[] = [];
  for (const line of block.split("\n")) {
    if (line.startsWith(":")) continue; // comment / keep-alive
    if (line.startsWith("id: ")) id = Number(line.slice(4));
    else if (line.startsWith("event: ")) event = line.slice(7);
    else if (line.startsWith("data: ")) dataLines.push(line.slice(6));
  }
  if (dataLines.length === 0) return null;
  try {
    return { id, event, data: JSON.parse(dataLines.join("\n")) as StreamEvent };
  } catch {
    return null;
  }
}

export interface SubscribeOptions {
  onEvent: (message: SseMessage) => void;
  onClose?: (reason: "terminal" | "stopped") => void;
  lastEventId?: number;
  /** Return false to stop reconnecting (e.g. the job reached a terminal state). */
  shouldReconnect?: () => boolean;
  backoffMs?: number;
  maxBackoffMs?: number;
  fetchFn?: typeof fetch;
}

export class SseSubscription {
  lastEventId: number;
  private stopped = false;

  constructor(private url: string, private options: SubscribeOptions) {
    this.lastEventId = options.lastEventId ?? -1;
  }

  stop(): void {
    this.stopped = true;
  }

  /** Resolves when the subscription ends (terminal job or stop()). */
  async run(): Promise<void> {
    const fetchFn = this.options.fetchFn ?? fetch;
    let backoff = this.options.backoffMs ?? 200;
    const maxBackoff = this.options.maxBackoffMs ?? 5000;
    while (!this.stopped) {
      try {
        const headers: Record<string, string> = {};
        if (this.lastEventId >= 0) headers["Last-Event-ID"] = String(this.lastEventId);
        const response = await fetchFn(this.url, { headers });
        if (!response.ok || !response.body) throw new Error(`stream ${response.status}`);
        backoff = this.options.backoffMs ?? 200; // connected: reset backoff
        const reader = response.body.getReader();
        const decoder = new TextDecoder();
        const parser = new SseParser();
        for (;;) {
          const { done, value } = await reader.read();
          if (done) break;
          for (const message of parser.push(decoder.decode(value, { stream: true }))) {
            if (message.id !== null && message.id <= this.lastEventId) continue;
            if (message.id !== null) this.lastEventId = message.id;
            this.options.onEvent(message);
          }
          if (this.stopped) {
            await reader.cancel().catch(() => undefined);
            break;
          }
        }
      } catch {
        // fall through to the reconnect decision
      }
      if (this.stopped) {
        this.options.onClose?.("stopped");
        return;
      }
      if (this.options.shouldReconnect && !this.options.shouldReconnect()) {
        this.options.onClose?.("terminal");
        return;
      }
      await sleep(backoff);
      backoff = Math.min(backoff * 2, maxBackoff);
    }
    this.options.onClose?.("stopped");
  }
}

function sleep(ms: number): Promise<void> {
  return new Promise((resolve) => setTimeout(resolve, ms));
}
