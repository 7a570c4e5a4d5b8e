/**
 * Gateway connection: a thin WebSocket wrapper with automatic retry.
 *
 * The UI is stateless with respect to the simulation; reconnecting simply
 * resumes rendering from the next message. While disconnected the newest
 * click is queued and sent on reconnect (older clicks are superseded).
 */

import { ClientMsg, ServerMsg, parseServerMsg } from "./protocol.js";

export interface SocketLike {
  send(data: string): void;
  close(): void;
  onopen: ((ev?: unknown) => void) | null;
  onmessage: ((ev: { data: unknown }) => void) | null;
  onclose: ((ev?: unknown) => void) | null;
  onerror: ((ev?: unknown) => void) | null;
}

export type SocketFactory = (url: string) => SocketLike;

export interface ConnectionHooks {
  onMessage: (msg: ServerMsg) => void;
  onStatus: (status: "connecting" | "open" | "closed") => void;
  onProtocolError?: (detail: string) => void;
}

export class GatewayConnection {
  private socket: SocketLike | null = null;
  private queuedClick: ClientMsg | null = null;
  private retryMs = 500;
  private closed = false;

  constructor(
    private url: string,
    private hooks: ConnectionHooks,
    private factory: SocketFactory = (u) => new WebSocket(u) as unknown as SocketLike,
    private retry = true,
  ) {}

  connect(): void {
    this.hooks.onStatus("connecting");
    const sock = this.factory(this.url);
    this.socket = sock;
    sock.onopen = () => {
      this.retryMs = 500;
      this.hooks.onStatus("open");
      if (this.queuedClick) {
        sock.send(JSON.stringify(this.queuedClick));
        this.queuedClick = null;
      }
    };
    sock.onmessage = (ev) => {
      let raw: unknown;
      try {
        raw = JSON.parse(String(ev.data));
      } catch {
        this.hooks.onProtocolError?.("unparseable frame from gateway");
        return;
      }
      const { msg, error } = parseServerMsg(raw);
      if (msg) this.hooks.onMessage(msg);
      else this.hooks.onProtocolError?.(error ?? "unknown message");
    };
    const onGone = () => {
      if (this.socket !== sock) return;
      this.socket = null;
      this.hooks.onStatus("closed");
      if (this.retry && !this.closed) {
        setTimeout(() => this.connect(), this.retryMs);
        this.retryMs = Math.min(this.retryMs * 2, 8000);
      }
    };
    sock.onclose = onGone;
    sock.onerror = onGone;
  }

  /** Send a control message; clicks queue while disconnected, newest wins. */
  send(msg: ClientMsg): boolean {
    if (this.socket) {
      try {
        this.socket.send(JSON.stringify(msg));
        return true;
      } catch {
        // fall through to queueing
      }
    }
    if (msg.type === "click") this.queuedClick = msg;
    return false;
  }

  close(): void {
    this.closed = true;
    this.socket?.close();
    this.socket = null;
  }
}

export function gatewayUrl(loc: { search: string; hostname: string }): string {
  const params = new URLSearchParams(loc.search);
  const host = params.get("host") ?? (loc.hostname || "127.0.0.1");
  const port = params.get("port") ?? "8765";
  return `ws://${host}:${port}/ws`;
}
