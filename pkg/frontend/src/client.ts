// WebSocket transport. Owns the socket, the per-connection seq counter and
// the reply timers; everything it learns goes out through the handler
// callbacks so the fold in viewmodel.ts stays the single state holder.

import { encodeClientMessage, parseServerMessage, ProtocolError } from "./protocol.js";
import type { ClientMessage, InjectKind, ServerMessage } from "./protocol.js";
import type { ConnStatus } from "./render.js";

export type LiveHandlers = {
  /** A parsed frame from the service, in arrival order. */
  onMessage: (message: ServerMessage) => void;
  /** A request of ours went out; fold it so the form disables until the reply. */
  onSent: (message: ClientMessage) => void;
  /** Connection phase changed. A fresh "open" means a fresh session stream. */
  onStatus: (status: ConnStatus) => void;
  /** A sent request got no reply within the wait window. */
  onTimeout: (seq: number) => void;
  /** A frame arrived that does not fit the protocol. */
  onFault: (reason: string) => void;
};

export type LiveSession = {
  /** Returns false when not connected; nothing is sent then. */
  sendInject: (kind: InjectKind, payload: string, target?: string) => boolean;
  sendSetSpeed: (rate: number) => boolean;
  close: () => void;
};

const REPLY_WAIT_MS = 5000;
const RETRY_START_MS = 1000;
const RETRY_CAP_MS = 8000;

export function connectLive(
  url: string,
  handlers: LiveHandlers,
  replyWaitMs: number = REPLY_WAIT_MS,
): LiveSession {
  let socket: WebSocket | null = null;
  let closed = false;
  let retryMs = RETRY_START_MS;
  let nextSeq = 1;
  const replyTimers = new Map<number, ReturnType<typeof setTimeout>>();

  const clearTimers = () => {
    for (const timer of replyTimers.values()) clearTimeout(timer);
    replyTimers.clear();
  };

  const open = () => {
    socket = new WebSocket(url);

    socket.onopen = () => {
      retryMs = RETRY_START_MS;
      // The service numbers each connection from scratch, and so do we.
      nextSeq = 1;
      handlers.onStatus({ phase: "open", detail: null });
    };

    socket.onmessage = (event) => {
      if (typeof event.data !== "string") {
        handlers.onFault("binary frame from the service");
        return;
      }
      let message: ServerMessage;
      try {
        message = parseServerMessage(event.data);
      } catch (err) {
        if (err instanceof ProtocolError) {
          handlers.onFault(err.message);
          return;
        }
        throw err;
      }
      if (message.replyTo !== undefined) {
        const timer = replyTimers.get(message.replyTo);
        if (timer !== undefined) {
          clearTimeout(timer);
          replyTimers.delete(message.replyTo);
        }
      }
      handlers.onMessage(message);
    };

    socket.onclose = () => {
      clearTimers();
      if (closed) return;
      handlers.onStatus({
        phase: "reconnecting",
        detail: `connection lost; retrying in ${Math.round(retryMs / 1000)}s`,
      });
      setTimeout(open, retryMs);
      retryMs = Math.min(retryMs * 2, RETRY_CAP_MS);
    };

    socket.onerror = () => {
      // onclose follows and owns the retry.
    };
  };

  const send = (message: ClientMessage): boolean => {
    if (socket === null || socket.readyState !== WebSocket.OPEN) return false;
    socket.send(encodeClientMessage(message));
    handlers.onSent(message);
    const timer = setTimeout(() => {
      replyTimers.delete(message.seq);
      handlers.onTimeout(message.seq);
    }, replyWaitMs);
    replyTimers.set(message.seq, timer);
    return true;
  };

  handlers.onStatus({ phase: "connecting", detail: null });
  open();

  return {
    sendInject: (kind, payload, target) => {
      const body: { kind: InjectKind; payload: string; target?: string } = { kind, payload };
      if (target !== undefined && target !== "") body.target = target;
      return send({ type: "inject", seq: nextSeq++, body });
    },
    sendSetSpeed: (rate) => send({ type: "setSpeed", seq: nextSeq++, body: { rate } }),
    close: () => {
      closed = true;
      clearTimers();
      socket?.close();
    },
  };
}
