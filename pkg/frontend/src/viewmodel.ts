// The client holds no playback logic of its own: the view is a pure fold
// over the message stream, so replaying a recorded log reproduces the
// exact screen state a live client would have ended on.

import type {
  ClientMessage,
  ServerMessage,
  SessionConfig,
  SessionMode,
} from "./protocol.js";

export type LaneStatus = "open" | "closed";

export type BranchLane = {
  branchId: string;
  intentKind: string;
  topic: string;
  /** Experience time on the main lane the branch hangs from. */
  attachExp: number;
  openedWall: number;
  /** Main rate in force when the branch opened; the close rule needs it. */
  pausedRate: number | null;
  status: LaneStatus;
  resumeAt: number | null;
  closedWall: number | null;
};

export type PendingRequest = {
  seq: number;
  kind: ClientMessage["type"];
  /** Requested rate, kept until the setSpeed reply confirms it. */
  rate?: number;
};

export type ViewState = {
  version: string | null;
  config: SessionConfig | null;
  /** Null until the first state frame arrives. */
  mode: SessionMode | null;
  /** Latest state.expTime; no other message moves the playhead. */
  playhead: number | null;
  wallTime: number;
  activeEvents: readonly string[];
  /** Current main-lane rate as derivable from the stream. */
  rate: number | null;
  lanes: readonly BranchLane[];
  /** Resume targets seen so far; these are the keyframe anchors the stream reveals. */
  resumeMarks: readonly number[];
  /** Largest experience time seen so far; the timeline ruler spans [0, extent]. */
  extent: number;
  endedAt: { wallTime: number; expTime: number } | null;
  lastError: { code: string; message: string; replyTo: number | null } | null;
  /** Stream-integrity trouble: gaps, timeouts, frames that make no sense. */
  warning: string | null;
  pending: readonly PendingRequest[];
  lastSeq: number | null;
};

export function initialView(): ViewState {
  return {
    version: null,
    config: null,
    mode: null,
    playhead: null,
    wallTime: 0,
    activeEvents: [],
    rate: null,
    lanes: [],
    resumeMarks: [],
    extent: 0,
    endedAt: null,
    lastError: null,
    warning: null,
    pending: [],
    lastSeq: null,
  };
}

// -- fold over incoming frames -----------------------------------------------

function resolveReply(view: ViewState, replyTo: number | undefined, confirmed: boolean): ViewState {
  if (replyTo === undefined) return view;
  const entry = view.pending.find((p) => p.seq === replyTo);
  if (entry === undefined) return view;
  const pending = view.pending.filter((p) => p.seq !== replyTo);
  // A state reply means the request took effect; only then does a speed
  // request become the new rate.
  if (confirmed && entry.kind === "setSpeed" && entry.rate !== undefined) {
    return { ...view, pending, rate: entry.rate };
  }
  return { ...view, pending };
}

function closeLane(view: ViewState, branchId: string, resumeAt: number, wall: number): ViewState {
  const lane = view.lanes.find((l) => l.branchId === branchId);
  if (lane === undefined) {
    return { ...view, warning: `branchClosed for unknown branch ${branchId}` };
  }
  const lanes = view.lanes.map((l) =>
    l.branchId === branchId
      ? { ...l, status: "closed" as const, resumeAt, closedWall: wall }
      : l,
  );
  let rate = view.rate;
  if (lane.intentKind === "question" && lane.pausedRate !== null && view.config !== null) {
    rate = lane.pausedRate * view.config.postBranchSlowdown;
  }
  const resumeMarks = view.resumeMarks.includes(resumeAt)
    ? view.resumeMarks
    : [...view.resumeMarks, resumeAt].sort((a, b) => a - b);
  return {
    ...view,
    lanes,
    rate,
    resumeMarks,
    wallTime: Math.max(view.wallTime, wall),
    extent: Math.max(view.extent, resumeAt),
  };
}

export function applyMessage(view: ViewState, message: ServerMessage): ViewState {
  let next: ViewState = { ...view, lastSeq: message.seq };
  if (view.lastSeq !== null && message.seq !== view.lastSeq + 1) {
    next = {
      ...next,
      warning: `frame ${message.seq} arrived after ${view.lastSeq}; the stream skipped`,
    };
  }
  switch (message.type) {
    case "hello": {
      const config = message.body.sessionConfig;
      return {
        ...next,
        version: message.body.maredVersion,
        config,
        rate: config.baseRate,
      };
    }
    case "state": {
      next = resolveReply(next, message.replyTo, true);
      const body = message.body;
      return {
        ...next,
        mode: body.mode,
        playhead: body.expTime,
        wallTime: body.wallTime,
        activeEvents: body.activeEvents,
        extent: Math.max(next.extent, body.expTime),
      };
    }
    case "branchOpened": {
      const body = message.body;
      const lane: BranchLane = {
        branchId: body.branchId,
        intentKind: body.intent.kind,
        topic: body.intent.topic,
        attachExp: body.parentExpTime,
        openedWall: body.wallTime,
        pausedRate: next.rate,
        status: "open",
        resumeAt: null,
        closedWall: null,
      };
      return {
        ...next,
        lanes: [...next.lanes, lane],
        wallTime: Math.max(next.wallTime, body.wallTime),
        extent: Math.max(next.extent, body.parentExpTime),
      };
    }
    case "branchClosed":
      return closeLane(next, message.body.branchId, message.body.resumeAt, message.body.wallTime);
    case "ended": {
      const body = message.body;
      return {
        ...next,
        endedAt: { wallTime: body.wallTime, expTime: body.expTime },
        wallTime: Math.max(next.wallTime, body.wallTime),
        extent: Math.max(next.extent, body.expTime),
      };
    }
    case "error":
      next = resolveReply(next, message.replyTo, false);
      return {
        ...next,
        lastError: {
          code: message.body.code,
          message: message.body.message,
          replyTo: message.replyTo ?? null,
        },
      };
  }
}

// -- local events ------------------------------------------------------------

/** Record a request we sent; its seq stays pending until a reply resolves it. */
export function applySent(view: ViewState, message: ClientMessage): ViewState {
  const entry: PendingRequest = { seq: message.seq, kind: message.type };
  if (message.type === "setSpeed") entry.rate = message.body.rate;
  return { ...view, pending: [...view.pending, entry] };
}

/** Surface purely local trouble (nothing sent, bad frame) in the banner slot. */
export function applyNote(view: ViewState, note: string): ViewState {
  return { ...view, warning: note };
}

/** Give up on a request that never got its reply; the form goes live again. */
export function applyTimeout(view: ViewState, seq: number): ViewState {
  if (!view.pending.some((p) => p.seq === seq)) return view;
  return {
    ...view,
    pending: view.pending.filter((p) => p.seq !== seq),
    warning: `request ${seq} got no reply within the wait window`,
  };
}
