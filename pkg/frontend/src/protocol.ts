// Wire protocol spoken by the session service: one JSON object per text
// frame, shaped {type, seq, body, replyTo?}. Sequence numbers count per
// direction on each connection, starting at 1, strictly increasing.

export type SessionConfig = {
  baseRate: number;
  postBranchSlowdown: number;
  resumePolicy: string;
  branchGrace: number;
  lockstep: boolean;
};

export type SessionMode = "main" | "branch" | "ended";

export type HelloBody = {
  maredVersion: string;
  sessionConfig: SessionConfig;
};

export type StateBody = {
  wallTime: number;
  expTime: number;
  mode: SessionMode;
  activeEvents: string[];
  branchId: string | null;
};

export type BranchOpenedBody = {
  branchId: string;
  intent: { kind: string; topic: string };
  parentExpTime: number;
  wallTime: number;
};

export type BranchClosedBody = {
  branchId: string;
  resumeAt: number;
  wallTime: number;
};

export type EndedBody = {
  wallTime: number;
  expTime: number;
};

export type ErrorBody = {
  code: string;
  message: string;
};

/** Everything the service may send to a client. */
export type ServerMessage =
  | { type: "hello"; seq: number; replyTo?: number; body: HelloBody }
  | { type: "state"; seq: number; replyTo?: number; body: StateBody }
  | { type: "branchOpened"; seq: number; replyTo?: number; body: BranchOpenedBody }
  | { type: "branchClosed"; seq: number; replyTo?: number; body: BranchClosedBody }
  | { type: "ended"; seq: number; replyTo?: number; body: EndedBody }
  | { type: "error"; seq: number; replyTo?: number; body: ErrorBody };

export type InjectKind = "speech" | "gesture" | "selection";

/** Everything a client may send to the service. */
export type ClientMessage =
  | {
      type: "inject";
      seq: number;
      body: { kind: InjectKind; payload: string; target?: string; wallTime?: number };
    }
  | { type: "setSpeed"; seq: number; body: { rate: number; wallTime?: number } }
  | { type: "tick"; seq: number; body: { wallTime: number } };

export class ProtocolError extends Error {}

// -- decoding ----------------------------------------------------------------

function fail(reason: string): never {
  throw new ProtocolError(reason);
}

function asRecord(value: unknown, where: string): Record<string, unknown> {
  if (typeof value !== "object" || value === null || Array.isArray(value)) {
    fail(`${where} must be an object`);
  }
  return value as Record<string, unknown>;
}

function asNumber(value: unknown, where: string): number {
  if (typeof value !== "number" || !Number.isFinite(value)) {
    fail(`${where} must be a finite number`);
  }
  return value;
}

function asString(value: unknown, where: string): string {
  if (typeof value !== "string") fail(`${where} must be a string`);
  return value;
}

function asBoolean(value: unknown, where: string): boolean {
  if (typeof value !== "boolean") fail(`${where} must be a boolean`);
  return value;
}

function asMode(value: unknown): SessionMode {
  if (value !== "main" && value !== "branch" && value !== "ended") {
    fail(`unknown session mode ${JSON.stringify(value)}`);
  }
  return value;
}

function decodeConfig(value: unknown): SessionConfig {
  const raw = asRecord(value, "sessionConfig");
  return {
    baseRate: asNumber(raw.baseRate, "sessionConfig.baseRate"),
    postBranchSlowdown: asNumber(raw.postBranchSlowdown, "sessionConfig.postBranchSlowdown"),
    resumePolicy: asString(raw.resumePolicy, "sessionConfig.resumePolicy"),
    branchGrace: asNumber(raw.branchGrace, "sessionConfig.branchGrace"),
    lockstep: asBoolean(raw.lockstep, "sessionConfig.lockstep"),
  };
}

function decodeBody(type: string, raw: Record<string, unknown>): ServerMessage["body"] {
  switch (type) {
    case "hello":
      return {
        maredVersion: asString(raw.maredVersion, "hello.maredVersion"),
        sessionConfig: decodeConfig(raw.sessionConfig),
      };
    case "state": {
      const events = raw.activeEvents;
      if (!Array.isArray(events)) fail("state.activeEvents must be an array");
      return {
        wallTime: asNumber(raw.wallTime, "state.wallTime"),
        expTime: asNumber(raw.expTime, "state.expTime"),
        mode: asMode(raw.mode),
        activeEvents: events.map((e, i) => asString(e, `state.activeEvents[${i}]`)),
        branchId: raw.branchId === null ? null : asString(raw.branchId, "state.branchId"),
      };
    }
    case "branchOpened": {
      const intent = asRecord(raw.intent, "branchOpened.intent");
      return {
        branchId: asString(raw.branchId, "branchOpened.branchId"),
        intent: {
          kind: asString(intent.kind, "branchOpened.intent.kind"),
          topic: asString(intent.topic, "branchOpened.intent.topic"),
        },
        parentExpTime: asNumber(raw.parentExpTime, "branchOpened.parentExpTime"),
        wallTime: asNumber(raw.wallTime, "branchOpened.wallTime"),
      };
    }
    case "branchClosed":
      return {
        branchId: asString(raw.branchId, "branchClosed.branchId"),
        resumeAt: asNumber(raw.resumeAt, "branchClosed.resumeAt"),
        wallTime: asNumber(raw.wallTime, "branchClosed.wallTime"),
      };
    case "ended":
      return {
        wallTime: asNumber(raw.wallTime, "ended.wallTime"),
        expTime: asNumber(raw.expTime, "ended.expTime"),
      };
    case "error":
      return {
        code: asString(raw.code, "error.code"),
        message: asString(raw.message, "error.message"),
      };
    default:
      return fail(`unexpected message type ${JSON.stringify(type)} from the service`);
  }
}

/** Decode one text frame from the service; throws ProtocolError when it does not fit the schema. */
export function parseServerMessage(text: string): ServerMessage {
  let value: unknown;
  try {
    value = JSON.parse(text);
  } catch {
    fail("frame is not valid JSON");
  }
  const raw = asRecord(value, "message");
  const type = asString(raw.type, "type");
  const seq = asNumber(raw.seq, "seq");
  if (!Number.isInteger(seq) || seq < 1) fail("seq must be a positive integer");
  let replyTo: number | undefined;
  if (raw.replyTo !== undefined && raw.replyTo !== null) {
    replyTo = asNumber(raw.replyTo, "replyTo");
    if (!Number.isInteger(replyTo)) fail("replyTo must be an integer");
  }
  const body = decodeBody(type, asRecord(raw.body, "body"));
  const message = { type, seq, body } as ServerMessage;
  if (replyTo !== undefined) message.replyTo = replyTo;
  return message;
}

// -- encoding ----------------------------------------------------------------

export function encodeClientMessage(message: ClientMessage): string {
  return JSON.stringify(message);
}
