// From fold state to screen. toRenderModel derives everything the page
// shows; the html builders below it are pure string templates so the whole
// path from message log to markup stays testable without a browser.

import type { SessionConfig } from "./protocol.js";
import type { LaneStatus, ViewState } from "./viewmodel.js";

export type ConnPhase = "connecting" | "open" | "reconnecting" | "closed";

export type ConnStatus = {
  phase: ConnPhase;
  detail: string | null;
};

export type LaneView = {
  branchId: string;
  label: string;
  attachExp: number;
  status: LaneStatus;
  resumeAt: number | null;
  leftPct: number;
  returnPct: number | null;
};

export type RenderModel = {
  connPhase: ConnPhase;
  modeIndicator: string;
  version: string | null;
  config: SessionConfig | null;
  rate: number | null;
  rateBadge: string;
  /** True once the stream shows playback running below the base rate. */
  slowed: boolean;
  playhead: number | null;
  playheadPct: number | null;
  extent: number;
  resumeMarks: readonly { at: number; leftPct: number }[];
  branchLanes: readonly LaneView[];
  activeEvents: readonly string[];
  endedAt: { wallTime: number; expTime: number } | null;
  banner: { kind: "error" | "warning"; text: string } | null;
  formEnabled: boolean;
};

const LIVE: ConnStatus = { phase: "open", detail: null };

function pct(t: number, extent: number): number {
  return extent > 0 ? (t * 100) / extent : 0;
}

function formatRate(rate: number | null): string {
  if (rate === null) return "--";
  return `${Number(rate.toFixed(3))}x`;
}

export function formatSeconds(t: number): string {
  return `${Number(t.toFixed(3))}s`;
}

function bannerFor(view: ViewState, conn: ConnStatus): RenderModel["banner"] {
  if (conn.phase === "connecting") {
    return { kind: "warning", text: conn.detail ?? "connecting to the session service" };
  }
  if (conn.phase === "reconnecting") {
    return { kind: "error", text: conn.detail ?? "connection lost; retrying" };
  }
  if (conn.phase === "closed") {
    return { kind: "error", text: conn.detail ?? "connection closed" };
  }
  if (view.lastError !== null) {
    return { kind: "error", text: `${view.lastError.code}: ${view.lastError.message}` };
  }
  if (view.warning !== null) {
    return { kind: "warning", text: view.warning };
  }
  return null;
}

export function toRenderModel(view: ViewState, conn: ConnStatus = LIVE): RenderModel {
  const extent = view.extent;
  const ended = view.endedAt !== null || view.mode === "ended";
  return {
    connPhase: conn.phase,
    modeIndicator: ended ? "ended" : view.mode ?? "waiting",
    version: view.version,
    config: view.config,
    rate: view.rate,
    rateBadge: formatRate(view.rate),
    slowed: view.rate !== null && view.config !== null && view.rate < view.config.baseRate,
    playhead: view.playhead,
    playheadPct: view.playhead === null ? null : pct(view.playhead, extent),
    extent,
    resumeMarks: view.resumeMarks.map((at) => ({ at, leftPct: pct(at, extent) })),
    branchLanes: view.lanes.map((lane) => ({
      branchId: lane.branchId,
      label: `${lane.intentKind}: ${lane.topic}`,
      attachExp: lane.attachExp,
      status: lane.status,
      resumeAt: lane.resumeAt,
      leftPct: pct(lane.attachExp, extent),
      returnPct: lane.resumeAt === null ? null : pct(lane.resumeAt, extent),
    })),
    activeEvents: view.activeEvents,
    endedAt: view.endedAt,
    banner: bannerFor(view, conn),
    formEnabled: conn.phase === "open" && !ended && view.pending.length === 0,
  };
}

// -- html --------------------------------------------------------------------

export function escapeHtml(text: string): string {
  return text
    .replaceAll("&", "&amp;")
    .replaceAll("<", "&lt;")
    .replaceAll(">", "&gt;")
    .replaceAll('"', "&quot;");
}

export function statusHtml(model: RenderModel): string {
  const slow = model.slowed ? " slow" : "";
  const version = model.version === null ? "" : `<span class="version">v${escapeHtml(model.version)}</span>`;
  return (
    `<span class="conn ${model.connPhase}" title="${model.connPhase}"></span>` +
    `<span class="mode mode-${escapeHtml(model.modeIndicator)}">${escapeHtml(model.modeIndicator)}</span>` +
    `<span class="badge rate${slow}">${escapeHtml(model.rateBadge)}</span>` +
    version
  );
}

export function bannerHtml(model: RenderModel): string {
  if (model.banner === null) return "";
  return `<div class="banner ${model.banner.kind}">${escapeHtml(model.banner.text)}</div>`;
}

function laneHtml(lane: LaneView): string {
  const ret =
    lane.returnPct === null
      ? ""
      : `<span class="return" style="left:${lane.returnPct}%" ` +
        `title="resumes at ${formatSeconds(lane.resumeAt ?? 0)}"></span>`;
  return (
    `<div class="lane ${lane.status}" data-branch="${escapeHtml(lane.branchId)}">` +
    `<span class="stem" style="left:${lane.leftPct}%"></span>` +
    `<span class="lane-bar" style="left:${lane.leftPct}%">${escapeHtml(lane.label)}</span>` +
    ret +
    `</div>`
  );
}

export function timelineHtml(model: RenderModel): string {
  if (model.playhead === null) {
    return `<div class="empty">waiting for the first state frame</div>`;
  }
  const marks = model.resumeMarks
    .map(
      (m) =>
        `<span class="mark" style="left:${m.leftPct}%" title="keyframe ${formatSeconds(m.at)}"></span>`,
    )
    .join("");
  const playhead =
    model.playheadPct === null
      ? ""
      : `<span class="playhead" style="left:${model.playheadPct}%" ` +
        `title="${formatSeconds(model.playhead)}"></span>`;
  const lanes = model.branchLanes.map(laneHtml).join("");
  return (
    `<div class="track">${marks}${playhead}</div>` +
    `<div class="scale"><span>0s</span><span>${formatSeconds(model.extent)}</span></div>` +
    lanes
  );
}

export function eventsHtml(model: RenderModel): string {
  const chips = model.activeEvents
    .map((id) => `<span class="chip">${escapeHtml(id)}</span>`)
    .join("");
  const ended =
    model.endedAt === null
      ? ""
      : `<div class="ended">ended at ${formatSeconds(model.endedAt.expTime)} experience, ` +
        `${formatSeconds(model.endedAt.wallTime)} wall</div>`;
  return `<div class="chips">${chips || "<span class=\"none\">no active events</span>"}</div>${ended}`;
}
