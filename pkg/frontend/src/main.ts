// Page wiring. The form lives as static markup in index.html so the
// 10 Hz state cadence never wipes what the user is typing; only the
// read-only sections re-render.

import { connectLive } from "./client.js";
import type { InjectKind } from "./protocol.js";
import { bannerHtml, eventsHtml, statusHtml, timelineHtml, toRenderModel } from "./render.js";
import type { ConnStatus } from "./render.js";
import { applyMessage, applyNote, applySent, applyTimeout, initialView } from "./viewmodel.js";
import type { ViewState } from "./viewmodel.js";

function sessionUrl(): string {
  const override = new URLSearchParams(window.location.search).get("url");
  if (override !== null) return override;
  const scheme = window.location.protocol === "https:" ? "wss" : "ws";
  return `${scheme}://${window.location.host}/session`;
}

function byId<T extends HTMLElement>(id: string): T {
  const el = document.getElementById(id);
  if (el === null) throw new Error(`missing element #${id}`);
  return el as T;
}

let view: ViewState = initialView();
let conn: ConnStatus = { phase: "connecting", detail: null };

function render(): void {
  const model = toRenderModel(view, conn);
  byId("status").innerHTML = statusHtml(model);
  byId("banner").innerHTML = bannerHtml(model);
  byId("timeline").innerHTML = timelineHtml(model);
  byId("events").innerHTML = eventsHtml(model);
  byId<HTMLButtonElement>("send").disabled = !model.formEnabled;
  byId<HTMLButtonElement>("send-done").disabled = !model.formEnabled;
  byId<HTMLButtonElement>("apply-speed").disabled = !model.formEnabled;
}

function update(next: ViewState): void {
  view = next;
  render();
}

const live = connectLive(sessionUrl(), {
  onMessage: (message) => update(applyMessage(view, message)),
  onSent: (message) => update(applySent(view, message)),
  onStatus: (status) => {
    // A fresh socket is a fresh session stream; the old fold no longer applies.
    if (status.phase === "open") view = initialView();
    conn = status;
    render();
  },
  onTimeout: (seq) => update(applyTimeout(view, seq)),
  onFault: (reason) => update(applyNote(view, `bad frame from the service: ${reason}`)),
});

byId<HTMLSelectElement>("kind").addEventListener("change", () => {
  const kind = byId<HTMLSelectElement>("kind").value;
  byId("target-row").hidden = kind !== "gesture";
});

byId<HTMLFormElement>("inject-form").addEventListener("submit", (event) => {
  event.preventDefault();
  const kind = byId<HTMLSelectElement>("kind").value as InjectKind;
  const payload = byId<HTMLInputElement>("payload").value;
  const target = byId<HTMLInputElement>("target").value;
  if (live.sendInject(kind, payload, target === "" ? undefined : target)) {
    byId<HTMLInputElement>("payload").value = "";
  } else {
    update(applyNote(view, "not connected; nothing was sent"));
  }
});

byId<HTMLButtonElement>("send-done").addEventListener("click", () => {
  if (!live.sendInject("selection", "done")) {
    update(applyNote(view, "not connected; nothing was sent"));
  }
});

byId<HTMLFormElement>("speed-form").addEventListener("submit", (event) => {
  event.preventDefault();
  const rate = Number(byId<HTMLInputElement>("speed").value);
  if (!Number.isFinite(rate) || rate <= 0) {
    update(applyNote(view, "speed must be a positive number"));
    return;
  }
  if (!live.sendSetSpeed(rate)) {
    update(applyNote(view, "not connected; nothing was sent"));
  }
});

window.addEventListener("beforeunload", () => live.close());

render();
