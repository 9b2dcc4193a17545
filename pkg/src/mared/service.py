"""Expose a live playback session over a message stream.

The protocol is transport-independent: `SessionHub` turns incoming message
text into outgoing messages and owns the one-controller rule, sequence
numbering, and the real-time versus lockstep clock.  Thin adapters put the
hub behind a websocket endpoint (`build_app` + `serve`) or standard input
and output (`run_stdio`).  All session mutations funnel through the hub one
at a time; the adapters guarantee that with a lock.
"""

from __future__ import annotations

import asyncio
import json
import logging
import time
from contextlib import asynccontextmanager
from dataclasses import dataclass, field
from enum import Enum
from typing import Callable, Sequence

from .codec import canonical_json
from .errors import MaredError, RejectedInputError
from .model import MARED_VERSION, KeyframedDocument, MAREDDocument
from .playback import (
    InputKind,
    InteractionInput,
    PlaybackConfig,
    PlaybackSession,
    SessionEvent,
    SessionEventKind,
    SessionMode,
    open_session,
)
from . import playback

logger = logging.getLogger(__name__)

BROADCAST_CADENCE_HZ = 10.0


class MessageType(str, Enum):
    HELLO = "hello"
    STATE = "state"
    INJECT = "inject"
    SET_SPEED = "setSpeed"
    # Lockstep extension: clients drive the clock explicitly.
    TICK = "tick"
    BRANCH_OPENED = "branchOpened"
    BRANCH_CLOSED = "branchClosed"
    ENDED = "ended"
    ERROR = "error"


@dataclass(frozen=True)
class WireMessage:
    type: MessageType
    seq: int
    body: dict
    reply_to: int | None = None

    def to_text(self) -> str:
        out: dict = {"type": self.type.value, "seq": self.seq, "body": self.body}
        if self.reply_to is not None:
            out["replyTo"] = self.reply_to
        return canonical_json(out)


@dataclass(frozen=True)
class ServiceConfig:
    playback: PlaybackConfig = PlaybackConfig()
    lockstep: bool = False
    cadence_hz: float = BROADCAST_CADENCE_HZ


@dataclass
class _Connection:
    id: int
    out_seq: int = 0
    last_in_seq: int | None = None

    def next_seq(self) -> int:
        self.out_seq += 1
        return self.out_seq


Outgoing = tuple[int, WireMessage]


class SessionHub:
    """One live session, any number of connections, exactly one controller."""

    def __init__(
        self,
        kdoc: KeyframedDocument,
        config: ServiceConfig = ServiceConfig(),
        clock: Callable[[], float] | None = None,
    ):
        self.config = config
        self.session: PlaybackSession = open_session(kdoc, config=config.playback)
        self.connections: dict[int, _Connection] = {}
        self.controller: int | None = None
        self._next_conn_id = 0
        self._log_mark = len(self.session.log)
        self._monotonic = clock if clock is not None else time.monotonic
        self._origin = self._monotonic()
        self._lockstep_wall = 0.0

    # -- clock ---------------------------------------------------------------

    def wall_now(self) -> float:
        if self.config.lockstep:
            return self._lockstep_wall
        return self._monotonic() - self._origin

    # -- connection lifecycle ------------------------------------------------

    def attach(self) -> tuple[int, list[Outgoing]]:
        self._next_conn_id += 1
        conn = _Connection(id=self._next_conn_id)
        self.connections[conn.id] = conn
        hello = self._make(
            conn,
            MessageType.HELLO,
            {
                "maredVersion": MARED_VERSION,
                "sessionConfig": {
                    "baseRate": self.config.playback.base_rate,
                    "postBranchSlowdown": self.config.playback.post_branch_slowdown,
                    "resumePolicy": self.config.playback.resume_policy.value,
                    "branchGrace": self.config.playback.branch_grace,
                    "lockstep": self.config.lockstep,
                },
            },
        )
        state = self._make(conn, MessageType.STATE, self._state_body())
        return conn.id, [(conn.id, hello), (conn.id, state)]

    def detach(self, conn_id: int) -> None:
        self.connections.pop(conn_id, None)
        if self.controller == conn_id:
            self.controller = None

    # -- message handling ----------------------------------------------------

    def handle(self, conn_id: int, text: str) -> list[Outgoing]:
        conn = self.connections[conn_id]
        try:
            msg = json.loads(text)
        except json.JSONDecodeError as exc:
            return [self._error(conn, None, "badMessage", f"not valid JSON: {exc.msg}")]
        if not isinstance(msg, dict) or not isinstance(msg.get("type"), str):
            return [self._error(conn, None, "badMessage", "message must be an object with a type")]
        seq = msg.get("seq")
        if not isinstance(seq, int) or isinstance(seq, bool):
            return [self._error(conn, None, "badMessage", "seq must be an integer")]
        if conn.last_in_seq is not None and seq <= conn.last_in_seq:
            return [self._error(conn, seq, "badMessage", f"seq {seq} does not increase")]
        conn.last_in_seq = seq
        body = msg.get("body", {})
        if not isinstance(body, dict):
            return [self._error(conn, seq, "badMessage", "body must be an object")]

        try:
            msg_type = MessageType(msg["type"])
        except ValueError:
            return [self._error(conn, seq, "badMessage", f"unknown type {msg['type']!r}")]

        if msg_type in (MessageType.INJECT, MessageType.SET_SPEED, MessageType.TICK):
            claim = self._claim_control(conn)
            if claim is not None:
                return [self._error(conn, seq, "busy", claim)]

        if msg_type is MessageType.INJECT:
            return self._on_inject(conn, seq, body)
        if msg_type is MessageType.SET_SPEED:
            return self._on_set_speed(conn, seq, body)
        if msg_type is MessageType.TICK:
            return self._on_tick(conn, seq, body)
        return [self._error(conn, seq, "badMessage", f"clients may not send {msg_type.value}")]

    def poll(self) -> list[Outgoing]:
        """Cadence broadcast for real-time mode; advances the session clock."""
        if self.config.lockstep or self.session.mode is SessionMode.ENDED:
            return []
        try:
            playback.tick(self.session, self.wall_now())
        except MaredError as exc:
            logger.warning("cadence tick failed: %s", exc)
            return []
        out = self._drain_log()
        out.extend(self._broadcast_state())
        return out

    # -- internals -----------------------------------------------------------

    def _claim_control(self, conn: _Connection) -> str | None:
        if self.controller is None:
            self.controller = conn.id
            return None
        if self.controller != conn.id:
            return "another client controls this session"
        return None

    def _make(
        self, conn: _Connection, msg_type: MessageType, body: dict, reply_to: int | None = None
    ) -> WireMessage:
        return WireMessage(type=msg_type, seq=conn.next_seq(), body=body, reply_to=reply_to)

    def _error(
        self, conn: _Connection, reply_to: int | None, code: str, message: str
    ) -> Outgoing:
        return (
            conn.id,
            self._make(conn, MessageType.ERROR, {"code": code, "message": message}, reply_to),
        )

    def _state_body(self) -> dict:
        session = self.session
        branch = session.open_branch()
        exp = session.exp_now()
        active = tuple(
            sorted(
                ev.id
                for ev in (
                    *session.document.interaction_events,
                    *session.document.state_change_events,
                )
                if ev.t_start <= exp <= ev.t_end
            )
        )
        return {
            "wallTime": session.wall_last,
            "expTime": exp,
            "mode": session.mode.value,
            "activeEvents": list(active),
            "branchId": branch.id if branch is not None else None,
        }

    def _broadcast(self, msg_type: MessageType, body: dict) -> list[Outgoing]:
        return [
            (conn.id, self._make(conn, msg_type, dict(body)))
            for conn in self.connections.values()
        ]

    def _broadcast_state(self) -> list[Outgoing]:
        return self._broadcast(MessageType.STATE, self._state_body())

    def _transition_message(self, event: SessionEvent) -> tuple[MessageType, dict] | None:
        if event.kind is SessionEventKind.BRANCH_OPENED:
            branch = next(b for b in self.session.branches if b.id == event.subject)
            return (
                MessageType.BRANCH_OPENED,
                {
                    "branchId": branch.id,
                    "intent": {"kind": branch.intent.kind.value, "topic": branch.intent.topic},
                    "parentExpTime": branch.parent_exp_time,
                    "wallTime": event.wall_time,
                },
            )
        if event.kind is SessionEventKind.BRANCH_CLOSED:
            branch = next(b for b in self.session.branches if b.id == event.subject)
            return (
                MessageType.BRANCH_CLOSED,
                {
                    "branchId": branch.id,
                    "resumeAt": branch.resume_at,
                    "wallTime": event.wall_time,
                },
            )
        if event.kind is SessionEventKind.ENDED:
            return (MessageType.ENDED, {"wallTime": event.wall_time, "expTime": event.exp_time})
        return None

    def _drain_log(self) -> list[Outgoing]:
        out: list[Outgoing] = []
        new_events = self.session.log[self._log_mark :]
        self._log_mark = len(self.session.log)
        for event in new_events:
            mapped = self._transition_message(event)
            if mapped is not None:
                out.extend(self._broadcast(*mapped))
        return out

    def _mutate(
        self, conn: _Connection, seq: int, operation: Callable[[], None]
    ) -> list[Outgoing]:
        mode_before = self.session.mode
        try:
            operation()
        except MaredError as exc:
            return [self._error(conn, seq, exc.code, str(exc))]
        out = self._drain_log()
        reply = self._make(conn, MessageType.STATE, self._state_body(), reply_to=seq)
        out.append((conn.id, reply))
        if self.session.mode is not mode_before or self.config.lockstep:
            # The sender already has the state in its reply; only the others
            # get the broadcast, so per-connection seq numbers stay gap-free.
            body = self._state_body()
            out.extend(
                (other.id, self._make(other, MessageType.STATE, dict(body)))
                for other in self.connections.values()
                if other.id != conn.id
            )
        return out

    def _on_inject(self, conn: _Connection, seq: int, body: dict) -> list[Outgoing]:
        kind_name = body.get("kind")
        try:
            kind = InputKind(kind_name)
        except ValueError:
            return [self._error(conn, seq, "badMessage", f"unknown input kind {kind_name!r}")]
        payload = body.get("payload", "")
        target = body.get("target")
        if not isinstance(payload, str) or (target is not None and not isinstance(target, str)):
            return [self._error(conn, seq, "badMessage", "payload and target must be strings")]
        wall = body.get("wallTime", self.wall_now())
        if isinstance(wall, bool) or not isinstance(wall, (int, float)):
            return [self._error(conn, seq, "badMessage", "wallTime must be a number")]
        inp = InteractionInput(wall_time=float(wall), kind=kind, payload=payload, target=target)
        return self._mutate(conn, seq, lambda: playback.inject(self.session, inp))

    def _on_set_speed(self, conn: _Connection, seq: int, body: dict) -> list[Outgoing]:
        rate = body.get("rate")
        if isinstance(rate, bool) or not isinstance(rate, (int, float)):
            return [self._error(conn, seq, "badMessage", "rate must be a number")]
        wall = self.wall_now()
        return self._mutate(conn, seq, lambda: playback.set_rate(self.session, wall, float(rate)))

    def _on_tick(self, conn: _Connection, seq: int, body: dict) -> list[Outgoing]:
        if not self.config.lockstep:
            return [self._error(conn, seq, "badMessage", "tick is only valid in lockstep mode")]
        wall = body.get("wallTime")
        if isinstance(wall, bool) or not isinstance(wall, (int, float)):
            return [self._error(conn, seq, "badMessage", "wallTime must be a number")]

        def advance() -> None:
            playback.tick(self.session, float(wall))
            self._lockstep_wall = float(wall)

        return self._mutate(conn, seq, advance)


def replay_trace(
    kdoc: KeyframedDocument,
    trace: Sequence[InteractionInput],
    config: PlaybackConfig = PlaybackConfig(),
) -> tuple[list[SessionEvent], MAREDDocument]:
    """Lockstep harness: run a whole scripted session, return log and export."""
    for prev, curr in zip(trace, trace[1:]):
        if curr.wall_time < prev.wall_time:
            raise RejectedInputError(
                f"trace wall times must not decrease: {curr.wall_time!r} after {prev.wall_time!r}"
            )
    session = playback.replay_trace(kdoc, trace, config=config)
    return list(session.log), playback.export_session(session)


# ---------------------------------------------------------------------------
# Transports


def build_app(hub: SessionHub):
    """Starlette app with the hub behind a websocket endpoint at /session."""
    from starlette.applications import Starlette
    from starlette.routing import WebSocketRoute
    from starlette.websockets import WebSocket, WebSocketDisconnect

    lock = asyncio.Lock()
    sockets: dict[int, WebSocket] = {}

    async def deliver(outgoing: list[Outgoing]) -> None:
        for conn_id, message in outgoing:
            socket = sockets.get(conn_id)
            if socket is None:
                continue
            try:
                await socket.send_text(message.to_text())
            except Exception:
                logger.warning("dropping connection %d: send failed", conn_id)
                sockets.pop(conn_id, None)
                hub.detach(conn_id)

    async def session_endpoint(websocket: WebSocket) -> None:
        await websocket.accept()
        async with lock:
            conn_id, outgoing = hub.attach()
            sockets[conn_id] = websocket
            await deliver(outgoing)
        try:
            while True:
                text = await websocket.receive_text()
                async with lock:
                    await deliver(hub.handle(conn_id, text))
        except WebSocketDisconnect:
            pass
        finally:
            async with lock:
                sockets.pop(conn_id, None)
                hub.detach(conn_id)

    async def cadence_loop() -> None:
        if hub.config.lockstep:
            return
        interval = 1.0 / hub.config.cadence_hz
        while True:
            await asyncio.sleep(interval)
            async with lock:
                await deliver(hub.poll())

    @asynccontextmanager
    async def lifespan(app):
        task = None
        if not hub.config.lockstep:
            task = asyncio.ensure_future(cadence_loop())
        try:
            yield
        finally:
            if task is not None:
                task.cancel()

    return Starlette(routes=[WebSocketRoute("/session", session_endpoint)], lifespan=lifespan)


def serve(kdoc: KeyframedDocument, config: ServiceConfig = ServiceConfig(), port: int = 8765) -> None:
    """Run the websocket service until interrupted."""
    import uvicorn

    hub = SessionHub(kdoc, config)
    uvicorn.run(build_app(hub), host="127.0.0.1", port=port, log_level="warning")


def run_stdio(
    hub: SessionHub,
    lines,
    write: Callable[[str], None],
) -> None:
    """Drive the hub over line-based standard input and output."""
    conn_id, outgoing = hub.attach()
    for _, message in outgoing:
        write(message.to_text() + "\n")
    for line in lines:
        line = line.strip()
        if not line:
            continue
        for target, message in hub.handle(conn_id, line):
            if target == conn_id:
                write(message.to_text() + "\n")
    hub.detach(conn_id)


__all__ = [
    "BROADCAST_CADENCE_HZ",
    "MessageType",
    "WireMessage",
    "ServiceConfig",
    "SessionHub",
    "replay_trace",
    "build_app",
    "serve",
    "run_stdio",
]
