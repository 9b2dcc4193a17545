"""Stage 3: adaptive replay of a keyframed document.

A session runs on two clocks.  Wall time is the playback user's real time;
experience time is the recorded capture's time.  A piecewise-linear clock map
converts one into the other: playback rate changes append segments, an open
branch freezes experience time (rate 0), and closing a branch resumes at a
keyframe, possibly jumping experience time forward.  Every observable moment
(segment entered, keyframe passed, branch opened or closed, jump, end) is
appended to the session log at its exact wall time, so a scripted input trace
replays to a byte-identical log.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Callable, Protocol, Sequence

from .errors import (
    MonotonicityError,
    NestedBranchRejectedError,
    NoBranchOpenError,
    NothingToPlayError,
    RejectedInputError,
    SessionStillActiveError,
)
from .model import (
    EntityKind,
    Entity,
    EventState,
    Header,
    InteractionEvent,
    KeyframedDocument,
    MAREDDocument,
    Pose,
    SemanticExperienceSegment,
    SpaceAnchor,
    StateChangeEvent,
    StateChangeKind,
    Timestamp,
    Verb,
    require_valid,
    validate_keyframed,
)


class InputKind(str, Enum):
    SPEECH = "speech"
    GESTURE = "gesture"
    GAZE = "gaze"
    SELECTION = "selection"


class IntentKind(str, Enum):
    QUESTION = "question"
    INSPECT = "inspect"
    DONE = "done"
    NOOP = "noop"


class ResumePolicy(str, Enum):
    NEXT_KEYFRAME = "nextKeyframe"
    PAUSE_POINT = "pausePoint"
    PREVIOUS_KEYFRAME = "previousKeyframe"


class SessionMode(str, Enum):
    MAIN = "main"
    BRANCH = "branch"
    ENDED = "ended"


class BranchStatus(str, Enum):
    OPEN = "open"
    CLOSED = "closed"


class SessionEventKind(str, Enum):
    SEGMENT = "segment"
    KEYFRAME = "keyframe"
    BRANCH_OPENED = "branchOpened"
    BRANCH_CLOSED = "branchClosed"
    JUMP = "jump"
    IGNORED_INPUT = "ignoredInput"
    ENDED = "ended"


@dataclass(frozen=True)
class InteractionInput:
    """One live playback-user input, stamped with the session wall clock."""

    wall_time: float
    kind: InputKind
    payload: str = ""
    target: str | None = None


@dataclass(frozen=True)
class Intent:
    kind: IntentKind
    topic: str = ""


def classify_intent(inp: InteractionInput) -> Intent:
    """Total rule table from raw input to intent; no other derivation exists."""
    if inp.kind is InputKind.SPEECH and inp.payload.endswith("?"):
        return Intent(IntentKind.QUESTION, topic=inp.payload)
    if inp.kind is InputKind.GESTURE and inp.target is not None:
        return Intent(IntentKind.INSPECT, topic=inp.target)
    if inp.kind is InputKind.SELECTION and inp.payload == "done":
        return Intent(IntentKind.DONE)
    return Intent(IntentKind.NOOP)


@dataclass(frozen=True)
class BranchScriptEvent:
    """One scripted branch beat, timed relative to the branch opening."""

    start_offset: float
    end_offset: float
    actor: str
    verb: Verb
    payload: str
    target: str | None = None


@dataclass(frozen=True)
class BranchContext:
    document: MAREDDocument
    segment: SemanticExperienceSegment | None
    parent_exp_time: Timestamp


class Responder(Protocol):
    """Produces the scripted content a branch plays out."""

    def generate(self, intent: Intent, context: BranchContext) -> tuple[BranchScriptEvent, ...]:
        ...


class TemplateResponder:
    """Answers with one spoken line by the recorded user of the paused segment."""

    answer_duration: float = 5.0

    def generate(self, intent: Intent, context: BranchContext) -> tuple[BranchScriptEvent, ...]:
        actor = None
        if context.segment is not None:
            users = {u.id for u in context.document.users()}
            actor = next((p for p in context.segment.participants if p in users), None)
        if actor is None:
            users_all = context.document.users()
            actor = users_all[0].id if users_all else "narrator"
        return (
            BranchScriptEvent(
                start_offset=0.0,
                end_offset=self.answer_duration,
                actor=actor,
                verb=Verb.SPEAK,
                payload=f"answer({intent.topic})",
            ),
        )


@dataclass
class Branch:
    id: str
    parent_exp_time: Timestamp
    intent: Intent
    script: tuple[BranchScriptEvent, ...]
    open_wall: float
    paused_rate: float = 1.0
    status: BranchStatus = BranchStatus.OPEN
    resume_at: Timestamp | None = None
    close_wall: float | None = None
    last_activity_wall: float = 0.0

    def script_end_wall(self) -> float:
        duration = max((ev.end_offset for ev in self.script), default=0.0)
        return self.open_wall + duration


@dataclass(frozen=True)
class ClockEntry:
    wall_start: float
    exp_start: Timestamp
    rate: float


@dataclass
class ClockMap:
    """Piecewise-linear wall-to-experience mapping; entries never get removed."""

    entries: list[ClockEntry] = field(default_factory=list)

    def tail(self) -> ClockEntry:
        return self.entries[-1]

    def exp_at(self, wall: float) -> Timestamp:
        entry = self.entries[0]
        for candidate in self.entries:
            if candidate.wall_start <= wall:
                entry = candidate
            else:
                break
        return entry.exp_start + entry.rate * (wall - entry.wall_start)

    def push(self, wall: float, exp: Timestamp, rate: float) -> None:
        if self.entries and wall < self.tail().wall_start:
            raise MonotonicityError(f"clock entry at wall {wall!r} precedes the current tail")
        self.entries.append(ClockEntry(wall, exp, rate))


@dataclass(frozen=True)
class PlaybackConfig:
    base_rate: float = 1.0
    post_branch_slowdown: float = 0.8
    resume_policy: ResumePolicy = ResumePolicy.NEXT_KEYFRAME
    branch_grace: float = 2.0
    allow_scale: bool = False

    def check(self) -> None:
        if not self.base_rate > 0:
            raise RejectedInputError("base_rate must be positive")
        if not 0 < self.post_branch_slowdown <= 1:
            raise RejectedInputError("post_branch_slowdown must be in (0, 1]")
        if self.branch_grace < 0:
            raise RejectedInputError("branch_grace must be non-negative")


@dataclass(frozen=True)
class SessionEvent:
    wall_time: float
    exp_time: Timestamp
    kind: SessionEventKind
    detail: str = ""
    subject: str | None = None


@dataclass(frozen=True)
class PlaybackState:
    """What a tick reports back to the driver."""

    wall_time: float
    exp_time: Timestamp
    mode: SessionMode
    active_events: tuple[str, ...] = ()
    keyframes_passed: tuple[Timestamp, ...] = ()
    branch_id: str | None = None


@dataclass(frozen=True)
class ResumeInfo:
    branch_id: str
    resume_at: Timestamp
    rate: float
    jumped: bool


@dataclass
class PlaybackSession:
    """One adaptive replay run; mutate only through the module functions.

    All mutation goes through tick/inject/create_new_branch/return_to_main on
    a single owner; snapshots handed out are immutable.
    """

    kdoc: KeyframedDocument
    config: PlaybackConfig
    clock: ClockMap
    mode: SessionMode = SessionMode.MAIN
    branches: list[Branch] = field(default_factory=list)
    log: list[SessionEvent] = field(default_factory=list)
    responder: Responder = field(default_factory=TemplateResponder)
    wall_last: float = 0.0
    exp_cursor: Timestamp = float("-inf")
    _branch_counter: Callable[[], int] = field(default_factory=lambda: itertools.count(1).__next__)

    @property
    def document(self) -> MAREDDocument:
        return self.kdoc.document

    def open_branch(self) -> Branch | None:
        for branch in reversed(self.branches):
            if branch.status is BranchStatus.OPEN:
                return branch
        return None

    def start_exp(self) -> Timestamp:
        return min(s.t_start for s in self.document.segments)

    def end_exp(self) -> Timestamp:
        return max(s.t_end for s in self.document.segments)

    def exp_now(self) -> Timestamp:
        exp = self.clock.exp_at(self.wall_last)
        return min(exp, self.end_exp())


def open_session(
    kdoc: KeyframedDocument,
    target_space: tuple[SpaceAnchor, ...] | None = None,
    config: PlaybackConfig = PlaybackConfig(),
    responder: Responder | None = None,
) -> PlaybackSession:
    """Start a session at the first segment; wall time starts at zero."""
    config.check()
    violations = validate_keyframed(kdoc)
    if violations:
        from .errors import InvalidDocumentError

        raise InvalidDocumentError(violations)
    if not kdoc.document.segments:
        raise NothingToPlayError("document has no segments to play")

    if target_space is not None:
        from .spatial import adapt_spatial

        kdoc = adapt_spatial(kdoc, target_space, allow_scale=config.allow_scale)

    session = PlaybackSession(
        kdoc=kdoc,
        config=config,
        clock=ClockMap([ClockEntry(0.0, min(s.t_start for s in kdoc.document.segments), config.base_rate)]),
    )
    if responder is not None:
        session.responder = responder
    _sweep(session, session.start_exp(), wall=0.0)
    return session


# ---------------------------------------------------------------------------
# Internal machinery


def _log(session: PlaybackSession, event: SessionEvent) -> None:
    if session.log and event.wall_time < session.log[-1].wall_time:
        raise MonotonicityError(
            f"log event at wall {event.wall_time!r} precedes {session.log[-1].wall_time!r}"
        )
    session.log.append(event)


def _sweep(
    session: PlaybackSession,
    exp_to: Timestamp,
    wall: float | None = None,
    collect: list[Timestamp] | None = None,
) -> None:
    """Log every segment entry and keyframe in (exp_cursor, exp_to].

    With `wall` given, everything is stamped at that single wall time (jump
    and initial sweeps); otherwise each crossing gets its exact wall time from
    the current clock tail.
    """
    if exp_to <= session.exp_cursor:
        return
    tail = session.clock.tail()

    crossings: list[tuple[Timestamp, int, str, str | None]] = []
    for seg in session.document.segments:
        if session.exp_cursor < seg.t_start <= exp_to:
            crossings.append((seg.t_start, 0, seg.label, seg.id))
    for kf in session.kdoc.keyframes:
        if session.exp_cursor < kf.t <= exp_to:
            crossings.append((kf.t, 1, repr(kf.t), None))
    crossings.sort(key=lambda c: (c[0], c[1]))

    for exp, priority, detail, subject in crossings:
        if wall is not None:
            at = wall
        else:
            at = tail.wall_start + (exp - tail.exp_start) / tail.rate
        kind = SessionEventKind.SEGMENT if priority == 0 else SessionEventKind.KEYFRAME
        _log(session, SessionEvent(at, exp, kind, detail=detail, subject=subject))
        if priority == 1 and collect is not None:
            collect.append(exp)
    session.exp_cursor = exp_to


def _end_wall(session: PlaybackSession) -> float | None:
    """Wall time at which main playback reaches the end, under the current tail."""
    if session.mode is not SessionMode.MAIN:
        return None
    tail = session.clock.tail()
    if tail.rate <= 0:
        return None
    return tail.wall_start + (session.end_exp() - tail.exp_start) / tail.rate


def _auto_close_wall(session: PlaybackSession) -> float | None:
    branch = session.open_branch()
    if branch is None:
        return None
    return max(branch.script_end_wall(), branch.last_activity_wall) + session.config.branch_grace


def _advance(session: PlaybackSession, wall_now: float, collect: list[Timestamp]) -> None:
    """Process every scheduled transition at or before `wall_now`, in order."""
    if wall_now < session.wall_last:
        raise MonotonicityError(
            f"wall time went backwards: {wall_now!r} after {session.wall_last!r}"
        )
    while True:
        close_at = _auto_close_wall(session)
        if close_at is not None and close_at <= wall_now:
            _close_branch(session, close_at, collect)
            continue
        end_at = _end_wall(session)
        if end_at is not None and end_at <= wall_now:
            _sweep(session, session.end_exp(), collect=collect)
            session.mode = SessionMode.ENDED
            _log(
                session,
                SessionEvent(end_at, session.end_exp(), SessionEventKind.ENDED, detail="end of experience"),
            )
            session.wall_last = max(session.wall_last, end_at)
            continue
        break
    session.wall_last = wall_now
    if session.mode is SessionMode.MAIN:
        _sweep(session, session.clock.exp_at(wall_now), collect=collect)


def tick(session: PlaybackSession, wall_now: float) -> PlaybackState:
    """Advance the session to `wall_now` and report what is live there."""
    passed: list[Timestamp] = []
    _advance(session, wall_now, passed)
    exp = session.exp_now()
    active = tuple(
        sorted(
            ev.id
            for ev in (*session.document.interaction_events, *session.document.state_change_events)
            if ev.t_start <= exp <= ev.t_end
        )
    )
    branch = session.open_branch()
    return PlaybackState(
        wall_time=wall_now,
        exp_time=exp,
        mode=session.mode,
        active_events=active,
        keyframes_passed=tuple(passed),
        branch_id=branch.id if branch is not None else None,
    )


def _segment_at(session: PlaybackSession, exp: Timestamp) -> SemanticExperienceSegment | None:
    for seg in session.document.segments:
        if seg.t_start <= exp <= seg.t_end:
            return seg
    return None


def create_new_branch(session: PlaybackSession, inp: InteractionInput) -> Branch | None:
    """Open a branch for a branching intent; anything else is logged and ignored."""
    if session.open_branch() is not None:
        raise NestedBranchRejectedError("a branch is already open")
    intent = classify_intent(inp)
    exp = session.exp_now()
    if session.mode is SessionMode.ENDED or intent.kind in (IntentKind.NOOP, IntentKind.DONE):
        reason = "ended" if session.mode is SessionMode.ENDED else intent.kind.value
        _log(
            session,
            SessionEvent(
                inp.wall_time, exp, SessionEventKind.IGNORED_INPUT, detail=reason, subject=inp.target
            ),
        )
        return None

    context = BranchContext(
        document=session.document, segment=_segment_at(session, exp), parent_exp_time=exp
    )
    branch = Branch(
        id=f"branch-{session._branch_counter()}",
        parent_exp_time=exp,
        intent=intent,
        script=tuple(session.responder.generate(intent, context)),
        open_wall=inp.wall_time,
        paused_rate=session.clock.tail().rate,
        last_activity_wall=inp.wall_time,
    )
    session.branches.append(branch)
    session.clock.push(inp.wall_time, exp, 0.0)
    session.mode = SessionMode.BRANCH
    _log(
        session,
        SessionEvent(
            inp.wall_time,
            exp,
            SessionEventKind.BRANCH_OPENED,
            detail=f"{intent.kind.value}:{intent.topic}",
            subject=branch.id,
        ),
    )
    return branch


def _resume_point(session: PlaybackSession, pause: Timestamp) -> Timestamp:
    policy = session.config.resume_policy
    keyframes = [kf.t for kf in session.kdoc.keyframes]
    if policy is ResumePolicy.PAUSE_POINT:
        return pause
    if policy is ResumePolicy.PREVIOUS_KEYFRAME:
        behind = [t for t in keyframes if t <= pause]
        return max(behind) if behind else pause
    ahead = [t for t in keyframes if t >= pause]
    resume = min(ahead) if ahead else pause
    # Never jump past content that has not played yet.
    upcoming = [
        ev.t_start
        for ev in (*session.document.interaction_events, *session.document.state_change_events)
        if ev.t_start > pause
    ]
    if upcoming:
        resume = min(resume, min(upcoming))
    return resume


def _close_branch(
    session: PlaybackSession, wall: float, collect: list[Timestamp]
) -> ResumeInfo:
    branch = session.open_branch()
    if branch is None:
        raise NoBranchOpenError("no branch is open")

    resume = _resume_point(session, branch.parent_exp_time)
    new_rate = branch.paused_rate
    if branch.intent.kind is IntentKind.QUESTION:
        new_rate = branch.paused_rate * session.config.post_branch_slowdown

    branch.status = BranchStatus.CLOSED
    branch.resume_at = resume
    branch.close_wall = wall
    session.clock.push(wall, resume, new_rate)
    session.mode = SessionMode.MAIN
    session.wall_last = max(session.wall_last, wall)

    _log(
        session,
        SessionEvent(
            wall,
            resume,
            SessionEventKind.BRANCH_CLOSED,
            detail=f"resume@{resume!r} rate={new_rate!r}",
            subject=branch.id,
        ),
    )
    jumped = resume != branch.parent_exp_time
    if jumped:
        _log(
            session,
            SessionEvent(
                wall,
                resume,
                SessionEventKind.JUMP,
                detail=f"{branch.parent_exp_time!r}->{resume!r}",
                subject=branch.id,
            ),
        )
        if resume > branch.parent_exp_time:
            _sweep(session, resume, wall=wall, collect=collect)
        else:
            # Replaying earlier content: pull the cursor back so segment and
            # keyframe crossings are reported again.
            session.exp_cursor = resume
    return ResumeInfo(branch_id=branch.id, resume_at=resume, rate=new_rate, jumped=jumped)


def return_to_main(session: PlaybackSession) -> ResumeInfo:
    """Close the open branch now and resume the main timeline."""
    collect: list[Timestamp] = []
    return _close_branch(session, session.wall_last, collect)


def inject(session: PlaybackSession, inp: InteractionInput) -> PlaybackState:
    """Route one timed input through the session and advance to its wall time."""
    if inp.wall_time < 0:
        raise RejectedInputError(f"input wall time {inp.wall_time!r} precedes session start")
    passed: list[Timestamp] = []
    _advance(session, inp.wall_time, passed)

    intent = classify_intent(inp)
    branch = session.open_branch()
    if branch is not None:
        branch.last_activity_wall = inp.wall_time
        if intent.kind is IntentKind.DONE:
            _close_branch(session, inp.wall_time, passed)
        elif intent.kind is not IntentKind.NOOP:
            _log(
                session,
                SessionEvent(
                    inp.wall_time,
                    session.exp_now(),
                    SessionEventKind.IGNORED_INPUT,
                    detail="branchActive",
                    subject=inp.target,
                ),
            )
    else:
        create_new_branch(session, inp)

    exp = session.exp_now()
    open_now = session.open_branch()
    return PlaybackState(
        wall_time=inp.wall_time,
        exp_time=exp,
        mode=session.mode,
        keyframes_passed=tuple(passed),
        branch_id=open_now.id if open_now is not None else None,
    )


def set_rate(session: PlaybackSession, wall_now: float, rate: float) -> None:
    """Change the main playback rate at `wall_now`; continuous, no exp jump."""
    if not rate > 0:
        raise RejectedInputError(f"rate must be positive, got {rate!r}")
    passed: list[Timestamp] = []
    _advance(session, wall_now, passed)
    if session.mode is not SessionMode.MAIN:
        raise RejectedInputError(f"cannot change rate in {session.mode.value} mode")
    session.clock.push(wall_now, session.clock.exp_at(wall_now), rate)


def run_to_end(session: PlaybackSession) -> None:
    """Process all remaining scheduled transitions until the session ends."""
    guard = 0
    while session.mode is not SessionMode.ENDED:
        guard += 1
        if guard > 10_000:
            raise RuntimeError("session failed to converge to its end")
        close_at = _auto_close_wall(session)
        end_at = _end_wall(session)
        target = close_at if close_at is not None else end_at
        if target is None:
            raise RejectedInputError("session cannot reach its end (rate stuck at 0)")
        tick(session, max(target, session.wall_last))


def replay_trace(
    kdoc: KeyframedDocument,
    inputs: Sequence[InteractionInput],
    config: PlaybackConfig = PlaybackConfig(),
    target_space: tuple[SpaceAnchor, ...] | None = None,
    responder: Responder | None = None,
) -> PlaybackSession:
    """Deterministically run a whole session from a scripted input trace."""
    session = open_session(kdoc, target_space=target_space, config=config, responder=responder)
    for inp in sorted(inputs, key=lambda i: i.wall_time):
        inject(session, inp)
    run_to_end(session)
    return session


# ---------------------------------------------------------------------------
# Export


def _covered_intervals(session: PlaybackSession) -> list[tuple[float, float, Timestamp, float]]:
    """Clock spans with positive rate: (wall_start, wall_end, exp_start, rate)."""
    end_exp = session.end_exp()
    spans: list[tuple[float, float, Timestamp, float]] = []
    entries = session.clock.entries
    for i, entry in enumerate(entries):
        if entry.rate <= 0:
            continue
        wall_end = entries[i + 1].wall_start if i + 1 < len(entries) else float("inf")
        exp_end = entry.exp_start + entry.rate * (wall_end - entry.wall_start)
        if exp_end > end_exp or wall_end == float("inf"):
            wall_end = entry.wall_start + (end_exp - entry.exp_start) / entry.rate
            exp_end = end_exp
        if wall_end > entry.wall_start:
            spans.append((entry.wall_start, wall_end, entry.exp_start, entry.rate))
    return spans


def _last_sample_at_or_before(sc: StateChangeEvent, t: Timestamp) -> Pose | None:
    found: Pose | None = None
    for sample_t, pose in sc.trajectory:
        if sample_t <= t:
            found = pose
        else:
            break
    return found


def _clamp_pose_values(
    sc: StateChangeEvent, lo: Timestamp, hi: Timestamp
) -> tuple[object, object, tuple[tuple[Timestamp, Pose], ...]]:
    """Before/after/trajectory of a pose change restricted to [lo, hi]."""
    before, after = sc.before, sc.after
    inside = tuple((t, p) for t, p in sc.trajectory if lo <= t <= hi)
    if sc.kind is StateChangeKind.POSE:
        if lo > sc.t_start:
            before = _last_sample_at_or_before(sc, lo) or before
        if hi < sc.t_end:
            # The motion was cut short: the last pose actually seen wins.
            after = _last_sample_at_or_before(sc, hi) or sc.before
    return before, after, inside


def export_session(session: PlaybackSession) -> MAREDDocument:
    """The session as experienced, on the session's wall clock.

    Main content is remapped span by span through the clock; each open-branch
    stretch becomes a segment of its own holding the branch script.  Content
    interrupted by a branch keeps only its pre-pause part, and content inside
    a skipped jump never appears.
    """
    if session.mode is not SessionMode.ENDED:
        raise SessionStillActiveError("session has not ended yet")

    doc = session.document
    spans = _covered_intervals(session)

    def wall_for(exp: Timestamp) -> float | None:
        for wall_start, wall_end, exp_start, rate in spans:
            exp_end = exp_start + rate * (wall_end - wall_start)
            if exp_start <= exp <= exp_end:
                return wall_start + (exp - exp_start) / rate
        return None

    pieces: list[tuple[SemanticExperienceSegment, float, float]] = []
    for seg in doc.segments:
        for wall_start, wall_end, exp_start, rate in spans:
            exp_end = exp_start + rate * (wall_end - wall_start)
            lo = max(seg.t_start, exp_start)
            hi = min(seg.t_end, exp_end)
            if hi < lo:
                continue
            w_lo = wall_start + (lo - exp_start) / rate
            w_hi = wall_start + (hi - exp_start) / rate
            if w_hi <= w_lo:
                continue
            pieces.append((seg, w_lo, w_hi))

    counts: dict[str, int] = {}
    for seg, _, _ in pieces:
        counts[seg.id] = counts.get(seg.id, 0) + 1
    seen: dict[str, int] = {}
    out_segments: list[SemanticExperienceSegment] = []
    for seg, w_lo, w_hi in pieces:
        seen[seg.id] = seen.get(seg.id, 0) + 1
        piece_id = seg.id if counts[seg.id] == 1 else f"{seg.id}~{seen[seg.id]}"
        out_segments.append(replace(seg, id=piece_id, t_start=w_lo, t_end=w_hi))

    def export_span(t_start: Timestamp, t_end: Timestamp) -> tuple[float, float] | None:
        """Wall span of the first covered stretch of [t_start, t_end]."""
        for wall_start, wall_end, exp_start, rate in spans:
            exp_end = exp_start + rate * (wall_end - wall_start)
            lo = max(t_start, exp_start)
            hi = min(t_end, exp_end)
            if hi < lo:
                continue
            return (
                wall_start + (lo - exp_start) / rate,
                wall_start + (hi - exp_start) / rate,
            )
        return None

    def piece_for(wall_lo: float, wall_hi: float) -> str | None:
        for out_seg in out_segments:
            if out_seg.t_start <= wall_lo and wall_hi <= out_seg.t_end:
                return out_seg.id
        return None

    out_interactions: list[InteractionEvent] = []
    kept_event_ids: set[str] = set()
    for ev in doc.interaction_events:
        span = export_span(ev.t_start, ev.t_end)
        if span is None:
            continue
        seg_id = piece_for(*span)
        if seg_id is None:
            continue
        kept_event_ids.add(ev.id)
        out_interactions.append(replace(ev, segment_id=seg_id, t_start=span[0], t_end=span[1]))

    out_changes: list[StateChangeEvent] = []
    for sc in doc.state_change_events:
        span = export_span(sc.t_start, sc.t_end)
        if span is None:
            continue
        covered = _exp_window(spans, sc.t_start, sc.t_end)
        if covered is None:
            continue
        before, after, inside = _clamp_pose_values(sc, covered[0], covered[1])
        if before == after:
            continue
        trajectory = tuple(
            (w, p)
            for t, p in inside
            for w in (wall_for(t),)
            if w is not None and span[0] <= w <= span[1]
        )
        cause = sc.cause_event_id if sc.cause_event_id in kept_event_ids else None
        out_changes.append(
            replace(
                sc,
                t_start=span[0],
                t_end=span[1],
                before=before,
                after=after,
                trajectory=trajectory,
                cause_event_id=cause,
            )
        )

    branch_segments: list[SemanticExperienceSegment] = []
    branch_events: list[InteractionEvent] = []
    for branch in session.branches:
        if branch.status is not BranchStatus.CLOSED or branch.close_wall is None:
            continue
        if branch.close_wall <= branch.open_wall:
            continue
        seg_id = branch.id
        label = branch.intent.topic or branch.intent.kind.value
        actors = sorted({ev.actor for ev in branch.script})
        branch_segments.append(
            SemanticExperienceSegment(
                id=seg_id,
                label=label,
                t_start=branch.open_wall,
                t_end=branch.close_wall,
                participants=tuple(a for a in actors if doc.entity(a) is not None),
            )
        )
        for j, ev in enumerate(branch.script):
            t0 = branch.open_wall + ev.start_offset
            t1 = min(branch.open_wall + ev.end_offset, branch.close_wall)
            if t1 < t0 or doc.entity(ev.actor) is None:
                continue
            branch_events.append(
                InteractionEvent(
                    id=f"{branch.id}-ev-{j + 1}",
                    segment_id=seg_id,
                    actor=ev.actor,
                    verb=ev.verb,
                    target=ev.target if ev.target is not None and doc.entity(ev.target) else None,
                    t_start=t0,
                    t_end=t1,
                    pre_state=EventState(),
                    post_state=EventState(),
                    payload=ev.payload,
                )
            )

    all_segments = sorted(out_segments + branch_segments, key=lambda s: (s.t_start, s.t_end))
    all_events = sorted(out_interactions + branch_events, key=lambda e: (e.t_start, e.t_end, e.id))
    out_changes.sort(key=lambda s: (s.t_start, s.t_end, s.id))

    exported = MAREDDocument(
        header=Header(capture_epoch=doc.header.capture_epoch, anchors=doc.header.anchors),
        entities=doc.entities,
        segments=tuple(all_segments),
        interaction_events=tuple(all_events),
        state_change_events=tuple(out_changes),
    )
    return require_valid(exported)


def _exp_window(
    spans: list[tuple[float, float, Timestamp, float]], t_start: Timestamp, t_end: Timestamp
) -> tuple[Timestamp, Timestamp] | None:
    for wall_start, wall_end, exp_start, rate in spans:
        exp_end = exp_start + rate * (wall_end - wall_start)
        lo = max(t_start, exp_start)
        hi = min(t_end, exp_end)
        if hi >= lo:
            return (lo, hi)
    return None


__all__ = [
    "InputKind",
    "IntentKind",
    "ResumePolicy",
    "SessionMode",
    "BranchStatus",
    "SessionEventKind",
    "InteractionInput",
    "Intent",
    "classify_intent",
    "BranchScriptEvent",
    "BranchContext",
    "Responder",
    "TemplateResponder",
    "Branch",
    "ClockEntry",
    "ClockMap",
    "PlaybackConfig",
    "SessionEvent",
    "PlaybackState",
    "ResumeInfo",
    "PlaybackSession",
    "open_session",
    "tick",
    "create_new_branch",
    "return_to_main",
    "inject",
    "set_rate",
    "run_to_end",
    "replay_trace",
    "export_session",
]
