"""Stage 1: turn a raw spatio-temporal capture into a structured semantic log.

The capture already carries action annotations and optional segment markers
(produced upstream of this package); ingestion pairs action phases into
interaction events, detects state changes between consecutive frames, and
groups everything into segments.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Sequence

from .errors import (
    MalformedMarkersError,
    RejectedInputError,
    TruncatedActionError,
    UnsegmentedEventError,
)
from .model import (
    Entity,
    EntityKind,
    EventState,
    Header,
    InteractionEvent,
    MAREDDocument,
    Pose,
    PropertyValue,
    Quat,
    SemanticExperienceSegment,
    SpaceAnchor,
    StateChangeEvent,
    StateChangeKind,
    Timestamp,
    Vec3,
    Verb,
)
from .relations import (
    DEFAULT_RULES,
    EntityState,
    RelationContext,
    RelationRules,
    relate_all,
    subject_relations,
)

logger = logging.getLogger(__name__)

# Raw entity properties with special meaning; stripped from intrinsic state.
#   anchor: true       -> first-seen pose becomes a space anchor
#   attachedTo: "<id>" -> asserts the attachedTo relation explicitly
RESERVED_PROPERTIES = frozenset({"anchor", "attachedTo"})


class ActionPhase(str, Enum):
    BEGIN = "begin"
    UPDATE = "update"
    END = "end"


class MarkerKind(str, Enum):
    SEGMENT_START = "segmentStart"
    SEGMENT_END = "segmentEnd"


@dataclass(frozen=True)
class ActionAnnotation:
    actor: str
    verb: Verb
    phase: ActionPhase
    target: str | None = None
    payload: str | None = None

    @property
    def key(self) -> tuple[str, str, str | None]:
        return (self.actor, self.verb.value, self.target)


@dataclass(frozen=True)
class SegmentMarker:
    kind: MarkerKind
    label: str
    participants: tuple[str, ...] = ()
    key_objects: tuple[str, ...] = ()


@dataclass(frozen=True)
class RawEntityState:
    """One entity's sample in a frame, plus catalog metadata on first sight."""

    id: str
    pose: Pose
    bbox: Vec3 = (0.1, 0.1, 0.1)
    properties: dict[str, PropertyValue] = field(default_factory=dict)
    kind: EntityKind = EntityKind.OBJECT
    label: str | None = None
    significance: float = 0.5


@dataclass(frozen=True)
class RawFrame:
    t: Timestamp
    entities: tuple[RawEntityState, ...] = ()
    actions: tuple[ActionAnnotation, ...] = ()
    markers: tuple[SegmentMarker, ...] = ()


@dataclass(frozen=True)
class RawCapture:
    frames: tuple[RawFrame, ...] = ()


@dataclass(frozen=True)
class LoggerConfig:
    """Tunable thresholds for ingestion; defaults are deliberately visible."""

    gap_seconds: float = 5.0          # silence that opens a new segment
    min_displacement: float = 0.10    # meters per frame step
    min_rotation_deg: float = 15.0    # degrees per frame step
    strict_actions: bool = False      # raise instead of dropping odd phases
    capture_epoch: str = "1970-01-01T00:00:00Z"
    rules: RelationRules = DEFAULT_RULES

    def check(self) -> None:
        if not (self.gap_seconds > 0 and math.isfinite(self.gap_seconds)):
            raise RejectedInputError("gap_seconds must be positive and finite")
        if self.min_displacement < 0 or self.min_rotation_deg < 0:
            raise RejectedInputError("pose thresholds must be non-negative")


def coerce_verb(name: str) -> Verb:
    """Map a verb name onto the closed vocabulary; unknown names become gesture."""
    try:
        return Verb(name)
    except ValueError:
        logger.warning("unknown verb %r mapped to gesture", name)
        return Verb.GESTURE


def _quat_angle_deg(a: Quat, b: Quat) -> float:
    dot = abs(sum(x * y for x, y in zip(a, b)))
    return math.degrees(2.0 * math.acos(min(1.0, dot)))


def _validate_raw(raw: RawCapture) -> None:
    if not raw.frames:
        raise RejectedInputError("capture has no frames")
    prev_t: float | None = None
    for i, frame in enumerate(raw.frames):
        if not math.isfinite(frame.t) or frame.t < 0:
            raise RejectedInputError(f"frame {i} has bad timestamp {frame.t!r}")
        if prev_t is not None and frame.t <= prev_t:
            raise RejectedInputError(
                f"frame timestamps must strictly increase, got {frame.t!r} after {prev_t!r}"
            )
        prev_t = frame.t
        seen: set[str] = set()
        for state in frame.entities:
            if state.id in seen:
                raise RejectedInputError(f"frame {i} lists entity {state.id!r} twice")
            seen.add(state.id)
            if not state.pose.is_finite():
                raise RejectedInputError(f"non-finite pose for entity {state.id!r} in frame {i}")


def _entity_catalog(frames: Sequence[RawFrame]) -> dict[str, Entity]:
    catalog: dict[str, Entity] = {}
    for frame in frames:
        for state in frame.entities:
            if state.id in catalog:
                continue
            props = {k: v for k, v in state.properties.items() if k not in RESERVED_PROPERTIES}
            catalog[state.id] = Entity(
                id=state.id,
                kind=state.kind,
                label=state.label if state.label is not None else state.id,
                significance=state.significance,
                bbox=state.bbox,
                properties=props,
            )
    return catalog


def _space_anchors(frames: Sequence[RawFrame]) -> tuple[SpaceAnchor, ...]:
    anchors: dict[str, SpaceAnchor] = {}
    for frame in frames:
        for state in frame.entities:
            if state.id not in anchors and state.properties.get("anchor") is True:
                anchors[state.id] = SpaceAnchor(id=state.id, pose=state.pose)
    return tuple(anchors.values())


# Verbs that end an active hold when their action completes.
_HOLD_ENDING = {Verb.RELEASE, Verb.PLACE, Verb.GIVE}


@dataclass
class _PendingAction:
    begin_t: Timestamp
    begin_index: int
    payload: str | None


@dataclass
class _CompletedAction:
    actor: str
    verb: Verb
    target: str | None
    t_start: Timestamp
    t_end: Timestamp
    begin_index: int
    end_index: int
    payload: str | None


def _frame_context(frame: RawFrame, holds: set[tuple[str, str]], rules: RelationRules) -> RelationContext:
    attachments = {
        (state.id, str(state.properties["attachedTo"]))
        for state in frame.entities
        if isinstance(state.properties.get("attachedTo"), str)
    }
    return RelationContext(grasps=frozenset(holds), attachments=frozenset(attachments), rules=rules)


def _walk_actions(
    raw: RawCapture, config: LoggerConfig
) -> tuple[list[_CompletedAction], list[frozenset]]:
    """Pair begin/end phases and compute per-frame relation sets.

    A grasp takes effect strictly after its begin frame and a hold-ending
    action (release, place, give) takes effect at its end frame, so the pre
    and post snapshots taken at those frames show the state before and after
    the action.
    """
    holds: set[tuple[str, str]] = set()
    open_actions: dict[tuple, _PendingAction] = {}
    completed: list[_CompletedAction] = []
    frame_relations: list[frozenset] = []

    for index, frame in enumerate(raw.frames):
        for action in frame.actions:
            if action.phase is ActionPhase.END and action.verb in _HOLD_ENDING:
                holds.discard((action.actor, action.target or ""))

        states = [
            EntityState(
                entity_id=s.id,
                kind=s.kind,
                pose=s.pose,
                bbox=s.bbox,
                properties={k: v for k, v in s.properties.items() if k not in RESERVED_PROPERTIES},
            )
            for s in frame.entities
        ]
        frame_relations.append(relate_all(states, _frame_context(frame, holds, config.rules)))

        for action in frame.actions:
            if action.phase is ActionPhase.BEGIN:
                if action.key in open_actions:
                    if config.strict_actions:
                        raise RejectedInputError(f"duplicate begin for action {action.key!r}")
                    logger.warning("duplicate begin for action %r; restarting it", action.key)
                open_actions[action.key] = _PendingAction(frame.t, index, action.payload)
                if action.verb is Verb.GRASP and action.target is not None:
                    holds.add((action.actor, action.target))
            elif action.phase is ActionPhase.UPDATE:
                pending = open_actions.get(action.key)
                if pending is None:
                    logger.warning("update for unopened action %r ignored", action.key)
                elif action.payload is not None:
                    pending.payload = action.payload
            else:  # END
                pending = open_actions.pop(action.key, None)
                if pending is None:
                    if config.strict_actions:
                        raise TruncatedActionError(f"end without begin for action {action.key!r}")
                    logger.warning("end without begin for action %r dropped", action.key)
                    continue
                completed.append(
                    _CompletedAction(
                        actor=action.actor,
                        verb=action.verb,
                        target=action.target,
                        t_start=pending.begin_t,
                        t_end=frame.t,
                        begin_index=pending.begin_index,
                        end_index=index,
                        payload=action.payload if action.payload is not None else pending.payload,
                    )
                )

    if open_actions:
        if config.strict_actions:
            raise TruncatedActionError(
                f"actions still open at end of capture: {sorted(open_actions)!r}"
            )
        for key in sorted(open_actions):
            logger.warning("action %r never ended; dropped", key)

    return completed, frame_relations


def _snapshot(
    frame: RawFrame, relations: frozenset, target: str | None
) -> EventState:
    if target is None:
        return EventState()
    props: dict[str, PropertyValue] = {}
    for state in frame.entities:
        if state.id == target:
            props = {k: v for k, v in state.properties.items() if k not in RESERVED_PROPERTIES}
            break
    return EventState(relations=subject_relations(relations, target), properties=props)


def _detect_pose_changes(
    raw: RawCapture, config: LoggerConfig
) -> list[StateChangeEvent]:
    by_entity: dict[str, list[tuple[int, Pose]]] = {}
    for index, frame in enumerate(raw.frames):
        for state in frame.entities:
            by_entity.setdefault(state.id, []).append((index, state.pose))

    events: list[StateChangeEvent] = []
    for entity_id in by_entity:
        samples = by_entity[entity_id]
        run: list[tuple[int, Pose]] = []
        for (i_prev, p_prev), (i_curr, p_curr) in zip(samples, samples[1:]):
            consecutive = i_curr - i_prev == 1
            moved = (
                math.dist(p_prev.position, p_curr.position) >= config.min_displacement
                or _quat_angle_deg(p_prev.orientation, p_curr.orientation)
                >= config.min_rotation_deg
            )
            if consecutive and moved:
                if run and run[-1][0] == i_prev:
                    run.append((i_curr, p_curr))
                else:
                    if run:
                        events.extend(_pose_event(entity_id, run, raw))
                    run = [(i_prev, p_prev), (i_curr, p_curr)]
            else:
                if run:
                    events.extend(_pose_event(entity_id, run, raw))
                    run = []
        if run:
            events.extend(_pose_event(entity_id, run, raw))
    return events


def _pose_event(
    entity_id: str, run: list[tuple[int, Pose]], raw: RawCapture
) -> list[StateChangeEvent]:
    before, after = run[0][1], run[-1][1]
    if before == after:
        # A closed loop has no net transformation to describe; skip it.
        logger.debug("pose run for %s returned to its start; dropped", entity_id)
        return []
    return [
        StateChangeEvent(
            id="",
            subject=entity_id,
            kind=StateChangeKind.POSE,
            t_start=raw.frames[run[0][0]].t,
            t_end=raw.frames[run[-1][0]].t,
            before=before,
            after=after,
            trajectory=tuple((raw.frames[i].t, pose) for i, pose in run),
        )
    ]


def _detect_relation_changes(
    raw: RawCapture, frame_relations: list[frozenset]
) -> list[StateChangeEvent]:
    events: list[StateChangeEvent] = []
    for i_curr in range(1, len(raw.frames)):
        i_prev = i_curr - 1
        frame_prev, frame_curr = raw.frames[i_prev], raw.frames[i_curr]
        ids_curr = {s.id for s in frame_curr.entities}
        for entity_id in (s.id for s in frame_prev.entities if s.id in ids_curr):
            before = subject_relations(frame_relations[i_prev], entity_id)
            after = subject_relations(frame_relations[i_curr], entity_id)
            if before != after:
                events.append(
                    StateChangeEvent(
                        id="",
                        subject=entity_id,
                        kind=StateChangeKind.RELATION,
                        t_start=frame_curr.t,
                        t_end=frame_curr.t,
                        before=before,
                        after=after,
                    )
                )
    return events


def _detect_intrinsic_changes(raw: RawCapture) -> list[StateChangeEvent]:
    events: list[StateChangeEvent] = []
    for frame_prev, frame_curr in zip(raw.frames, raw.frames[1:]):
        prev_props = {s.id: s.properties for s in frame_prev.entities}
        for state in frame_curr.entities:
            if state.id not in prev_props:
                continue
            old = {k: v for k, v in prev_props[state.id].items() if k not in RESERVED_PROPERTIES}
            new = {k: v for k, v in state.properties.items() if k not in RESERVED_PROPERTIES}
            changed = {k for k in old.keys() | new.keys() if old.get(k) != new.get(k)}
            if changed:
                events.append(
                    StateChangeEvent(
                        id="",
                        subject=state.id,
                        kind=StateChangeKind.INTRINSIC,
                        t_start=frame_curr.t,
                        t_end=frame_curr.t,
                        before={k: old[k] for k in sorted(changed) if k in old},
                        after={k: new[k] for k in sorted(changed) if k in new},
                    )
                )
    return events


def detect_state_changes(
    raw: RawCapture,
    events: Sequence[InteractionEvent],
    config: LoggerConfig = LoggerConfig(),
) -> list[StateChangeEvent]:
    """All pose, relation and intrinsic changes, with causes attributed.

    A change's `cause_event_id` is set when exactly one interaction event's
    span overlaps the change.
    """
    _validate_raw(raw)
    config.check()
    _, frame_relations = _walk_actions(raw, config)
    changes = (
        _detect_pose_changes(raw, config)
        + _detect_relation_changes(raw, frame_relations)
        + _detect_intrinsic_changes(raw)
    )
    changes.sort(key=lambda s: (s.t_start, s.t_end, s.subject, s.kind.value))
    out: list[StateChangeEvent] = []
    for i, change in enumerate(changes):
        overlapping = [
            e for e in events if e.t_start <= change.t_end and change.t_start <= e.t_end
        ]
        cause = overlapping[0].id if len(overlapping) == 1 else None
        out.append(replace(change, id=f"sc-{i + 1}", cause_event_id=cause))
    return out


def build_segments(
    events: Sequence[InteractionEvent | StateChangeEvent],
    markers: Sequence[tuple[Timestamp, SegmentMarker]],
    config: LoggerConfig = LoggerConfig(),
    capture_span: tuple[Timestamp, Timestamp] | None = None,
    entity_ids: Sequence[str] = (),
) -> list[SemanticExperienceSegment]:
    """Segments from explicit markers, or gap clustering of event spans.

    Falls back to one segment covering `capture_span` when there are entities
    but nothing else to anchor segmentation on.
    """
    config.check()
    if markers:
        return _segments_from_markers(markers, entity_ids)

    spans = sorted(events, key=lambda e: (e.t_start, e.t_end))
    if not spans:
        if capture_span is not None and entity_ids:
            lo, hi = capture_span
            if hi <= lo:
                hi = lo + 1.0
            return [
                SemanticExperienceSegment(
                    id="seg-1", label="capture", t_start=lo, t_end=hi
                )
            ]
        return []

    clusters: list[list[InteractionEvent | StateChangeEvent]] = [[spans[0]]]
    cluster_end = spans[0].t_end
    for ev in spans[1:]:
        if ev.t_start - cluster_end > config.gap_seconds:
            clusters.append([ev])
        else:
            clusters[-1].append(ev)
        cluster_end = max(cluster_end, ev.t_end)

    # Zero-length clusters get padded; safe because the next cluster is more
    # than gap_seconds away.
    pad = min(1.0, config.gap_seconds / 2)
    segments: list[SemanticExperienceSegment] = []
    for i, cluster in enumerate(clusters):
        lo = min(e.t_start for e in cluster)
        hi = max(e.t_end for e in cluster)
        if hi <= lo:
            hi = lo + pad
        participants: set[str] = set()
        key_objects: set[str] = set()
        for ev in cluster:
            if isinstance(ev, InteractionEvent):
                participants.add(ev.actor)
                if ev.target is not None:
                    key_objects.add(ev.target)
            else:
                key_objects.add(ev.subject)
        segments.append(
            SemanticExperienceSegment(
                id=f"seg-{i + 1}",
                label=f"activity-{i + 1}",
                t_start=lo,
                t_end=hi,
                participants=tuple(sorted(participants)),
                key_objects=tuple(sorted(key_objects)),
            )
        )
    return segments


def _segments_from_markers(
    markers: Sequence[tuple[Timestamp, SegmentMarker]],
    entity_ids: Sequence[str],
) -> list[SemanticExperienceSegment]:
    known = set(entity_ids)
    segments: list[SemanticExperienceSegment] = []
    open_marker: tuple[Timestamp, SegmentMarker] | None = None
    for t, marker in markers:
        if marker.kind is MarkerKind.SEGMENT_START:
            if open_marker is not None:
                raise MalformedMarkersError(
                    f"segment {marker.label!r} starts while {open_marker[1].label!r} is open"
                )
            open_marker = (t, marker)
        else:
            if open_marker is None or open_marker[1].label != marker.label:
                raise MalformedMarkersError(f"segment end {marker.label!r} matches no open start")
            t_start, start = open_marker
            if t <= t_start:
                raise MalformedMarkersError(f"segment {marker.label!r} has an empty span")
            drop = [e for e in (*start.participants, *start.key_objects) if e not in known]
            if drop:
                logger.warning("marker %r references unknown entities %r; dropped", marker.label, drop)
            segments.append(
                SemanticExperienceSegment(
                    id=f"seg-{len(segments) + 1}",
                    label=start.label,
                    t_start=t_start,
                    t_end=t,
                    participants=tuple(p for p in start.participants if p in known),
                    key_objects=tuple(k for k in start.key_objects if k in known),
                )
            )
            open_marker = None
    if open_marker is not None:
        raise MalformedMarkersError(f"segment {open_marker[1].label!r} never ends")
    return segments


def ingest(raw: RawCapture, config: LoggerConfig = LoggerConfig()) -> MAREDDocument:
    """Run the full stage-1 pipeline; the result always validates cleanly."""
    _validate_raw(raw)
    config.check()

    catalog = _entity_catalog(raw.frames)
    completed, frame_relations = _walk_actions(raw, config)
    completed.sort(key=lambda a: (a.t_start, a.t_end, a.actor, a.verb.value, a.target or ""))

    interactions: list[InteractionEvent] = []
    for i, action in enumerate(completed):
        interactions.append(
            InteractionEvent(
                id=f"ie-{i + 1}",
                segment_id="",
                actor=action.actor,
                verb=action.verb,
                target=action.target,
                t_start=action.t_start,
                t_end=action.t_end,
                pre_state=_snapshot(
                    raw.frames[action.begin_index], frame_relations[action.begin_index], action.target
                ),
                post_state=_snapshot(
                    raw.frames[action.end_index], frame_relations[action.end_index], action.target
                ),
                payload=action.payload,
            )
        )

    changes = detect_state_changes(raw, interactions, config)

    markers = [
        (frame.t, marker) for frame in raw.frames for marker in frame.markers
    ]
    segments = build_segments(
        [*interactions, *changes],
        markers,
        config,
        capture_span=(raw.frames[0].t, raw.frames[-1].t),
        entity_ids=list(catalog),
    )

    def enclosing(t_start: float, t_end: float) -> SemanticExperienceSegment:
        for seg in segments:
            if seg.t_start <= t_start and t_end <= seg.t_end:
                return seg
        raise UnsegmentedEventError(
            f"no segment encloses event span [{t_start}, {t_end}]; "
            "markers must cover every event"
        )

    interactions = [
        replace(ev, segment_id=enclosing(ev.t_start, ev.t_end).id) for ev in interactions
    ]
    for change in changes:
        enclosing(change.t_start, change.t_end)

    return MAREDDocument(
        header=Header(capture_epoch=config.capture_epoch, anchors=_space_anchors(raw.frames)),
        entities=tuple(catalog.values()),
        segments=tuple(segments),
        interaction_events=tuple(interactions),
        state_change_events=tuple(changes),
    )
