"""Domain types shared across the pipeline, plus document validation.

Every value here is immutable after construction and safe to share between
threads.  Validation never raises: `validate_document` returns a list of
`Violation` records so a broken document can still be inspected.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Iterable, Union

MARED_VERSION = "0.1"
SUPPORTED_VERSIONS = frozenset({MARED_VERSION})

QUAT_NORM_TOL = 1e-6

# Seconds since the capture epoch.
Timestamp = float
Vec3 = tuple[float, float, float]
# (w, x, y, z), unit norm.
Quat = tuple[float, float, float, float]
PropertyValue = Union[bool, int, float, str]

IDENTITY_QUAT: Quat = (1.0, 0.0, 0.0, 0.0)


class EntityKind(str, Enum):
    USER = "user"
    OBJECT = "object"


class Predicate(str, Enum):
    ON = "on"
    IN = "in"
    HELD_BY = "heldBy"
    NEAR = "near"
    ATTACHED_TO = "attachedTo"


class Verb(str, Enum):
    GRASP = "grasp"
    RELEASE = "release"
    PRESS = "press"
    ACTIVATE = "activate"
    GIVE = "give"
    PLACE = "place"
    SPEAK = "speak"
    GESTURE = "gesture"
    GAZE = "gaze"


class StateChangeKind(str, Enum):
    POSE = "pose"
    RELATION = "relation"
    INTRINSIC = "intrinsic"


@dataclass(frozen=True)
class Pose:
    position: Vec3
    orientation: Quat = IDENTITY_QUAT

    def is_finite(self) -> bool:
        return all(math.isfinite(c) for c in self.position) and all(
            math.isfinite(c) for c in self.orientation
        )


@dataclass(frozen=True)
class Entity:
    """A tracked participant of the capture, user or object.

    `significance` is an importance prior in [0, 1] supplied with the capture;
    `bbox` holds axis-aligned extents in meters; `properties` is the intrinsic
    state at the start of the capture (e.g. ``is_on``).
    """

    id: str
    kind: EntityKind
    label: str
    significance: float = 0.5
    bbox: Vec3 = (0.1, 0.1, 0.1)
    properties: dict[str, PropertyValue] = field(default_factory=dict)


@dataclass(frozen=True, order=True)
class SemanticRelation:
    """A logical predicate between two entities, e.g. ``on(cup, table)``."""

    predicate: Predicate
    subject: str
    object: str


RelationSet = frozenset[SemanticRelation]


@dataclass(frozen=True)
class EventState:
    """Relation set plus property snapshot of an event's target."""

    relations: RelationSet = frozenset()
    properties: dict[str, PropertyValue] = field(default_factory=dict)


EMPTY_STATE = EventState()


@dataclass(frozen=True)
class SemanticExperienceSegment:
    """A goal-oriented chapter of the experience, e.g. "drone lifting method"."""

    id: str
    label: str
    t_start: Timestamp
    t_end: Timestamp
    participants: tuple[str, ...] = ()
    key_objects: tuple[str, ...] = ()


@dataclass(frozen=True)
class InteractionEvent:
    """A single meaningful action performed by a user inside a segment."""

    id: str
    segment_id: str
    actor: str
    verb: Verb
    t_start: Timestamp
    t_end: Timestamp
    target: str | None = None
    pre_state: EventState = EMPTY_STATE
    post_state: EventState = EMPTY_STATE
    payload: str | None = None


StateValue = Union[Pose, RelationSet, dict[str, PropertyValue]]


@dataclass(frozen=True)
class StateChangeEvent:
    """An observed change of one entity: pose, relations or intrinsic state."""

    id: str
    subject: str
    kind: StateChangeKind
    t_start: Timestamp
    t_end: Timestamp
    before: StateValue
    after: StateValue
    trajectory: tuple[tuple[Timestamp, Pose], ...] = ()
    cause_event_id: str | None = None


@dataclass(frozen=True)
class SpaceAnchor:
    """A named static reference pose of the capture space."""

    id: str
    pose: Pose


@dataclass(frozen=True)
class Header:
    capture_epoch: str = "1970-01-01T00:00:00Z"
    anchors: tuple[SpaceAnchor, ...] = ()


@dataclass(frozen=True)
class MAREDDocument:
    """Stage-1 output: the structured semantic log of one capture."""

    header: Header = Header()
    entities: tuple[Entity, ...] = ()
    segments: tuple[SemanticExperienceSegment, ...] = ()
    interaction_events: tuple[InteractionEvent, ...] = ()
    state_change_events: tuple[StateChangeEvent, ...] = ()
    mared_version: str = MARED_VERSION
    # Unknown top-level keys preserved by lenient decoding.
    extras: dict[str, object] = field(default_factory=dict)

    def entity(self, entity_id: str) -> Entity | None:
        for e in self.entities:
            if e.id == entity_id:
                return e
        return None

    def users(self) -> tuple[Entity, ...]:
        return tuple(e for e in self.entities if e.kind is EntityKind.USER)


@dataclass(frozen=True)
class Keyframe:
    """A semantic anchor: the moment, its score, and what scored it."""

    t: Timestamp
    score: float
    sources: tuple[str, ...]
    anchors: tuple[tuple[str, Pose], ...] = ()


@dataclass(frozen=True)
class KeyframedDocument:
    """Stage-2 output: a document with its keyframes and the threshold used."""

    document: MAREDDocument
    threshold: float
    keyframes: tuple[Keyframe, ...] = ()


@dataclass(frozen=True)
class Violation:
    """One broken invariant: the rule, where it broke, and the offending id."""

    rule: str
    path: str
    offender: str | None = None
    message: str = ""

    def __str__(self) -> str:
        where = f"{self.rule}({self.offender})" if self.offender else self.rule
        return f"{where} at {self.path}" + (f": {self.message}" if self.message else "")


def _finite(x: float) -> bool:
    return isinstance(x, (int, float)) and not isinstance(x, bool) and math.isfinite(x)


def _check_pose(pose: Pose, path: str, out: list[Violation]) -> None:
    if not pose.is_finite():
        out.append(Violation("nonFinite", path, message="pose has non-finite components"))
        return
    norm = math.sqrt(sum(c * c for c in pose.orientation))
    if abs(norm - 1.0) > QUAT_NORM_TOL:
        out.append(
            Violation("badQuaternion", path, message=f"orientation norm {norm!r} is not 1")
        )


def _check_timestamp(t: float, path: str, out: list[Violation]) -> None:
    if not _finite(t):
        out.append(Violation("nonFinite", path, message="timestamp is not finite"))
    elif t < 0:
        out.append(Violation("outOfRange", path, message=f"timestamp {t!r} is negative"))


def _check_relations(
    relations: Iterable[SemanticRelation],
    entity_ids: set[str],
    path: str,
    out: list[Violation],
) -> None:
    for rel in relations:
        if rel.subject == rel.object:
            out.append(
                Violation("selfRelation", path, rel.subject, f"{rel.predicate.value} relates an entity to itself")
            )
        for eid in (rel.subject, rel.object):
            if eid not in entity_ids:
                out.append(Violation("danglingReference", path, eid))


def validate_document(doc: MAREDDocument) -> list[Violation]:
    """Check every structural invariant; an empty list means the document is valid."""
    out: list[Violation] = []

    if doc.mared_version not in SUPPORTED_VERSIONS:
        out.append(
            Violation(
                "versionMismatch",
                "maredVersion",
                message=f"supported {sorted(SUPPORTED_VERSIONS)}, found {doc.mared_version!r}",
            )
        )

    entity_ids: set[str] = set()
    for i, ent in enumerate(doc.entities):
        path = f"entities[{i}]"
        if ent.id in entity_ids:
            out.append(Violation("duplicateId", path, ent.id))
        entity_ids.add(ent.id)
        if not _finite(ent.significance) or not 0.0 <= ent.significance <= 1.0:
            out.append(Violation("outOfRange", f"{path}.significance", ent.id))
        if not all(_finite(x) and x > 0 for x in ent.bbox):
            out.append(Violation("outOfRange", f"{path}.bbox", ent.id, "extents must be positive"))

    anchor_ids: set[str] = set()
    for i, anchor in enumerate(doc.header.anchors):
        path = f"header.anchors[{i}]"
        if anchor.id in anchor_ids:
            out.append(Violation("duplicateId", path, anchor.id))
        anchor_ids.add(anchor.id)
        _check_pose(anchor.pose, f"{path}.pose", out)

    segment_ids: set[str] = set()
    prev_seg: SemanticExperienceSegment | None = None
    for i, seg in enumerate(doc.segments):
        path = f"segments[{i}]"
        if seg.id in segment_ids:
            out.append(Violation("duplicateId", path, seg.id))
        segment_ids.add(seg.id)
        _check_timestamp(seg.t_start, f"{path}.tStart", out)
        _check_timestamp(seg.t_end, f"{path}.tEnd", out)
        if not seg.t_start < seg.t_end:
            out.append(Violation("emptySpan", path, seg.id))
        if prev_seg is not None:
            if seg.t_start < prev_seg.t_start:
                out.append(Violation("unsortedSegments", path, seg.id))
            if seg.t_start < prev_seg.t_end:
                out.append(Violation("overlappingSegments", path, seg.id))
        prev_seg = seg
        for eid in (*seg.participants, *seg.key_objects):
            if eid not in entity_ids:
                out.append(Violation("danglingReference", path, eid))

    segments_by_id = {s.id: s for s in doc.segments}
    entities_by_id = {e.id: e for e in doc.entities}
    event_ids: set[str] = set()

    for i, ev in enumerate(doc.interaction_events):
        path = f"interactionEvents[{i}]"
        if ev.id in event_ids:
            out.append(Violation("duplicateId", path, ev.id))
        event_ids.add(ev.id)
        _check_timestamp(ev.t_start, f"{path}.tStart", out)
        _check_timestamp(ev.t_end, f"{path}.tEnd", out)
        if ev.t_start > ev.t_end:
            out.append(Violation("invalidSpan", path, ev.id, "tStart must not exceed tEnd"))
        actor = entities_by_id.get(ev.actor)
        if actor is None:
            out.append(Violation("danglingReference", f"{path}.actor", ev.actor))
        elif actor.kind is not EntityKind.USER:
            out.append(Violation("actorNotUser", f"{path}.actor", ev.actor))
        if ev.target is not None and ev.target not in entity_ids:
            out.append(Violation("danglingReference", f"{path}.target", ev.target))
        seg = segments_by_id.get(ev.segment_id)
        if seg is None:
            out.append(Violation("danglingReference", f"{path}.segmentId", ev.segment_id))
        elif not (seg.t_start <= ev.t_start and ev.t_end <= seg.t_end):
            out.append(Violation("eventOutsideSegment", path, ev.id))
        _check_relations(ev.pre_state.relations, entity_ids, f"{path}.preState", out)
        _check_relations(ev.post_state.relations, entity_ids, f"{path}.postState", out)

    interaction_ids = {e.id for e in doc.interaction_events}
    for i, sc in enumerate(doc.state_change_events):
        path = f"stateChangeEvents[{i}]"
        if sc.id in event_ids:
            out.append(Violation("duplicateId", path, sc.id))
        event_ids.add(sc.id)
        _check_timestamp(sc.t_start, f"{path}.tStart", out)
        _check_timestamp(sc.t_end, f"{path}.tEnd", out)
        if sc.t_start > sc.t_end:
            out.append(Violation("invalidSpan", path, sc.id, "tStart must not exceed tEnd"))
        if sc.subject not in entity_ids:
            out.append(Violation("danglingReference", f"{path}.subject", sc.subject))
        if sc.before == sc.after:
            out.append(Violation("noChange", path, sc.id, "before and after are identical"))
        expected = {
            StateChangeKind.POSE: Pose,
            StateChangeKind.RELATION: frozenset,
            StateChangeKind.INTRINSIC: dict,
        }[sc.kind]
        for name, value in (("before", sc.before), ("after", sc.after)):
            if not isinstance(value, expected):
                out.append(
                    Violation("kindMismatch", f"{path}.{name}", sc.id, f"expected {expected.__name__} for kind {sc.kind.value}")
                )
            elif expected is Pose:
                _check_pose(value, f"{path}.{name}", out)
            elif expected is frozenset:
                _check_relations(value, entity_ids, f"{path}.{name}", out)
        prev_t: float | None = None
        for j, (t, pose) in enumerate(sc.trajectory):
            tpath = f"{path}.trajectory[{j}]"
            _check_pose(pose, tpath, out)
            if not sc.t_start <= t <= sc.t_end:
                out.append(Violation("badTrajectory", tpath, sc.id, "sample outside event span"))
            if prev_t is not None and t <= prev_t:
                out.append(Violation("badTrajectory", tpath, sc.id, "timestamps must strictly increase"))
            prev_t = t
        if sc.cause_event_id is not None and sc.cause_event_id not in interaction_ids:
            out.append(Violation("danglingReference", f"{path}.causeEventId", sc.cause_event_id))
        if not any(s.t_start <= sc.t_start and sc.t_end <= s.t_end for s in doc.segments):
            out.append(Violation("unsegmented", path, sc.id, "span lies in no segment"))

    return out


def validate_keyframed(kdoc: KeyframedDocument) -> list[Violation]:
    """Validation for a keyframed document: base checks plus keyframe invariants."""
    out = validate_document(kdoc.document)
    if not _finite(kdoc.threshold) or not 0.0 <= kdoc.threshold <= 1.0:
        out.append(Violation("outOfRange", "threshold", message=f"theta {kdoc.threshold!r} not in [0, 1]"))

    event_ids = {e.id for e in kdoc.document.interaction_events}
    event_ids.update(s.id for s in kdoc.document.state_change_events)
    entity_ids = {e.id for e in kdoc.document.entities}
    prev_t: float | None = None
    for i, kf in enumerate(kdoc.keyframes):
        path = f"keyframes[{i}]"
        _check_timestamp(kf.t, f"{path}.t", out)
        if prev_t is not None and kf.t <= prev_t:
            out.append(Violation("unsortedKeyframes", path, message="times must strictly increase"))
        prev_t = kf.t
        if not _finite(kf.score) or not 0.0 <= kf.score <= 1.0:
            out.append(Violation("outOfRange", f"{path}.score"))
        if not kf.sources:
            out.append(Violation("emptySources", path))
        for sid in kf.sources:
            if sid not in event_ids:
                out.append(Violation("danglingReference", f"{path}.sources", sid))
        for eid, pose in kf.anchors:
            if eid not in entity_ids:
                out.append(Violation("danglingReference", f"{path}.anchors", eid))
            _check_pose(pose, f"{path}.anchors[{eid}]", out)
    return out


def require_valid(doc: MAREDDocument) -> MAREDDocument:
    """Raise `InvalidDocumentError` unless `doc` validates cleanly."""
    from .errors import InvalidDocumentError

    violations = validate_document(doc)
    if violations:
        raise InvalidDocumentError(violations)
    return doc


def pose_events_for(doc: MAREDDocument, entity_id: str) -> list[StateChangeEvent]:
    return sorted(
        (s for s in doc.state_change_events if s.subject == entity_id and s.kind is StateChangeKind.POSE),
        key=lambda s: (s.t_start, s.t_end),
    )


def pose_at(doc: MAREDDocument, entity_id: str, t: Timestamp) -> Pose | None:
    """Best-known pose of an entity at time `t`, from its pose-change events.

    The document stores motion, not a dense pose track: between pose events an
    entity is assumed to rest where its last event left it.  Returns None when
    the document records no pose for the entity at all.
    """
    events = pose_events_for(doc, entity_id)
    if not events:
        return None
    current: Pose | None = None
    for ev in events:
        if t < ev.t_start:
            break
        if t >= ev.t_end:
            current = ev.after if isinstance(ev.after, Pose) else current
            continue
        # Inside the span: step along the trajectory up to t.
        pose = ev.before if isinstance(ev.before, Pose) else None
        for sample_t, sample_pose in ev.trajectory:
            if sample_t <= t:
                pose = sample_pose
            else:
                break
        return pose
    if current is None:
        first = events[0]
        return first.before if isinstance(first.before, Pose) else None
    return current


__all__ = [
    "MARED_VERSION",
    "SUPPORTED_VERSIONS",
    "QUAT_NORM_TOL",
    "IDENTITY_QUAT",
    "Timestamp",
    "Vec3",
    "Quat",
    "PropertyValue",
    "EntityKind",
    "Predicate",
    "Verb",
    "StateChangeKind",
    "Pose",
    "Entity",
    "SemanticRelation",
    "RelationSet",
    "EventState",
    "EMPTY_STATE",
    "SemanticExperienceSegment",
    "InteractionEvent",
    "StateValue",
    "StateChangeEvent",
    "SpaceAnchor",
    "Header",
    "MAREDDocument",
    "Keyframe",
    "KeyframedDocument",
    "Violation",
    "validate_document",
    "validate_keyframed",
    "require_valid",
    "pose_at",
    "pose_events_for",
]
