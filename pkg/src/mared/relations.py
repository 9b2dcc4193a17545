"""Geometric evaluation of semantic relations between entity states.

The vertical axis is +y.  Bounding boxes are axis-aligned and centered on the
entity position, so an entity occupies ``position ± bbox/2`` on each axis.  A
user's position doubles as its single tracked hand point.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

from .errors import RejectedInputError
from .model import (
    Entity,
    EntityKind,
    Pose,
    Predicate,
    PropertyValue,
    RelationSet,
    SemanticRelation,
    Vec3,
)


@dataclass(frozen=True)
class RelationRules:
    """Thresholds for the relation predicates; all distances in meters.

    `on` holds when the subject's bottom face sits within [on_gap_min,
    on_gap_max] of the object's top face and their footprints overlap by at
    least `on_overlap_frac` of the subject's own footprint.
    """

    on_gap_min: float = -0.01
    on_gap_max: float = 0.02
    on_overlap_frac: float = 0.5
    near_distance: float = 0.5
    held_distance: float = 0.05


DEFAULT_RULES = RelationRules()


@dataclass(frozen=True)
class EntityState:
    """One entity's geometry and intrinsic state at a single moment."""

    entity_id: str
    kind: EntityKind
    pose: Pose
    bbox: Vec3
    properties: dict[str, PropertyValue] = field(default_factory=dict)


@dataclass(frozen=True)
class RelationContext:
    """Interaction state the geometry alone cannot see.

    `grasps` holds (actor id, object id) pairs whose grasp is currently in
    effect; `attachments` holds (subject id, object id) pairs asserted by
    explicit capture annotations.
    """

    grasps: frozenset[tuple[str, str]] = frozenset()
    attachments: frozenset[tuple[str, str]] = frozenset()
    rules: RelationRules = DEFAULT_RULES


EMPTY_CONTEXT = RelationContext()


def _distance(a: Vec3, b: Vec3) -> float:
    return math.dist(a, b)


def _footprint_overlap(a_pos: Vec3, a_bbox: Vec3, b_pos: Vec3, b_bbox: Vec3) -> float:
    """Overlap area of the two horizontal (x, z) footprint rectangles."""
    dx = min(a_pos[0] + a_bbox[0] / 2, b_pos[0] + b_bbox[0] / 2) - max(
        a_pos[0] - a_bbox[0] / 2, b_pos[0] - b_bbox[0] / 2
    )
    dz = min(a_pos[2] + a_bbox[2] / 2, b_pos[2] + b_bbox[2] / 2) - max(
        a_pos[2] - a_bbox[2] / 2, b_pos[2] - b_bbox[2] / 2
    )
    if dx <= 0 or dz <= 0:
        return 0.0
    return dx * dz


def _volume(bbox: Vec3) -> float:
    return bbox[0] * bbox[1] * bbox[2]


def relate(
    subject: EntityState,
    obj: EntityState,
    context: RelationContext = EMPTY_CONTEXT,
) -> RelationSet:
    """Every relation that holds with `subject` as first argument.

    Pure and deterministic.  `on`, `in` and `heldBy` are anti-symmetric by
    construction: `on` requires the subject centroid strictly above the
    object's, `in` requires a strictly smaller subject volume, and `heldBy`
    only relates an object to a user.
    """
    for state in (subject, obj):
        if not state.pose.is_finite():
            raise RejectedInputError(f"non-finite pose for entity {state.entity_id!r}")
    if subject.entity_id == obj.entity_id:
        return frozenset()

    rules = context.rules
    s_pos, o_pos = subject.pose.position, obj.pose.position
    found: set[SemanticRelation] = set()

    def add(predicate: Predicate) -> None:
        found.add(SemanticRelation(predicate, subject.entity_id, obj.entity_id))

    gap = (s_pos[1] - subject.bbox[1] / 2) - (o_pos[1] + obj.bbox[1] / 2)
    if (
        s_pos[1] > o_pos[1]
        and rules.on_gap_min <= gap <= rules.on_gap_max
        and subject.bbox[0] * subject.bbox[2] > 0
        and _footprint_overlap(s_pos, subject.bbox, o_pos, obj.bbox)
        >= rules.on_overlap_frac * subject.bbox[0] * subject.bbox[2]
    ):
        add(Predicate.ON)

    if _volume(subject.bbox) < _volume(obj.bbox) and all(
        abs(s_pos[i] - o_pos[i]) <= obj.bbox[i] / 2 for i in range(3)
    ):
        add(Predicate.IN)

    if _distance(s_pos, o_pos) < rules.near_distance:
        add(Predicate.NEAR)

    if (
        subject.kind is EntityKind.OBJECT
        and obj.kind is EntityKind.USER
        and (obj.entity_id, subject.entity_id) in context.grasps
        and _distance(o_pos, s_pos) < rules.held_distance
    ):
        add(Predicate.HELD_BY)

    if (subject.entity_id, obj.entity_id) in context.attachments:
        add(Predicate.ATTACHED_TO)

    return frozenset(found)


def relate_all(states: list[EntityState], context: RelationContext = EMPTY_CONTEXT) -> RelationSet:
    """Relations over every ordered pair of the given states."""
    found: set[SemanticRelation] = set()
    for subject in states:
        for obj in states:
            if subject.entity_id != obj.entity_id:
                found |= relate(subject, obj, context)
    return frozenset(found)


def subject_relations(relations: RelationSet, entity_id: str) -> RelationSet:
    """The subset of `relations` whose subject is `entity_id`."""
    return frozenset(r for r in relations if r.subject == entity_id)


def state_of(entity: Entity, pose: Pose, bbox: Vec3 | None = None) -> EntityState:
    """Convenience constructor pairing a catalog entity with a live pose."""
    return EntityState(
        entity_id=entity.id,
        kind=entity.kind,
        pose=pose,
        bbox=bbox if bbox is not None else entity.bbox,
        properties=dict(entity.properties),
    )
