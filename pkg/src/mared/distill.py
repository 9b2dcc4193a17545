"""Stage 2: score events and filter significant moments into keyframes.

Interaction events are scored by action semantics, object significance,
narrative progression and social context; state changes by magnitude and
kind.  Candidate keyframe times are event boundaries: between boundaries the
max-over-covering-spans significance is constant, so nothing in between can
score differently.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

from .errors import RejectedInputError, ScoringError
from .model import (
    EntityKind,
    InteractionEvent,
    Keyframe,
    KeyframedDocument,
    MAREDDocument,
    Pose,
    StateChangeEvent,
    StateChangeKind,
    Timestamp,
    Verb,
    pose_at,
    require_valid,
)
from .relations import DEFAULT_RULES

# Candidates closer than this merge into one keyframe.
MERGE_WINDOW = 0.1

# Normalization constants for the pose-magnitude term.
FULL_DISPLACEMENT = 1.0   # meters
FULL_SPEED = 1.0          # meters per second

DEFAULT_VERB_TABLE: dict[Verb, float] = {
    Verb.GIVE: 1.0,
    Verb.PRESS: 0.9,
    Verb.ACTIVATE: 0.9,
    Verb.GRASP: 0.8,
    Verb.PLACE: 0.7,
    Verb.RELEASE: 0.6,
    Verb.SPEAK: 0.6,
    Verb.GAZE: 0.3,
    Verb.GESTURE: 0.3,
}


@dataclass(frozen=True)
class ScoringWeights:
    """Term weights for both scoring formulas plus the verb table.

    `interaction` weighs (action, object, narrative, social); `state_change`
    weighs (magnitude, relation, intrinsic).  Scores are clamped regardless,
    so `check` is for config loading, not a scoring precondition.
    """

    interaction: tuple[float, float, float, float] = (0.40, 0.25, 0.20, 0.15)
    state_change: tuple[float, float, float] = (0.30, 0.40, 0.30)
    verb_table: dict[Verb, float] = field(default_factory=lambda: dict(DEFAULT_VERB_TABLE))

    def check(self) -> None:
        for name, group in (("interaction", self.interaction), ("stateChange", self.state_change)):
            if abs(sum(group) - 1.0) > 1e-9:
                raise RejectedInputError(f"{name} weights must sum to 1, got {sum(group)!r}")
            if any(w < 0 for w in group):
                raise RejectedInputError(f"{name} weights must be non-negative")
        for verb, value in self.verb_table.items():
            if not 0.0 <= value <= 1.0:
                raise RejectedInputError(f"verb table value for {verb.value} not in [0, 1]")


DEFAULT_WEIGHTS = ScoringWeights()


def _clamp(x: float) -> float:
    if math.isnan(x):
        return 0.0
    return min(1.0, max(0.0, x))


def _narrative_term(e: InteractionEvent, doc: MAREDDocument) -> float:
    if e.target is None or e.pre_state.relations == e.post_state.relations:
        return 0.0
    for seg in doc.segments:
        if seg.id != e.segment_id and seg.t_start >= e.t_end and e.target in seg.key_objects:
            return 1.0
    return 0.0


def _social_term(e: InteractionEvent, doc: MAREDDocument) -> float:
    if e.target is not None:
        target = doc.entity(e.target)
        if target is not None and target.kind is EntityKind.USER:
            return 1.0
    for other in doc.users():
        if other.id == e.actor:
            continue
        for t in (e.t_start, e.t_end):
            actor_pose = pose_at(doc, e.actor, t)
            other_pose = pose_at(doc, other.id, t)
            if (
                actor_pose is not None
                and other_pose is not None
                and math.dist(actor_pose.position, other_pose.position)
                < DEFAULT_RULES.near_distance
            ):
                return 1.0
    return 0.0


def score_interaction(
    e: InteractionEvent, doc: MAREDDocument, weights: ScoringWeights = DEFAULT_WEIGHTS
) -> float:
    """Weighted sum of the four interaction criteria, clamped to [0, 1]."""
    if doc.entity(e.actor) is None:
        raise ScoringError(f"event {e.id} has unknown actor {e.actor!r}", offender=e.actor)
    if e.target is not None and doc.entity(e.target) is None:
        raise ScoringError(f"event {e.id} has unknown target {e.target!r}", offender=e.target)

    w_action, w_object, w_narrative, w_social = weights.interaction
    action = weights.verb_table.get(e.verb, 0.0)
    obj = doc.entity(e.target).significance if e.target is not None else 0.0
    narrative = _narrative_term(e, doc)
    social = _social_term(e, doc)
    return _clamp(w_action * action + w_object * obj + w_narrative * narrative + w_social * social)


def _magnitude_term(s: StateChangeEvent) -> float:
    if s.kind is not StateChangeKind.POSE or not isinstance(s.before, Pose):
        return 0.0
    displacement = math.dist(s.before.position, s.after.position)
    peak_speed = 0.0
    for (t0, p0), (t1, p1) in zip(s.trajectory, s.trajectory[1:]):
        if t1 > t0:
            peak_speed = max(peak_speed, math.dist(p0.position, p1.position) / (t1 - t0))
    if len(s.trajectory) < 2:
        duration = s.t_end - s.t_start
        # An instant pose change is a teleport: maximal speed.
        peak_speed = displacement / duration if duration > 0 else (1.0 if displacement > 0 else 0.0)
    return max(
        min(displacement / FULL_DISPLACEMENT, 1.0),
        min(peak_speed / FULL_SPEED, 1.0),
    )


def score_state_change(
    s: StateChangeEvent, doc: MAREDDocument, weights: ScoringWeights = DEFAULT_WEIGHTS
) -> float:
    """Weighted sum of the three state-change criteria, clamped to [0, 1]."""
    if doc.entity(s.subject) is None:
        raise ScoringError(f"event {s.id} has unknown subject {s.subject!r}", offender=s.subject)

    w_magnitude, w_relation, w_intrinsic = weights.state_change
    magnitude = _magnitude_term(s)
    relation = 1.0 if s.kind is StateChangeKind.RELATION else 0.0
    intrinsic = 1.0 if s.kind is StateChangeKind.INTRINSIC else 0.0
    return _clamp(w_magnitude * magnitude + w_relation * relation + w_intrinsic * intrinsic)


@dataclass(frozen=True)
class _Scored:
    id: str
    t_start: Timestamp
    t_end: Timestamp
    score: float
    involved: tuple[str, ...]


def _score_all(doc: MAREDDocument, weights: ScoringWeights) -> list[_Scored]:
    scored: list[_Scored] = []
    for e in doc.interaction_events:
        involved = (e.actor,) if e.target is None else (e.actor, e.target)
        scored.append(_Scored(e.id, e.t_start, e.t_end, score_interaction(e, doc, weights), involved))
    for s in doc.state_change_events:
        scored.append(_Scored(s.id, s.t_start, s.t_end, score_state_change(s, doc, weights), (s.subject,)))
    return scored


def candidate_times(doc: MAREDDocument) -> list[Timestamp]:
    """Distinct candidate keyframe times in ascending order."""
    times = {t for e in doc.interaction_events for t in (e.t_start, e.t_end)}
    times.update(s.t_end for s in doc.state_change_events)
    return sorted(times)


def significance_at(doc: MAREDDocument, t: Timestamp, weights: ScoringWeights = DEFAULT_WEIGHTS) -> float:
    """Max score over all events whose span contains `t`; 0 when none does."""
    return max(
        (s.score for s in _score_all(doc, weights) if s.t_start <= t <= s.t_end),
        default=0.0,
    )


def distill(
    doc: MAREDDocument,
    threshold: float,
    weights: ScoringWeights = DEFAULT_WEIGHTS,
) -> KeyframedDocument:
    """Filter candidate times by significance against `threshold`.

    threshold 0 keeps every candidate and 1 keeps none; otherwise a candidate
    survives when its significance meets the threshold.  Surviving candidates
    closer than MERGE_WINDOW are merged, keeping the highest-scoring one;
    acceptance in descending score order keeps the kept set shrinking as the
    threshold grows.
    """
    require_valid(doc)
    if isinstance(threshold, bool) or not isinstance(threshold, (int, float)):
        raise RejectedInputError(f"threshold must be a number, got {type(threshold).__name__}")
    if math.isnan(threshold) or not 0.0 <= threshold <= 1.0:
        raise RejectedInputError(f"threshold {threshold!r} not in [0, 1]")

    scored = _score_all(doc, weights)
    candidates: list[tuple[Timestamp, float, tuple[_Scored, ...]]] = []
    for t in candidate_times(doc):
        covering = [s for s in scored if s.t_start <= t <= s.t_end]
        sig = max((s.score for s in covering), default=0.0)
        top = tuple(s for s in covering if s.score == sig)
        candidates.append((t, sig, top))

    if threshold == 0.0:
        kept = candidates
    elif threshold == 1.0:
        kept = []
    else:
        survivors = [c for c in candidates if c[1] >= threshold]
        kept = []
        for cand in sorted(survivors, key=lambda c: (-c[1], c[0])):
            if all(abs(cand[0] - k[0]) >= MERGE_WINDOW for k in kept):
                kept.append(cand)
        kept.sort(key=lambda c: c[0])

    keyframes = []
    for t, sig, top in kept:
        sources = tuple(sorted(s.id for s in top))
        involved = sorted({eid for s in top for eid in s.involved})
        anchors = []
        for eid in involved:
            pose = pose_at(doc, eid, t)
            if pose is not None:
                anchors.append((eid, pose))
        keyframes.append(Keyframe(t=t, score=sig, sources=sources, anchors=tuple(anchors)))

    return KeyframedDocument(document=doc, threshold=float(threshold), keyframes=tuple(keyframes))


__all__ = [
    "MERGE_WINDOW",
    "DEFAULT_VERB_TABLE",
    "DEFAULT_WEIGHTS",
    "ScoringWeights",
    "score_interaction",
    "score_state_change",
    "candidate_times",
    "significance_at",
    "distill",
]
