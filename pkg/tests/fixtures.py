"""Shared scenario builders and randomized generators for the test suite.

Hand-built scenarios come with worked-out expected values in comments; the
random generators only promise structural validity so property tests can
range widely without tripping the validator.
"""

from __future__ import annotations

import math
import random

from mared.distill import distill
from mared.ingestion import (
    ActionAnnotation,
    ActionPhase,
    LoggerConfig,
    RawCapture,
    RawEntityState,
    RawFrame,
)
from mared.model import (
    Entity,
    EntityKind,
    EventState,
    Header,
    InteractionEvent,
    KeyframedDocument,
    MAREDDocument,
    Pose,
    Predicate,
    SemanticExperienceSegment,
    SemanticRelation,
    SpaceAnchor,
    StateChangeEvent,
    StateChangeKind,
    Verb,
)
from mared.playback import InputKind, InteractionInput
from mared.relations import RelationRules

USER = EntityKind.USER
OBJECT = EntityKind.OBJECT


def rel(predicate: Predicate, subject: str, obj: str) -> SemanticRelation:
    return SemanticRelation(predicate=predicate, subject=subject, object=obj)


def state(*relations: SemanticRelation, **properties) -> EventState:
    return EventState(relations=frozenset(relations), properties=properties)


# ---------------------------------------------------------------------------
# Drone tutorial


def drone_document() -> MAREDDocument:
    """Two-segment tutorial with high-scoring instants at t = 5, 10 and 15.

    Interaction scores (weights 0.40/0.25/0.20/0.15, defaults everywhere):
      ie-1 gaze drone     0.40*0.3 + 0.25*1.0  = 0.37
      ie-2 press drone    0.40*0.9 + 0.25*1.0  = 0.61
      ie-3 activate drone 0.40*0.9 + 0.25*1.0  = 0.61
      ie-4 gesture        0.40*0.3             = 0.12
      ie-5 grasp battery  0.40*0.8 + 0.25*0.9  = 0.545
    At threshold 0.5 the keyframes are exactly (5.0, 10.0, 15.0); no event
    starts in (4, 5), so a branch paused at 4.0 resumes at keyframe 5.0.
    """
    u1 = Entity(id="u1", kind=USER, label="instructor")
    drone = Entity(id="drone", kind=OBJECT, label="quadcopter", significance=1.0)
    battery = Entity(id="battery", kind=OBJECT, label="battery pack", significance=0.9)

    seg1 = SemanticExperienceSegment(
        id="seg-1",
        label="drone principles",
        t_start=0.0,
        t_end=10.0,
        participants=("u1",),
        key_objects=("drone",),
    )
    seg2 = SemanticExperienceSegment(
        id="seg-2",
        label="drone assembly",
        t_start=10.0,
        t_end=20.0,
        participants=("u1",),
        key_objects=("battery",),
    )

    def instant(eid, seg_id, verb, t, target):
        return InteractionEvent(
            id=eid,
            segment_id=seg_id,
            actor="u1",
            verb=verb,
            target=target,
            t_start=t,
            t_end=t,
            pre_state=EventState(),
            post_state=EventState(),
        )

    events = (
        instant("ie-1", "seg-1", Verb.GAZE, 2.0, "drone"),
        instant("ie-2", "seg-1", Verb.PRESS, 5.0, "drone"),
        instant("ie-3", "seg-2", Verb.ACTIVATE, 10.0, "drone"),
        instant("ie-4", "seg-2", Verb.GESTURE, 12.0, None),
        instant("ie-5", "seg-2", Verb.GRASP, 15.0, "battery"),
    )
    return MAREDDocument(
        header=Header(),
        entities=(u1, drone, battery),
        segments=(seg1, seg2),
        interaction_events=events,
    )


DRONE_THRESHOLD = 0.5


def drone_kdoc() -> KeyframedDocument:
    return distill(drone_document(), DRONE_THRESHOLD)


def drone_question(wall_time: float = 4.0) -> InteractionInput:
    return InteractionInput(
        wall_time=wall_time,
        kind=InputKind.SPEECH,
        payload="how does the drone stay level?",
    )


# Question at wall 4.0, 5 s scripted answer, 2 s grace, resume at keyframe
# 5.0 with rate 1.0 * 0.8: close wall 11.0, end wall 11 + (20 - 5) / 0.8.
DRONE_CLOSE_WALL = 11.0
DRONE_END_WALL = 11.0 + 15.0 / 0.8


# ---------------------------------------------------------------------------
# Kitchen capture (raw stream for ingestion tests)


def kitchen_rules() -> RelationRules:
    # Tight near radius keeps the expected relation sets to single predicates.
    return RelationRules(near_distance=0.01)


def kitchen_config() -> LoggerConfig:
    return LoggerConfig(rules=kitchen_rules())


def kitchen_capture() -> RawCapture:
    """A grasp that lifts a cup off a table; three frames, one segment.

    Geometry (y up): the table top sits at 1.2, the cup starts on it and is
    lifted to 1.35 while the hand closes to within held distance.  Expected
    relations: frame 1 {on(cup, table)}, frames 2 and 3 {heldBy(cup, u1)}.
    """
    table = RawEntityState(
        id="table", pose=Pose((0.0, 0.6, 0.0)), bbox=(1.0, 1.2, 1.0), label="table"
    )

    def cup(y: float) -> RawEntityState:
        return RawEntityState(id="cup", pose=Pose((0.0, y, 0.0)), bbox=(0.06, 0.1, 0.06), label="cup")

    def hand(x: float, y: float, z: float) -> RawEntityState:
        return RawEntityState(
            id="u1", pose=Pose((x, y, z)), bbox=(0.04, 0.04, 0.04), kind=USER, label="alice"
        )

    grasp = lambda phase: ActionAnnotation(actor="u1", verb=Verb.GRASP, phase=phase, target="cup")
    frames = (
        RawFrame(
            t=1.0,
            entities=(table, cup(1.25), hand(0.5, 1.25, 0.5)),
            actions=(grasp(ActionPhase.BEGIN),),
        ),
        RawFrame(t=1.2, entities=(table, cup(1.35), hand(0.04, 1.35, 0.0))),
        RawFrame(
            t=1.4,
            entities=(table, cup(1.35), hand(0.04, 1.35, 0.0)),
            actions=(grasp(ActionPhase.END),),
        ),
    )
    return RawCapture(frames=frames)


# ---------------------------------------------------------------------------
# Workshop document (state changes, social and narrative terms, merging)


def workshop_document() -> MAREDDocument:
    """Hand-scored document touching every scoring term.

    Interaction scores:
      ie-1 grasp wrench   0.40*0.8 + 0.25*0.6 + 0.15 (u2 within 0.3 m) = 0.62
      ie-2 give to u2     0.40*1.0 + 0.25*0.7 + 0.15 (target is user)  = 0.725
      ie-3 press lamp     0.40*0.9 + 0.25*0.9 + 0.20 (lamp keys seg-3) = 0.785
      ie-4 activate lamp  0.40*0.9 + 0.25*0.9 (relations unchanged)    = 0.585
    State-change scores: pose sc-1/sc-2 0.1, sc-3 0.3, sc-4 0.3;
    relation sc-5 0.4; intrinsic sc-6 0.3.
    At threshold 0.5: survivors {0.5, 1.0, 4.0, 4.3, 6.5, 6.55}; 6.55 merges
    into 6.5, leaving keyframes (0.5, 1.0, 4.0, 4.3, 6.5).
    """
    entities = (
        Entity(id="u1", kind=USER, label="mechanic"),
        Entity(id="u2", kind=USER, label="apprentice", significance=0.7),
        Entity(id="lamp", kind=OBJECT, label="work lamp", significance=0.9),
        Entity(id="wrench", kind=OBJECT, label="torque wrench", significance=0.6),
        Entity(id="bench", kind=OBJECT, label="workbench", significance=0.2),
    )
    segments = (
        SemanticExperienceSegment(
            id="seg-1", label="bench setup", t_start=0.0, t_end=5.0,
            participants=("u1", "u2"), key_objects=("wrench",),
        ),
        SemanticExperienceSegment(
            id="seg-2", label="lamp wiring", t_start=6.0, t_end=10.0,
            participants=("u1",), key_objects=("lamp",),
        ),
        SemanticExperienceSegment(
            id="seg-3", label="power test", t_start=10.5, t_end=12.0,
            participants=("u2",), key_objects=("lamp",),
        ),
    )
    interactions = (
        InteractionEvent(
            id="ie-1", segment_id="seg-1", actor="u1", verb=Verb.GRASP, target="wrench",
            t_start=0.5, t_end=1.0,
            pre_state=state(rel(Predicate.ON, "wrench", "bench")),
            post_state=state(rel(Predicate.HELD_BY, "wrench", "u1")),
        ),
        InteractionEvent(
            id="ie-2", segment_id="seg-1", actor="u1", verb=Verb.GIVE, target="u2",
            t_start=4.0, t_end=4.3,
            pre_state=state(rel(Predicate.HELD_BY, "wrench", "u1")),
            post_state=state(rel(Predicate.HELD_BY, "wrench", "u2")),
        ),
        InteractionEvent(
            id="ie-3", segment_id="seg-2", actor="u1", verb=Verb.PRESS, target="lamp",
            t_start=6.5, t_end=6.5,
            pre_state=state(),
            post_state=state(rel(Predicate.ATTACHED_TO, "lamp", "bench")),
        ),
        InteractionEvent(
            id="ie-4", segment_id="seg-2", actor="u2", verb=Verb.ACTIVATE, target="lamp",
            t_start=6.55, t_end=6.55,
            pre_state=state(rel(Predicate.ATTACHED_TO, "lamp", "bench")),
            post_state=state(rel(Predicate.ATTACHED_TO, "lamp", "bench"), powered=True),
        ),
    )

    def pose_change(eid, subject, a, b, t0, t1, samples=(), cause=None):
        return StateChangeEvent(
            id=eid, subject=subject, kind=StateChangeKind.POSE,
            t_start=t0, t_end=t1, before=Pose(a), after=Pose(b),
            trajectory=tuple((t, Pose(p)) for t, p in samples),
            cause_event_id=cause,
        )

    changes = (
        pose_change("sc-1", "u1", (0.0, 1.7, 0.0), (0.1, 1.7, 0.0), 0.0, 0.3),
        pose_change("sc-2", "u2", (0.3, 1.7, 0.0), (0.4, 1.7, 0.0), 0.0, 0.3),
        pose_change("sc-3", "u2", (0.4, 1.7, 0.0), (3.0, 1.7, 0.0), 6.0, 6.3),
        pose_change(
            "sc-4", "lamp", (0.9, 1.0, 0.0), (0.9, 1.0, 1.0), 7.0, 8.0,
            samples=((7.0, (0.9, 1.0, 0.0)), (7.5, (0.9, 1.0, 0.4)), (8.0, (0.9, 1.0, 1.0))),
        ),
        StateChangeEvent(
            id="sc-5", subject="lamp", kind=StateChangeKind.RELATION,
            t_start=8.5, t_end=8.5,
            before=frozenset({rel(Predicate.ATTACHED_TO, "lamp", "bench")}),
            after=frozenset(
                {rel(Predicate.ATTACHED_TO, "lamp", "bench"), rel(Predicate.ON, "lamp", "bench")}
            ),
        ),
        StateChangeEvent(
            id="sc-6", subject="lamp", kind=StateChangeKind.INTRINSIC,
            t_start=11.0, t_end=11.0,
            before={"lit": False}, after={"lit": True},
        ),
    )
    return MAREDDocument(
        header=Header(anchors=(SpaceAnchor(id="origin", pose=Pose((0.0, 0.0, 0.0))),)),
        entities=entities,
        segments=segments,
        interaction_events=interactions,
        state_change_events=changes,
    )


WORKSHOP_THRESHOLD = 0.5
WORKSHOP_KEYFRAME_TIMES = (0.5, 1.0, 4.0, 4.3, 6.5)


def workshop_kdoc() -> KeyframedDocument:
    return distill(workshop_document(), WORKSHOP_THRESHOLD)


# ---------------------------------------------------------------------------
# Sparse document (segments and entities, no events)


def sparse_document() -> MAREDDocument:
    return MAREDDocument(
        header=Header(),
        entities=(Entity(id="u1", kind=USER, label="visitor"),),
        segments=(
            SemanticExperienceSegment(id="seg-1", label="idle room", t_start=0.0, t_end=3.0),
        ),
    )


# ---------------------------------------------------------------------------
# Randomized generators


_VERBS = tuple(Verb)
_PREDICATES = tuple(Predicate)


def _unit_quat(rng: random.Random) -> tuple[float, float, float, float]:
    q = [rng.gauss(0.0, 1.0) for _ in range(4)]
    norm = math.sqrt(sum(c * c for c in q)) or 1.0
    return tuple(c / norm for c in q)


def _random_pose(rng: random.Random) -> Pose:
    position = tuple(round(rng.uniform(-2.0, 2.0), 3) for _ in range(3))
    if rng.random() < 0.5:
        return Pose(position)
    return Pose(position, _unit_quat(rng))


def _random_relations(rng: random.Random, ids: list[str]) -> frozenset[SemanticRelation]:
    out = set()
    for _ in range(rng.randint(0, 2)):
        if len(ids) < 2:
            break
        subject, obj = rng.sample(ids, 2)
        out.add(rel(rng.choice(_PREDICATES), subject, obj))
    return frozenset(out)


def _span_in(rng: random.Random, lo: float, hi: float, instant_ok: bool = True) -> tuple[float, float]:
    a = round(rng.uniform(lo, hi), 3)
    b = round(rng.uniform(lo, hi), 3)
    a, b = min(a, b), max(a, b)
    if a == b and not instant_ok:
        return (lo, hi)
    return (a, b)


def random_document(rng: random.Random, max_events: int = 50) -> MAREDDocument:
    """A structurally valid document with up to `max_events` events."""
    users = [
        Entity(id=f"u{i}", kind=USER, label=f"user {i}", significance=round(rng.random(), 3))
        for i in range(1, rng.randint(1, 2) + 1)
    ]
    objects = [
        Entity(
            id=f"o{i}",
            kind=OBJECT,
            label=f"object {i}",
            significance=round(rng.random(), 3),
            bbox=tuple(round(rng.uniform(0.05, 0.6), 3) for _ in range(3)),
            properties={"tag": rng.randint(0, 9)} if rng.random() < 0.3 else {},
        )
        for i in range(1, rng.randint(1, 4) + 1)
    ]
    entities = users + objects
    ids = [e.id for e in entities]

    segments = []
    t = round(rng.uniform(0.0, 2.0), 3)
    for i in range(rng.randint(1, 4)):
        length = round(rng.uniform(1.0, 8.0), 3)
        segments.append(
            SemanticExperienceSegment(
                id=f"seg-{i + 1}",
                label=f"phase {i + 1}",
                t_start=t,
                t_end=round(t + length, 3),
                participants=tuple(u.id for u in users if rng.random() < 0.7),
                key_objects=tuple(o.id for o in objects if rng.random() < 0.4),
            )
        )
        t = round(t + length + rng.uniform(0.0, 3.0), 3)

    interactions = []
    changes = []
    for _ in range(rng.randint(0, max_events)):
        seg = rng.choice(segments)
        if rng.random() < 0.6:
            t0, t1 = _span_in(rng, seg.t_start, seg.t_end)
            target = rng.choice(ids + [None])
            interactions.append(
                InteractionEvent(
                    id=f"ie-{len(interactions) + 1}",
                    segment_id=seg.id,
                    actor=rng.choice(users).id,
                    verb=rng.choice(_VERBS),
                    target=target,
                    t_start=t0,
                    t_end=t1,
                    pre_state=EventState(relations=_random_relations(rng, ids)),
                    post_state=EventState(relations=_random_relations(rng, ids)),
                    payload="hm?" if rng.random() < 0.2 else None,
                )
            )
        else:
            kind = rng.choice(tuple(StateChangeKind))
            subject = rng.choice(ids)
            eid = f"sc-{len(changes) + 1}"
            if kind is StateChangeKind.POSE:
                t0, t1 = _span_in(rng, seg.t_start, seg.t_end, instant_ok=False)
                before = _random_pose(rng)
                after = _random_pose(rng)
                while after == before:
                    after = _random_pose(rng)
                sample_times = sorted(
                    {round(rng.uniform(t0, t1), 3) for _ in range(rng.randint(0, 3))}
                )
                changes.append(
                    StateChangeEvent(
                        id=eid, subject=subject, kind=kind, t_start=t0, t_end=t1,
                        before=before, after=after,
                        trajectory=tuple((ts, _random_pose(rng)) for ts in sample_times),
                    )
                )
            elif kind is StateChangeKind.RELATION:
                t0 = round(rng.uniform(seg.t_start, seg.t_end), 3)
                before = _random_relations(rng, ids)
                after = _random_relations(rng, ids)
                if after == before and len(ids) >= 2:
                    subject_id, obj = rng.sample(ids, 2)
                    extra = rel(rng.choice(_PREDICATES), subject_id, obj)
                    after = frozenset(set(before) ^ {extra})
                if after == before:
                    continue
                changes.append(
                    StateChangeEvent(
                        id=eid, subject=subject, kind=kind, t_start=t0, t_end=t0,
                        before=before, after=after,
                    )
                )
            else:
                t0 = round(rng.uniform(seg.t_start, seg.t_end), 3)
                value = rng.randint(0, 5)
                changes.append(
                    StateChangeEvent(
                        id=eid, subject=subject, kind=kind, t_start=t0, t_end=t0,
                        before={"level": value}, after={"level": value + 1},
                    )
                )

    interactions.sort(key=lambda e: (e.t_start, e.t_end, e.id))
    changes.sort(key=lambda e: (e.t_start, e.t_end, e.id))
    for i, sc in enumerate(changes):
        if interactions and rng.random() < 0.3:
            changes[i] = StateChangeEvent(
                id=sc.id, subject=sc.subject, kind=sc.kind,
                t_start=sc.t_start, t_end=sc.t_end,
                before=sc.before, after=sc.after, trajectory=sc.trajectory,
                cause_event_id=rng.choice(interactions).id,
            )

    anchors = tuple(
        SpaceAnchor(id=f"a{i}", pose=_random_pose(rng)) for i in range(rng.randint(0, 2))
    )
    return MAREDDocument(
        header=Header(anchors=anchors),
        entities=tuple(entities),
        segments=tuple(segments),
        interaction_events=tuple(interactions),
        state_change_events=tuple(changes),
    )


def random_capture(rng: random.Random) -> RawCapture:
    """A small raw stream: jittered poses plus well-paired action spans."""
    entity_ids = ["u1"] + [f"o{i}" for i in range(1, rng.randint(1, 3) + 1)]
    positions = {eid: [rng.uniform(-1, 1), rng.uniform(0, 2), rng.uniform(-1, 1)] for eid in entity_ids}
    n_frames = rng.randint(2, 8)
    times = []
    t = round(rng.uniform(0.0, 1.0), 3)
    for _ in range(n_frames):
        times.append(t)
        t = round(t + rng.uniform(0.1, 0.6), 3)

    actions_by_frame: dict[int, list[ActionAnnotation]] = {}
    for _ in range(rng.randint(0, 3)):
        if n_frames < 2:
            break
        i = rng.randint(0, n_frames - 2)
        j = rng.randint(i + 1, n_frames - 1)
        ann = ActionAnnotation(
            actor="u1",
            verb=rng.choice(_VERBS),
            phase=ActionPhase.BEGIN,
            target=rng.choice(entity_ids[1:] + [None]),
        )
        conflict = any(
            existing.key == ann.key
            for k in range(i, j + 1)
            for existing in actions_by_frame.get(k, [])
        )
        if conflict:
            continue
        actions_by_frame.setdefault(i, []).append(ann)
        actions_by_frame.setdefault(j, []).append(
            ActionAnnotation(actor=ann.actor, verb=ann.verb, phase=ActionPhase.END, target=ann.target)
        )

    frames = []
    for idx, ft in enumerate(times):
        states = []
        for eid in entity_ids:
            pos = positions[eid]
            for axis in range(3):
                pos[axis] += rng.uniform(-0.05, 0.08)
            states.append(
                RawEntityState(
                    id=eid,
                    pose=Pose(tuple(round(c, 4) for c in pos)),
                    kind=USER if eid == "u1" else OBJECT,
                    label=eid,
                )
            )
        frames.append(
            RawFrame(t=ft, entities=tuple(states), actions=tuple(actions_by_frame.get(idx, ())))
        )
    return RawCapture(frames=tuple(frames))


def random_trace(rng: random.Random, wall_max: float) -> list[InteractionInput]:
    """Timed inputs with non-decreasing wall times, mixing every intent."""
    out = []
    wall = 0.0
    for _ in range(rng.randint(0, 8)):
        wall = round(wall + rng.uniform(0.0, wall_max / 4), 3)
        roll = rng.random()
        if roll < 0.4:
            inp = InteractionInput(wall, InputKind.SPEECH, payload="what is this?")
        elif roll < 0.6:
            inp = InteractionInput(wall, InputKind.SELECTION, payload="done")
        elif roll < 0.8:
            inp = InteractionInput(wall, InputKind.GESTURE, payload="point", target="o1")
        else:
            inp = InteractionInput(wall, InputKind.GAZE, payload="")
        out.append(inp)
    return out


# ---------------------------------------------------------------------------
# Named fixture registry used by the acceptance gate


def fixture_documents() -> dict[str, MAREDDocument]:
    docs = {
        "drone": drone_document(),
        "workshop": workshop_document(),
        "sparse": sparse_document(),
    }
    for seed in (11, 23, 47):
        docs[f"random-{seed}"] = random_document(random.Random(seed), max_events=20)
    return docs


def fixture_kdocs() -> dict[str, KeyframedDocument]:
    thresholds = {"drone": DRONE_THRESHOLD, "workshop": WORKSHOP_THRESHOLD}
    out = {}
    for name, doc in fixture_documents().items():
        if not doc.segments:
            continue
        out[name] = distill(doc, thresholds.get(name, 0.4))
    return out


def standard_trace(kdoc: KeyframedDocument) -> list[InteractionInput]:
    """A fixed, scenario-independent trace scaled to the document's span."""
    start = min(s.t_start for s in kdoc.document.segments)
    end = max(s.t_end for s in kdoc.document.segments)
    span = end - start
    return [
        InteractionInput(round(0.3 * span, 3), InputKind.SPEECH, payload="why does that happen?"),
        InteractionInput(round(0.3 * span + 1.0, 3), InputKind.GAZE),
        InteractionInput(round(0.3 * span + 2.0, 3), InputKind.SELECTION, payload="done"),
        InteractionInput(round(0.8 * span + 4.0, 3), InputKind.GESTURE, payload="point", target="o1"),
        InteractionInput(round(0.8 * span + 6.0, 3), InputKind.SELECTION, payload="done"),
    ]
