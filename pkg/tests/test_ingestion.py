"""Raw capture to document: action pairing, change detection, segmentation."""

import math

import pytest

from fixtures import kitchen_capture, kitchen_config
from mared.errors import (
    MalformedMarkersError,
    RejectedInputError,
    TruncatedActionError,
    UnsegmentedEventError,
)
from mared.ingestion import (
    ActionAnnotation,
    ActionPhase,
    LoggerConfig,
    MarkerKind,
    RawCapture,
    RawEntityState,
    RawFrame,
    SegmentMarker,
    build_segments,
    coerce_verb,
    ingest,
)
from mared.model import (
    EntityKind,
    Pose,
    Predicate,
    StateChangeKind,
    Verb,
    validate_document,
)

USER = EntityKind.USER


def ent(eid, pos, **kw):
    return RawEntityState(id=eid, pose=Pose(pos), **kw)


def capture(*frames):
    return RawCapture(frames=frames)


def still_scene(*times, pos=(0.0, 0.0, 0.0)):
    """Frames of one motionless object (no events at all)."""
    return capture(*(RawFrame(t=t, entities=(ent("rock", pos, label="rock"),)) for t in times))


def rel_tuples(relations):
    return sorted((r.predicate.value, r.subject, r.object) for r in relations)


class TestKitchenScenario:
    """The grasp-lifts-cup capture, checked against hand-derived geometry."""

    def doc(self):
        return ingest(kitchen_capture(), kitchen_config())

    def test_validates(self):
        assert validate_document(self.doc()) == []

    def test_catalog(self):
        doc = self.doc()
        assert {e.id: e.kind for e in doc.entities} == {
            "table": EntityKind.OBJECT,
            "cup": EntityKind.OBJECT,
            "u1": EntityKind.USER,
        }
        assert doc.entity("u1").label == "alice"

    def test_grasp_event_snapshots(self):
        doc = self.doc()
        assert len(doc.interaction_events) == 1
        ev = doc.interaction_events[0]
        assert (ev.actor, ev.verb, ev.target) == ("u1", Verb.GRASP, "cup")
        assert (ev.t_start, ev.t_end) == (1.0, 1.4)
        assert rel_tuples(ev.pre_state.relations) == [("on", "cup", "table")]
        assert rel_tuples(ev.post_state.relations) == [("heldBy", "cup", "u1")]

    def test_state_changes(self):
        doc = self.doc()
        by_id = {s.id: s for s in doc.state_change_events}
        assert set(by_id) == {"sc-1", "sc-2", "sc-3"}
        assert (by_id["sc-1"].subject, by_id["sc-1"].kind) == ("cup", StateChangeKind.POSE)
        assert (by_id["sc-2"].subject, by_id["sc-2"].kind) == ("u1", StateChangeKind.POSE)
        relation = by_id["sc-3"]
        assert (relation.subject, relation.kind) == ("cup", StateChangeKind.RELATION)
        assert (relation.t_start, relation.t_end) == (1.2, 1.2)
        assert rel_tuples(relation.before) == [("on", "cup", "table")]
        assert rel_tuples(relation.after) == [("heldBy", "cup", "u1")]

    def test_all_changes_blame_the_grasp(self):
        doc = self.doc()
        assert {s.cause_event_id for s in doc.state_change_events} == {"ie-1"}

    def test_single_gap_cluster_segment(self):
        doc = self.doc()
        assert [(s.id, s.t_start, s.t_end) for s in doc.segments] == [("seg-1", 1.0, 1.4)]
        assert "u1" in doc.segments[0].participants


class TestRawValidation:
    def test_empty_capture_rejected(self):
        with pytest.raises(RejectedInputError):
            ingest(capture())

    def test_decreasing_timestamps_rejected(self):
        frames = capture(
            RawFrame(t=1.0, entities=(ent("a", (0, 0, 0)),)),
            RawFrame(t=0.5, entities=(ent("a", (0, 0, 0)),)),
        )
        with pytest.raises(RejectedInputError):
            ingest(frames)

    def test_equal_timestamps_rejected(self):
        frames = capture(
            RawFrame(t=1.0, entities=(ent("a", (0, 0, 0)),)),
            RawFrame(t=1.0, entities=(ent("a", (0, 0, 0)),)),
        )
        with pytest.raises(RejectedInputError):
            ingest(frames)

    def test_duplicate_entity_in_frame_rejected(self):
        frames = capture(RawFrame(t=1.0, entities=(ent("a", (0, 0, 0)), ent("a", (1, 0, 0)))))
        with pytest.raises(RejectedInputError):
            ingest(frames)

    def test_non_finite_pose_rejected(self):
        frames = capture(RawFrame(t=1.0, entities=(ent("a", (math.nan, 0, 0)),)))
        with pytest.raises(RejectedInputError):
            ingest(frames)

    def test_bad_config_rejected(self):
        with pytest.raises(RejectedInputError):
            ingest(still_scene(0.0, 1.0), LoggerConfig(gap_seconds=-1.0))


class TestActionPairing:
    def scene(self, *actions_per_frame):
        frames = []
        for i, actions in enumerate(actions_per_frame):
            frames.append(
                RawFrame(
                    t=float(i),
                    entities=(
                        ent("u1", (0, 0, 0), kind=USER, label="u1"),
                        ent("box", (5, 0, 0), label="box"),
                    ),
                    actions=tuple(actions),
                )
            )
        return capture(*frames)

    @staticmethod
    def press(phase):
        return ActionAnnotation(actor="u1", verb=Verb.PRESS, phase=phase, target="box")

    def test_begin_end_pair(self):
        doc = ingest(self.scene([self.press(ActionPhase.BEGIN)], [], [self.press(ActionPhase.END)]))
        assert [(e.verb, e.t_start, e.t_end) for e in doc.interaction_events] == [
            (Verb.PRESS, 0.0, 2.0)
        ]

    def test_end_without_begin_dropped_by_default(self, caplog):
        doc = ingest(self.scene([], [self.press(ActionPhase.END)]))
        assert doc.interaction_events == ()
        assert any("end without begin" in r.message for r in caplog.records)

    def test_end_without_begin_strict_raises(self):
        with pytest.raises(TruncatedActionError):
            ingest(
                self.scene([], [self.press(ActionPhase.END)]),
                LoggerConfig(strict_actions=True),
            )

    def test_unclosed_begin_dropped_by_default(self, caplog):
        doc = ingest(self.scene([self.press(ActionPhase.BEGIN)], []))
        assert doc.interaction_events == ()
        assert any("never ended" in r.message for r in caplog.records)

    def test_unclosed_begin_strict_raises(self):
        with pytest.raises(TruncatedActionError):
            ingest(self.scene([self.press(ActionPhase.BEGIN)], []), LoggerConfig(strict_actions=True))

    def test_duplicate_begin_restarts(self, caplog):
        doc = ingest(
            self.scene(
                [self.press(ActionPhase.BEGIN)],
                [self.press(ActionPhase.BEGIN)],
                [self.press(ActionPhase.END)],
            )
        )
        assert [(e.t_start, e.t_end) for e in doc.interaction_events] == [(1.0, 2.0)]
        assert any("restarting" in r.message for r in caplog.records)

    def test_payload_carried_from_begin(self):
        begin = ActionAnnotation(
            actor="u1", verb=Verb.SPEAK, phase=ActionPhase.BEGIN, payload="hold this"
        )
        end = ActionAnnotation(actor="u1", verb=Verb.SPEAK, phase=ActionPhase.END)
        doc = ingest(self.scene([begin], [end]))
        assert doc.interaction_events[0].payload == "hold this"

    def test_concurrent_actions_by_different_keys(self):
        gaze = lambda phase: ActionAnnotation(actor="u1", verb=Verb.GAZE, phase=phase, target="box")
        doc = ingest(
            self.scene(
                [self.press(ActionPhase.BEGIN), gaze(ActionPhase.BEGIN)],
                [self.press(ActionPhase.END), gaze(ActionPhase.END)],
            )
        )
        assert sorted(e.verb.value for e in doc.interaction_events) == ["gaze", "press"]

    def test_coerce_verb_passthrough_and_fallback(self, caplog):
        assert coerce_verb("grasp") is Verb.GRASP
        assert coerce_verb("juggle") is Verb.GESTURE
        assert any("unknown verb" in r.message for r in caplog.records)


class TestHoldSemantics:
    """Grasp starts a hold after its begin frame; release ends it before the
    release frame's relations are computed."""

    def lift_and_release(self):
        hand = lambda pos: ent("u1", pos, kind=USER, label="hand", bbox=(0.04, 0.04, 0.04))
        cup = lambda pos: ent("cup", pos, label="cup", bbox=(0.06, 0.1, 0.06))
        grasp = lambda ph: ActionAnnotation(actor="u1", verb=Verb.GRASP, phase=ph, target="cup")
        release = lambda ph: ActionAnnotation(actor="u1", verb=Verb.RELEASE, phase=ph, target="cup")
        return capture(
            RawFrame(t=0.0, entities=(hand((0.04, 1.0, 0.0)), cup((0.0, 1.0, 0.0))),
                     actions=(grasp(ActionPhase.BEGIN),)),
            RawFrame(t=0.5, entities=(hand((0.04, 1.5, 0.0)), cup((0.0, 1.5, 0.0))),
                     actions=(grasp(ActionPhase.END), release(ActionPhase.BEGIN))),
            RawFrame(t=1.0, entities=(hand((0.04, 1.5, 0.0)), cup((0.0, 1.5, 0.0))),
                     actions=(release(ActionPhase.END),)),
        )

    def test_grasp_pre_state_has_no_hold(self):
        doc = ingest(self.lift_and_release(), kitchen_config())
        grasp = next(e for e in doc.interaction_events if e.verb is Verb.GRASP)
        assert ("heldBy", "cup", "u1") not in rel_tuples(grasp.pre_state.relations)
        assert ("heldBy", "cup", "u1") in rel_tuples(grasp.post_state.relations)

    def test_release_post_state_has_no_hold(self):
        doc = ingest(self.lift_and_release(), kitchen_config())
        release = next(e for e in doc.interaction_events if e.verb is Verb.RELEASE)
        assert ("heldBy", "cup", "u1") in rel_tuples(release.pre_state.relations)
        assert ("heldBy", "cup", "u1") not in rel_tuples(release.post_state.relations)


class TestPoseChangeDetection:
    def walk(self, positions, times=None, config=None):
        times = times or [float(i) for i in range(len(positions))]
        frames = tuple(
            RawFrame(t=t, entities=(ent("bot", p, label="bot"), ent("u1", (9, 9, 9), kind=USER, label="u1")))
            for t, p in zip(times, positions)
        )
        return ingest(capture(*frames), config or LoggerConfig())

    def poses(self, doc):
        return [s for s in doc.state_change_events if s.kind is StateChangeKind.POSE and s.subject == "bot"]

    def test_small_jitter_ignored(self):
        doc = self.walk([(0, 0, 0), (0.05, 0, 0), (0.09, 0, 0)])
        assert self.poses(doc) == []

    def test_movement_above_threshold_detected(self):
        doc = self.walk([(0, 0, 0), (0.5, 0, 0)])
        runs = self.poses(doc)
        assert len(runs) == 1
        assert (runs[0].t_start, runs[0].t_end) == (0.0, 1.0)
        assert runs[0].before.position == (0.0, 0.0, 0.0)
        assert runs[0].after.position == (0.5, 0.0, 0.0)

    def test_consecutive_movement_merges_into_one_run(self):
        doc = self.walk([(0, 0, 0), (0.5, 0, 0), (1.0, 0, 0), (1.0, 0, 0)])
        runs = self.poses(doc)
        assert len(runs) == 1
        assert (runs[0].t_start, runs[0].t_end) == (0.0, 2.0)
        assert len(runs[0].trajectory) == 3

    def test_two_separate_runs(self):
        doc = self.walk([(0, 0, 0), (0.5, 0, 0), (0.5, 0, 0), (1.0, 0, 0)])
        runs = self.poses(doc)
        assert [(r.t_start, r.t_end) for r in runs] == [(0.0, 1.0), (2.0, 3.0)]

    def test_round_trip_back_to_start_dropped(self):
        doc = self.walk([(0, 0, 0), (0.5, 0, 0), (0, 0, 0)])
        assert self.poses(doc) == []

    def test_rotation_only_detected(self):
        # 45 degrees about y, (w, x, y, z) layout: well past the 15 degree default.
        quat_45 = (math.cos(math.pi / 8), 0.0, math.sin(math.pi / 8), 0.0)
        frames = capture(
            RawFrame(t=0.0, entities=(RawEntityState(id="bot", pose=Pose((0, 0, 0)), label="bot"),)),
            RawFrame(t=1.0, entities=(RawEntityState(id="bot", pose=Pose((0, 0, 0), quat_45), label="bot"),)),
        )
        doc = ingest(frames)
        runs = [s for s in doc.state_change_events if s.kind is StateChangeKind.POSE]
        assert len(runs) == 1

    def test_displacement_threshold_configurable(self):
        doc = self.walk([(0, 0, 0), (0.05, 0, 0)], config=LoggerConfig(min_displacement=0.01))
        assert len(self.poses(doc)) == 1


class TestIntrinsicChanges:
    def test_property_diff_detected(self):
        frames = capture(
            RawFrame(t=0.0, entities=(ent("lamp", (0, 0, 0), label="lamp", properties={"lit": False}),)),
            RawFrame(t=1.0, entities=(ent("lamp", (0, 0, 0), label="lamp", properties={"lit": True}),)),
        )
        doc = ingest(frames)
        intr = [s for s in doc.state_change_events if s.kind is StateChangeKind.INTRINSIC]
        assert len(intr) == 1
        assert intr[0].before == {"lit": False}
        assert intr[0].after == {"lit": True}
        assert intr[0].t_start == intr[0].t_end == 1.0

    def test_only_changed_keys_reported(self):
        frames = capture(
            RawFrame(t=0.0, entities=(ent("lamp", (0, 0, 0), label="lamp",
                                          properties={"lit": False, "color": "red"}),)),
            RawFrame(t=1.0, entities=(ent("lamp", (0, 0, 0), label="lamp",
                                          properties={"lit": True, "color": "red"}),)),
        )
        doc = ingest(frames)
        intr = [s for s in doc.state_change_events if s.kind is StateChangeKind.INTRINSIC]
        assert intr[0].before == {"lit": False}

    def test_reserved_properties_are_not_intrinsic(self):
        frames = capture(
            RawFrame(t=0.0, entities=(ent("probe", (0, 0, 0), label="probe", properties={"anchor": True}),)),
            RawFrame(t=1.0, entities=(ent("probe", (0, 0, 0), label="probe", properties={}),)),
        )
        doc = ingest(frames)
        assert [s for s in doc.state_change_events if s.kind is StateChangeKind.INTRINSIC] == []


class TestAnchorsAndAttachments:
    def test_anchor_property_becomes_space_anchor(self):
        frames = capture(
            RawFrame(t=0.0, entities=(ent("qr-1", (1, 2, 3), label="marker", properties={"anchor": True}),)),
            RawFrame(t=1.0, entities=(ent("qr-1", (1, 2, 3), label="marker", properties={"anchor": True}),)),
        )
        doc = ingest(frames)
        assert [(a.id, a.pose.position) for a in doc.header.anchors] == [("qr-1", (1.0, 2.0, 3.0))]

    def test_attached_to_property_asserts_relation(self):
        frames = capture(
            RawFrame(t=0.0, entities=(
                ent("shelf", (0, 1, 0), label="shelf"),
                ent("hook", (5, 5, 5), label="hook", properties={"attachedTo": "shelf"}),
            )),
            RawFrame(t=1.0, entities=(
                ent("shelf", (0, 1, 0), label="shelf"),
                ent("hook", (5, 5, 5), label="hook"),
            )),
        )
        doc = ingest(frames)
        relation = [s for s in doc.state_change_events if s.kind is StateChangeKind.RELATION]
        assert len(relation) == 1
        assert rel_tuples(relation[0].before) == [("attachedTo", "hook", "shelf")]
        assert rel_tuples(relation[0].after) == []


class TestSegmentation:
    def test_gap_clustering_splits_on_large_gaps(self):
        config = LoggerConfig(gap_seconds=2.0)
        frames = []
        schedule = {0.0: ActionPhase.BEGIN, 1.0: ActionPhase.END,
                    8.0: ActionPhase.BEGIN, 9.0: ActionPhase.END}
        for t in (0.0, 1.0, 8.0, 9.0):
            actions = (ActionAnnotation(actor="u1", verb=Verb.PRESS, phase=schedule[t], target="box"),)
            frames.append(RawFrame(
                t=t,
                entities=(ent("u1", (0, 0, 0), kind=USER, label="u1"), ent("box", (5, 0, 0), label="box")),
                actions=actions,
            ))
        doc = ingest(capture(*frames), config)
        assert [(s.t_start, s.t_end) for s in doc.segments] == [(0.0, 1.0), (8.0, 9.0)]
        assert {e.segment_id for e in doc.interaction_events} == {"seg-1", "seg-2"}

    def test_zero_length_cluster_padded(self):
        frames = capture(
            RawFrame(t=0.0, entities=(ent("lamp", (0, 0, 0), label="lamp", properties={"lit": False}),)),
            RawFrame(t=1.0, entities=(ent("lamp", (0, 0, 0), label="lamp", properties={"lit": True}),)),
        )
        doc = ingest(frames)
        seg = doc.segments[0]
        assert seg.t_start == 1.0 and seg.t_end > seg.t_start

    def test_fallback_segment_when_nothing_happens(self):
        doc = ingest(still_scene(2.0, 3.0, 4.0))
        assert [(s.label, s.t_start, s.t_end) for s in doc.segments] == [("capture", 2.0, 4.0)]
        assert validate_document(doc) == []

    def test_single_frame_fallback_padded(self):
        doc = ingest(still_scene(2.0))
        seg = doc.segments[0]
        assert seg.t_end > seg.t_start

    def test_markers_define_segments(self):
        start = SegmentMarker(kind=MarkerKind.SEGMENT_START, label="intro", participants=("u1",))
        end = SegmentMarker(kind=MarkerKind.SEGMENT_END, label="intro")
        frames = capture(
            RawFrame(t=0.0, entities=(ent("u1", (0, 0, 0), kind=USER, label="u1"),), markers=(start,)),
            RawFrame(t=5.0, entities=(ent("u1", (0, 0, 0), kind=USER, label="u1"),), markers=(end,)),
        )
        doc = ingest(frames)
        assert [(s.label, s.t_start, s.t_end, s.participants) for s in doc.segments] == [
            ("intro", 0.0, 5.0, ("u1",))
        ]

    def test_marker_unknown_participant_filtered(self, caplog):
        start = SegmentMarker(kind=MarkerKind.SEGMENT_START, label="intro", participants=("ghost",))
        end = SegmentMarker(kind=MarkerKind.SEGMENT_END, label="intro")
        frames = capture(
            RawFrame(t=0.0, entities=(ent("u1", (0, 0, 0), kind=USER, label="u1"),), markers=(start,)),
            RawFrame(t=5.0, entities=(ent("u1", (0, 0, 0), kind=USER, label="u1"),), markers=(end,)),
        )
        doc = ingest(frames)
        assert doc.segments[0].participants == ()
        assert any("unknown entities" in r.message for r in caplog.records)

    def test_mismatched_end_label_raises(self):
        start = SegmentMarker(kind=MarkerKind.SEGMENT_START, label="intro")
        end = SegmentMarker(kind=MarkerKind.SEGMENT_END, label="outro")
        frames = capture(
            RawFrame(t=0.0, entities=(ent("u1", (0, 0, 0), kind=USER, label="u1"),), markers=(start,)),
            RawFrame(t=5.0, entities=(ent("u1", (0, 0, 0), kind=USER, label="u1"),), markers=(end,)),
        )
        with pytest.raises(MalformedMarkersError):
            ingest(frames)

    def test_double_open_raises(self):
        a = SegmentMarker(kind=MarkerKind.SEGMENT_START, label="one")
        b = SegmentMarker(kind=MarkerKind.SEGMENT_START, label="two")
        frames = capture(
            RawFrame(t=0.0, entities=(ent("u1", (0, 0, 0), kind=USER, label="u1"),), markers=(a,)),
            RawFrame(t=5.0, entities=(ent("u1", (0, 0, 0), kind=USER, label="u1"),), markers=(b,)),
        )
        with pytest.raises(MalformedMarkersError):
            ingest(frames)

    def test_event_outside_marked_segments_raises(self):
        start = SegmentMarker(kind=MarkerKind.SEGMENT_START, label="late")
        end = SegmentMarker(kind=MarkerKind.SEGMENT_END, label="late")
        press = lambda ph: ActionAnnotation(actor="u1", verb=Verb.PRESS, phase=ph, target="box")
        scene = lambda: (ent("u1", (0, 0, 0), kind=USER, label="u1"), ent("box", (5, 0, 0), label="box"))
        frames = capture(
            RawFrame(t=0.0, entities=scene(), actions=(press(ActionPhase.BEGIN),)),
            RawFrame(t=1.0, entities=scene(), actions=(press(ActionPhase.END),)),
            RawFrame(t=2.0, entities=scene(), markers=(SegmentMarker(kind=MarkerKind.SEGMENT_START, label="late"),)),
            RawFrame(t=3.0, entities=scene(), markers=(SegmentMarker(kind=MarkerKind.SEGMENT_END, label="late"),)),
        )
        with pytest.raises(UnsegmentedEventError):
            ingest(frames)

    def test_build_segments_empty_without_anything(self):
        assert build_segments([], []) == []


class TestSplitCapture:
    """Cutting a capture между completed actions must preserve the event
    signatures; only segment bookkeeping may differ."""

    def two_act_capture(self):
        scene = lambda: (ent("u1", (0, 0, 0), kind=USER, label="u1"), ent("box", (5, 0, 0), label="box"))
        act = lambda verb, ph: ActionAnnotation(actor="u1", verb=verb, phase=ph, target="box")
        frames = (
            RawFrame(t=0.0, entities=scene(), actions=(act(Verb.PRESS, ActionPhase.BEGIN),)),
            RawFrame(t=1.0, entities=scene(), actions=(act(Verb.PRESS, ActionPhase.END),)),
            RawFrame(t=2.0, entities=scene()),
            RawFrame(t=3.0, entities=scene(), actions=(act(Verb.GAZE, ActionPhase.BEGIN),)),
            RawFrame(t=4.0, entities=scene(), actions=(act(Verb.GAZE, ActionPhase.END),)),
        )
        return frames

    @staticmethod
    def signatures(doc):
        return sorted(
            (e.actor, e.verb.value, e.target, e.t_start, e.t_end, e.payload)
            for e in doc.interaction_events
        )

    def test_split_preserves_event_signatures(self):
        frames = self.two_act_capture()
        whole = ingest(RawCapture(frames=frames))
        first = ingest(RawCapture(frames=frames[:3]))
        second = ingest(RawCapture(frames=frames[3:]))
        assert self.signatures(whole) == sorted(self.signatures(first) + self.signatures(second))
