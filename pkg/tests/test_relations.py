"""Geometric relation predicates: each rule exercised just above and just
below its threshold, plus the context-driven predicates."""

import math

import pytest

from mared.errors import RejectedInputError
from mared.model import EntityKind, Pose, Predicate
from mared.relations import (
    DEFAULT_RULES,
    EntityState,
    RelationContext,
    RelationRules,
    relate,
    relate_all,
    subject_relations,
)


def obj(eid: str, pos, bbox=(0.1, 0.1, 0.1)) -> EntityState:
    return EntityState(entity_id=eid, kind=EntityKind.OBJECT, pose=Pose(pos), bbox=bbox)


def user(eid: str, pos, bbox=(0.4, 1.7, 0.4)) -> EntityState:
    return EntityState(entity_id=eid, kind=EntityKind.USER, pose=Pose(pos), bbox=bbox)


def predicates(relations) -> set[Predicate]:
    return {r.predicate for r in relations}


# Table top at y = 1.0 for a table centered at 0.5 with height 1.0.
TABLE = obj("table", (0.0, 0.5, 0.0), bbox=(1.0, 1.0, 1.0))


def cup_at_height(y: float) -> EntityState:
    # Cup bottom sits at y - 0.05.
    return obj("cup", (0.0, y, 0.0), bbox=(0.06, 0.1, 0.06))


class TestOn:
    def test_resting_exactly_on_top(self):
        c = cup_at_height(1.05)  # gap 0.0
        assert Predicate.ON in predicates(relate(c, TABLE))

    def test_gap_within_tolerance(self):
        c = cup_at_height(1.065)  # gap 0.015 < 0.02
        assert Predicate.ON in predicates(relate(c, TABLE))

    def test_gap_too_large(self):
        c = cup_at_height(1.08)  # gap 0.03 > 0.02
        assert Predicate.ON not in predicates(relate(c, TABLE))

    def test_slight_interpenetration_allowed(self):
        c = cup_at_height(1.045)  # gap -0.005 >= -0.01
        assert Predicate.ON in predicates(relate(c, TABLE))

    def test_deep_interpenetration_rejected(self):
        c = cup_at_height(1.03)  # gap -0.02 < -0.01
        assert Predicate.ON not in predicates(relate(c, TABLE))

    def test_footprint_must_overlap_enough(self):
        # Cup hanging off the edge: only 1/3 of its footprint over the table.
        c = EntityState(
            entity_id="cup", kind=EntityKind.OBJECT,
            pose=Pose((0.51, 1.05, 0.0)), bbox=(0.06, 0.1, 0.06),
        )
        # Overlap in x: [0.48, 0.5] = 0.02 of 0.06 -> fraction 1/3 < 0.5.
        assert Predicate.ON not in predicates(relate(c, TABLE))

    def test_not_symmetric(self):
        c = cup_at_height(1.05)
        assert Predicate.ON not in predicates(relate(TABLE, c))


class TestIn:
    BOWL = obj("bowl", (0.0, 1.0, 0.0), bbox=(0.3, 0.2, 0.3))

    def test_centroid_inside_smaller_volume(self):
        berry = obj("berry", (0.05, 1.05, 0.0), bbox=(0.02, 0.02, 0.02))
        assert Predicate.IN in predicates(relate(berry, self.BOWL))

    def test_centroid_outside(self):
        berry = obj("berry", (0.2, 1.0, 0.0), bbox=(0.02, 0.02, 0.02))
        assert Predicate.IN not in predicates(relate(berry, self.BOWL))

    def test_larger_volume_cannot_be_in(self):
        crate = obj("crate", (0.0, 1.0, 0.0), bbox=(0.5, 0.5, 0.5))
        assert Predicate.IN not in predicates(relate(crate, self.BOWL))

    def test_anti_symmetric(self):
        berry = obj("berry", (0.05, 1.05, 0.0), bbox=(0.02, 0.02, 0.02))
        assert Predicate.IN not in predicates(relate(self.BOWL, berry))


class TestNear:
    def test_within_radius(self):
        a, b = obj("a", (0.0, 0.0, 0.0)), obj("b", (0.3, 0.0, 0.0))
        assert Predicate.NEAR in predicates(relate(a, b))

    def test_at_radius_excluded(self):
        a, b = obj("a", (0.0, 0.0, 0.0)), obj("b", (0.5, 0.0, 0.0))
        assert Predicate.NEAR not in predicates(relate(a, b))

    def test_symmetric(self):
        a, b = obj("a", (0.0, 0.0, 0.0)), obj("b", (0.3, 0.0, 0.0))
        assert Predicate.NEAR in predicates(relate(b, a))

    def test_custom_radius(self):
        rules = RelationRules(near_distance=0.05)
        ctx = RelationContext(rules=rules)
        a, b = obj("a", (0.0, 0.0, 0.0)), obj("b", (0.3, 0.0, 0.0))
        assert Predicate.NEAR not in predicates(relate(a, b, ctx))


class TestHeldBy:
    def test_requires_grasp_and_proximity(self):
        hand = user("u1", (0.0, 1.0, 0.0))
        cup = obj("cup", (0.03, 1.0, 0.0))
        ctx = RelationContext(grasps=frozenset({("u1", "cup")}))
        assert Predicate.HELD_BY in predicates(relate(cup, hand, ctx))

    def test_no_grasp_no_held(self):
        hand = user("u1", (0.0, 1.0, 0.0))
        cup = obj("cup", (0.03, 1.0, 0.0))
        assert Predicate.HELD_BY not in predicates(relate(cup, hand))

    def test_too_far_breaks_hold(self):
        hand = user("u1", (0.0, 1.0, 0.0))
        cup = obj("cup", (0.2, 1.0, 0.0))
        ctx = RelationContext(grasps=frozenset({("u1", "cup")}))
        assert Predicate.HELD_BY not in predicates(relate(cup, hand, ctx))

    def test_user_never_held_by_object(self):
        hand = user("u1", (0.0, 1.0, 0.0))
        cup = obj("cup", (0.03, 1.0, 0.0))
        ctx = RelationContext(grasps=frozenset({("u1", "cup")}))
        assert Predicate.HELD_BY not in predicates(relate(hand, cup, ctx))


class TestAttachedTo:
    def test_asserted_attachment(self):
        a, b = obj("a", (0.0, 0.0, 0.0)), obj("b", (5.0, 0.0, 0.0))
        ctx = RelationContext(attachments=frozenset({("a", "b")}))
        assert Predicate.ATTACHED_TO in predicates(relate(a, b, ctx))
        assert Predicate.ATTACHED_TO not in predicates(relate(b, a, ctx))


class TestPlumbing:
    def test_self_pair_is_empty(self):
        a = obj("a", (0.0, 0.0, 0.0))
        assert relate(a, a) == frozenset()

    def test_non_finite_pose_rejected(self):
        a = obj("a", (math.inf, 0.0, 0.0))
        b = obj("b", (0.0, 0.0, 0.0))
        with pytest.raises(RejectedInputError):
            relate(a, b)

    def test_relate_all_covers_ordered_pairs(self):
        a, b = obj("a", (0.0, 0.0, 0.0)), obj("b", (0.3, 0.0, 0.0))
        rels = relate_all([a, b])
        subjects = {r.subject for r in rels if r.predicate is Predicate.NEAR}
        assert subjects == {"a", "b"}

    def test_subject_relations_filters(self):
        a, b = obj("a", (0.0, 0.0, 0.0)), obj("b", (0.3, 0.0, 0.0))
        rels = relate_all([a, b])
        mine = subject_relations(rels, "a")
        assert all(r.subject == "a" for r in mine) and mine

    def test_default_rules_values(self):
        assert DEFAULT_RULES.near_distance == 0.5
        assert DEFAULT_RULES.held_distance == 0.05
        assert DEFAULT_RULES.on_gap_max == 0.02
