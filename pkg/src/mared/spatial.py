"""Re-anchor a document into a target space via rigid point alignment.

The capture space and the playback space each provide named anchor poses;
matching ids give point correspondences.  With three or more non-collinear
correspondences the best-fit rotation + translation (optionally a uniform
scale) is solved in closed form over the anchor positions; with fewer, the
result degrades to a translation that matches the anchor centroids.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, replace

import numpy as np

from .errors import InsufficientAnchorsError
from .model import (
    IDENTITY_QUAT,
    Keyframe,
    KeyframedDocument,
    Pose,
    Quat,
    SpaceAnchor,
    StateChangeEvent,
    StateChangeKind,
    Vec3,
)

logger = logging.getLogger(__name__)

_COLLINEAR_EPS = 1e-9


@dataclass(frozen=True)
class SpaceTransform:
    """x -> scale * rotation @ x + translation."""

    rotation: tuple[tuple[float, float, float], ...] = (
        (1.0, 0.0, 0.0),
        (0.0, 1.0, 0.0),
        (0.0, 0.0, 1.0),
    )
    translation: Vec3 = (0.0, 0.0, 0.0)
    scale: float = 1.0
    degraded: bool = False

    def apply_point(self, p: Vec3) -> Vec3:
        r = np.asarray(self.rotation)
        out = self.scale * (r @ np.asarray(p)) + np.asarray(self.translation)
        return (float(out[0]), float(out[1]), float(out[2]))

    def apply_pose(self, pose: Pose) -> Pose:
        return Pose(
            position=self.apply_point(pose.position),
            orientation=_quat_multiply(self.rotation_quat(), pose.orientation),
        )

    def rotation_quat(self) -> Quat:
        return _quat_from_matrix(np.asarray(self.rotation))


def _quat_multiply(a: Quat, b: Quat) -> Quat:
    aw, ax, ay, az = a
    bw, bx, by, bz = b
    return (
        aw * bw - ax * bx - ay * by - az * bz,
        aw * bx + ax * bw + ay * bz - az * by,
        aw * by - ax * bz + ay * bw + az * bx,
        aw * bz + ax * by - ay * bx + az * bw,
    )


def _quat_from_matrix(m: np.ndarray) -> Quat:
    # Shepperd's method: pick the largest diagonal combination for stability.
    trace = m[0, 0] + m[1, 1] + m[2, 2]
    if trace > 0:
        s = 2.0 * np.sqrt(trace + 1.0)
        q = (0.25 * s, (m[2, 1] - m[1, 2]) / s, (m[0, 2] - m[2, 0]) / s, (m[1, 0] - m[0, 1]) / s)
    elif m[0, 0] > m[1, 1] and m[0, 0] > m[2, 2]:
        s = 2.0 * np.sqrt(1.0 + m[0, 0] - m[1, 1] - m[2, 2])
        q = ((m[2, 1] - m[1, 2]) / s, 0.25 * s, (m[0, 1] + m[1, 0]) / s, (m[0, 2] + m[2, 0]) / s)
    elif m[1, 1] > m[2, 2]:
        s = 2.0 * np.sqrt(1.0 + m[1, 1] - m[0, 0] - m[2, 2])
        q = ((m[0, 2] - m[2, 0]) / s, (m[0, 1] + m[1, 0]) / s, 0.25 * s, (m[1, 2] + m[2, 1]) / s)
    else:
        s = 2.0 * np.sqrt(1.0 + m[2, 2] - m[0, 0] - m[1, 1])
        q = ((m[1, 0] - m[0, 1]) / s, (m[0, 2] + m[2, 0]) / s, (m[1, 2] + m[2, 1]) / s, 0.25 * s)
    norm = float(np.sqrt(sum(c * c for c in q)))
    q = tuple(float(c / norm) for c in q)
    # Canonical sign: non-negative w keeps output deterministic.
    return q if q[0] >= 0 else tuple(-c for c in q)


def _is_collinear(points: np.ndarray) -> bool:
    centered = points - points.mean(axis=0)
    # Rank < 2 means all points lie on one line (or coincide).
    singular = np.linalg.svd(centered, compute_uv=False)
    return bool(singular[1] < _COLLINEAR_EPS) if len(singular) > 1 else True


def solve_alignment(
    source: np.ndarray, target: np.ndarray, allow_scale: bool = False
) -> SpaceTransform:
    """Least-squares rigid (or similarity) transform mapping source onto target."""
    source = np.asarray(source, dtype=float)
    target = np.asarray(target, dtype=float)
    if len(source) < 3 or _is_collinear(source):
        translation = target.mean(axis=0) - source.mean(axis=0)
        logger.warning(
            "only %d usable anchor correspondence(s); degraded translation-only alignment",
            len(source),
        )
        return SpaceTransform(translation=tuple(map(float, translation)), degraded=True)

    src_centroid = source.mean(axis=0)
    tgt_centroid = target.mean(axis=0)
    src_centered = source - src_centroid
    tgt_centered = target - tgt_centroid

    h = src_centered.T @ tgt_centered
    u, singular, vt = np.linalg.svd(h)
    d = np.sign(np.linalg.det(vt.T @ u.T))
    correction = np.diag([1.0, 1.0, d])
    rotation = vt.T @ correction @ u.T

    scale = 1.0
    if allow_scale:
        denom = float((src_centered**2).sum())
        if denom > 0:
            scale = float((singular * np.diag(correction)).sum() / denom)

    translation = tgt_centroid - scale * rotation @ src_centroid
    return SpaceTransform(
        rotation=tuple(tuple(float(x) for x in row) for row in rotation),
        translation=tuple(map(float, translation)),
        scale=scale,
    )


def alignment_for(
    capture_anchors: tuple[SpaceAnchor, ...],
    target_space: tuple[SpaceAnchor, ...],
    allow_scale: bool = False,
) -> SpaceTransform:
    """Transform from matching anchor ids; no matches at all is an error."""
    targets_by_id = {a.id: a for a in target_space}
    pairs = [(a.pose.position, targets_by_id[a.id].pose.position) for a in capture_anchors if a.id in targets_by_id]
    if not pairs:
        raise InsufficientAnchorsError(
            "no anchor ids are shared between the capture and the target space"
        )
    source = np.array([p[0] for p in pairs])
    target = np.array([p[1] for p in pairs])
    return solve_alignment(source, target, allow_scale=allow_scale)


def _transform_state_change(sc: StateChangeEvent, tf: SpaceTransform) -> StateChangeEvent:
    before, after = sc.before, sc.after
    if sc.kind is StateChangeKind.POSE and isinstance(before, Pose) and isinstance(after, Pose):
        before = tf.apply_pose(before)
        after = tf.apply_pose(after)
    return replace(
        sc,
        before=before,
        after=after,
        trajectory=tuple((t, tf.apply_pose(p)) for t, p in sc.trajectory),
    )


def adapt_spatial(
    kdoc: KeyframedDocument,
    target_space: tuple[SpaceAnchor, ...],
    allow_scale: bool = False,
) -> KeyframedDocument:
    """Remap every pose in the document into the target space."""
    tf = alignment_for(kdoc.document.header.anchors, target_space, allow_scale=allow_scale)
    doc = kdoc.document
    adapted = replace(
        doc,
        header=replace(
            doc.header,
            anchors=tuple(replace(a, pose=tf.apply_pose(a.pose)) for a in doc.header.anchors),
        ),
        state_change_events=tuple(_transform_state_change(sc, tf) for sc in doc.state_change_events),
    )
    keyframes = tuple(
        Keyframe(
            t=kf.t,
            score=kf.score,
            sources=kf.sources,
            anchors=tuple((eid, tf.apply_pose(p)) for eid, p in kf.anchors),
        )
        for kf in kdoc.keyframes
    )
    return KeyframedDocument(document=adapted, threshold=kdoc.threshold, keyframes=keyframes)


__all__ = [
    "SpaceTransform",
    "solve_alignment",
    "alignment_for",
    "adapt_spatial",
]
