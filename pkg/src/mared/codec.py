"""Canonical JSON serialization for documents, captures, traces and logs.

Encoding is canonical: keys are sorted, separators are compact, floats use
the shortest round-tripping form, and the text ends with one newline, so
byte-for-byte comparison of two encodings compares the values themselves.
Optional fields that are None are omitted.

Decoding is strict by default (unknown top-level keys are an error); lenient
decoding preserves them in `MAREDDocument.extras` and re-encodes them
verbatim.
"""

from __future__ import annotations

import json
import logging
from typing import Any, Callable, Iterable, Sequence

from .errors import DecodeError
from .model import (
    EMPTY_STATE,
    MARED_VERSION,
    SUPPORTED_VERSIONS,
    Entity,
    EntityKind,
    EventState,
    Header,
    InteractionEvent,
    Keyframe,
    KeyframedDocument,
    MAREDDocument,
    Pose,
    Predicate,
    PropertyValue,
    Quat,
    SemanticExperienceSegment,
    SemanticRelation,
    SpaceAnchor,
    StateChangeEvent,
    StateChangeKind,
    Vec3,
    Verb,
    require_valid,
    validate_document,
    validate_keyframed,
)

logger = logging.getLogger(__name__)

DOCUMENT_SUFFIX = ".mared"
KEYFRAMED_SUFFIX = ".kmared"
CAPTURE_SUFFIX = ".rawcap"
TRACE_SUFFIX = ".trace"

_DOCUMENT_KEYS = frozenset(
    {"maredVersion", "header", "entities", "segments", "interactionEvents", "stateChangeEvents"}
)
_KEYFRAMED_KEYS = _DOCUMENT_KEYS | {"threshold", "keyframes"}


def canonical_json(value: Any) -> str:
    """Canonical single-line JSON text for an already-plain value."""
    return json.dumps(
        value, sort_keys=True, separators=(",", ":"), ensure_ascii=False, allow_nan=False
    )


# ---------------------------------------------------------------------------
# Python objects -> plain JSON values


def _pose_out(pose: Pose) -> dict:
    return {
        "position": [float(c) for c in pose.position],
        "orientation": [float(c) for c in pose.orientation],
    }


def _relations_out(relations: Iterable[SemanticRelation]) -> list[dict]:
    return [
        {"predicate": r.predicate.value, "subject": r.subject, "object": r.object}
        for r in sorted(relations)
    ]


def _event_state_out(state: EventState) -> dict:
    return {
        "relations": _relations_out(state.relations),
        "properties": dict(state.properties),
    }


def _entity_out(entity: Entity) -> dict:
    return {
        "id": entity.id,
        "kind": entity.kind.value,
        "label": entity.label,
        "significance": float(entity.significance),
        "bbox": [float(c) for c in entity.bbox],
        "properties": dict(entity.properties),
    }


def _segment_out(seg: SemanticExperienceSegment) -> dict:
    return {
        "id": seg.id,
        "label": seg.label,
        "tStart": float(seg.t_start),
        "tEnd": float(seg.t_end),
        "participants": list(seg.participants),
        "keyObjects": list(seg.key_objects),
    }


def _interaction_out(ev: InteractionEvent) -> dict:
    out = {
        "id": ev.id,
        "segmentId": ev.segment_id,
        "actor": ev.actor,
        "verb": ev.verb.value,
        "tStart": float(ev.t_start),
        "tEnd": float(ev.t_end),
        "preState": _event_state_out(ev.pre_state),
        "postState": _event_state_out(ev.post_state),
    }
    if ev.target is not None:
        out["target"] = ev.target
    if ev.payload is not None:
        out["payload"] = ev.payload
    return out


def _state_value_out(kind: StateChangeKind, value: Any) -> Any:
    if kind is StateChangeKind.POSE:
        return _pose_out(value)
    if kind is StateChangeKind.RELATION:
        return _relations_out(value)
    return dict(value)


def _state_change_out(sc: StateChangeEvent) -> dict:
    out = {
        "id": sc.id,
        "subject": sc.subject,
        "kind": sc.kind.value,
        "tStart": float(sc.t_start),
        "tEnd": float(sc.t_end),
        "before": _state_value_out(sc.kind, sc.before),
        "after": _state_value_out(sc.kind, sc.after),
        "trajectory": [[float(t), _pose_out(p)] for t, p in sc.trajectory],
    }
    if sc.cause_event_id is not None:
        out["causeEventId"] = sc.cause_event_id
    return out


def _document_out(doc: MAREDDocument) -> dict:
    out = {
        "maredVersion": doc.mared_version,
        "header": {
            "captureEpoch": doc.header.capture_epoch,
            "anchors": [{"id": a.id, "pose": _pose_out(a.pose)} for a in doc.header.anchors],
        },
        "entities": [_entity_out(e) for e in doc.entities],
        "segments": [_segment_out(s) for s in doc.segments],
        "interactionEvents": [_interaction_out(e) for e in doc.interaction_events],
        "stateChangeEvents": [_state_change_out(s) for s in doc.state_change_events],
    }
    for key, value in doc.extras.items():
        if key not in _KEYFRAMED_KEYS:
            out[key] = value
    return out


def _keyframe_out(kf: Keyframe) -> dict:
    return {
        "t": float(kf.t),
        "score": float(kf.score),
        "sources": list(kf.sources),
        "anchors": [{"entityId": eid, "pose": _pose_out(p)} for eid, p in kf.anchors],
    }


def encode(doc: MAREDDocument) -> str:
    """Canonical text of a valid document; raises on an invalid one."""
    require_valid(doc)
    return canonical_json(_document_out(doc)) + "\n"


def encode_keyframed(kdoc: KeyframedDocument) -> str:
    violations = validate_keyframed(kdoc)
    if violations:
        from .errors import InvalidDocumentError

        raise InvalidDocumentError(violations)
    out = _document_out(kdoc.document)
    out["threshold"] = float(kdoc.threshold)
    out["keyframes"] = [_keyframe_out(k) for k in kdoc.keyframes]
    return canonical_json(out) + "\n"


# ---------------------------------------------------------------------------
# Plain JSON values -> Python objects
#
# Shape errors are collected as "path: problem" strings; decoding continues
# where it safely can so one pass reports as much as possible.


class _Shape:
    def __init__(self) -> None:
        self.errors: list[str] = []

    def fail(self, path: str, problem: str) -> None:
        self.errors.append(f"{path}: {problem}")
        raise _Bail()


class _Bail(Exception):
    pass


def _as_obj(ctx: _Shape, value: Any, path: str) -> dict:
    if not isinstance(value, dict):
        ctx.fail(path, f"expected object, got {type(value).__name__}")
    return value


def _as_list(ctx: _Shape, value: Any, path: str) -> list:
    if not isinstance(value, list):
        ctx.fail(path, f"expected array, got {type(value).__name__}")
    return value


def _as_str(ctx: _Shape, value: Any, path: str) -> str:
    if not isinstance(value, str):
        ctx.fail(path, f"expected string, got {type(value).__name__}")
    return value


def _as_float(ctx: _Shape, value: Any, path: str) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        ctx.fail(path, f"expected number, got {type(value).__name__}")
    return float(value)


def _req(ctx: _Shape, obj: dict, key: str, path: str) -> Any:
    if key not in obj:
        ctx.fail(path, f"missing required key {key!r}")
    return obj[key]


def _enum(ctx: _Shape, cls: type, value: Any, path: str) -> Any:
    name = _as_str(ctx, value, path)
    try:
        return cls(name)
    except ValueError:
        ctx.fail(path, f"unknown {cls.__name__} value {name!r}")


def _vec3_in(ctx: _Shape, value: Any, path: str) -> Vec3:
    items = _as_list(ctx, value, path)
    if len(items) != 3:
        ctx.fail(path, f"expected 3 components, got {len(items)}")
    return tuple(_as_float(ctx, x, f"{path}[{i}]") for i, x in enumerate(items))


def _quat_in(ctx: _Shape, value: Any, path: str) -> Quat:
    items = _as_list(ctx, value, path)
    if len(items) != 4:
        ctx.fail(path, f"expected 4 components, got {len(items)}")
    return tuple(_as_float(ctx, x, f"{path}[{i}]") for i, x in enumerate(items))


def _pose_in(ctx: _Shape, value: Any, path: str) -> Pose:
    obj = _as_obj(ctx, value, path)
    return Pose(
        position=_vec3_in(ctx, _req(ctx, obj, "position", path), f"{path}.position"),
        orientation=_quat_in(ctx, _req(ctx, obj, "orientation", path), f"{path}.orientation"),
    )


def _properties_in(ctx: _Shape, value: Any, path: str) -> dict[str, PropertyValue]:
    obj = _as_obj(ctx, value, path)
    out: dict[str, PropertyValue] = {}
    for key, val in obj.items():
        if not isinstance(val, (bool, int, float, str)):
            ctx.fail(f"{path}.{key}", f"expected scalar, got {type(val).__name__}")
        out[key] = val
    return out


def _relation_in(ctx: _Shape, value: Any, path: str) -> SemanticRelation:
    obj = _as_obj(ctx, value, path)
    return SemanticRelation(
        predicate=_enum(ctx, Predicate, _req(ctx, obj, "predicate", path), f"{path}.predicate"),
        subject=_as_str(ctx, _req(ctx, obj, "subject", path), f"{path}.subject"),
        object=_as_str(ctx, _req(ctx, obj, "object", path), f"{path}.object"),
    )


def _relations_in(ctx: _Shape, value: Any, path: str) -> frozenset:
    items = _as_list(ctx, value, path)
    return frozenset(_relation_in(ctx, r, f"{path}[{i}]") for i, r in enumerate(items))


def _event_state_in(ctx: _Shape, value: Any, path: str) -> EventState:
    obj = _as_obj(ctx, value, path)
    return EventState(
        relations=_relations_in(ctx, obj.get("relations", []), f"{path}.relations"),
        properties=_properties_in(ctx, obj.get("properties", {}), f"{path}.properties"),
    )


def _entity_in(ctx: _Shape, value: Any, path: str) -> Entity:
    obj = _as_obj(ctx, value, path)
    return Entity(
        id=_as_str(ctx, _req(ctx, obj, "id", path), f"{path}.id"),
        kind=_enum(ctx, EntityKind, _req(ctx, obj, "kind", path), f"{path}.kind"),
        label=_as_str(ctx, _req(ctx, obj, "label", path), f"{path}.label"),
        significance=_as_float(ctx, obj.get("significance", 0.5), f"{path}.significance"),
        bbox=_vec3_in(ctx, obj.get("bbox", [0.1, 0.1, 0.1]), f"{path}.bbox"),
        properties=_properties_in(ctx, obj.get("properties", {}), f"{path}.properties"),
    )


def _segment_in(ctx: _Shape, value: Any, path: str) -> SemanticExperienceSegment:
    obj = _as_obj(ctx, value, path)
    return SemanticExperienceSegment(
        id=_as_str(ctx, _req(ctx, obj, "id", path), f"{path}.id"),
        label=_as_str(ctx, _req(ctx, obj, "label", path), f"{path}.label"),
        t_start=_as_float(ctx, _req(ctx, obj, "tStart", path), f"{path}.tStart"),
        t_end=_as_float(ctx, _req(ctx, obj, "tEnd", path), f"{path}.tEnd"),
        participants=tuple(
            _as_str(ctx, p, f"{path}.participants[{i}]")
            for i, p in enumerate(_as_list(ctx, obj.get("participants", []), f"{path}.participants"))
        ),
        key_objects=tuple(
            _as_str(ctx, k, f"{path}.keyObjects[{i}]")
            for i, k in enumerate(_as_list(ctx, obj.get("keyObjects", []), f"{path}.keyObjects"))
        ),
    )


def _interaction_in(ctx: _Shape, value: Any, path: str) -> InteractionEvent:
    obj = _as_obj(ctx, value, path)
    target = obj.get("target")
    payload = obj.get("payload")
    if target is not None:
        target = _as_str(ctx, target, f"{path}.target")
    if payload is not None:
        payload = _as_str(ctx, payload, f"{path}.payload")
    return InteractionEvent(
        id=_as_str(ctx, _req(ctx, obj, "id", path), f"{path}.id"),
        segment_id=_as_str(ctx, _req(ctx, obj, "segmentId", path), f"{path}.segmentId"),
        actor=_as_str(ctx, _req(ctx, obj, "actor", path), f"{path}.actor"),
        verb=_enum(ctx, Verb, _req(ctx, obj, "verb", path), f"{path}.verb"),
        t_start=_as_float(ctx, _req(ctx, obj, "tStart", path), f"{path}.tStart"),
        t_end=_as_float(ctx, _req(ctx, obj, "tEnd", path), f"{path}.tEnd"),
        target=target,
        pre_state=_event_state_in(ctx, obj.get("preState", {}), f"{path}.preState")
        if "preState" in obj
        else EMPTY_STATE,
        post_state=_event_state_in(ctx, obj.get("postState", {}), f"{path}.postState")
        if "postState" in obj
        else EMPTY_STATE,
        payload=payload,
    )


def _state_value_in(ctx: _Shape, kind: StateChangeKind, value: Any, path: str) -> Any:
    if kind is StateChangeKind.POSE:
        return _pose_in(ctx, value, path)
    if kind is StateChangeKind.RELATION:
        return _relations_in(ctx, value, path)
    return _properties_in(ctx, value, path)


def _state_change_in(ctx: _Shape, value: Any, path: str) -> StateChangeEvent:
    obj = _as_obj(ctx, value, path)
    kind = _enum(ctx, StateChangeKind, _req(ctx, obj, "kind", path), f"{path}.kind")
    cause = obj.get("causeEventId")
    if cause is not None:
        cause = _as_str(ctx, cause, f"{path}.causeEventId")
    trajectory = []
    for i, item in enumerate(_as_list(ctx, obj.get("trajectory", []), f"{path}.trajectory")):
        pair = _as_list(ctx, item, f"{path}.trajectory[{i}]")
        if len(pair) != 2:
            ctx.fail(f"{path}.trajectory[{i}]", "expected [t, pose] pair")
        trajectory.append(
            (
                _as_float(ctx, pair[0], f"{path}.trajectory[{i}][0]"),
                _pose_in(ctx, pair[1], f"{path}.trajectory[{i}][1]"),
            )
        )
    return StateChangeEvent(
        id=_as_str(ctx, _req(ctx, obj, "id", path), f"{path}.id"),
        subject=_as_str(ctx, _req(ctx, obj, "subject", path), f"{path}.subject"),
        kind=kind,
        t_start=_as_float(ctx, _req(ctx, obj, "tStart", path), f"{path}.tStart"),
        t_end=_as_float(ctx, _req(ctx, obj, "tEnd", path), f"{path}.tEnd"),
        before=_state_value_in(ctx, kind, _req(ctx, obj, "before", path), f"{path}.before"),
        after=_state_value_in(ctx, kind, _req(ctx, obj, "after", path), f"{path}.after"),
        trajectory=tuple(trajectory),
        cause_event_id=cause,
    )


def _header_in(ctx: _Shape, value: Any, path: str) -> Header:
    obj = _as_obj(ctx, value, path)
    anchors = []
    for i, item in enumerate(_as_list(ctx, obj.get("anchors", []), f"{path}.anchors")):
        a = _as_obj(ctx, item, f"{path}.anchors[{i}]")
        anchors.append(
            SpaceAnchor(
                id=_as_str(ctx, _req(ctx, a, "id", f"{path}.anchors[{i}]"), f"{path}.anchors[{i}].id"),
                pose=_pose_in(ctx, _req(ctx, a, "pose", f"{path}.anchors[{i}]"), f"{path}.anchors[{i}].pose"),
            )
        )
    return Header(
        capture_epoch=_as_str(
            ctx, obj.get("captureEpoch", "1970-01-01T00:00:00Z"), f"{path}.captureEpoch"
        ),
        anchors=tuple(anchors),
    )


def _keyframe_in(ctx: _Shape, value: Any, path: str) -> Keyframe:
    obj = _as_obj(ctx, value, path)
    anchors = []
    for i, item in enumerate(_as_list(ctx, obj.get("anchors", []), f"{path}.anchors")):
        a = _as_obj(ctx, item, f"{path}.anchors[{i}]")
        anchors.append(
            (
                _as_str(ctx, _req(ctx, a, "entityId", f"{path}.anchors[{i}]"), f"{path}.anchors[{i}].entityId"),
                _pose_in(ctx, _req(ctx, a, "pose", f"{path}.anchors[{i}]"), f"{path}.anchors[{i}].pose"),
            )
        )
    return Keyframe(
        t=_as_float(ctx, _req(ctx, obj, "t", path), f"{path}.t"),
        score=_as_float(ctx, _req(ctx, obj, "score", path), f"{path}.score"),
        sources=tuple(
            _as_str(ctx, s, f"{path}.sources[{i}]")
            for i, s in enumerate(_as_list(ctx, _req(ctx, obj, "sources", path), f"{path}.sources"))
        ),
        anchors=tuple(anchors),
    )


def _collect(ctx: _Shape, items: list, path: str, reader: Callable) -> list:
    out = []
    for i, item in enumerate(items):
        try:
            out.append(reader(ctx, item, f"{path}[{i}]"))
        except _Bail:
            pass
    return out


def _parse_json(data: str | bytes) -> Any:
    if isinstance(data, bytes):
        try:
            data = data.decode("utf-8")
        except UnicodeDecodeError as exc:
            raise DecodeError([f"not valid UTF-8: {exc.reason}"]) from exc
    try:
        return json.loads(data)
    except json.JSONDecodeError as exc:
        raise DecodeError(
            [f"line {exc.lineno} column {exc.colno}: {exc.msg}"],
            line=exc.lineno,
            column=exc.colno,
        ) from exc


def decode(data: str | bytes, strict: bool = True) -> MAREDDocument | KeyframedDocument:
    """Parse an encoded document; keyframed form is detected by its extra keys.

    Strict decoding rejects unknown top-level keys and any invariant
    violation; lenient decoding keeps unknown keys in `extras` and tolerates
    violations (they are logged).
    """
    root = _parse_json(data)
    ctx = _Shape()
    if not isinstance(root, dict):
        raise DecodeError([f"$: expected object, got {type(root).__name__}"])

    keyframed = "threshold" in root or "keyframes" in root
    known = _KEYFRAMED_KEYS if keyframed else _DOCUMENT_KEYS
    unknown = sorted(set(root) - known)
    extras: dict[str, object] = {}
    if unknown:
        if strict:
            ctx.errors.append(f"$: unknown keys {unknown!r}")
        else:
            extras = {k: root[k] for k in unknown}

    version = root.get("maredVersion")
    if version is None:
        ctx.errors.append("$: missing required key 'maredVersion'")
        version = MARED_VERSION
    elif not isinstance(version, str):
        ctx.errors.append("$.maredVersion: expected string")
        version = MARED_VERSION
    elif version not in SUPPORTED_VERSIONS:
        ctx.errors.append(
            f"$.maredVersion: version {version!r} not supported (supported: {sorted(SUPPORTED_VERSIONS)})"
        )

    try:
        header = _header_in(ctx, root.get("header", {}), "$.header")
    except _Bail:
        header = Header()

    def read_list(key: str, reader: Callable) -> list:
        try:
            items = _as_list(ctx, root.get(key, []), f"$.{key}")
        except _Bail:
            return []
        return _collect(ctx, items, f"$.{key}", reader)

    doc = MAREDDocument(
        header=header,
        entities=tuple(read_list("entities", _entity_in)),
        segments=tuple(read_list("segments", _segment_in)),
        interaction_events=tuple(read_list("interactionEvents", _interaction_in)),
        state_change_events=tuple(read_list("stateChangeEvents", _state_change_in)),
        mared_version=version if isinstance(version, str) else MARED_VERSION,
        extras=extras,
    )

    if ctx.errors:
        raise DecodeError(ctx.errors)

    result: MAREDDocument | KeyframedDocument = doc
    if keyframed:
        try:
            threshold = _as_float(ctx, _req(ctx, root, "threshold", "$"), "$.threshold")
            keyframes = _collect(
                ctx, _as_list(ctx, root.get("keyframes", []), "$.keyframes"), "$.keyframes", _keyframe_in
            )
        except _Bail:
            threshold, keyframes = 0.0, []
        if ctx.errors:
            raise DecodeError(ctx.errors)
        result = KeyframedDocument(document=doc, threshold=threshold, keyframes=tuple(keyframes))
        violations = validate_keyframed(result)
    else:
        violations = validate_document(doc)

    if violations:
        if strict:
            raise DecodeError([str(v) for v in violations])
        logger.warning("decoded document has %d violation(s); kept as-is", len(violations))
    return result


def decode_document(data: str | bytes, strict: bool = True) -> MAREDDocument:
    result = decode(data, strict=strict)
    if not isinstance(result, MAREDDocument):
        raise DecodeError(["$: expected a plain document, found a keyframed one"])
    return result


def decode_keyframed(data: str | bytes, strict: bool = True) -> KeyframedDocument:
    result = decode(data, strict=strict)
    if not isinstance(result, KeyframedDocument):
        raise DecodeError(["$: expected a keyframed document, found a plain one"])
    return result


# ---------------------------------------------------------------------------
# Raw captures: JSON lines, one frame per line.


def _raw_entity_out(state) -> dict:
    out = {
        "id": state.id,
        "pose": _pose_out(state.pose),
        "bbox": [float(c) for c in state.bbox],
        "properties": dict(state.properties),
        "kind": state.kind.value,
        "significance": float(state.significance),
    }
    if state.label is not None:
        out["label"] = state.label
    return out


def encode_capture(raw) -> str:
    lines = []
    for frame in raw.frames:
        obj: dict[str, Any] = {"t": float(frame.t)}
        if frame.entities:
            obj["entities"] = [_raw_entity_out(s) for s in frame.entities]
        if frame.actions:
            obj["actions"] = [
                {
                    "actor": a.actor,
                    "verb": a.verb.value,
                    "phase": a.phase.value,
                    **({"target": a.target} if a.target is not None else {}),
                    **({"payload": a.payload} if a.payload is not None else {}),
                }
                for a in frame.actions
            ]
        if frame.markers:
            obj["markers"] = [
                {
                    "kind": m.kind.value,
                    "label": m.label,
                    **({"participants": list(m.participants)} if m.participants else {}),
                    **({"keyObjects": list(m.key_objects)} if m.key_objects else {}),
                }
                for m in frame.markers
            ]
        lines.append(canonical_json(obj))
    return "\n".join(lines) + ("\n" if lines else "")


def decode_capture(data: str | bytes):
    """Parse a JSON-lines capture; unknown verbs degrade to gesture."""
    from .ingestion import (
        ActionAnnotation,
        ActionPhase,
        MarkerKind,
        RawCapture,
        RawEntityState,
        RawFrame,
        SegmentMarker,
        coerce_verb,
    )

    if isinstance(data, bytes):
        try:
            data = data.decode("utf-8")
        except UnicodeDecodeError as exc:
            raise DecodeError([f"not valid UTF-8: {exc.reason}"]) from exc

    frames = []
    for lineno, line in enumerate(data.splitlines(), start=1):
        if not line.strip():
            continue
        try:
            obj = json.loads(line)
        except json.JSONDecodeError as exc:
            raise DecodeError(
                [f"line {lineno} column {exc.colno}: {exc.msg}"], line=lineno, column=exc.colno
            ) from exc
        ctx = _Shape()
        path = f"line {lineno}"
        try:
            frame_obj = _as_obj(ctx, obj, path)
            entities = []
            for i, item in enumerate(_as_list(ctx, frame_obj.get("entities", []), f"{path}.entities")):
                e = _as_obj(ctx, item, f"{path}.entities[{i}]")
                epath = f"{path}.entities[{i}]"
                label = e.get("label")
                if label is not None:
                    label = _as_str(ctx, label, f"{epath}.label")
                entities.append(
                    RawEntityState(
                        id=_as_str(ctx, _req(ctx, e, "id", epath), f"{epath}.id"),
                        pose=_pose_in(ctx, _req(ctx, e, "pose", epath), f"{epath}.pose"),
                        bbox=_vec3_in(ctx, e.get("bbox", [0.1, 0.1, 0.1]), f"{epath}.bbox"),
                        properties=_properties_in(ctx, e.get("properties", {}), f"{epath}.properties"),
                        kind=_enum(ctx, EntityKind, e.get("kind", "object"), f"{epath}.kind"),
                        label=label,
                        significance=_as_float(ctx, e.get("significance", 0.5), f"{epath}.significance"),
                    )
                )
            actions = []
            for i, item in enumerate(_as_list(ctx, frame_obj.get("actions", []), f"{path}.actions")):
                a = _as_obj(ctx, item, f"{path}.actions[{i}]")
                apath = f"{path}.actions[{i}]"
                target = a.get("target")
                if target is not None:
                    target = _as_str(ctx, target, f"{apath}.target")
                payload = a.get("payload")
                if payload is not None:
                    payload = _as_str(ctx, payload, f"{apath}.payload")
                actions.append(
                    ActionAnnotation(
                        actor=_as_str(ctx, _req(ctx, a, "actor", apath), f"{apath}.actor"),
                        verb=coerce_verb(_as_str(ctx, _req(ctx, a, "verb", apath), f"{apath}.verb")),
                        phase=_enum(ctx, ActionPhase, _req(ctx, a, "phase", apath), f"{apath}.phase"),
                        target=target,
                        payload=payload,
                    )
                )
            markers = []
            for i, item in enumerate(_as_list(ctx, frame_obj.get("markers", []), f"{path}.markers")):
                m = _as_obj(ctx, item, f"{path}.markers[{i}]")
                mpath = f"{path}.markers[{i}]"
                markers.append(
                    SegmentMarker(
                        kind=_enum(ctx, MarkerKind, _req(ctx, m, "kind", mpath), f"{mpath}.kind"),
                        label=_as_str(ctx, _req(ctx, m, "label", mpath), f"{mpath}.label"),
                        participants=tuple(
                            _as_str(ctx, p, f"{mpath}.participants[{j}]")
                            for j, p in enumerate(
                                _as_list(ctx, m.get("participants", []), f"{mpath}.participants")
                            )
                        ),
                        key_objects=tuple(
                            _as_str(ctx, k, f"{mpath}.keyObjects[{j}]")
                            for j, k in enumerate(
                                _as_list(ctx, m.get("keyObjects", []), f"{mpath}.keyObjects")
                            )
                        ),
                    )
                )
            frames.append(
                RawFrame(
                    t=_as_float(ctx, _req(ctx, frame_obj, "t", path), f"{path}.t"),
                    entities=tuple(entities),
                    actions=tuple(actions),
                    markers=tuple(markers),
                )
            )
        except _Bail:
            pass
        if ctx.errors:
            raise DecodeError(ctx.errors, line=lineno)
    return RawCapture(frames=tuple(frames))


# ---------------------------------------------------------------------------
# Interaction traces: JSON lines, one input per line.


def encode_trace(inputs: Sequence) -> str:
    lines = []
    for inp in inputs:
        obj = {"wallTime": float(inp.wall_time), "kind": inp.kind.value, "payload": inp.payload}
        if inp.target is not None:
            obj["target"] = inp.target
        lines.append(canonical_json(obj))
    return "\n".join(lines) + ("\n" if lines else "")


def decode_trace(data: str | bytes):
    from .playback import InputKind, InteractionInput

    if isinstance(data, bytes):
        try:
            data = data.decode("utf-8")
        except UnicodeDecodeError as exc:
            raise DecodeError([f"not valid UTF-8: {exc.reason}"]) from exc

    inputs = []
    for lineno, line in enumerate(data.splitlines(), start=1):
        if not line.strip():
            continue
        try:
            obj = json.loads(line)
        except json.JSONDecodeError as exc:
            raise DecodeError(
                [f"line {lineno} column {exc.colno}: {exc.msg}"], line=lineno, column=exc.colno
            ) from exc
        ctx = _Shape()
        path = f"line {lineno}"
        try:
            rec = _as_obj(ctx, obj, path)
            target = rec.get("target")
            if target is not None:
                target = _as_str(ctx, target, f"{path}.target")
            inputs.append(
                InteractionInput(
                    wall_time=_as_float(ctx, _req(ctx, rec, "wallTime", path), f"{path}.wallTime"),
                    kind=_enum(ctx, InputKind, _req(ctx, rec, "kind", path), f"{path}.kind"),
                    payload=_as_str(ctx, rec.get("payload", ""), f"{path}.payload"),
                    target=target,
                )
            )
        except _Bail:
            pass
        if ctx.errors:
            raise DecodeError(ctx.errors, line=lineno)
    return tuple(inputs)


def encode_session_log(entries: Sequence) -> str:
    """Canonical JSON-lines text of a playback session log."""
    lines = []
    for entry in entries:
        obj = {
            "wallTime": float(entry.wall_time),
            "expTime": float(entry.exp_time),
            "kind": entry.kind.value,
            "detail": entry.detail,
        }
        if entry.subject is not None:
            obj["subject"] = entry.subject
        lines.append(canonical_json(obj))
    return "\n".join(lines) + ("\n" if lines else "")


__all__ = [
    "DOCUMENT_SUFFIX",
    "KEYFRAMED_SUFFIX",
    "CAPTURE_SUFFIX",
    "TRACE_SUFFIX",
    "canonical_json",
    "encode",
    "encode_keyframed",
    "decode",
    "decode_document",
    "decode_keyframed",
    "encode_capture",
    "decode_capture",
    "encode_trace",
    "decode_trace",
    "encode_session_log",
]
