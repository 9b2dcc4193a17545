"""Semantic capture logging, keyframe distillation and adaptive playback.

The pipeline has three stages: `ingest` structures a raw spatio-temporal
capture into a semantic event log, `distill` scores events and selects
keyframes under a decision threshold, and `open_session`/`replay_trace`
replay the result adaptively with live branching and keyframe-anchored
resumption.  `codec` fixes the canonical file formats; `cli` and `service`
expose everything to scripts and sockets.
"""

from .codec import (
    decode,
    decode_capture,
    decode_document,
    decode_keyframed,
    decode_trace,
    encode,
    encode_capture,
    encode_keyframed,
    encode_trace,
)
from .distill import ScoringWeights, distill, score_interaction, score_state_change
from .errors import (
    DecodeError,
    InsufficientAnchorsError,
    InvalidDocumentError,
    MalformedMarkersError,
    MaredError,
    MonotonicityError,
    NestedBranchRejectedError,
    NoBranchOpenError,
    NothingToPlayError,
    RejectedInputError,
    ScoringError,
    SessionStillActiveError,
    TruncatedActionError,
    UnsegmentedEventError,
)
from .ingestion import (
    ActionAnnotation,
    ActionPhase,
    LoggerConfig,
    MarkerKind,
    RawCapture,
    RawEntityState,
    RawFrame,
    SegmentMarker,
    build_segments,
    detect_state_changes,
    ingest,
)
from .model import (
    MARED_VERSION,
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
    SemanticExperienceSegment,
    SemanticRelation,
    SpaceAnchor,
    StateChangeEvent,
    StateChangeKind,
    Verb,
    Violation,
    validate_document,
    validate_keyframed,
)
from .playback import (
    InputKind,
    Intent,
    IntentKind,
    InteractionInput,
    PlaybackConfig,
    PlaybackSession,
    ResumePolicy,
    classify_intent,
    create_new_branch,
    export_session,
    inject,
    open_session,
    replay_trace,
    return_to_main,
    tick,
)
from .relations import RelationContext, RelationRules, relate, relate_all
from .spatial import adapt_spatial

__version__ = "0.1.0"
