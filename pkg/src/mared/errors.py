"""Exception hierarchy shared by every pipeline stage."""

from __future__ import annotations


class MaredError(Exception):
    """Base class for all errors raised by this package."""

    code = "error"


class RejectedInputError(MaredError):
    """Input data breaks a hard precondition (non-finite pose, bad timestamps)."""

    code = "rejectedInput"


class TruncatedActionError(RejectedInputError):
    """An action `begin` was never closed before the capture ended."""

    code = "truncatedAction"


class MalformedMarkersError(RejectedInputError):
    """Segment markers are unbalanced or interleaved."""

    code = "malformedMarkers"


class UnsegmentedEventError(RejectedInputError):
    """Explicit markers were given but an event falls outside all of them."""

    code = "unsegmentedEvent"


class ScoringError(MaredError):
    """A scored event references something the document does not contain."""

    code = "scoringError"

    def __init__(self, message: str, offender: str):
        super().__init__(message)
        self.offender = offender


class NothingToPlayError(MaredError):
    """The document has no segments, so a session cannot be opened."""

    code = "nothingToPlay"


class MonotonicityError(MaredError):
    """Wall clock moved backwards between ticks."""

    code = "monotonicity"


class NestedBranchRejectedError(MaredError):
    """A branch was requested while another branch is still open."""

    code = "nestedBranchRejected"


class NoBranchOpenError(MaredError):
    """A branch close was requested but no branch is open."""

    code = "noBranchOpen"


class SessionStillActiveError(MaredError):
    """Export was requested before the session reached its end."""

    code = "sessionStillActive"


class InsufficientAnchorsError(MaredError):
    """Spatial alignment has no usable anchor correspondences."""

    code = "insufficientAnchors"


class DecodeError(MaredError):
    """Parsing or validating an encoded file failed.

    `errors` carries one structured entry per problem; `line`/`column` are set
    for syntax errors.
    """

    code = "decodeError"

    def __init__(self, errors, line: int | None = None, column: int | None = None):
        self.errors = list(errors)
        self.line = line
        self.column = column
        super().__init__("; ".join(str(e) for e in self.errors))


class InvalidDocumentError(MaredError):
    """An operation that requires a valid document was handed a broken one."""

    code = "invalidDocument"

    def __init__(self, violations):
        self.violations = list(violations)
        super().__init__(
            "document has %d violation(s): %s"
            % (len(self.violations), "; ".join(str(v) for v in self.violations[:5]))
        )
