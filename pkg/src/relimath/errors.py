"""Exception types shared across the toolkit."""
from __future__ import annotations


class RelimathError(Exception):
    """Base class for all toolkit errors."""


class RecordParseError(RelimathError):
    """A serialized record line could not be decoded."""

    def __init__(self, message: str, line_number: int | None = None):
        self.line_number = line_number
        if line_number is not None:
            message = f"line {line_number}: {message}"
        super().__init__(message)


class RecordValidationError(RelimathError):
    """A record violates a schema invariant; names the offending field."""

    def __init__(self, field: str, message: str):
        self.field = field
        super().__init__(f"{field}: {message}")


class TemplateError(RelimathError):
    """Prompt template missing, unresolved, or bound incorrectly."""


class GatewayError(RelimathError):
    """A completion could not be obtained from an endpoint."""

    def __init__(self, message: str, status: int | None = None, retries: int = 0):
        self.status = status
        self.retries = retries
        super().__init__(message)


class MockMissError(GatewayError):
    """Strict mock backend saw a prompt with no matching rule."""


class ConstructionError(RelimathError):
    """A construction-stage model output could not be used."""

    def __init__(self, stage: str, message: str):
        self.stage = stage
        super().__init__(f"{stage}: {message}")


class MetricsError(RelimathError):
    """Reliability metrics are undefined for the given records."""


class AnnotationError(RelimathError):
    """Base class for annotation-session errors; carries a wire code."""

    code = "annotation"


class SequencingError(AnnotationError):
    code = "sequencing"


class AnnotationConflictError(AnnotationError):
    code = "conflict"


class AnnotationValidationError(AnnotationError):
    code = "validation"


class IncompleteSessionError(AnnotationError):
    code = "incomplete"

    def __init__(self, pending: list[str]):
        self.pending = list(pending)
        super().__init__(f"session has {len(self.pending)} pending candidates: {', '.join(self.pending[:5])}")


class SessionNotFoundError(AnnotationError):
    code = "not_found"
