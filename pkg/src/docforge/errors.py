"""Exception hierarchy shared across the pipeline."""

from __future__ import annotations


class DocforgeError(Exception):
    """Base class for all errors raised by this package."""


# --- ingest ---------------------------------------------------------------

class IngestError(DocforgeError):
    pass


class UnsupportedFormatError(IngestError):
    pass


class NoAdapterError(IngestError):
    pass


class AdapterFailedError(IngestError):
    def __init__(self, message: str, stderr: str = ""):
        super().__init__(message)
        self.stderr = stderr


class InvalidUtf8Error(IngestError):
    pass


class EmptyDocumentError(IngestError):
    pass


# --- chunker --------------------------------------------------------------

class ChunkConfigError(DocforgeError):
    pass


class IndexOutOfRangeError(DocforgeError):
    pass


class OffsetOutOfRangeError(DocforgeError):
    pass


class NotAdjacentError(DocforgeError):
    pass


# --- llm client -----------------------------------------------------------

class LlmError(DocforgeError):
    pass


class TransportError(LlmError):
    pass


class RemoteError(LlmError):
    def __init__(self, message: str, status: int, body: str = ""):
        super().__init__(message)
        self.status = status
        self.body = body


class ExhaustedError(LlmError):
    pass


class MalformedResponseError(LlmError):
    pass


# --- generation / parsing -------------------------------------------------

class ParseError(DocforgeError):
    pass


class InsufficientPersonasError(DocforgeError):
    pass


class DuplicatePairError(DocforgeError):
    pass


class EmptyGenerationError(DocforgeError):
    pass


class EmptyAnswerError(DocforgeError):
    pass


# --- store ----------------------------------------------------------------

class NotFoundError(DocforgeError):
    pass


class CorruptError(DocforgeError):
    def __init__(self, message: str, path: str = "", line: int = 0):
        super().__init__(message)
        self.path = path
        self.line = line


class InvalidTransitionError(DocforgeError):
    pass


class ProjectLockedError(DocforgeError):
    pass


# --- export ---------------------------------------------------------------

class ExcludedError(DocforgeError):
    pass


class EmptySelectionError(DocforgeError):
    pass


# --- judge ----------------------------------------------------------------

class MissingPredictionError(DocforgeError):
    pass


class NoJsonError(DocforgeError):
    pass


class OutOfRangeError(DocforgeError):
    pass


class MissingFieldError(DocforgeError):
    pass


class AllFailedError(DocforgeError):
    pass


# --- service --------------------------------------------------------------

class BadParamsError(DocforgeError):
    pass
