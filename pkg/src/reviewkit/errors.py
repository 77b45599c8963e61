"""Exception taxonomy shared across the engine, store, providers and API."""


class ReviewKitError(Exception):
    """Base class; carries a stable machine-readable code for the API envelope."""

    code = "error"

    def __init__(self, message: str, detail: dict | None = None):
        super().__init__(message)
        self.message = message
        self.detail = detail or {}


class ValidationError(ReviewKitError):
    code = "validation_error"


class EmptyPrompt(ValidationError):
    code = "empty_prompt"


class NotFound(ReviewKitError):
    code = "not_found"


class StorageError(ReviewKitError):
    code = "storage_error"


class CorruptLog(StorageError):
    code = "corrupt_log"

    def __init__(self, message: str, line_number: int, detail: dict | None = None):
        detail = dict(detail or {})
        detail["line_number"] = line_number
        super().__init__(message, detail)
        self.line_number = line_number


class ProviderError(ReviewKitError):
    code = "provider_error"


class ProviderUnavailable(ProviderError):
    code = "provider_unavailable"


class ProviderProtocolError(ProviderError):
    code = "provider_protocol_error"


class RetriableProviderError(ProviderError):
    """A provider failure that left no state behind; the caller may retry."""

    code = "provider_retriable"


class DimensionError(ReviewKitError):
    code = "dimension_error"


class DiffError(ReviewKitError):
    code = "diff_error"


class AlreadyDecided(ReviewKitError):
    code = "already_decided"


class StalePropagation(ReviewKitError):
    code = "stale_propagation"


class QueueExhausted(ReviewKitError):
    code = "queue_exhausted"


class FilterCreationFailed(ReviewKitError):
    code = "filter_creation_failed"
