"""Exception hierarchy. Each family maps to one CLI exit code."""


class SophiaError(Exception):
    exit_code = 5


class DataFormatError(SophiaError, ValueError):
    """Malformed or inconsistent input data."""

    exit_code = 3


class IpcParseError(DataFormatError):
    def __init__(self, raw, component, detail):
        self.raw = raw
        self.component = component
        super().__init__(f"cannot parse IPC code {raw!r}: bad {component} ({detail})")


class InsufficientGranularityError(DataFormatError):
    pass


class MissingSectionError(DataFormatError):
    pass


class MissingDocumentError(DataFormatError):
    def __init__(self, doc_id, context=""):
        self.doc_id = doc_id
        msg = f"document {doc_id!r} not found in corpus"
        super().__init__(f"{msg} ({context})" if context else msg)


class MatrixFormatError(DataFormatError):
    pass


class BadMagicError(MatrixFormatError):
    pass


class TruncatedFileError(MatrixFormatError):
    pass


class DuplicateIdError(MatrixFormatError):
    pass


class RunFormatError(DataFormatError):
    pass


class QrelsFormatError(DataFormatError):
    pass


class CoverageError(DataFormatError):
    def __init__(self, query_id, what="run"):
        self.query_id = query_id
        super().__init__(f"{what} has no entries for query {query_id!r}")


class VerificationError(DataFormatError):
    pass


class BackendError(SophiaError):
    exit_code = 4


class DimensionMismatchError(BackendError):
    pass


class NormalizationError(BackendError):
    def __init__(self, index):
        self.index = index
        super().__init__(f"backend returned a zero or non-finite vector for text #{index}")


class TransportError(BackendError):
    retryable = True

    def __init__(self, message, attempts):
        self.attempts = attempts
        super().__init__(f"{message} (after {attempts} attempt{'s' if attempts != 1 else ''})")


class TrainingError(SophiaError):
    def __init__(self, message, batch_index=None):
        self.batch_index = batch_index
        super().__init__(message)
