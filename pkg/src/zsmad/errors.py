"""Exception taxonomy shared across the engine.

CLI exit-code mapping: usage errors exit 1, data errors exit 2,
inference errors exit 3 (see ``cli.py``).
"""


class EngineError(Exception):
    """Base class for all engine errors."""


# -- data errors (exit code 2) -------------------------------------------

class ParseError(EngineError):
    """Malformed manifest row or file; carries the offending row number."""

    def __init__(self, message, row=None):
        if row is not None:
            message = f"row {row}: {message}"
        super().__init__(message)
        self.row = row


class SchemaError(EngineError):
    """Required column or key missing from an input file."""


class ConstraintError(EngineError):
    """A domain invariant was violated (duplicate id, label/generator clash)."""


class DecodeError(EngineError):
    """Image file could not be decoded."""


class VocabError(EngineError):
    """Vocabulary or merges file is inconsistent."""


class DegenerateError(EngineError):
    """Metric query on an empty or undefined score population."""


class EmptyReferenceError(EngineError):
    """Prototype fitting was given no reference samples."""


class IoError(EngineError):
    """Filesystem write failure while emitting an artifact."""


# -- inference errors (exit code 3) --------------------------------------

class BundleError(EngineError):
    """Model bundle is incomplete or inconsistent with its config."""


class InferenceError(EngineError):
    """Encoder runtime failure."""


class SingularFitError(EngineError):
    """Surrogate design matrix stayed rank-deficient after re-sampling."""


DATA_ERRORS = (
    ParseError,
    SchemaError,
    ConstraintError,
    DecodeError,
    VocabError,
    DegenerateError,
    EmptyReferenceError,
    IoError,
)

INFERENCE_ERRORS = (BundleError, InferenceError, SingularFitError)
