"""Checkpoint-to-bundle conversion and validation for the detection engine."""

from .export import (
    COSINE_MIN,
    MAX_ABS_ERR,
    ExportError,
    ExportSpec,
    ValidationError,
    ValidationReport,
    export,
    fixed_prompts,
    tokenize_prompts,
    validate,
)

__all__ = [
    "COSINE_MIN",
    "MAX_ABS_ERR",
    "ExportError",
    "ExportSpec",
    "ValidationError",
    "ValidationReport",
    "export",
    "fixed_prompts",
    "tokenize_prompts",
    "validate",
]
