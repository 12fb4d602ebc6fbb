#!/usr/bin/env python3
"""
Exception hierarchy for the DAG translation toolkit.

Library modules raise these; only the command layer in ``tools/`` turns them
into log records, a stderr message and a nonzero exit code.
"""

from typing import Optional


class DatError(Exception):
    """Base class for every error raised by this package."""


class NormalizationError(DatError):
    """A probability row does not sum to one."""


class StructureError(DatError):
    """A transition matrix puts mass outside the strict upper triangle."""


class LengthError(DatError):
    """A sequence is longer than the graph (or table) can hold."""


class VocabError(DatError):
    """A token index lies outside the vocabulary."""


class DegenerateError(DatError):
    """The target has zero probability under the graph."""


class EmptyResultError(DatError):
    """Beam search finished without any beam at the terminal vertex."""


class EmptyCorpusError(DatError):
    """A corpus that has to be read or fitted holds no sentence pairs."""


class ParseError(DatError):
    """Malformed corpus or vocabulary line."""

    def __init__(self, message: str, line_number: Optional[int] = None):
        self.line_number = line_number
        if line_number is not None:
            message = f"line {line_number}: {message}"
        super().__init__(message)


class UnknownTokenError(ParseError):
    """A token is missing from the closed vocabulary."""


class ConfigError(DatError):
    """Invalid configuration value or combination."""


class CheckpointError(DatError):
    """Checkpoint could not be read or written."""


class VersionMismatchError(CheckpointError):
    """Checkpoint magic bytes or format version are not the expected ones."""


class MetricError(DatError):
    """Metric inputs are inconsistent (length mismatch, too few samples)."""
