"""Shared exception taxonomy.

Every data-level failure raises a subclass of :class:`SurprisalError` so the
CLI can map "bad data" to a single exit code while keeping the failure kinds
distinguishable in tests and in machine-parseable error lines.
"""

from __future__ import annotations


class SurprisalError(Exception):
    """Base class for all toolkit data errors."""


# --- trace model -------------------------------------------------------------

class TraceValidationError(SurprisalError):
    """A TraceSet invariant is violated (shape, finiteness, label lengths)."""


class UnknownLayerError(SurprisalError):
    """A selector names a layer that does not exist in the trace set."""


class ColumnOutOfBoundsError(SurprisalError):
    """A selector names a column index outside the trace matrix."""


class MissingLabelsError(SurprisalError):
    """An operation needs a label list the trace set does not carry."""


# --- file formats ------------------------------------------------------------

class ArrayFormatError(SurprisalError):
    """An array file violates the accepted binary format."""


class BadMagicError(ArrayFormatError):
    """File does not start with the expected magic bytes."""


class UnsupportedDtypeError(ArrayFormatError):
    """Array dtype is outside the accepted set."""


class FortranOrderError(ArrayFormatError):
    """Array payload is column-major; only row-major is accepted."""


class BadShapeError(ArrayFormatError):
    """Array shape is not the required 2-D form."""


class TruncatedPayloadError(ArrayFormatError):
    """Payload is shorter than the header-declared shape requires."""


class ManifestError(SurprisalError):
    """Dataset manifest is invalid or inconsistent with its files."""


# --- density scoring ---------------------------------------------------------

class NoNeuronsRetainedError(SurprisalError):
    """Variance filtering removed every neuron."""


class InsufficientClassRowsError(SurprisalError):
    """A density model would be fitted on fewer than two rows."""


class BandwidthFactorizationError(SurprisalError):
    """Bandwidth matrix is not positive definite even after regularization."""


class DimensionMismatchError(SurprisalError):
    """Query vector width differs from the fitted dimension."""


# --- distance scoring --------------------------------------------------------

class SingleClassError(SurprisalError):
    """Distance surprise is undefined without at least two classes."""


class UnknownClassError(SurprisalError):
    """A query class has no rows in the reference index."""


class DegenerateReferenceError(SurprisalError):
    """The cross-class reference distance is zero (duplicate trace)."""

    def __init__(self, message: str, ref_same_id: int, ref_other_id: int):
        super().__init__(message)
        self.ref_same_id = ref_same_id
        self.ref_other_id = ref_other_id


# --- detection / guidance ----------------------------------------------------

class DegenerateLabelsError(SurprisalError):
    """Binary-label input contains only one class."""


class EmptyRangeError(SurprisalError):
    """No input qualifies for the requested score range."""
