"""Exception hierarchy shared by all modules."""

from __future__ import annotations


class PmcError(Exception):
    """Base class for all package errors."""


class ValidationError(PmcError):
    """A domain object violates one of its invariants."""


class MalformedFile(PmcError):
    """A file does not match its expected schema or cannot be parsed."""


class VersionMismatch(PmcError):
    """A persisted artifact is incompatible with the current context."""


class SegmentTooShort(PmcError):
    """A frame window is shorter than the minimum segment length."""


class SequenceTooShort(PmcError):
    """A pose sequence is too short to segment."""


class ShapeMismatch(PmcError):
    """Array shapes of two inputs are inconsistent."""


class TargetTooLong(PmcError):
    """A label sequence cannot be aligned within the available steps."""


class DegenerateAnnotation(PmcError):
    """A weak annotation has instance ranges too short to be usable."""


class EmptyDataset(PmcError):
    """A training set has no usable examples."""


class DivergedLoss(PmcError):
    """Training loss became non-finite."""


class NonFiniteLoss(PmcError):
    """A loss or gradient evaluation produced NaN/Inf."""


class EmptyInput(PmcError):
    """An operation requiring at least one element received none."""


class LengthMismatch(PmcError):
    """Two occurrences have different spline counts."""


class NoCompatibleReference(PmcError):
    """No reference occurrence is length-compatible with the candidates."""


class UnknownConcept(PmcError):
    """A concept label is not present in the vocabulary or model set."""


class IndexOutOfRange(PmcError):
    """An edit command references a slot or primitive that does not exist."""


class DegenerateLength(PmcError):
    """A metric needs a longer sequence than was provided."""
