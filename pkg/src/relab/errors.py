"""Exception types shared across the package.

I/O failures are reported with the builtin OSError; everything the lab
itself can diagnose derives from RelabError.
"""

from __future__ import annotations


class RelabError(Exception):
    """Base class for errors raised by relab."""


class UnknownAttribute(RelabError):
    """An attribute name is missing from a schema (or has an unusable type)."""


class CorruptBlock(RelabError):
    """A temp-file block has an impossible used-length header."""


class OversizeRow(RelabError):
    """A serialized row does not fit into a single temp block."""


class BudgetTooSmall(RelabError):
    """Recursive partitioning cannot shrink a key group below the memory budget."""


class OutputTooLarge(RelabError):
    """A join would materialize more rows than the configured hard cap."""


class InsufficientData(RelabError):
    """Not enough measurements for a fit or a percentile statistic."""


class EmptySamples(RelabError):
    """Percentile of an empty sample list."""


class DigestMismatch(RelabError):
    """Repetitions of one experiment produced different result digests."""
