"""Exception types shared across the package.

Each class maps to one failure mode; the CLI groups them into exit codes
(input/parse problems, unmet hypotheses, numerical failures).
"""

from __future__ import annotations


class PerronChainError(Exception):
    """Base class for all package errors."""


# --- input / parsing ---------------------------------------------------------

class ParseError(PerronChainError):
    """Malformed matrix file, model string, or report."""


class DuplicateEntry(ParseError):
    """The same (row, col) position appears twice in a coordinate file."""


class NegativeOffDiagonal(PerronChainError):
    """An off-diagonal entry is negative (or, for Metzler sources, not positive)."""


class DomainError(PerronChainError):
    """A parameter is outside its admissible range."""


# --- unmet hypotheses --------------------------------------------------------

class HypothesesUnmet(PerronChainError):
    """The representation's hypotheses (irreducibility, recurrence) fail."""


# --- numerical ---------------------------------------------------------------

class NonFiniteRowSum(PerronChainError):
    """A row sum is not finite (or a lazy row exceeded the term budget)."""


class NonPositiveScale(PerronChainError):
    """A column scaling factor is not strictly positive."""


class HorizonOverflow(PerronChainError):
    """Intermediate power values left the representable floating-point range."""


class NoConvergence(PerronChainError):
    """An iteration exhausted its budget before reaching the tolerance."""


class LadderNotMonotone(PerronChainError):
    """Truncation-ladder estimates increased beyond tolerance with radius."""


class StateBudgetExhausted(PerronChainError):
    """A lazy source materialized more states than the configured budget."""


class ShiftInadmissible(PerronChainError):
    """A diagonal shift leaves negative entries in the shifted matrix."""


class LemmaViolated(PerronChainError):
    """A quantity exceeded a bound that holds in exact arithmetic."""


class AllTruncated(PerronChainError):
    """Every sampled excursion hit the horizon cap; no estimate exists."""


# CLI exit codes per failure class.
EXIT_OK = 0
EXIT_PARSE = 2
EXIT_HYPOTHESES = 3
EXIT_NUMERICAL = 4

_PARSE_ERRORS = (ParseError, DomainError, NegativeOffDiagonal)
_NUMERICAL_ERRORS = (
    NonFiniteRowSum,
    NonPositiveScale,
    HorizonOverflow,
    NoConvergence,
    LadderNotMonotone,
    StateBudgetExhausted,
    ShiftInadmissible,
    LemmaViolated,
    AllTruncated,
)


def exit_code_for(exc: BaseException) -> int:
    """Map an exception to the CLI exit code for its failure class."""
    if isinstance(exc, _PARSE_ERRORS):
        return EXIT_PARSE
    if isinstance(exc, HypothesesUnmet):
        return EXIT_HYPOTHESES
    if isinstance(exc, _NUMERICAL_ERRORS):
        return EXIT_NUMERICAL
    return 1
