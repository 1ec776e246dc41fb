"""Exception hierarchy for divlab.

Every error raised by the library derives from :class:`DivLabError`, so
callers can catch one base class. Subclasses are semantic: they name the
violated contract, not the call site.
"""

from __future__ import annotations


class DivLabError(Exception):
    """Base error for the package."""


class LengthMismatchError(DivLabError):
    """Paired sequences (atoms/weights, atoms/values) have unequal lengths."""


class NegativeWeightError(DivLabError):
    """A probability weight is negative beyond the clamping threshold."""


class TotalMassError(DivLabError):
    """Weights do not sum to 1 within the input tolerance."""


class ZeroTotalMassError(TotalMassError):
    """Weights sum to (numerically) zero; no renormalization is possible."""


class DuplicateAtomError(DivLabError):
    """Atom labels of a distribution are not distinct."""


class UnmappedAtomError(DivLabError):
    """A pushforward map is undefined on some atom of the source space."""


class SpaceMismatchError(DivLabError):
    """Two objects that must share an atom set do not."""


class NotAbsolutelyContinuousError(DivLabError):
    """nu puts mass where mu does not; no density d(nu)/d(mu) exists."""


class InvalidPartitionError(DivLabError):
    """Blocks are not disjoint or do not cover the atom set."""


class NegativeArgumentError(DivLabError):
    """Convex conjugates are evaluated on the nonnegative half-line only."""


class InvalidLossError(DivLabError):
    """A loss function violates convexity, monotonicity, or l(0)=1 < l(x>0)."""


class InvalidUtilityError(DivLabError):
    """A utility violates convexity, monotonicity, or phi*(1)=0."""


class BracketFailureError(DivLabError):
    """Root bracketing failed; the loss function violates its contract."""


class UnboundedObjectiveError(DivLabError):
    """A minimization kept escaping through the bracket after expansions."""


class InvalidDensityError(DivLabError):
    """A coherent-family density is negative or does not integrate to one."""


class UnsupportedFamilyError(DivLabError):
    """The requested operation is not defined for this family."""


class PreconditionViolatedError(DivLabError):
    """A probe was called on inputs outside its stated precondition."""


class ConfigParseError(DivLabError):
    """A suite or spec configuration document is malformed."""


class UnknownFamilyError(ConfigParseError):
    """A configuration names a family this library does not implement."""


class IoError(DivLabError):
    """A report could not be written to its destination."""
