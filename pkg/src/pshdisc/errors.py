"""Exception hierarchy shared by all modules."""


class PshDiscError(Exception):
    """Base class for every error raised by the package."""


class SingularStructure(PshDiscError):
    """``J + J_st`` is numerically singular at some point."""


class NotAlmostComplex(PshDiscError):
    """A matrix field violates ``J^2 = -Id``."""


class SingularFrame(PshDiscError):
    """A conjugating frame ``G(z)`` is not invertible."""


class TruncationOverflow(PshDiscError):
    """An operation would produce monomials above the truncation degree."""


class OutsideDisc(PshDiscError):
    """A disc field was evaluated outside the closed unit disc."""


class NoConvergence(PshDiscError):
    """A fixed-point or continuation solve failed to converge.

    Attributes
    ----------
    t : float or None
        Continuation parameter at which the failure happened, if any.
    history : list of float
        Residual history of the failing solve.
    """

    def __init__(self, message, t=None, history=None):
        super().__init__(message)
        self.t = t
        self.history = list(history or [])


class UnderResolved(NoConvergence):
    """The fixed point converged but the truncated disc is not J-holomorphic."""


class BoundViolation(PshDiscError):
    """A disc moved further than ``C0 |V|`` allows (with slack)."""


class NotAContraction(PshDiscError):
    """The measured Lipschitz constant of ``Psi - Id`` is not below one."""


class OutsideDomain(PshDiscError):
    """A sample point left the domain of a scalar field."""


class NoFeasibleDisc(PshDiscError):
    """No admissible disc could be constructed (configuration error)."""


class CertificationFailure(PshDiscError):
    """No exhaustion parameters in the search set could be certified."""


class EmptyCollar(PshDiscError):
    """``rho - k`` never dominates near the boundary at grid resolution."""


class SandwichFailure(PshDiscError):
    """No smoothing width satisfies the two-sided sandwich bound."""


class PshFailure(PshDiscError):
    """A smoothed field failed the sub-mean-value check."""


class StageError(PshDiscError):
    """Wraps an error raised inside one stage of the approximation pipeline."""

    def __init__(self, stage, k, cause):
        super().__init__(f"stage {stage!r} failed at k={k}: {cause}")
        self.stage = stage
        self.k = k
        self.cause = cause


class ScenarioError(PshDiscError):
    """A scenario file could not be turned into a runnable scenario.

    ``line`` is the 1-based line of the offending entry when known and
    ``field`` its ``section.key`` name.
    """

    def __init__(self, message, line=None, field=None):
        where = ", ".join(p for p in (f"line {line}" if line else "", field or "") if p)
        super().__init__(f"{where}: {message}" if where else message)
        self.line = line
        self.field = field


class ParseError(ScenarioError):
    """Malformed scenario text or value."""


class UnknownName(ScenarioError):
    """A scenario references a name that does not resolve."""


class RangeError(ScenarioError):
    """A scenario value lies outside its admissible range."""
