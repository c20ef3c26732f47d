"""Exception types shared across the toolkit."""


class CrekitError(Exception):
    """Base class for all toolkit errors."""


class DimensionError(CrekitError):
    """Shapes of the supplied arrays do not agree."""


class CapacityError(CrekitError):
    """An enumeration would exceed its configured cap."""


class EmptySetError(CrekitError):
    """An operation required a nonempty polyhedron."""


class LcpSolveError(CrekitError):
    """Numerical breakdown inside a complementary pivot solve.

    Carries the pivot history (entering/leaving variable per pivot) for
    post-mortem inspection.
    """

    def __init__(self, message, history=None):
        super().__init__(message)
        self.history = history


class SingularBasisError(CrekitError):
    """The basis matrix of a complementary basis is singular."""


class NotComplementaryError(CrekitError):
    """A point does not satisfy componentwise complementarity."""


class DegenerateProblemError(CrekitError):
    """The classic KKT active-set path hit a degenerate configuration.

    Callers should switch to the complementarity-based enumeration in the
    ``degeneracy`` module.
    """

    def __init__(self, message, diagnostics=None):
        super().__init__(message)
        self.diagnostics = diagnostics or {}


class InfeasibleParameterError(CrekitError):
    """The problem is infeasible at the queried parameter.

    ``z0`` holds the ancillary-variable value certifying infeasibility.
    """

    def __init__(self, message, z0=None):
        super().__init__(message)
        self.z0 = z0


class CutLogicError(CrekitError):
    """A feasibility cut was requested for a feasible parameter."""


class CoordinationError(CrekitError):
    """Internal consistency failure in the coordination step."""


class NonConvergedError(CrekitError):
    """Iteration limit reached; carries the accumulated trace."""

    def __init__(self, message, trace=None, result=None):
        super().__init__(message)
        self.trace = trace if trace is not None else []
        self.result = result


class ModelError(CrekitError):
    """A multi-area system violates a structural assumption."""


class CaseParseError(CrekitError):
    """A case file could not be parsed; carries the offending line."""

    def __init__(self, message, line_no=None):
        super().__init__(message)
        self.line_no = line_no
