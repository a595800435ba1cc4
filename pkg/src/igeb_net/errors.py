"""Exception hierarchy shared by all igeb_net modules."""


class IgebError(Exception):
    pass


class NotSkew(IgebError, ValueError):
    pass


class NotSymmetric(IgebError, ValueError):
    pass


class NotSPD(IgebError, ValueError):
    pass


class OutOfDomain(IgebError, ValueError):
    pass


class NotRotation(IgebError, ValueError):
    pass


class EigenvalueCrossing(IgebError, ValueError):
    pass


class GridMismatch(IgebError, ValueError):
    pass


class TopologyError(IgebError, ValueError):
    pass


class NotATree(TopologyError):
    pass


class BadOrientation(TopologyError):
    pass


class Node0NotSimple(TopologyError):
    pass


class SingularCoupling(IgebError, RuntimeError):
    pass


class SingularSystem(IgebError, RuntimeError):
    pass


class CFLViolation(IgebError, ValueError):
    pass


class NonFiniteState(IgebError, RuntimeError):
    pass


class NonPositiveValues(IgebError, ValueError):
    pass


class BadEndpoints(IgebError, ValueError):
    pass


class InfeasibleWeights(IgebError, ValueError):
    pass


class InvalidCertificate(IgebError, ValueError):
    pass


class ParseError(IgebError, ValueError):
    def __init__(self, message, line=None, col=None):
        super().__init__(message)
        self.line = line
        self.col = col


class ValidationError(IgebError, ValueError):
    """Carries every problem found while validating a scenario."""

    def __init__(self, problems):
        if isinstance(problems, str):
            problems = [problems]
        self.problems = list(problems)
        super().__init__("; ".join(self.problems))
