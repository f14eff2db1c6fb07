'''this module defines custom exceptions for this package'''


class RSMPCException(Exception):
    '''Base class for all the exceptions raised by rsmpc'''

    def __init__(self, message):
        super().__init__(message)


class EmptyPolytope(RSMPCException):
    '''An exception for operations that need a nonempty polytope'''

    def __init__(self, message):
        super().__init__(message)


class UnboundedDirection(RSMPCException):
    '''An exception for support queries along an unbounded direction'''

    def __init__(self, message):
        super().__init__(message)


class DimensionTooLarge(RSMPCException):
    '''An exception for vertex enumeration beyond desk-scale dimension'''

    def __init__(self, message):
        super().__init__(message)


class NotQuadraticallyStable(RSMPCException):
    '''An exception for gains without a common Lyapunov certificate'''

    def __init__(self, message):
        super().__init__(message)


class SynthesisInfeasible(RSMPCException):
    '''An exception for infeasible gain synthesis LMIs'''

    def __init__(self, message):
        super().__init__(message)


class TerminalWeightInfeasible(RSMPCException):
    '''An exception for infeasible terminal weight LMIs'''

    def __init__(self, message):
        super().__init__(message)


class SolverFailure(RSMPCException):
    '''An exception for conic solves that did not return an optimal point'''

    def __init__(self, message, diagnostics: dict | None = None):
        super().__init__(message)
        self.diagnostics = diagnostics if diagnostics is not None else {}


class NumericalFailure(SolverFailure):
    '''An exception for solver breakdowns and residual check failures'''


class InfeasibleProgram(SolverFailure):
    '''An exception for conic programs reported infeasible by the solver'''


class CorrelationBoundViolated(RSMPCException):
    '''An exception for inner bound problems whose cross term is not positive definite'''

    def __init__(self, message):
        super().__init__(message)


class InvalidProbability(RSMPCException):
    '''An exception for probability levels outside (0,1)'''

    def __init__(self, message):
        super().__init__(message)


class TerminalSetEmpty(RSMPCException):
    '''An exception for terminal set computations that end with an empty set'''

    def __init__(self, message):
        super().__init__(message)


class EstimateOutsideTheta(RSMPCException):
    '''An exception for parameter estimates outside the uncertainty set'''

    def __init__(self, message):
        super().__init__(message)


class MissingPrevSolution(RSMPCException):
    '''An exception for MPC steps after the first one without a previous solution'''

    def __init__(self, message):
        super().__init__(message)


class ProblemInfeasible(RSMPCException):
    '''An exception for infeasible MPC problems'''

    def __init__(self, message):
        super().__init__(message)


class SeedMismatch(RSMPCException):
    '''An exception for trace sets that are not paired by seed'''

    def __init__(self, message):
        super().__init__(message)


class ConfigError(RSMPCException):
    '''An exception for invalid experiment configurations'''

    def __init__(self, message):
        super().__init__(message)


class InvalidSolverException(RSMPCException):
    """An exception for invalid solvers"""

    def __init__(self, message):
        super().__init__(message)
