"""Exception types shared by the solvers and the command line."""


class HypothesisError(ValueError):
    """A structural hypothesis or sufficient condition does not hold."""


class SolverError(RuntimeError):
    """An iterative method failed to converge or produced an invalid result."""


class TrivialSolutionError(SolverError):
    """A descent method converged to u ≡ 0; a different start may succeed."""
