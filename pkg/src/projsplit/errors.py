"""Exception hierarchy shared by every module."""


class ConfigError(ValueError):
    """Invalid problem data or solver parameters."""


class SolverFailure(RuntimeError):
    """Base class for typed failures raised while iterating.

    ``block`` and ``iteration`` are filled in by the engine when the failure
    happens inside an outer iteration.
    """

    block = None
    iteration = None

    def annotate(self, block=None, iteration=None):
        if block is not None and self.block is None:
            self.block = block
        if iteration is not None and self.iteration is None:
            self.iteration = iteration
        return self

    def __str__(self):
        msg = super().__str__()
        where = []
        if self.block is not None:
            where.append(f"block {self.block}")
        if self.iteration is not None:
            where.append(f"iteration {self.iteration}")
        return f"{msg} [{', '.join(where)}]" if where else msg


class InnerSolveFailure(SolverFailure):
    """Inner resolvent solver ran out of iterations."""

    def __init__(self, message, best=None, residual=float("inf")):
        super().__init__(message)
        self.best = best
        self.residual = residual


class BisectionFailure(SolverFailure):
    """Bracketing/bisection exhausted its evaluation budget."""

    def __init__(self, message, bracket=None):
        super().__init__(message)
        self.bracket = bracket


class ZeroResidual(SolverFailure):
    """psi vanished at the trial parameter, so the point is a zero of T."""


class InternalInconsistency(SolverFailure):
    """A state the theory rules out (e.g. phi > 0 with pi == 0)."""


class InvariantViolation(SolverFailure):
    """A runtime check of one of the convergence inequalities failed."""

    def __init__(self, check, slack, detail=""):
        self.check = check
        self.slack = slack
        super().__init__(f"{check} violated (slack {slack:.3e}){': ' + detail if detail else ''}")


class OracleFailure(RuntimeError):
    """The independent reference solver could not produce a certified solution."""
