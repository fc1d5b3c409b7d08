"""Exception types raised by the solver engine."""


class CapclustError(Exception):
    """Base class for all package errors."""


class GeometryError(CapclustError, ValueError):
    pass


class CoincidentSitesError(GeometryError):
    def __init__(self, i, j):
        super().__init__(f"sites {i} and {j} coincide")
        self.pair = (i, j)


class DisconnectedDiagramError(CapclustError):
    """The gauge-reduced Hessian is singular (empty cell or split adjacency)."""


class JacobiNotConverged(CapclustError):
    def __init__(self, x, residual_norm, sweeps):
        super().__init__(f"Jacobi iteration did not converge in {sweeps} sweeps "
                         f"(residual {residual_norm:.3e})")
        self.x = x
        self.residual_norm = residual_norm
        self.sweeps = sweeps


class StepFailure(CapclustError):
    """No damped step length kept every cell nonempty without raising the residual."""


class OracleError(CapclustError, ValueError):
    pass


class NonIntegralError(OracleError):
    def __init__(self, what, index, value):
        super().__init__(f"{what}[{index}] = {value!r} is not integral after scaling")
        self.what = what
        self.index = index
        self.value = value


class InfeasibleError(OracleError):
    pass


class InstanceTooLarge(OracleError):
    pass


class SnapshotError(CapclustError):
    """A solve inside a kinetic run failed; ``index`` is the snapshot number."""

    def __init__(self, index, cause):
        super().__init__(f"snapshot {index}: {cause}")
        self.index = index
        self.cause = cause


class ScenarioError(CapclustError, ValueError):
    """A scenario document is malformed; ``path`` names the offending field."""

    def __init__(self, path, message):
        super().__init__(f"{path}: {message}" if path else message)
        self.path = path
