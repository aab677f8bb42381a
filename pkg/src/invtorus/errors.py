"""Exception hierarchy. Every error carries a machine-readable ``code`` used by the CLI."""


class InvTorusError(Exception):
    code = "error"


class NonFiniteError(InvTorusError, ValueError):
    code = "non_finite"


class GridError(InvTorusError, ValueError):
    code = "grid"


class CurveError(InvTorusError, ValueError):
    code = "curve"


class NotClosedError(InvTorusError, ValueError):
    code = "not_closed"


class ConvergenceError(InvTorusError, RuntimeError):
    code = "no_convergence"

    def __init__(self, message, residual=None, iterations=None):
        super().__init__(message)
        self.residual = residual
        self.iterations = iterations


class ResonanceError(InvTorusError, ArithmeticError):
    code = "resonance"

    def __init__(self, message, witness):
        super().__init__(message)
        self.witness = tuple(int(k) for k in witness)


class ZeroFieldError(InvTorusError, ValueError):
    code = "zero_field"


class DegenerateTargetError(InvTorusError, ValueError):
    code = "degenerate_target"


class GeneratorError(InvTorusError, ValueError):
    code = "not_unimodular"


class DegenerateCoframeError(InvTorusError, ValueError):
    code = "degenerate_coframe"


class DependentClassesError(InvTorusError, ValueError):
    code = "dependent_classes"


class StepSizeError(InvTorusError, ValueError):
    code = "step_too_large"


class NotTangentError(InvTorusError, ValueError):
    code = "not_tangent"


class CriticalPointError(InvTorusError, ValueError):
    code = "critical_point"


class RankDeficiencyError(InvTorusError, ValueError):
    code = "rank_deficient"


class OffSurfaceError(InvTorusError, ValueError):
    code = "off_surface"


class ConfigError(InvTorusError, ValueError):
    code = "config"


class NotPositiveDefiniteError(InvTorusError, ValueError):
    code = "not_spd"
