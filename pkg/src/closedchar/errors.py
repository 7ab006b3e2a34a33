"""Exception hierarchy shared by every stage of the pipeline."""


class ClosedCharError(Exception):
    """Base class; the CLI maps any subclass to a stage failure."""


class SymplecticViolation(ClosedCharError):
    pass


class SpectralAmbiguity(ClosedCharError):
    pass


class DecompositionAmbiguity(ClosedCharError):
    pass


class NonConvergence(ClosedCharError):
    """Adaptive refinement of an index computation did not settle.

    ``interval`` holds the (t_left, t_right) span that could not be resolved,
    when one is known.
    """

    def __init__(self, message, interval=None):
        super().__init__(message)
        self.interval = interval


class SlopeUnstable(ClosedCharError):
    pass


class GapTooSmall(ClosedCharError):
    pass


class OriginSingularity(ClosedCharError):
    pass


class StepFailure(ClosedCharError):
    pass


class EnergyDrift(ClosedCharError):
    pass


class SymmetryAmbiguous(ClosedCharError):
    pass


class DegenerateRadii(ClosedCharError):
    pass


class DualGaugeNonConvergence(ClosedCharError):
    pass


class NoConvergence(ClosedCharError):
    pass


class PSViolationSuspected(ClosedCharError):
    pass


class MorseUnstable(ClosedCharError):
    pass


class InvariantViolation(ClosedCharError):
    """An orbit summary failed one of the inequalities it must satisfy.

    ``tag`` names the inequality (e.g. ``"i1>=n"``) and ``label`` the orbit.
    """

    def __init__(self, message, tag=None, label=None):
        super().__init__(message)
        self.tag = tag
        self.label = label


class NoTupleFound(ClosedCharError):
    def __init__(self, message, diagnostics=None):
        super().__init__(message)
        self.diagnostics = diagnostics or {}


class LedgerFailure(ClosedCharError):
    def __init__(self, message, line=None):
        super().__init__(message)
        self.line = line


class AssignmentInfeasible(ClosedCharError):
    pass


class ConfigError(ClosedCharError):
    pass
