"""Exception hierarchy.

Every error carries a short machine-readable ``code`` so the CLI can
serialize failures without string matching.
"""


class ZeroMultError(Exception):
    code = "error"

    def __init__(self, message="", **details):
        super().__init__(message)
        self.details = details

    def to_dict(self):
        out = {"code": self.code, "message": str(self)}
        for key, value in self.details.items():
            if isinstance(value, complex):
                value = [value.real, value.imag]
            out[key] = value
        return out


class ValidationError(ZeroMultError):
    """Bad input: configuration, ranges, preconditions."""

    code = "validation"


class NumericalError(ZeroMultError):
    """A computation could not deliver a trustworthy answer."""

    code = "numerical"


# series_core
class PoleAtOne(NumericalError):
    code = "pole_at_one"


class PrecisionUnreachable(NumericalError):
    code = "precision_unreachable"


class OutsideConvergence(ValidationError):
    code = "outside_convergence"


class PoleInDisc(NumericalError):
    code = "pole_in_disc"


# zero_finder
class ZeroOnContour(NumericalError):
    code = "zero_on_contour"


class PhaseStepTooLarge(NumericalError):
    code = "phase_step_too_large"


class UnresolvedCluster(NumericalError):
    code = "unresolved_cluster"

    def __init__(self, message="", records=(), **details):
        super().__init__(message, **details)
        self.records = list(records)

    def to_dict(self):
        out = super().to_dict()
        out["clusters"] = [r.to_dict() for r in self.records]
        return out


# curve_tracer
class DegenerateSeed(NumericalError):
    code = "degenerate_seed"


class StepCollapse(NumericalError):
    code = "step_collapse"


class InsufficientArc(NumericalError):
    code = "insufficient_arc"


class IncompleteBoundary(NumericalError):
    code = "incomplete_boundary"


class TangentUndefined(NumericalError):
    code = "tangent_undefined"


# conformal_verify
class ForeignZeroInPatch(NumericalError):
    code = "foreign_zero_in_patch"


class BranchAssemblyFailed(NumericalError):
    code = "branch_assembly_failed"


class InverseNotFound(NumericalError):
    code = "inverse_not_found"


class NotInjective(NumericalError):
    code = "not_injective"


class RegionUnresolved(NumericalError):
    code = "region_unresolved"


class FactorVanishes(NumericalError):
    code = "factor_vanishes"


# configuration
class ConfigInvalid(ValidationError):
    code = "config_invalid"


class ParseError(ConfigInvalid):
    code = "parse_error"


class MultiplicativityViolation(ConfigInvalid):
    code = "multiplicativity_violation"


class AdditivityViolation(ConfigInvalid):
    code = "additivity_violation"
