"""Exception types raised across the package."""


class HandforceError(Exception):
    """Base class for all package errors."""


class JointLimitError(HandforceError, ValueError):
    """A joint value lies outside its limits."""

    def __init__(self, index, value, lower, upper):
        self.index = index
        self.value = value
        super().__init__(f"joint {index} = {value:.6g} rad outside [{lower:.6g}, {upper:.6g}]")


class SingularityError(HandforceError):
    """A matrix that must be invertible is (numerically) singular."""


class RigidityError(HandforceError):
    """The contact framework is not infinitesimally rigid."""


class GraspDegeneracyError(HandforceError):
    """The grasp matrix does not have rank 6."""


class RankDeficiencyError(HandforceError):
    """An equality-constrained QP has an inconsistent or singular KKT system."""


class NumericError(HandforceError):
    """A callback returned a non-finite value."""


class InfeasiblePlanError(HandforceError):
    """No internal force satisfies the friction and normal-force constraints.

    ``violations`` maps constraint group names to the offending finger indices.
    """

    def __init__(self, message, violations=None):
        self.violations = dict(violations or {})
        super().__init__(message)


class UnreachableError(HandforceError):
    """Fingertip targets lie outside the kinematic workspace."""

    def __init__(self, message, violation=float("nan")):
        self.violation = violation
        super().__init__(message)


class PlantError(HandforceError):
    """The quasi-static equilibrium iteration failed to converge."""

    def __init__(self, message, residual=float("nan")):
        self.residual = residual
        super().__init__(message)


class ConfigError(HandforceError, ValueError):
    """Malformed configuration. ``field`` is the dotted path of the bad entry."""

    def __init__(self, message, field=None, line=None):
        self.field = field
        self.line = line
        where = []
        if field:
            where.append(f"field {field!r}")
        if line is not None:
            where.append(f"line {line}")
        prefix = f"{', '.join(where)}: " if where else ""
        super().__init__(prefix + message)
