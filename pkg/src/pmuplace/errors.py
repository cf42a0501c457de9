"""Exception hierarchy shared across the package.

The CLI maps these onto exit codes: validation problems exit 2, numerical
failures exit 3, guard violations exit 4.
"""


class PmuPlaceError(Exception):
    """Base class for all package errors."""


class ValidationError(PmuPlaceError):
    """Bad input data: malformed files, violated case invariants."""

    exit_code = 2


class CaseParseError(ValidationError):
    """Case file could not be parsed; message carries field/line context."""


class CaseValidationError(ValidationError):
    """Parsed case violates a structural invariant."""


class SingularBranchError(ValidationError):
    """Branch with zero series impedance (r = x = 0)."""


class NumericalError(PmuPlaceError):
    """A numerical procedure failed (singular matrix, blow-up, divergence)."""

    exit_code = 3


class SingularJacobianError(NumericalError):
    """Power-flow Jacobian became singular."""


class SingularEliminationError(NumericalError):
    """Kron reduction hit a singular eliminated block."""

    def __init__(self, nodes):
        self.nodes = tuple(nodes)
        super().__init__(
            f"eliminated block is singular; offending node set {self.nodes}"
        )


class PowerFlowNotConvergedError(NumericalError):
    """An operation required a converged power flow but did not get one."""


class IntegrationBlowupError(NumericalError):
    """Fixed-step integration produced a non-finite state."""

    def __init__(self, step, row=0, context=""):
        self.step = step
        self.row = row
        msg = f"non-finite state at integration step {step} (batch row {row})"
        if context:
            msg += f": {context}"
        super().__init__(msg)


class GuardError(PmuPlaceError):
    """A precondition guard rejected the request."""

    exit_code = 4


class CombinatorialGuardError(GuardError):
    """Exhaustive enumeration would be too large; use the mads solver."""


class FaultLocationError(GuardError):
    """Fault requested on a branch adjacent to a generator terminal bus."""
