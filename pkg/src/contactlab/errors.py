"""Exception types shared across the laboratory modules."""

from __future__ import annotations


class ContactLabError(Exception):
    """Base class for all laboratory errors."""


class UnknownModelError(ContactLabError):
    """Requested model name is not one of the built-in charts."""


class ResidualTooLarge(ContactLabError):
    """The stacked defining system for a Hamiltonian vector field did not
    close to tolerance; signals a broken model or differential."""

    def __init__(self, residual: float, tol: float):
        self.residual = residual
        self.tol = tol
        super().__init__(f"vector-field residual {residual:.3e} exceeds {tol:.3e}")


class StepFailure(ContactLabError):
    """Adaptive stepping could not meet the requested tolerance."""


class DomainEscape(ContactLabError):
    """A trajectory on a boxed non-compact model left the declared box."""


class SolverBudgetExceeded(ContactLabError):
    """Fixed-point search exhausted its evaluation budget."""


class HypothesisViolated(ContactLabError):
    """A verified precondition of a statement-level check failed.

    The offending hypothesis is named in ``hypothesis_name``.
    """

    def __init__(self, hypothesis_name: str, detail: str = ""):
        self.hypothesis_name = hypothesis_name
        msg = f"hypothesis violated: {hypothesis_name}"
        if detail:
            msg += f" ({detail})"
        super().__init__(msg)


class NotConverged(ContactLabError):
    """Homogenization tail did not settle; partial data is attached."""

    def __init__(self, message: str, partial=None):
        self.partial = partial
        super().__init__(message)


class WitnessInvalid(ContactLabError):
    """A supplied displacement witness failed its displacement check."""


class InvalidInvolutiveMap(ContactLabError):
    """Component brackets of a candidate involutive map do not vanish."""


class InfeasibleSetSampling(ContactLabError):
    """A set indicator claims points exist but the sample lattice found none."""


class OptimizerBudget(ContactLabError):
    """Constrained minimization ran out of budget before certification."""


class EmptyFibreSample(ContactLabError):
    """An image point has no lattice preimage within tolerance."""


class CoverGap(ContactLabError):
    """A claimed cover leaves part of the sampled image uncovered."""


class ConfigError(ContactLabError):
    """Experiment configuration failed to parse or validate."""
