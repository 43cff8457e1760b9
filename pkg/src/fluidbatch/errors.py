"""Exception hierarchy shared across the toolkit."""


class FluidBatchError(Exception):
    """Base class for all toolkit errors."""


class InvalidArgumentError(FluidBatchError):
    """An argument violates an operation's precondition."""


class InvalidProfileError(FluidBatchError):
    """Exit profile is malformed (rates do not form a distribution, bad indices)."""


class InvalidDescriptorError(FluidBatchError):
    """Network descriptor is dimensionally inconsistent."""


class InvalidPolicyError(FluidBatchError):
    """Batching policy is out of range for the given batch size."""


class UnsupportedStackingError(FluidBatchError):
    """Requested PE stacking factor cannot be applied to this design."""


class PolicyLookupError(FluidBatchError):
    """FBCB or latency-LUT lookup with out-of-range indices."""


class NoFeasibleDesignError(FluidBatchError):
    """Design-space exploration found no candidate satisfying the budgets."""


class ConfigurationError(FluidBatchError):
    """Simulation or experiment inputs are mutually inconsistent."""


class EmptyLogError(FluidBatchError):
    """Metrics requested over an event log with no completions."""
