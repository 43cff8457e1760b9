"""Exit-aware preemptive scheduling: slack accounting and the preemption rule.

An active batch can be preempted only at intermediate exit points.  When
samples exit there, the scheduler may halt the remaining batch, run freshly
queued samples from the model input up to the same exit, and merge the two
into a larger batch.  The decision compares the latency cost of doing so
(catch-up plus merged-run time, from the exit-level latency LUT) against the
SLO slack left for the oldest sample in the active batch.

The decision logic here is pure; the discrete-event mechanics that act on the
decisions live in the simulator module.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .errors import InvalidArgumentError
from .npu import LatencyLut
from .workload import ModelSpec


@dataclass
class Request:
    """One inference request through its lifecycle.  Times are whatever unit
    the caller uses consistently; the simulator uses integer nanoseconds."""

    sample_id: int
    arrival_time: int
    assigned_exit: int
    dispatch_time: int | None = None
    completion_time: int | None = None


@dataclass
class BatchState:
    """The scheduler's bookkeeping for one active batch."""

    batch_id: int
    members: list[Request] = field(default_factory=list)
    position: int = 0  # next checkpoint cursor; strictly increases

    @property
    def B_act(self) -> int:
        return len(self.members)

    def oldest(self) -> Request:
        return min(self.members, key=lambda r: (r.arrival_time, r.sample_id))


@dataclass(frozen=True)
class SloConfig:
    """Serving policy parameters: tail-latency objective and max batch size."""

    t_slo: float  # seconds
    b_max: int

    def __post_init__(self):
        if self.t_slo <= 0:
            raise InvalidArgumentError(f"T_SLO must be > 0, got {self.t_slo}")
        if self.b_max < 1:
            raise InvalidArgumentError(f"B_max must be >= 1, got {self.b_max}")


@dataclass(frozen=True)
class PreemptionDecision:
    preempt: bool
    B_incr: int
    T_overhead: float
    T_slack: float


def compute_slack(oldest: Request, now, t_slo):
    """Remaining time before the oldest active sample hits the SLO.

    slack = T_SLO - (T_wait + T_exec_so_far) with T_wait the queueing delay
    (dispatch - arrival) and T_exec_so_far = now - dispatch.  May be negative.
    """
    t_wait = oldest.dispatch_time - oldest.arrival_time
    t_exec = now - oldest.dispatch_time
    return t_slo - (t_wait + t_exec)


def preemption_criterion(lut: LatencyLut, i: int, B_incr: int, B_merged: int, slack) -> PreemptionDecision:
    """SLO-aware preemption rule at intermediate exit i.

    The overhead of preempting is the time for the new batch to catch up
    (input to exit i at B_incr) plus the merged batch finishing the network
    (exit i+1 to the end at B_merged).  Both terms assume no further early
    exits, so the overhead is an upper bound on the true cost.  Preempt iff
    it fits within the slack.
    """
    t_overhead = lut.from_start(i, B_incr) + lut.to_end(i + 1, B_merged)
    return PreemptionDecision(
        preempt=bool(t_overhead < slack),
        B_incr=B_incr,
        T_overhead=t_overhead,
        T_slack=slack,
    )


def preemptible_points(model: ModelSpec) -> tuple[int, ...]:
    """Exit indices where preemption may occur: every exit except the final."""
    return model.exits.intermediate_indices


def invocations_per_inference_exit_level(model: ModelSpec) -> int:
    """Scheduler invocations per inference with exit-level preemption checks."""
    return len(preemptible_points(model))


def invocations_per_inference_layerwise(model: ModelSpec) -> int:
    """Scheduler invocations per inference when every layer is preemptible."""
    return model.n_layers


class ExitAwareScheduler:
    """Algorithm-level decision hook for the fluid-batching serving policy.

    Called by the event loop whenever a non-catch-up batch stands at an
    intermediate exit (including again after each merge, so several backfills
    can happen at one exit while room and slack remain).
    """

    def __init__(self, lut: LatencyLut, slo: SloConfig, t_slo_units):
        self.lut = lut
        self.b_max = slo.b_max
        self.t_slo = t_slo_units  # in the LUT's time unit
        self.decisions_evaluated = 0

    def decide(self, batch: BatchState, exit_idx: int, queue_len: int, now) -> PreemptionDecision | None:
        """Returns a decision, or None when the Algorithm-1 loop does not run
        (no room in the batch or nothing queued)."""
        b_rem = batch.B_act
        if b_rem == 0 or b_rem >= self.b_max or queue_len == 0:
            return None
        self.decisions_evaluated += 1
        b_slack = self.b_max - b_rem
        b_incr = min(queue_len, b_slack)
        slack = compute_slack(batch.oldest(), now, self.t_slo)
        # B_merged assumes no catch-up attrition: the conservative upper bound.
        return preemption_criterion(self.lut, exit_idx, b_incr, b_rem + b_incr, slack)
