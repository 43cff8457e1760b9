"""Reference serving policies: SERIAL, adaptive batching, LazyBatching.

SERIAL runs one sample at a time.  AdaptB dispatches a full batch of B_max
when available, otherwise a partial batch once the oldest queued sample has
waited T_timeout; batching is model-level (no preemption, the batch only
shrinks as samples exit early).  LazyBatching preempts at layer granularity,
estimating batched latency coarsely as batch size times single-sample
latency, which overestimates the preemption overhead; it is re-implemented
here from its published characterisation, not from the original source.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

import numpy as np

from .errors import InvalidArgumentError
from .npu import LayerPolicy, NpuDesign, policy_latency
from .scheduler import BatchState, PreemptionDecision, SloConfig, compute_slack
from .workload import LayerKind, ModelSpec

from .dse import fc_only_layer_latency  # conv per-sample, FC batched


class BatchingMode(Enum):
    FC_ONLY = "fc_only"
    R_UNIFORM = "r_uniform"


@dataclass(frozen=True)
class AdaptBConfig:
    """Adaptive batching strategy <B_max, T_timeout>."""

    b_max: int
    t_timeout: float  # seconds
    batching_mode: BatchingMode = BatchingMode.R_UNIFORM

    def __post_init__(self):
        if self.t_timeout < 0:
            raise InvalidArgumentError(f"T_timeout must be >= 0, got {self.t_timeout}")
        if self.b_max < 1:
            raise InvalidArgumentError(f"B_max must be >= 1, got {self.b_max}")


def adaptb_timeouts(t_slo: float) -> dict[str, float]:
    """The S/M/L batch-forming windows: 5%, 45% and 95% of the latency SLO."""
    return {"s": 0.05 * t_slo, "m": 0.45 * t_slo, "l": 0.95 * t_slo}


def adaptb_dispatch(queue_arrivals: list, cfg: AdaptBConfig, now):
    """Dispatch decision over the queued arrival times (oldest first).

    Returns ("dispatch", n) to issue the first n queued samples,
    ("wait_until", t) to re-evaluate at time t, or ("none", 0) on an empty
    queue.  Full batches go immediately; partial batches wait out the
    timeout window measured from the oldest sample's arrival.
    """
    n_q = len(queue_arrivals)
    if n_q == 0:
        return ("none", 0)
    if n_q >= cfg.b_max:
        return ("dispatch", cfg.b_max)
    deadline = queue_arrivals[0] + cfg.t_timeout
    if now >= deadline - 1e-12:  # sub-ns tolerance for float timestamps
        return ("dispatch", n_q)
    return ("wait_until", deadline)


def fc_only_latency(design: NpuDesign, model: ModelSpec, B: int) -> float:
    """Full-network latency under FC-only batching at batch size B."""
    if B < 1:
        raise InvalidArgumentError(f"batch size must be >= 1, got {B}")
    return sum(fc_only_layer_latency(design, layer, B) for layer in model.layers)


def lazy_segment_estimate(single_sample_latency, B: int):
    """LazyBatching's coarse estimator: batch size times single-sample time."""
    return B * single_sample_latency


class LazyScheduler:
    """Layer-granularity preemption with the coarse latency estimator.

    Evaluated at every layer boundary of a non-catch-up batch.  Preemption is
    not considered once the batch is full.  The slack computation matches the
    exit-aware scheduler; only the overhead estimate differs: both the
    catch-up and the merged-run terms use batch-size-times-single-sample
    latency over the respective layer ranges.
    """

    def __init__(self, single_prefix, slo: SloConfig, t_slo_units, check_cost=0):
        # single_prefix[l] = cumulative single-sample latency of layers < l
        self.prefix1 = np.asarray(single_prefix)
        self.n_layers = len(self.prefix1) - 1
        self.b_max = slo.b_max
        self.t_slo = t_slo_units
        self.check_cost = check_cost  # optional per-invocation time cost
        self.decisions_evaluated = 0

    def decide(self, batch: BatchState, layer_idx: int, queue_len: int, now) -> PreemptionDecision | None:
        b_act = batch.B_act
        if b_act == 0 or b_act >= self.b_max or queue_len == 0:
            return None
        if layer_idx >= self.n_layers - 1:
            return None  # nothing left to merge for
        self.decisions_evaluated += 1
        b_incr = min(queue_len, self.b_max - b_act)
        b_merged = b_act + b_incr
        head = self.prefix1[layer_idx + 1]  # single-sample time through layer_idx
        tail = self.prefix1[self.n_layers] - self.prefix1[layer_idx + 1]
        t_overhead = lazy_segment_estimate(head, b_incr) + lazy_segment_estimate(tail, b_merged)
        slack = compute_slack(batch.oldest(), now, self.t_slo)
        return PreemptionDecision(
            preempt=bool(t_overhead < slack),
            B_incr=b_incr,
            T_overhead=t_overhead,
            T_slack=slack,
        )
