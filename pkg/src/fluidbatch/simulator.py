"""Deterministic discrete-event engine for NPU serving simulations.

Drives a Poisson arrival trace through a chosen scheduling policy over the
analytical NPU latency model and emits a structured event log plus summary
metrics.  Time is integer nanoseconds internally so that event ordering never
depends on floating-point rounding; identical inputs and seeds produce
byte-identical logs.
"""

from __future__ import annotations

import heapq
import math
from collections import deque
from dataclasses import dataclass, field
from enum import IntEnum
from pathlib import Path

import numpy as np

from .baselines import AdaptBConfig, BatchingMode, LazyScheduler
from .dse import fc_only_layer_latency
from .errors import ConfigurationError, EmptyLogError, InvalidArgumentError
from .npu import (
    Fbcb,
    LatencyLut,
    NpuDesign,
    peak_performance,
    policy_latency,
    uniform_fbcb,
)
from .scheduler import (
    BatchState,
    ExitAwareScheduler,
    PreemptionDecision,
    Request,
    SloConfig,
)
from .workload import ArrivalTrace, ModelSpec

NS_PER_S = 1_000_000_000


def to_ns(seconds: float) -> int:
    return int(round(seconds * NS_PER_S))


class EventKind(IntEnum):
    """Event-queue kinds; the numeric value is the tie-break priority."""

    ARRIVAL = 0
    SEGMENT_DONE = 1
    TIMEOUT_FIRE = 2


@dataclass(frozen=True)
class Event:
    time: int  # ns
    kind: EventKind
    payload: int  # sample id, run id, or timeout generation


@dataclass(frozen=True)
class LogRecord:
    time_ns: int
    kind: str
    batch_id: int
    sample_id: int
    detail: str

    def line(self) -> str:
        return f"{self.time_ns}\t{self.kind}\t{self.batch_id}\t{self.sample_id}\t{self.detail}"


@dataclass
class EventLog:
    """Structured run log: header metadata plus one record per event."""

    records: list[LogRecord]
    meta: dict

    def to_text(self) -> str:
        head = [f"# {k}={self.meta[k]}" for k in sorted(self.meta)]
        return "\n".join(head + [r.line() for r in self.records]) + "\n"

    def write(self, path: str | Path):
        Path(path).write_text(self.to_text())

    def completions(self) -> list[LogRecord]:
        return [r for r in self.records if r.kind == "COMPLETE"]

    def by_kind(self, kind: str) -> list[LogRecord]:
        return [r for r in self.records if r.kind == kind]


def parse_detail(detail: str) -> dict:
    """Split a record's k=v detail string; integer values come back as int."""
    out = {}
    for part in detail.split(";"):
        if not part:
            continue
        k, v = part.split("=")
        try:
            out[k] = int(v)
        except ValueError:
            out[k] = v
    return out


# ---------------------------------------------------------------------------
# NPU runtime: per-layer latency tables in integer nanoseconds
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class NpuRuntime:
    """Pre-tabulated layer latencies for the simulated accelerator.

    lat_ns[l, b-1] is layer l's latency at batch size b under the runtime's
    batching discipline.  All scheduling decisions and all execution charges
    draw from this one table, so the preemption criterion's LUT is exact with
    respect to the simulated hardware.
    """

    model: ModelSpec
    b_max: int
    lat_ns: np.ndarray  # (L, b_max) int64
    peak_ops: float
    design: NpuDesign | None = None
    prefix_ns: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        lat = np.asarray(self.lat_ns, dtype=np.int64)
        if lat.shape != (self.model.n_layers, self.b_max):
            raise ConfigurationError(
                f"latency table shape {lat.shape} does not match "
                f"(L={self.model.n_layers}, B_max={self.b_max})"
            )
        if np.any(lat <= 0):
            raise ConfigurationError("all layer latencies must be positive")
        object.__setattr__(self, "lat_ns", lat)
        prefix = np.zeros((self.model.n_layers + 1, self.b_max), dtype=np.int64)
        np.cumsum(lat, axis=0, out=prefix[1:])
        object.__setattr__(self, "prefix_ns", prefix)

    def span_ns(self, l_first: int, l_last: int, b: int) -> int:
        """Total latency of layers l_first..l_last inclusive at batch b."""
        return int(self.prefix_ns[l_last + 1, b - 1] - self.prefix_ns[l_first, b - 1])

    def exit_lut(self) -> LatencyLut:
        """Exit-segment LUT (integer ns) consistent with execution charges."""
        exits = self.model.exits.exit_layer_indices
        table = np.empty((len(exits), self.b_max), dtype=np.int64)
        prev = 0
        for i, el in enumerate(exits):
            for b in range(1, self.b_max + 1):
                table[i, b - 1] = self.span_ns(prev, el, b)
            prev = el + 1
        return LatencyLut(table=table)

    def single_sample_prefix_ns(self) -> np.ndarray:
        return self.prefix_ns[:, 0]


def _tabulate(model: ModelSpec, b_max: int, fn) -> np.ndarray:
    lat = np.empty((model.n_layers, b_max), dtype=np.int64)
    for l, layer in enumerate(model.layers):
        for b in range(1, b_max + 1):
            lat[l, b - 1] = to_ns(fn(layer, b))
    return lat


def build_runtime(
    model: ModelSpec,
    design: NpuDesign,
    policy_name: str,
    b_max: int,
    fbcb: Fbcb | None = None,
) -> NpuRuntime:
    """Latency tables for the batching discipline a serving policy runs with.

    fluidb uses its FBCB policies; serial, r-adaptb and lazy execute uniform
    R-batching; fc-adaptb runs convolutions per-sample and batches FC layers.
    """
    if policy_name == "fluidb":
        if fbcb is None:
            raise ConfigurationError("fluidb runtime needs an FBCB")
        if fbcb.n_layers != model.n_layers or fbcb.b_max < b_max:
            raise ConfigurationError("FBCB dimensions do not match the model/B_max")
        fn = lambda layer, b: policy_latency(design, layer, b, fbcb.policy(layer.index, b))
    elif policy_name.startswith("fc-adaptb"):
        fn = lambda layer, b: fc_only_layer_latency(design, layer, b)
    elif policy_name in ("serial",) or policy_name.startswith("r-adaptb") or policy_name == "lazy":
        rfb = uniform_fbcb(model, b_max, "r")
        fn = lambda layer, b: policy_latency(design, layer, b, rfb.policy(layer.index, b))
    else:
        raise InvalidArgumentError(f"unknown policy {policy_name!r}")
    return NpuRuntime(
        model=model,
        b_max=b_max,
        lat_ns=_tabulate(model, b_max, fn),
        peak_ops=peak_performance(design),
        design=design,
    )


def runtime_from_layer_seconds(
    model: ModelSpec, layer_seconds: np.ndarray, peak_ops: float = 1.0
) -> NpuRuntime:
    """Runtime with an explicitly supplied latency table (scenario tests)."""
    table = np.asarray(layer_seconds, dtype=float)
    lat = np.vectorize(to_ns)(table).astype(np.int64)
    return NpuRuntime(model=model, b_max=table.shape[1], lat_ns=lat, peak_ops=peak_ops)


# ---------------------------------------------------------------------------
# Serving policies as decision hooks over the shared batch mechanics
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class PolicySpec:
    """Which scheduler to simulate, with its knobs.

    preempt_cost_frac charges each preemption a fixed cost as a fraction of
    the single-sample full-network latency (0 by default; 0.0005 reproduces
    the worst case measured on hardware).  lazy_check_cost_s stalls the NPU
    per LazyBatching criterion evaluation (0 by default).
    """

    name: str
    timeout_s: float | None = None
    preempt_cost_frac: float = 0.0
    lazy_check_cost_s: float = 0.0


class _PolicyDriver:
    layer_checkpoints = False
    dispatch_cap: int

    def idle_action(self, queue: deque, now: int):
        n = len(queue)
        if n == 0:
            return ("none", 0)
        return ("dispatch", min(n, self.dispatch_cap))

    def decide_at(self, batch, exit_idx, layer_idx, queue_len, now):
        return None


class _FluidDriver(_PolicyDriver):
    def __init__(self, runtime: NpuRuntime, slo: SloConfig):
        self.dispatch_cap = slo.b_max
        self.n_exits = runtime.model.exits.n_exits
        self.sched = ExitAwareScheduler(runtime.exit_lut(), slo, to_ns(slo.t_slo))

    def idle_action(self, queue, now):
        return super().idle_action(queue, now)

    def decide_at(self, batch, exit_idx, layer_idx, queue_len, now):
        if exit_idx is None or exit_idx >= self.n_exits - 1:
            return None
        return self.sched.decide(batch, exit_idx, queue_len, now)


class _SerialDriver(_PolicyDriver):
    dispatch_cap = 1


class _AdaptBDriver(_PolicyDriver):
    def __init__(self, cfg: AdaptBConfig):
        self.cfg = cfg
        self.dispatch_cap = cfg.b_max
        self.timeout_ns = to_ns(cfg.t_timeout)

    def idle_action(self, queue, now):
        # same rule as baselines.adaptb_dispatch, in integer nanoseconds
        n_q = len(queue)
        if n_q == 0:
            return ("none", 0)
        if n_q >= self.cfg.b_max:
            return ("dispatch", self.cfg.b_max)
        deadline = queue[0].arrival_time + self.timeout_ns
        if now >= deadline:
            return ("dispatch", n_q)
        return ("wait_until", deadline)


class _LazyDriver(_PolicyDriver):
    layer_checkpoints = True

    def __init__(self, runtime: NpuRuntime, slo: SloConfig, check_cost_ns: int):
        self.dispatch_cap = slo.b_max
        self.sched = LazyScheduler(
            runtime.single_sample_prefix_ns(), slo, to_ns(slo.t_slo), check_cost_ns
        )

    def decide_at(self, batch, exit_idx, layer_idx, queue_len, now):
        return self.sched.decide(batch, layer_idx, queue_len, now)


def _make_driver(spec: PolicySpec, runtime: NpuRuntime, slo: SloConfig) -> _PolicyDriver:
    if spec.name == "fluidb":
        return _FluidDriver(runtime, slo)
    if spec.name == "serial":
        return _SerialDriver()
    if spec.name.startswith(("fc-adaptb", "r-adaptb")):
        if spec.timeout_s is None:
            raise ConfigurationError(f"{spec.name} needs a timeout")
        mode = BatchingMode.FC_ONLY if spec.name.startswith("fc") else BatchingMode.R_UNIFORM
        return _AdaptBDriver(AdaptBConfig(slo.b_max, spec.timeout_s, mode))
    if spec.name == "lazy":
        return _LazyDriver(runtime, slo, to_ns(spec.lazy_check_cost_s))
    raise InvalidArgumentError(f"unknown policy {spec.name!r}")


# ---------------------------------------------------------------------------
# The event loop
# ---------------------------------------------------------------------------

@dataclass
class _Run(BatchState):
    is_catchup: bool = False
    target_cursor: int = -1


class _Simulation:
    def __init__(self, runtime: NpuRuntime, spec: PolicySpec, trace: ArrivalTrace, slo: SloConfig):
        if trace.assigned_exits is None:
            raise ConfigurationError("trace has no assigned exits; run assign_exits first")
        n_exits = runtime.model.exits.n_exits
        if int(trace.assigned_exits.max()) >= n_exits:
            raise ConfigurationError("trace exit indices exceed the model's exit count")
        if slo.b_max > runtime.b_max:
            raise ConfigurationError(
                f"policy B_max {slo.b_max} exceeds runtime table width {runtime.b_max}"
            )
        self.rt = runtime
        self.spec = spec
        self.slo = slo
        self.driver = _make_driver(spec, runtime, slo)
        self.requests = [
            Request(sample_id=int(i), arrival_time=to_ns(t), assigned_exit=int(e))
            for i, t, e in zip(trace.sample_ids, trace.arrival_times, trace.assigned_exits)
        ]
        exits = runtime.model.exits.exit_layer_indices
        if self.driver.layer_checkpoints:
            exit_of = {el: i for i, el in enumerate(exits)}
            self.checkpoints = [(l, exit_of.get(l)) for l in range(runtime.model.n_layers)]
        else:
            self.checkpoints = [(el, i) for i, el in enumerate(exits)]
        self.preempt_cost_ns = to_ns(
            spec.preempt_cost_frac * runtime.span_ns(0, runtime.model.n_layers - 1, 1) / NS_PER_S
        )
        self.heap: list[tuple[int, int, int]] = []
        self.payloads: dict[int, int] = {}
        self.seq = 0
        self.queue: deque[Request] = deque()
        self.active: _Run | None = None
        self.stalled: _Run | None = None
        self.seg_dur: int = 0
        self.seg_first_layer: int = 0
        self.next_batch_id = 0
        self.timeout_gen = 0
        self.timeout_armed = False
        self.records: list[LogRecord] = []
        self.busy_ns = 0

    # -- event plumbing ----------------------------------------------------

    def _push(self, t: int, kind: EventKind, payload: int):
        heapq.heappush(self.heap, (t, int(kind), self.seq))
        self.payloads[self.seq] = payload
        self.seq += 1

    def _log(self, t: int, kind: str, batch_id: int, sample_id: int, detail: str = ""):
        self.records.append(LogRecord(t, kind, batch_id, sample_id, detail))

    # -- dispatch ----------------------------------------------------------

    def _try_dispatch(self, now: int):
        if self.active is not None:
            return
        kind, val = self.driver.idle_action(self.queue, now)
        if kind == "dispatch":
            members = [self.queue.popleft() for _ in range(val)]
            self._start_run(members, now, is_catchup=False, target=-1)
        elif kind == "wait_until":
            if not self.timeout_armed:
                self.timeout_gen += 1
                self.timeout_armed = True
                self._push(val, EventKind.TIMEOUT_FIRE, self.timeout_gen)

    def _start_run(self, members: list[Request], now: int, is_catchup: bool, target: int, extra_ns: int = 0):
        run = _Run(batch_id=self.next_batch_id, members=members, position=0,
                   is_catchup=is_catchup, target_cursor=target)
        self.next_batch_id += 1
        self.timeout_armed = False
        for m in members:
            if m.dispatch_time is None:
                m.dispatch_time = now
        ids = ",".join(str(m.sample_id) for m in members)
        detail = f"b={len(members)};catchup={int(is_catchup)};members={ids}"
        self._log(now, "DISPATCH", run.batch_id, -1, detail)
        self.active = run
        self._schedule_segment(run, now, extra_ns)

    def _schedule_segment(self, run: _Run, now: int, extra_ns: int = 0):
        ckpt_layer, _ = self.checkpoints[run.position]
        first = 0 if run.position == 0 else self.checkpoints[run.position - 1][0] + 1
        dur = self.rt.span_ns(first, ckpt_layer, run.B_act) + extra_ns
        self.seg_dur = dur
        self.seg_first_layer = first
        self._push(now + dur, EventKind.SEGMENT_DONE, run.batch_id)

    # -- checkpoint handling -------------------------------------------------

    def _complete(self, m: Request, now: int):
        m.completion_time = now
        macs = self.rt.model.macs_to_exit(m.assigned_exit)
        detail = (
            f"exit={m.assigned_exit};arrival_ns={m.arrival_time};"
            f"latency_ns={now - m.arrival_time};macs={macs}"
        )
        self._log(now, "COMPLETE", self.active.batch_id, m.sample_id, detail)

    def _on_segment_done(self, now: int):
        run = self.active
        ckpt_layer, exit_idx = self.checkpoints[run.position]
        self.busy_ns += self.seg_dur
        self._log(
            now, "SEGMENT_DONE", run.batch_id, -1,
            f"layers={self.seg_first_layer}-{ckpt_layer};b={run.B_act};dur_ns={self.seg_dur}",
        )
        if exit_idx is not None:
            exiting = [m for m in run.members if m.assigned_exit == exit_idx]
            for m in exiting:
                self._complete(m, now)
            run.members = [m for m in run.members if m.assigned_exit != exit_idx]
            self._log(
                now, "EXIT", run.batch_id, -1,
                f"exit={exit_idx};n_exit={len(exiting)};b_rem={run.B_act}",
            )
        if not run.members:
            if run.is_catchup:
                self._merge(run, now)
            else:
                self.active = None
                self._try_dispatch(now)
            return
        if run.is_catchup:
            if run.position == run.target_cursor:
                self._merge(run, now)
                return
        else:
            dec = self.driver.decide_at(run, exit_idx, ckpt_layer, len(self.queue), now)
            if dec is not None and dec.preempt:
                self._preempt(run, dec, now)
                return
        run.position += 1
        self._schedule_segment(run, now)

    def _preempt(self, run: _Run, dec: PreemptionDecision, now: int):
        oldest = run.oldest()
        self._log(
            now, "PREEMPT", run.batch_id, -1,
            f"cursor={run.position};b_rem={run.B_act};b_incr={dec.B_incr};"
            f"t_overhead_ns={int(dec.T_overhead)};t_slack_ns={int(dec.T_slack)};"
            f"oldest={oldest.sample_id}",
        )
        self.stalled = run
        members = [self.queue.popleft() for _ in range(dec.B_incr)]
        self._start_run(members, now, is_catchup=True, target=run.position,
                        extra_ns=self.preempt_cost_ns)

    def _merge(self, catchup: _Run, now: int):
        run = self.stalled
        self.stalled = None
        b_rem = run.B_act
        survivors = catchup.members
        run.members = run.members + survivors
        self._log(
            now, "MERGE", run.batch_id, -1,
            f"b_rem={b_rem};b_new={len(survivors)};b_merged={run.B_act}",
        )
        self.active = run
        ckpt_layer, exit_idx = self.checkpoints[run.position]
        dec = self.driver.decide_at(run, exit_idx, ckpt_layer, len(self.queue), now)
        if dec is not None and dec.preempt:
            self._preempt(run, dec, now)
            return
        run.position += 1
        self._schedule_segment(run, now)

    # -- main loop -----------------------------------------------------------

    def run(self) -> EventLog:
        for r in self.requests:
            self._push(r.arrival_time, EventKind.ARRIVAL, r.sample_id)
        while self.heap:
            t, kind, seq = heapq.heappop(self.heap)
            payload = self.payloads.pop(seq)
            if kind == EventKind.ARRIVAL:
                self._arrive(t, payload)
                # coalesce simultaneous arrivals before any dispatch decision
                while self.heap and self.heap[0][0] == t and self.heap[0][1] == EventKind.ARRIVAL:
                    _, _, s2 = heapq.heappop(self.heap)
                    self._arrive(t, self.payloads.pop(s2))
                self._try_dispatch(t)
            elif kind == EventKind.SEGMENT_DONE:
                self._on_segment_done(t)
            else:  # TIMEOUT_FIRE
                if payload == self.timeout_gen and self.timeout_armed:
                    self.timeout_armed = False
                    self._try_dispatch(t)
        n_done = sum(1 for r in self.requests if r.completion_time is not None)
        if n_done != len(self.requests):
            raise ConfigurationError(f"simulation drained with {n_done}/{len(self.requests)} completions")
        meta = {
            "policy": self.spec.name,
            "n_samples": len(self.requests),
            "t_slo_ns": to_ns(self.slo.t_slo),
            "b_max": self.slo.b_max,
            "peak_ops": repr(self.rt.peak_ops),
            "busy_ns": self.busy_ns,
            "model": self.rt.model.name,
        }
        return EventLog(records=self.records, meta=meta)

    def _arrive(self, t: int, sample_id: int):
        req = self.requests[sample_id]
        self.queue.append(req)
        self._log(t, "ARRIVAL", -1, sample_id, f"exit={req.assigned_exit}")


def run_simulation(
    runtime: NpuRuntime,
    policy: PolicySpec,
    trace: ArrivalTrace,
    slo: SloConfig,
) -> EventLog:
    """Simulate one serving run to drain; deterministic for fixed inputs."""
    return _Simulation(runtime, policy, trace, slo).run()


# ---------------------------------------------------------------------------
# Metrics
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class MetricsReport:
    processing_rate: float  # completions / s
    avg_latency: float  # s
    p99_latency: float  # s
    violation_rate: float
    utilisation: float
    n_samples: int

    def row(self) -> list:
        return [
            f"{self.processing_rate:.6f}",
            f"{self.avg_latency:.6f}",
            f"{self.p99_latency:.6f}",
            f"{self.violation_rate:.6f}",
            f"{self.utilisation:.6f}",
        ]


def nearest_rank_percentile(values: np.ndarray, pct: float) -> float:
    """Nearest-rank percentile: the ceil(pct*n)-th order statistic."""
    v = np.sort(np.asarray(values))
    rank = max(1, math.ceil(pct / 100.0 * len(v)))
    return float(v[rank - 1])


def compute_metrics(log: EventLog, t_slo: float | None = None, warmup_frac: float = 0.05) -> MetricsReport:
    """Summarise one event log.

    Latency statistics exclude the first warmup_frac of samples (by arrival
    order) so they reflect steady state; processing rate counts all
    completions over the simulated duration; utilisation is useful operation
    throughput over peak during NPU-busy time, capturing mapping inefficiency.
    """
    completions = log.completions()
    if not completions:
        raise EmptyLogError("no completions in event log")
    if t_slo is None:
        t_slo = log.meta["t_slo_ns"] / NS_PER_S
    n_total = int(log.meta["n_samples"])
    n_warm = int(warmup_frac * n_total)
    lat_by_id = {}
    total_macs = 0
    last_completion = 0
    for rec in completions:
        d = parse_detail(rec.detail)
        lat_by_id[rec.sample_id] = d["latency_ns"] / NS_PER_S
        total_macs += d["macs"]
        last_completion = max(last_completion, rec.time_ns)
    included = np.array([lat for sid, lat in sorted(lat_by_id.items()) if sid >= n_warm])
    if included.size == 0:
        raise EmptyLogError("warm-up excluded every sample")
    busy_s = int(log.meta["busy_ns"]) / NS_PER_S
    peak = float(log.meta["peak_ops"])
    return MetricsReport(
        processing_rate=len(completions) / (last_completion / NS_PER_S),
        avg_latency=float(included.mean()),
        p99_latency=nearest_rank_percentile(included, 99.0),
        violation_rate=float(np.mean(included > t_slo)),
        utilisation=2.0 * total_macs / (peak * busy_s),
        n_samples=n_total,
    )
