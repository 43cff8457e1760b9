"""Analytical + roofline performance model of the tiled-GEMM NPU.

The accelerator executes each layer as a tiled GEMM with tile sizes
<T_R, T_P, T_C>: T_C processing elements, each a MAC tree of width T_P, with
T_R controlling pipeline depth.  Batching appends samples along the row
dimension (B_R of them) and/or the padded reduction dimension (the remaining
B_P = B_act - B_R + 1), and stackable PEs trade PE count for MAC-tree width
on the fly.  Latency is the max of a tile-counting cycle model and a
bytes-over-bandwidth memory model.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, replace
from enum import Enum
from pathlib import Path

import numpy as np

from .errors import (
    InvalidArgumentError,
    InvalidPolicyError,
    PolicyLookupError,
    UnsupportedStackingError,
)
from .workload import LayerSpec, ModelSpec


class Stacking(Enum):
    """PE stacking factor k: exact integer transforms, no fractional tile math."""

    HALF = "1/2"
    ONE = "1"
    TWO = "2"

    @classmethod
    def from_value(cls, k) -> "Stacking":
        if isinstance(k, Stacking):
            return k
        if k in (0.5, "1/2"):
            return cls.HALF
        if k in (1, "1"):
            return cls.ONE
        if k in (2, "2"):
            return cls.TWO
        raise InvalidArgumentError(f"stacking factor must be one of 1/2, 1, 2, got {k!r}")


@dataclass(frozen=True)
class NpuDesign:
    """Accelerator configuration plus platform budgets."""

    T_R: int
    T_P: int
    T_C: int
    clock_hz: float
    mem_bandwidth_bytes_per_s: float = 12.8e9
    word_bytes: int = 2  # 16-bit fixed point
    dsp_budget: int = 900
    bram_budget_words: int = 1_300_000
    name: str = ""

    def __post_init__(self):
        if self.T_R < 1 or self.T_P < 1 or self.T_C < 1:
            raise InvalidArgumentError(f"tile sizes must be >= 1, got ({self.T_R}, {self.T_P}, {self.T_C})")
        if self.T_P * self.T_C > self.dsp_budget:
            raise InvalidArgumentError(
                f"T_P*T_C = {self.T_P * self.T_C} exceeds DSP budget {self.dsp_budget}"
            )
        if 2 * self.buffer_words() > self.bram_budget_words:
            raise InvalidArgumentError(
                f"double-buffered tiles need {2 * self.buffer_words()} words, budget is {self.bram_budget_words}"
            )

    def buffer_words(self) -> int:
        """Single-buffered on-chip words for one input, weight and output tile."""
        return self.T_R * self.T_P + self.T_P * self.T_C + self.T_R * self.T_C

    def dsp_used(self) -> int:
        return self.T_P * self.T_C


@dataclass(frozen=True)
class BatchedLayerDims:
    """Matrix dims after batching B_act samples: R_hat x P_hat by P_hat x C."""

    R_hat: int
    P_hat: int
    C: int
    useful_macs: int  # B_act * R * P * C, the non-padding work


@dataclass(frozen=True)
class LayerPolicy:
    """Per-(layer, batch) knob settings: B_R row-appended samples, stacking k."""

    B_R: int
    k: Stacking = Stacking.ONE


def fluid_dims(
    layer: LayerSpec,
    B_act: int,
    B_R: int,
    T_P: int,
    strict_guards: bool = False,
) -> BatchedLayerDims:
    """Batched matrix dims for B_R samples along rows, the rest along P.

    R_hat = B_R * R.  The remaining B_P = B_act - B_R + 1 sample groups append
    along the reduction dim, each padded with P mod T_P zero guard elements to
    prevent accumulation interference between samples.  A single P group needs
    no guards (no neighbour to interfere with) unless ``strict_guards`` asks
    for the always-padded variant.
    """
    if not 1 <= B_R <= B_act:
        raise InvalidPolicyError(f"B_R must lie in [1, {B_act}], got {B_R}")
    B_P = B_act - B_R + 1
    if B_P > 1 or strict_guards:
        p_hat = B_P * (layer.P + layer.P % T_P)
    else:
        p_hat = layer.P
    return BatchedLayerDims(
        R_hat=B_R * layer.R,
        P_hat=p_hat,
        C=layer.C,
        useful_macs=B_act * layer.macs,
    )


def stack_pes(design: NpuDesign, k) -> NpuDesign:
    """Apply stacking factor k: <T_R, T_P, T_C> -> <T_R//2, k*T_P, T_C//k>."""
    k = Stacking.from_value(k)
    if k == Stacking.ONE:
        return design
    if design.T_R < 2:
        raise UnsupportedStackingError(f"stacking needs T_R >= 2, got {design.T_R}")
    if k == Stacking.HALF:
        if design.T_P % 2 != 0:
            raise UnsupportedStackingError(f"k=1/2 needs even T_P, got {design.T_P}")
        return replace(design, T_R=design.T_R // 2, T_P=design.T_P // 2, T_C=2 * design.T_C)
    if design.T_C < 2:
        raise UnsupportedStackingError(f"k=2 needs T_C >= 2, got {design.T_C}")
    return replace(design, T_R=design.T_R // 2, T_P=2 * design.T_P, T_C=design.T_C // 2)


def stacking_feasible(design: NpuDesign, k: Stacking) -> bool:
    try:
        stack_pes(design, k)
    except UnsupportedStackingError:
        return False
    return True


def pipeline_fill_cycles(T_P: int) -> int:
    """Adder-tree depth plus fixed control overhead per layer invocation."""
    return math.ceil(math.log2(T_P)) + 4 if T_P > 1 else 4


def layer_latency(design: NpuDesign, dims: BatchedLayerDims) -> float:
    """Roofline latency (s): max of tile-counted compute and memory transfer.

    Each tile pass costs T_R cycles; a whole-layer invocation pays one
    pipeline-fill penalty.  Each matrix is read/written once per layer (full
    on-chip reuse under double buffering), an optimistic traffic model.
    """
    tiles = (
        math.ceil(dims.R_hat / design.T_R)
        * math.ceil(dims.P_hat / design.T_P)
        * math.ceil(dims.C / design.T_C)
    )
    compute_cycles = tiles * design.T_R + pipeline_fill_cycles(design.T_P)
    mem_bytes = design.word_bytes * (
        dims.R_hat * dims.P_hat + dims.P_hat * dims.C + dims.R_hat * dims.C
    )
    return max(compute_cycles / design.clock_hz, mem_bytes / design.mem_bandwidth_bytes_per_s)


def peak_performance(design: NpuDesign) -> float:
    """Peak throughput in Op/s: one multiply + one add per MAC per cycle."""
    return 2.0 * design.T_P * design.T_C * design.clock_hz


def policy_latency(
    design: NpuDesign,
    layer: LayerSpec,
    B_act: int,
    policy: LayerPolicy,
    strict_guards: bool = False,
) -> float:
    """Latency of one layer at batch B_act under a (B_R, k) policy."""
    stacked = stack_pes(design, policy.k)
    dims = fluid_dims(layer, B_act, policy.B_R, stacked.T_P, strict_guards=strict_guards)
    return layer_latency(stacked, dims)


def layer_throughput(
    design: NpuDesign,
    layer: LayerSpec,
    B_act: int,
    policy: LayerPolicy,
    strict_guards: bool = False,
) -> float:
    """Useful Op/s of one batched layer; bounded by the stacked design's peak."""
    lat = policy_latency(design, layer, B_act, policy, strict_guards=strict_guards)
    return 2.0 * B_act * layer.macs / lat


@dataclass(frozen=True)
class Fbcb:
    """Fluid Batching Control Block: the L x B_max table of per-layer policies."""

    entries: tuple[tuple[LayerPolicy, ...], ...]  # [layer][batch-1]
    b_max: int

    def __post_init__(self):
        if len(self.entries) < 1:
            raise InvalidArgumentError("FBCB needs at least one layer row")
        for row in self.entries:
            if len(row) != self.b_max:
                raise InvalidArgumentError(f"each FBCB row must hold B_max={self.b_max} entries")

    @property
    def n_layers(self) -> int:
        return len(self.entries)

    def lookup(self, l: int, B_act: int) -> tuple[int, int, Stacking]:
        """Policy for layer l at batch B_act as (B_R, B_P, k)."""
        if not 0 <= l < self.n_layers:
            raise PolicyLookupError(f"layer index {l} outside [0, {self.n_layers - 1}]")
        if not 1 <= B_act <= self.b_max:
            raise PolicyLookupError(f"batch size {B_act} outside [1, {self.b_max}]")
        pol = self.entries[l][B_act - 1]
        return pol.B_R, B_act - pol.B_R + 1, pol.k

    def policy(self, l: int, B_act: int) -> LayerPolicy:
        self.lookup(l, B_act)  # bounds check
        return self.entries[l][B_act - 1]


def fbcb_lookup(fbcb: Fbcb, l: int, B_act: int) -> tuple[int, int, Stacking]:
    return fbcb.lookup(l, B_act)


def fbcb_size_bits(n_layers: int, b_max: int) -> int:
    """Storage cost: ceil(log2 B_max) bits for B_R plus 2 bits for k, per entry."""
    if n_layers < 1 or b_max < 1:
        raise InvalidArgumentError("n_layers and b_max must be >= 1")
    b_r_bits = math.ceil(math.log2(b_max)) if b_max > 1 else 0
    return n_layers * b_max * (b_r_bits + 2)


def uniform_fbcb(model: ModelSpec, b_max: int, mode: str = "r") -> Fbcb:
    """Status-quo batching as a degenerate FBCB: all-R (B_R=b) or all-P (B_R=1)."""
    if mode not in ("r", "p"):
        raise InvalidArgumentError(f"uniform mode must be 'r' or 'p', got {mode!r}")
    rows = tuple(
        tuple(LayerPolicy(B_R=(b if mode == "r" else 1)) for b in range(1, b_max + 1))
        for _ in model.layers
    )
    return Fbcb(entries=rows, b_max=b_max)


def model_layer_latencies(
    design: NpuDesign, model: ModelSpec, fbcb: Fbcb, B: int, strict_guards: bool = False
) -> list[float]:
    """Per-layer latencies (s) at batch B under each layer's FBCB policy."""
    return [
        policy_latency(design, layer, B, fbcb.policy(layer.index, B), strict_guards=strict_guards)
        for layer in model.layers
    ]


def segment_latency(
    design: NpuDesign,
    model: ModelSpec,
    fbcb: Fbcb,
    from_exit: int | None,
    to_exit: int,
    B: int,
) -> float:
    """Execution time of the layers between two exits at batch B.

    Covers layers in (exit_layer[from_exit], exit_layer[to_exit]]; pass
    from_exit=None to sum from the first layer.
    """
    exits = model.exits.exit_layer_indices
    if not 0 <= to_exit < len(exits):
        raise PolicyLookupError(f"to_exit {to_exit} outside [0, {len(exits) - 1}]")
    if from_exit is None:
        first = 0
    else:
        if not 0 <= from_exit < len(exits) or from_exit >= to_exit:
            raise PolicyLookupError(f"need from_exit < to_exit, got {from_exit} >= {to_exit}")
        first = exits[from_exit] + 1
    last = exits[to_exit]
    return sum(
        policy_latency(design, model.layers[l], B, fbcb.policy(l, B))
        for l in range(first, last + 1)
    )


@dataclass(frozen=True)
class LatencyLut:
    """N_exits x B_max table of per-exit-segment latencies.

    table[i][b-1] is the time from exit i-1 (or the model input for i=0) to
    exit i at batch size b.  Works in any consistent time unit; the simulator
    instantiates it in integer nanoseconds, offline analysis in seconds.
    """

    table: np.ndarray  # shape (n_exits, b_max)

    def __post_init__(self):
        t = np.asarray(self.table)
        object.__setattr__(self, "table", t)
        if t.ndim != 2:
            raise InvalidArgumentError("latency LUT must be 2-D (n_exits x b_max)")
        if np.any(t <= 0):
            raise InvalidArgumentError("all LUT latencies must be > 0")

    @property
    def n_exits(self) -> int:
        return self.table.shape[0]

    @property
    def b_max(self) -> int:
        return self.table.shape[1]

    def _check(self, i: int, b: int):
        if not 0 <= i < self.n_exits:
            raise PolicyLookupError(f"exit index {i} outside [0, {self.n_exits - 1}]")
        if not 1 <= b <= self.b_max:
            raise PolicyLookupError(f"batch size {b} outside [1, {self.b_max}]")

    def segment(self, i: int, b: int):
        self._check(i, b)
        return self.table[i, b - 1]

    def from_start(self, i: int, b: int):
        """T_{0:i}: input to exit i inclusive, at batch b."""
        self._check(i, b)
        return self.table[: i + 1, b - 1].sum()

    def to_end(self, i: int, b: int):
        """T_{i:last}: segments i..last inclusive, at batch b."""
        self._check(i, b)
        return self.table[i:, b - 1].sum()


def build_latency_lut(design: NpuDesign, model: ModelSpec, fbcb: Fbcb, b_max: int) -> LatencyLut:
    """Bookkeep per-exit-segment latencies for every batch size 1..b_max."""
    n_exits = model.exits.n_exits
    table = np.empty((n_exits, b_max), dtype=float)
    for b in range(1, b_max + 1):
        for i in range(n_exits):
            table[i, b - 1] = segment_latency(design, model, fbcb, i - 1 if i else None, i, b)
    return LatencyLut(table=table)


# ---------------------------------------------------------------------------
# Design files: JSON records {T_R, T_P, T_C, clock_hz, ...}.
# ---------------------------------------------------------------------------

def save_design(design: NpuDesign, path: str | Path):
    doc = {
        "name": design.name,
        "T_R": design.T_R,
        "T_P": design.T_P,
        "T_C": design.T_C,
        "clock_hz": design.clock_hz,
        "mem_bandwidth_bytes_per_s": design.mem_bandwidth_bytes_per_s,
        "word_bytes": design.word_bytes,
        "dsp_budget": design.dsp_budget,
        "bram_budget_words": design.bram_budget_words,
    }
    Path(path).write_text(json.dumps(doc, indent=1) + "\n")


def load_design(path: str | Path) -> NpuDesign:
    doc = json.loads(Path(path).read_text())
    return NpuDesign(**doc)


def save_fbcb(fbcb: Fbcb, path: str | Path):
    doc = {
        "b_max": fbcb.b_max,
        "entries": [
            [[pol.B_R, pol.k.value] for pol in row]
            for row in fbcb.entries
        ],
    }
    Path(path).write_text(json.dumps(doc) + "\n")


def load_fbcb(path: str | Path) -> Fbcb:
    doc = json.loads(Path(path).read_text())
    rows = tuple(
        tuple(LayerPolicy(B_R=e[0], k=Stacking(e[1])) for e in row)
        for row in doc["entries"]
    )
    return Fbcb(entries=rows, b_max=doc["b_max"])
