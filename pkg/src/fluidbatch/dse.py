"""Design-space exploration over NPU tile configurations.

Exhaustively evaluates every feasible <T_R, T_P, T_C> in a candidate grid and
scores each with a batch-size-weighted sum of workload throughput, where each
(layer, batch size) pair gets its best (B_R, k) policy from an inner brute
force.  The winning design's per-(l, b) policies populate the FBCB.
"""

from __future__ import annotations

import csv
import itertools
from dataclasses import dataclass, field
from pathlib import Path

from .errors import InvalidArgumentError, NoFeasibleDesignError
from .npu import (
    Fbcb,
    LayerPolicy,
    NpuDesign,
    Stacking,
    policy_latency,
    stack_pes,
    uniform_fbcb,
)
from .workload import LayerSpec, ModelSpec

# Tie preference for equal-throughput policies: smaller B_R first, then
# identity stacking (no reconfiguration), then smaller k.
_K_ORDER = (Stacking.ONE, Stacking.HALF, Stacking.TWO)

# Batching modes a design point can be restricted to.  Baseline serving
# systems are exit- and fluid-unaware: they batch uniformly along one
# dimension with fixed k=1.
MODE_FLUID = "fluid"
MODE_FLUID_NOSTACK = "fluid-nostack"
MODE_R_UNIFORM = "r-uniform"
MODE_P_UNIFORM = "p-uniform"


@dataclass(frozen=True)
class DseConfig:
    """Candidate tile grid, per-batch-size weights, and resource budgets."""

    t_r_candidates: tuple[int, ...]
    t_p_candidates: tuple[int, ...]
    t_c_candidates: tuple[int, ...]
    b_max: int = 8
    weights: tuple[float, ...] | None = None  # length b_max; default all 1
    clock_hz: float = 150e6
    mem_bandwidth_bytes_per_s: float = 12.8e9
    word_bytes: int = 2
    dsp_budget: int = 900
    bram_budget_words: int = 1_300_000

    def __post_init__(self):
        w = self.weights if self.weights is not None else tuple(1.0 for _ in range(self.b_max))
        object.__setattr__(self, "weights", tuple(w))
        if len(self.weights) != self.b_max:
            raise InvalidArgumentError(f"need {self.b_max} weights, got {len(self.weights)}")
        if any(w < 0 for w in self.weights) or not any(w > 0 for w in self.weights):
            raise InvalidArgumentError("weights must be >= 0 with at least one > 0")


def default_grid(**overrides) -> DseConfig:
    """Documented default candidate grid: powers-of-two-ish ladders.

    T_P and T_C cover MAC-tree widths and PE counts seen in edge NPU
    deployments.  T_R spans the deep-pipeline regime of the evaluated
    platforms (published design points sit between 2742 and 6832); shallow
    pipelines would make single-sample execution artificially cheap in the
    tile-counting cycle model.  Fully configurable.
    """
    cfg = dict(
        t_r_candidates=(1024, 2048, 4096),
        t_p_candidates=(2, 4, 8, 16, 32),
        t_c_candidates=(16, 32, 64, 128, 256),
    )
    cfg.update(overrides)
    return DseConfig(**cfg)


@dataclass(frozen=True)
class DseCandidate:
    design: NpuDesign
    objective: float
    per_batch_throughput: tuple[float, ...]


@dataclass(frozen=True)
class DseResult:
    best_design: NpuDesign
    fbcb: Fbcb
    objective_value: float
    per_batch_throughput: tuple[float, ...]
    candidates: tuple[DseCandidate, ...] = field(repr=False, default=())


def _mode_policies(b: int, mode: str) -> list[LayerPolicy]:
    if mode == MODE_R_UNIFORM:
        return [LayerPolicy(B_R=b)]
    if mode == MODE_P_UNIFORM:
        return [LayerPolicy(B_R=1)]
    ks = _K_ORDER if mode == MODE_FLUID else (Stacking.ONE,)
    return [LayerPolicy(B_R=b_r, k=k) for b_r in range(1, b + 1) for k in ks]


def optimise_layer_policy(
    design: NpuDesign, layer: LayerSpec, b: int, mode: str = MODE_FLUID
) -> LayerPolicy:
    """Best (B_R, k) for one layer at batch b: argmax throughput by brute force.

    Equivalent to minimising the layer's latency at fixed b.  Infeasible
    stackings are skipped; B_R in [1, b] with k=1 is always feasible.
    """
    best_pol, best_lat = None, None
    for pol in _mode_policies(b, mode):
        try:
            lat = policy_latency(design, layer, b, pol)
        except Exception:
            continue  # infeasible stacking on this design
        if best_lat is None or lat < best_lat:
            best_pol, best_lat = pol, lat
    return best_pol


def workload_throughput(
    design: NpuDesign, model: ModelSpec, b: int, policies: list[LayerPolicy]
) -> float:
    """Useful Op/s over the whole model at batch b under per-layer policies."""
    if len(policies) != model.n_layers:
        raise InvalidArgumentError("need one policy per layer")
    total_lat = sum(
        policy_latency(design, layer, b, pol) for layer, pol in zip(model.layers, policies)
    )
    return 2.0 * b * model.total_macs() / total_lat


def feasible_designs(cfg: DseConfig) -> list[NpuDesign]:
    """All grid points passing the DSP and double-buffered BRAM filters."""
    out = []
    for t_r, t_p, t_c in itertools.product(
        sorted(cfg.t_r_candidates), sorted(cfg.t_p_candidates), sorted(cfg.t_c_candidates)
    ):
        if t_p * t_c > cfg.dsp_budget:
            continue
        if 2 * (t_r * t_p + t_p * t_c + t_r * t_c) > cfg.bram_budget_words:
            continue
        out.append(
            NpuDesign(
                T_R=t_r,
                T_P=t_p,
                T_C=t_c,
                clock_hz=cfg.clock_hz,
                mem_bandwidth_bytes_per_s=cfg.mem_bandwidth_bytes_per_s,
                word_bytes=cfg.word_bytes,
                dsp_budget=cfg.dsp_budget,
                bram_budget_words=cfg.bram_budget_words,
            )
        )
    return out


def evaluate_design(
    design: NpuDesign, model: ModelSpec, cfg: DseConfig, mode: str = MODE_FLUID
) -> tuple[float, tuple[float, ...], list[list[LayerPolicy]]]:
    """Objective, per-batch throughput and per-(l, b) policies for one design."""
    per_b_tput = []
    policies_by_b = []
    for b in range(1, cfg.b_max + 1):
        pols = [optimise_layer_policy(design, layer, b, mode) for layer in model.layers]
        policies_by_b.append(pols)
        per_b_tput.append(workload_throughput(design, model, b, pols))
    objective = sum(w * t for w, t in zip(cfg.weights, per_b_tput))
    return objective, tuple(per_b_tput), policies_by_b


def fbcb_for_design(design: NpuDesign, model: ModelSpec, b_max: int, mode: str = MODE_FLUID) -> Fbcb:
    """Per-(layer, batch) optimal policies for one fixed design."""
    rows = tuple(
        tuple(optimise_layer_policy(design, lay, b, mode) for b in range(1, b_max + 1))
        for lay in model.layers
    )
    return Fbcb(entries=rows, b_max=b_max)


def run_dse(cfg: DseConfig, model: ModelSpec, mode: str = MODE_FLUID) -> DseResult:
    """Exhaustive search over the grid; deterministic tie-break by grid order."""
    designs = feasible_designs(cfg)
    if not designs:
        raise NoFeasibleDesignError("no grid point satisfies the DSP/BRAM budgets")
    best = None
    candidates = []
    for design in designs:
        objective, per_b, policies_by_b = evaluate_design(design, model, cfg, mode)
        candidates.append(DseCandidate(design, objective, per_b))
        if best is None or objective > best[0]:
            best = (objective, design, per_b, policies_by_b)
    objective, design, per_b, policies_by_b = best
    entries = tuple(
        tuple(policies_by_b[b][l] for b in range(cfg.b_max)) for l in range(model.n_layers)
    )
    return DseResult(
        best_design=design,
        fbcb=Fbcb(entries=entries, b_max=cfg.b_max),
        objective_value=objective,
        per_batch_throughput=per_b,
        candidates=tuple(candidates),
    )


def fc_only_layer_latency(design: NpuDesign, layer: LayerSpec, b: int) -> float:
    """FC-only batching: convs run per-sample serially, FC layers R-batched."""
    from .workload import LayerKind

    if layer.kind == LayerKind.FC:
        return policy_latency(design, layer, b, LayerPolicy(B_R=b))
    return b * policy_latency(design, layer, 1, LayerPolicy(B_R=1))


def _with_weights(cfg: DseConfig, weights: tuple[float, ...]) -> DseConfig:
    return DseConfig(
        t_r_candidates=cfg.t_r_candidates,
        t_p_candidates=cfg.t_p_candidates,
        t_c_candidates=cfg.t_c_candidates,
        b_max=cfg.b_max,
        weights=weights,
        clock_hz=cfg.clock_hz,
        mem_bandwidth_bytes_per_s=cfg.mem_bandwidth_bytes_per_s,
        word_bytes=cfg.word_bytes,
        dsp_budget=cfg.dsp_budget,
        bram_budget_words=cfg.bram_budget_words,
    )


def _run_fc_only_dse(cfg: DseConfig, model: ModelSpec) -> DseResult:
    designs = feasible_designs(cfg)
    if not designs:
        raise NoFeasibleDesignError("no grid point satisfies the DSP/BRAM budgets")
    best = None
    candidates = []
    total = model.total_macs()
    for design in designs:
        per_b = tuple(
            2.0 * b * total / sum(fc_only_layer_latency(design, l, b) for l in model.layers)
            for b in range(1, cfg.b_max + 1)
        )
        objective = sum(w * t for w, t in zip(cfg.weights, per_b))
        candidates.append(DseCandidate(design, objective, per_b))
        if best is None or objective > best[0]:
            best = (objective, design, per_b)
    objective, design, per_b = best
    return DseResult(
        best_design=design,
        fbcb=uniform_fbcb(model, cfg.b_max, "r"),
        objective_value=objective,
        per_batch_throughput=per_b,
        candidates=tuple(candidates),
    )


def run_baseline_dse(cfg: DseConfig, model: ModelSpec, policy_name: str) -> DseResult:
    """Per-baseline hardware: a DSE run with the batching mode pinned.

    AdaptB/LazyBatching baselines weight only b=B_max (their design batch
    size); SERIAL only ever executes single samples, so it is scored at b=1.
    """
    top_b = tuple(1.0 if b == cfg.b_max else 0.0 for b in range(1, cfg.b_max + 1))
    if policy_name == "serial":
        w = tuple(1.0 if b == 1 else 0.0 for b in range(1, cfg.b_max + 1))
        return run_dse(_with_weights(cfg, w), model, MODE_R_UNIFORM)
    if policy_name.startswith("fc-adaptb"):
        return _run_fc_only_dse(_with_weights(cfg, top_b), model)
    if policy_name.startswith("r-adaptb") or policy_name == "lazy":
        return run_dse(_with_weights(cfg, top_b), model, MODE_R_UNIFORM)
    raise InvalidArgumentError(f"unknown baseline {policy_name!r}")


def write_dse_report(result: DseResult, path: str | Path):
    """One CSV row per examined candidate."""
    with open(path, "w", newline="") as f:
        writer = csv.writer(f)
        b_max = len(result.per_batch_throughput)
        writer.writerow(
            ["T_R", "T_P", "T_C", "objective_gops"]
            + [f"tput_gops_b{b}" for b in range(1, b_max + 1)]
        )
        for cand in result.candidates:
            writer.writerow(
                [cand.design.T_R, cand.design.T_P, cand.design.T_C, f"{cand.objective / 1e9:.6f}"]
                + [f"{t / 1e9:.6f}" for t in cand.per_batch_throughput]
            )
