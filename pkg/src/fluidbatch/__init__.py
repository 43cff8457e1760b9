"""Simulation toolkit for batched serving of early-exit DNNs on edge NPUs.

Layers are tiled-GEMM operations on an accelerator parameterised by
<T_R, T_P, T_C>; batching policy (row/reduction sample split, PE stacking) is
picked per layer and batch size by exhaustive design-space exploration, and an
exit-aware preemptive scheduler backfills batches at intermediate exit points
under an SLO-slack criterion.
"""

from .workload import (
    ArrivalTrace,
    ConvDescriptor,
    ExitProfile,
    LayerKind,
    LayerSpec,
    ModelSpec,
    assign_exits,
    conv_net_to_gemm,
    gen_poisson_arrivals,
    load_model,
    place_exits_equidistant,
    save_model,
)
from .npu import (
    BatchedLayerDims,
    Fbcb,
    LatencyLut,
    LayerPolicy,
    NpuDesign,
    Stacking,
    build_latency_lut,
    fbcb_lookup,
    fbcb_size_bits,
    fluid_dims,
    layer_latency,
    layer_throughput,
    load_design,
    peak_performance,
    save_design,
    segment_latency,
    stack_pes,
)
from .dse import (
    DseConfig,
    DseResult,
    default_grid,
    optimise_layer_policy,
    run_baseline_dse,
    run_dse,
    workload_throughput,
)
from .scheduler import (
    BatchState,
    PreemptionDecision,
    Request,
    SloConfig,
    compute_slack,
    preemptible_points,
    preemption_criterion,
)
from .baselines import AdaptBConfig, BatchingMode, adaptb_dispatch, adaptb_timeouts, fc_only_latency
from .simulator import (
    EventLog,
    MetricsReport,
    NpuRuntime,
    PolicySpec,
    build_runtime,
    compute_metrics,
    run_simulation,
)
from . import presets

__version__ = "0.1.0"
