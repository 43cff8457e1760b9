"""Compare serving policies on the ResNet-50 workload at rising traffic.

Each policy runs on its own NPU design (a pinned-mode DSE over the same
grid, as in the evaluation protocol) against identical Poisson traces and
exit outcomes.  Watch SERIAL's queue blow up while the exit-aware scheduler
keeps latency bounded and utilisation high.
"""

from fluidbatch import SloConfig, assign_exits, gen_poisson_arrivals
from fluidbatch.baselines import adaptb_timeouts
from fluidbatch.dse import default_grid, run_baseline_dse, run_dse
from fluidbatch.presets import PLATFORMS, build_resnet50_model
from fluidbatch.simulator import PolicySpec, build_runtime, compute_metrics, run_simulation

model = build_resnet50_model()
plat = PLATFORMS["zc706"]
grid = default_grid(b_max=8, clock_hz=plat["clock_hz"], dsp_budget=plat["dsp_budget"],
                    bram_budget_words=plat["bram_budget_words"])
slo = SloConfig(t_slo=0.4, b_max=8)

print("running per-policy design-space exploration...")
fluid = run_dse(grid, model)
runtimes = {
    "fluidb": (build_runtime(model, fluid.best_design, "fluidb", 8, fluid.fbcb),
               PolicySpec("fluidb")),
    "serial": (build_runtime(model, run_baseline_dse(grid, model, "serial").best_design,
                             "serial", 8), PolicySpec("serial")),
    "r-adaptb-s": (build_runtime(model, run_baseline_dse(grid, model, "r-adaptb-s").best_design,
                                 "r-adaptb-s", 8),
                   PolicySpec("r-adaptb-s", timeout_s=adaptb_timeouts(slo.t_slo)["s"])),
    "lazy": (build_runtime(model, run_baseline_dse(grid, model, "lazy").best_design,
                           "lazy", 8), PolicySpec("lazy")),
}

print(f"{'rate':>6s} {'policy':>12s} {'proc/s':>8s} {'avg ms':>8s} {'p99 ms':>9s} "
      f"{'viol':>6s} {'util':>6s}")
for rate in (3, 8, 14):
    trace = assign_exits(gen_poisson_arrivals(rate, 600, seed=1), model.exits, seed=2)
    for name, (rt, spec) in runtimes.items():
        rep = compute_metrics(run_simulation(rt, spec, trace, slo))
        print(f"{rate:6.0f} {name:>12s} {rep.processing_rate:8.2f} "
              f"{rep.avg_latency * 1e3:8.1f} {rep.p99_latency * 1e3:9.1f} "
              f"{rep.violation_rate:6.3f} {rep.utilisation:6.3f}")
