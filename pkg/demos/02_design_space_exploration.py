"""Run the exhaustive tile-size search on the synthetic 10-layer model.

Every feasible <T_R, T_P, T_C> is scored by a batch-size-weighted sum of
workload throughput with per-(layer, batch) optimal batching policies; the
winner's policies become the FBCB contents.
"""

from fluidbatch.dse import default_grid, run_dse, write_dse_report
from fluidbatch.npu import peak_performance
from fluidbatch.presets import PLATFORMS, build_synthetic10_model

model = build_synthetic10_model()
plat = PLATFORMS["zc706"]
cfg = default_grid(
    b_max=8,
    clock_hz=plat["clock_hz"],
    dsp_budget=plat["dsp_budget"],
    bram_budget_words=plat["bram_budget_words"],
)

res = run_dse(cfg, model)
d = res.best_design
print(f"{len(res.candidates)} feasible candidates")
print(f"winner <T_R={d.T_R}, T_P={d.T_P}, T_C={d.T_C}>, "
      f"objective {res.objective_value / 1e9:.1f} GOp/s, "
      f"peak {peak_performance(d) / 1e9:.1f} GOp/s")

print("\nthroughput by batch size:")
for b, tput in enumerate(res.per_batch_throughput, start=1):
    bar = "#" * int(40 * tput / peak_performance(d))
    print(f"  B={b}: {tput / 1e9:6.1f} GOp/s {bar}")

print("\nFBCB policies for layer 7 (R=49: row dim far below the pipeline depth):")
for b in range(1, 9):
    b_r, b_p, k = res.fbcb.lookup(7, b)
    print(f"  B_act={b}: B_R={b_r} B_P={b_p} k={k.value}")

write_dse_report(res, "dse_report.csv")
print("\nper-candidate scores written to dse_report.csv")
