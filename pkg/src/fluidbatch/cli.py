"""Command-line front end: DSE runs, single simulations and experiment sweeps.

Experiments are described by a JSON config file whose keys are mirrored
one-to-one by command-line flags (flags override the file).  All randomness
flows from the explicit seed list.  Outputs land in --out-dir (or
$FLUIDBATCH_OUT_DIR): results.csv, summary.csv, events/*.log, design/FBCB
files and the per-candidate DSE report.
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path

from . import presets
from .baselines import adaptb_timeouts
from .dse import (
    DseConfig,
    MODE_FLUID,
    MODE_FLUID_NOSTACK,
    MODE_P_UNIFORM,
    MODE_R_UNIFORM,
    _run_fc_only_dse,
    default_grid,
    fbcb_for_design,
    run_baseline_dse,
    run_dse,
    write_dse_report,
)
from .errors import ConfigurationError, FluidBatchError
from .npu import NpuDesign, load_design, peak_performance, save_design, save_fbcb
from .scheduler import SloConfig
from .simulator import (
    NpuRuntime,
    PolicySpec,
    build_runtime,
    compute_metrics,
    run_simulation,
)
from .workload import ModelSpec, assign_exits, gen_poisson_arrivals, load_model

POLICY_CHOICES = (
    "fluidb", "serial",
    "fc-adaptb-s", "fc-adaptb-m", "fc-adaptb-l",
    "r-adaptb-s", "r-adaptb-m", "r-adaptb-l",
    "lazy",
)

RESULT_COLUMNS = [
    "policy", "arrival_rate", "seed", "slo", "n_samples",
    "processing_rate", "avg_latency", "p99_latency", "violation_rate", "utilisation",
]
SUMMARY_COLUMNS = [
    "policy", "arrival_rate", "slo",
    "processing_rate", "avg_latency", "p99_latency", "violation_rate", "utilisation",
]


@dataclass
class ExperimentConfig:
    model: str = "synthetic10"
    design: str = "dse"  # "dse", a preset name, or a design-file path
    platform: str = "zc706"
    policies: list[str] = field(default_factory=lambda: ["fluidb", "serial"])
    rates: list[float] = field(default_factory=lambda: [5, 10, 15, 20, 25])
    slo: float = 0.4
    slos: list[float] = field(default_factory=list)  # slo-sweep x-axis
    b_max: int = 8
    seeds: list[int] = field(default_factory=lambda: [0, 1, 2])
    n_samples: int = 1000
    warmup_frac: float = 0.05
    t_r_candidates: list[int] = field(default_factory=lambda: [1024, 2048, 4096])
    t_p_candidates: list[int] = field(default_factory=lambda: [2, 4, 8, 16, 32])
    t_c_candidates: list[int] = field(default_factory=lambda: [16, 32, 64, 128, 256])
    out_dir: str = ""
    workers: int = 1

    def validate(self):
        if any(r <= 0 for r in self.rates):
            raise ConfigurationError("arrival rates must be > 0")
        for pol in self.policies:
            if pol not in POLICY_CHOICES:
                raise ConfigurationError(f"unknown policy {pol!r}")
        if self.platform not in presets.PLATFORMS:
            raise ConfigurationError(f"unknown platform {self.platform!r}")


def load_config(path: str | None, overrides: dict) -> ExperimentConfig:
    cfg = ExperimentConfig()
    if path:
        doc = json.loads(Path(path).read_text())
        unknown = set(doc) - set(vars(cfg))
        if unknown:
            raise ConfigurationError(f"unknown config keys: {sorted(unknown)}")
        for k, v in doc.items():
            setattr(cfg, k, v)
    for k, v in overrides.items():
        if v is not None:
            setattr(cfg, k, v)
    if not cfg.out_dir:
        cfg.out_dir = os.environ.get("FLUIDBATCH_OUT_DIR", "fluidbatch_out")
    cfg.validate()
    return cfg


def resolve_model(name: str) -> ModelSpec:
    if name in presets._BUILDERS:
        return presets.model_preset(name)
    if Path(name).exists():
        return load_model(name)
    raise ConfigurationError(f"model {name!r} is neither a preset nor an existing file")


def grid_config(cfg: ExperimentConfig) -> DseConfig:
    plat = presets.PLATFORMS[cfg.platform]
    return DseConfig(
        t_r_candidates=tuple(cfg.t_r_candidates),
        t_p_candidates=tuple(cfg.t_p_candidates),
        t_c_candidates=tuple(cfg.t_c_candidates),
        b_max=cfg.b_max,
        clock_hz=plat["clock_hz"],
        dsp_budget=plat["dsp_budget"],
        bram_budget_words=plat["bram_budget_words"],
    )


def resolve_fluid_design(cfg: ExperimentConfig, model: ModelSpec):
    """Design + FBCB for the fluid policy: pinned preset/file, or a DSE run."""
    if cfg.design == "dse":
        res = run_dse(grid_config(cfg), model)
        return res.best_design, res.fbcb, res
    if cfg.design in presets.DESIGN_PRESETS:
        design = presets.design_preset(cfg.design)
    elif Path(cfg.design).exists():
        design = load_design(cfg.design)
    else:
        raise ConfigurationError(f"design {cfg.design!r} is neither a preset nor a file")
    return design, fbcb_for_design(design, model, cfg.b_max), None


def build_policy_runtimes(cfg: ExperimentConfig, model: ModelSpec):
    """One (runtime, PolicySpec) per requested policy, each on its own NPU.

    Baselines get their own pinned-mode DSE run over the same grid, mirroring
    the evaluation protocol; the fluid policy uses the configured design.
    """
    gcfg = grid_config(cfg)
    timeouts = adaptb_timeouts(cfg.slo)
    out = {}
    for pol in cfg.policies:
        if pol == "fluidb":
            design, fbcb, _ = resolve_fluid_design(cfg, model)
            rt = build_runtime(model, design, pol, cfg.b_max, fbcb)
            spec = PolicySpec("fluidb")
        else:
            res = run_baseline_dse(gcfg, model, pol)
            rt = build_runtime(model, res.best_design, pol, cfg.b_max)
            timeout = timeouts[pol[-1]] if "adaptb" in pol else None
            spec = PolicySpec(pol, timeout_s=timeout)
        out[pol] = (rt, spec)
    return out


def _one_run(args):
    rt, spec, model, rate, n, seed, slo, b_max, warmup = args
    trace = assign_exits(gen_poisson_arrivals(rate, n, seed=seed), model.exits, seed=seed + 10_000)
    log = run_simulation(rt, spec, trace, SloConfig(slo, b_max))
    rep = compute_metrics(log, warmup_frac=warmup)
    return rep, log.to_text()


def _run_grid(cfg: ExperimentConfig, runtimes, model, rates, slo, events_dir: Path):
    """Execute policy x rate x seed in deterministic grid order."""
    grid = [
        (pol, rate, seed)
        for pol in cfg.policies
        for rate in rates
        for seed in cfg.seeds
    ]
    jobs = [
        (runtimes[pol][0], runtimes[pol][1], model, rate, cfg.n_samples, seed,
         slo, cfg.b_max, cfg.warmup_frac)
        for pol, rate, seed in grid
    ]
    if cfg.workers > 1:
        with ProcessPoolExecutor(max_workers=cfg.workers) as pool:
            outcomes = list(pool.map(_one_run, jobs))
    else:
        outcomes = [_one_run(j) for j in jobs]
    rows = []
    events_dir.mkdir(parents=True, exist_ok=True)
    for (pol, rate, seed), (rep, log_text) in zip(grid, outcomes):
        (events_dir / f"{pol}_r{rate:g}_s{seed}.log").write_text(log_text)
        rows.append({
            "policy": pol, "arrival_rate": rate, "seed": seed, "slo": slo,
            "n_samples": cfg.n_samples, "report": rep,
        })
    return rows


def _write_results_csv(rows, path: Path):
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(RESULT_COLUMNS)
        for r in rows:
            w.writerow([r["policy"], f"{r['arrival_rate']:g}", r["seed"], f"{r['slo']:g}",
                        r["n_samples"]] + r["report"].row())


def _write_summary_csv(rows, path: Path):
    """Mean across seeds for each (policy, rate); order follows first occurrence."""
    groups: dict[tuple, list] = {}
    for r in rows:
        groups.setdefault((r["policy"], r["arrival_rate"], r["slo"]), []).append(r["report"])
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(SUMMARY_COLUMNS)
        for (pol, rate, slo), reps in groups.items():
            n = len(reps)
            means = [
                sum(rep.processing_rate for rep in reps) / n,
                sum(rep.avg_latency for rep in reps) / n,
                sum(rep.p99_latency for rep in reps) / n,
                sum(rep.violation_rate for rep in reps) / n,
                sum(rep.utilisation for rep in reps) / n,
            ]
            w.writerow([pol, f"{rate:g}", f"{slo:g}"] + [f"{v:.6f}" for v in means])


# ---------------------------------------------------------------------------
# Subcommands
# ---------------------------------------------------------------------------

def cmd_dse(cfg: ExperimentConfig) -> int:
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    model = resolve_model(cfg.model)
    res = run_dse(grid_config(cfg), model)
    save_design(res.best_design, out / "design.json")
    save_fbcb(res.fbcb, out / "fbcb.json")
    write_dse_report(res, out / "dse_report.csv")
    d = res.best_design
    print(f"winner <T_R={d.T_R}, T_P={d.T_P}, T_C={d.T_C}> "
          f"objective {res.objective_value / 1e9:.2f} GOp/s "
          f"({len(res.candidates)} candidates)")
    print(f"wrote {out / 'design.json'}, {out / 'fbcb.json'}, {out / 'dse_report.csv'}")
    return 0


def cmd_run(cfg: ExperimentConfig) -> int:
    out = Path(cfg.out_dir)
    model = resolve_model(cfg.model)
    runtimes = build_policy_runtimes(cfg, model)
    rows = _run_grid(cfg, runtimes, model, cfg.rates[:1], cfg.slo, out / "events")
    _write_results_csv(rows, out / "results.csv")
    for r in rows:
        rep = r["report"]
        print(f"{r['policy']} @ {r['arrival_rate']:g}/s seed {r['seed']}: "
              f"rate {rep.processing_rate:.2f}/s avg {rep.avg_latency * 1e3:.1f} ms "
              f"p99 {rep.p99_latency * 1e3:.1f} ms viol {rep.violation_rate:.3f} "
              f"util {rep.utilisation:.3f}")
    return 0


def cmd_sweep(cfg: ExperimentConfig) -> int:
    out = Path(cfg.out_dir)
    model = resolve_model(cfg.model)
    runtimes = build_policy_runtimes(cfg, model)
    rows = _run_grid(cfg, runtimes, model, cfg.rates, cfg.slo, out / "events")
    _write_results_csv(rows, out / "results.csv")
    _write_summary_csv(rows, out / "summary.csv")
    print(f"wrote {len(rows)} rows to {out / 'results.csv'}; summary in {out / 'summary.csv'}")
    return 0


ABLATION_MODES = [
    ("fluidb", MODE_FLUID),
    ("fluidb-nostack", MODE_FLUID_NOSTACK),
    ("r-batching", MODE_R_UNIFORM),
    ("p-batching", MODE_P_UNIFORM),
    ("fc-only", None),  # handled by the FC-only evaluator
]


def cmd_ablate(cfg: ExperimentConfig) -> int:
    """Static-batch throughput of each batching strategy, without early exits."""
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    model = resolve_model(cfg.model)
    gcfg = grid_config(cfg)
    path = out / "ablation.csv"
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["policy", "batch_size", "gops", "peak_gops"])
        for name, mode in ABLATION_MODES:
            res = _run_fc_only_dse(gcfg, model) if mode is None else run_dse(gcfg, model, mode)
            peak = peak_performance(res.best_design) / 1e9
            for b, tput in enumerate(res.per_batch_throughput, start=1):
                w.writerow([name, b, f"{tput / 1e9:.6f}", f"{peak:.6f}"])
    print(f"wrote {path}")
    return 0


def cmd_slo_sweep(cfg: ExperimentConfig) -> int:
    """Violation rate as a function of the latency SLO at a fixed arrival rate."""
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    model = resolve_model(cfg.model)
    rate = cfg.rates[0]
    slos = cfg.slos or [0.1, 0.2, 0.3, 0.4, 0.6, 0.8]
    path = out / "slo_sweep.csv"
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["policy", "slo", "arrival_rate",
                    "violation_rate", "avg_latency", "p99_latency"])
        for slo in slos:
            # SLO changes slack budgets and AdaptB windows: rebuild per point
            slo_cfg = replace_slo(cfg, slo)
            runtimes = build_policy_runtimes(slo_cfg, model)
            rows = _run_grid(slo_cfg, runtimes, model, [rate], slo,
                             out / "events" / f"slo_{slo:g}")
            groups: dict[str, list] = {}
            for r in rows:
                groups.setdefault(r["policy"], []).append(r["report"])
            for pol, reps in groups.items():
                n = len(reps)
                w.writerow([
                    pol, f"{slo:g}", f"{rate:g}",
                    f"{sum(r.violation_rate for r in reps) / n:.6f}",
                    f"{sum(r.avg_latency for r in reps) / n:.6f}",
                    f"{sum(r.p99_latency for r in reps) / n:.6f}",
                ])
    print(f"wrote {path}")
    return 0


def replace_slo(cfg: ExperimentConfig, slo: float) -> ExperimentConfig:
    out = ExperimentConfig(**vars(cfg))
    out.slo = slo
    return out


# ---------------------------------------------------------------------------

def _add_common_flags(p: argparse.ArgumentParser):
    p.add_argument("--config", help="JSON experiment config; flags override its keys")
    p.add_argument("--model", help="model preset name or model-file path")
    p.add_argument("--design", help="'dse', a design preset name, or a design-file path")
    p.add_argument("--platform", choices=sorted(presets.PLATFORMS))
    p.add_argument("--policies", type=lambda s: s.split(","), metavar="P1,P2,...")
    p.add_argument("--rates", type=lambda s: [float(x) for x in s.split(",")])
    p.add_argument("--slo", type=float)
    p.add_argument("--slos", type=lambda s: [float(x) for x in s.split(",")])
    p.add_argument("--b-max", dest="b_max", type=int)
    p.add_argument("--seeds", type=lambda s: [int(x) for x in s.split(",")])
    p.add_argument("--n-samples", dest="n_samples", type=int)
    p.add_argument("--warmup-frac", dest="warmup_frac", type=float)
    p.add_argument("--t-r-candidates", dest="t_r_candidates",
                   type=lambda s: [int(x) for x in s.split(",")])
    p.add_argument("--t-p-candidates", dest="t_p_candidates",
                   type=lambda s: [int(x) for x in s.split(",")])
    p.add_argument("--t-c-candidates", dest="t_c_candidates",
                   type=lambda s: [int(x) for x in s.split(",")])
    p.add_argument("--out-dir", dest="out_dir",
                   help="output directory (default $FLUIDBATCH_OUT_DIR or ./fluidbatch_out)")
    p.add_argument("--workers", type=int)


COMMANDS = {
    "dse": cmd_dse,
    "run": cmd_run,
    "sweep": cmd_sweep,
    "ablate": cmd_ablate,
    "slo-sweep": cmd_slo_sweep,
}


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="fluidbatch",
        description="Simulate batched early-exit DNN serving on a tiled-GEMM edge NPU.",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        _add_common_flags(sub.add_parser(name))
    args = vars(parser.parse_args(argv))
    command = args.pop("command")
    config_path = args.pop("config")
    try:
        cfg = load_config(config_path, args)
        return COMMANDS[command](cfg)
    except FluidBatchError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
