"""Shipped workload models and NPU design points.

Three model tables ship as package data: a ResNet-50-derived 53-conv GEMM
table, an Inception-v3-derived table, and a 10-layer synthetic model for fast
tests.  Both backbone tables are generated from the standard architecture
definitions via conv_net_to_gemm; residual/branch convolutions are flattened
into execution order with explicit input shapes, and the classifier head is
folded into the final exit (exit heads are modelled as zero compute, so
segment latencies are attributable to backbone layers alone).  Each model
carries three intermediate exits placed equidistantly in cumulative MACs,
with the published marginal exit-rate profiles.

Design presets mirror the evaluated platform design points; platform budgets
expose the DSP and buffer-word limits used by the feasibility filter.
"""

from __future__ import annotations

from importlib import resources
from pathlib import Path

from .npu import NpuDesign
from .workload import (
    ConvDescriptor,
    ExitProfile,
    ModelSpec,
    conv_net_to_gemm,
    load_model,
    place_exits_equidistant,
    save_model,
)

RESNET50_EXIT_RATES = (0.051, 0.169, 0.090, 0.690)
INCEPTION_V3_EXIT_RATES = (0.145, 0.186, 0.222, 0.447)

# Platform resource envelopes (16-bit words for on-chip buffers).
PLATFORMS = {
    "zc706": dict(clock_hz=150e6, dsp_budget=900, bram_budget_words=1_258_335),
    "zcu104": dict(clock_hz=200e6, dsp_budget=1728, bram_budget_words=2_490_537),
}

DESIGN_PRESETS = {
    "zc706_resnet50": dict(T_R=4652, T_P=7, T_C=128, **PLATFORMS["zc706"]),
    "zcu104": dict(T_R=6832, T_P=10, T_C=172, **PLATFORMS["zcu104"]),
    "zc706_inception_v3": dict(T_R=2742, T_P=4, T_C=225, **PLATFORMS["zc706"]),
}


def design_preset(name: str) -> NpuDesign:
    return NpuDesign(name=name, **DESIGN_PRESETS[name])


def resnet50_descriptors() -> list[ConvDescriptor]:
    """All 53 convolutions of ResNet-50 at 224x224, in execution order.

    Bottleneck blocks contribute their three convs followed by the projection
    shortcut conv where present; projections read the block input, so they are
    flagged as branch heads of the flattened residual graph.
    """
    d: list[ConvDescriptor] = []
    d.append(ConvDescriptor("conv", out_ch=64, kernel=(7, 7), stride=2, padding=3,
                            in_h=224, in_w=224, in_ch=3))
    d.append(ConvDescriptor("pool", kernel=(3, 3), stride=2, padding=1))  # -> 56x56
    h = w = 56
    in_ch = 64
    stage_cfg = [  # (blocks, width, out_ch, stride of first block)
        (3, 64, 256, 1),
        (4, 128, 512, 2),
        (6, 256, 1024, 2),
        (3, 512, 2048, 2),
    ]
    for blocks, width, out_ch, first_stride in stage_cfg:
        for blk in range(blocks):
            stride = first_stride if blk == 0 else 1
            oh, ow = h // stride, w // stride
            d.append(ConvDescriptor("conv", out_ch=width, kernel=(1, 1),
                                    in_h=h, in_w=w, in_ch=in_ch))
            d.append(ConvDescriptor("conv", out_ch=width, kernel=(3, 3), stride=stride,
                                    in_h=h, in_w=w, in_ch=width))
            d.append(ConvDescriptor("conv", out_ch=out_ch, kernel=(1, 1),
                                    in_h=oh, in_w=ow, in_ch=width))
            if blk == 0:  # projection shortcut on the block input
                d.append(ConvDescriptor("conv", out_ch=out_ch, kernel=(1, 1), stride=stride,
                                        in_h=h, in_w=w, in_ch=in_ch, branch_input=True))
            h, w, in_ch = oh, ow, out_ch
    return d


def inception_v3_descriptors() -> list[ConvDescriptor]:
    """The 94 inference-path convolutions of Inception-v3 at 299x299."""
    d: list[ConvDescriptor] = []

    def conv(h, w, cin, cout, k, stride=1, pad=None, branch=False):
        d.append(ConvDescriptor("conv", out_ch=cout, kernel=k, stride=stride,
                                padding=pad, in_h=h, in_w=w, in_ch=cin,
                                branch_input=branch))

    # stem
    conv(299, 299, 3, 32, (3, 3), stride=2, pad=0)    # -> 149
    conv(149, 149, 32, 32, (3, 3), pad=0)             # -> 147
    conv(147, 147, 32, 64, (3, 3))                    # -> 147
    conv(73, 73, 64, 80, (1, 1), branch=True)         # after maxpool 3x3/2
    conv(73, 73, 80, 192, (3, 3), pad=0)              # -> 71
    # maxpool 3x3/2 -> 35; each block's branch heads read the concat input
    s, cin = 35, 192
    for pool_f in (32, 64, 64):  # InceptionA x3
        conv(s, s, cin, 64, (1, 1), branch=True)
        conv(s, s, cin, 48, (1, 1), branch=True)
        conv(s, s, 48, 64, (5, 5))
        conv(s, s, cin, 64, (1, 1), branch=True)
        conv(s, s, 64, 96, (3, 3))
        conv(s, s, 96, 96, (3, 3))
        conv(s, s, cin, pool_f, (1, 1), branch=True)
        cin = 64 + 64 + 96 + pool_f
    # InceptionB: 35 -> 17
    conv(s, s, cin, 384, (3, 3), stride=2, pad=0, branch=True)
    conv(s, s, cin, 64, (1, 1), branch=True)
    conv(s, s, 64, 96, (3, 3))
    conv(s, s, 96, 96, (3, 3), stride=2, pad=0)
    s, cin = 17, 384 + 96 + cin
    for c7 in (128, 160, 160, 192):  # InceptionC x4
        conv(s, s, cin, 192, (1, 1), branch=True)
        conv(s, s, cin, c7, (1, 1), branch=True)
        conv(s, s, c7, c7, (1, 7))
        conv(s, s, c7, 192, (7, 1))
        conv(s, s, cin, c7, (1, 1), branch=True)
        conv(s, s, c7, c7, (7, 1))
        conv(s, s, c7, c7, (1, 7))
        conv(s, s, c7, c7, (7, 1))
        conv(s, s, c7, 192, (1, 7))
        conv(s, s, cin, 192, (1, 1), branch=True)
    # InceptionD: 17 -> 8
    conv(s, s, cin, 192, (1, 1), branch=True)
    conv(s, s, 192, 320, (3, 3), stride=2, pad=0)
    conv(s, s, cin, 192, (1, 1), branch=True)
    conv(s, s, 192, 192, (1, 7))
    conv(s, s, 192, 192, (7, 1))
    conv(s, s, 192, 192, (3, 3), stride=2, pad=0)
    s, cin = 8, 320 + 192 + cin
    for _ in range(2):  # InceptionE x2
        conv(s, s, cin, 320, (1, 1), branch=True)
        conv(s, s, cin, 384, (1, 1), branch=True)
        conv(s, s, 384, 384, (1, 3))
        conv(s, s, 384, 384, (3, 1), branch=True)  # parallel split off the 1x1
        conv(s, s, cin, 448, (1, 1), branch=True)
        conv(s, s, 448, 384, (3, 3))
        conv(s, s, 384, 384, (1, 3))
        conv(s, s, 384, 384, (3, 1), branch=True)  # parallel split off the 3x3
        conv(s, s, cin, 192, (1, 1), branch=True)
        cin = 320 + 2 * 384 + 2 * 384 + 192
    return d


def _with_equidistant_exits(name: str, layers, rates) -> ModelSpec:
    exits = place_exits_equidistant(layers, n_intermediate=len(rates) - 1)
    return ModelSpec(name=name, layers=tuple(layers),
                     exits=ExitProfile(tuple(exits), tuple(rates)))


def build_resnet50_model() -> ModelSpec:
    return _with_equidistant_exits(
        "resnet50_ee4", conv_net_to_gemm(resnet50_descriptors()), RESNET50_EXIT_RATES
    )


def build_inception_v3_model() -> ModelSpec:
    return _with_equidistant_exits(
        "inception_v3_ee4", conv_net_to_gemm(inception_v3_descriptors()), INCEPTION_V3_EXIT_RATES
    )


def build_synthetic10_model() -> ModelSpec:
    """Small 10-layer model with heterogeneous dims for fast tests."""
    from .workload import LayerKind, LayerSpec

    dims = [
        (LayerKind.CONV, 3136, 64, 64),
        (LayerKind.CONV, 3136, 576, 64),
        (LayerKind.CONV, 784, 576, 128),
        (LayerKind.CONV, 784, 1152, 128),
        (LayerKind.CONV, 196, 1152, 256),
        (LayerKind.CONV, 196, 2304, 256),
        (LayerKind.CONV, 196, 2304, 256),
        (LayerKind.CONV, 49, 2304, 512),
        (LayerKind.CONV, 49, 4608, 512),
        (LayerKind.FC, 1, 512, 100),
    ]
    layers = tuple(
        LayerSpec(index=i, kind=k, R=r, P=p, C=c) for i, (k, r, p, c) in enumerate(dims)
    )
    exits = ExitProfile((2, 5, 7, 9), (0.1, 0.2, 0.2, 0.5))
    return ModelSpec(name="synthetic10", layers=layers, exits=exits)


_BUILDERS = {
    "resnet50_ee4": build_resnet50_model,
    "inception_v3_ee4": build_inception_v3_model,
    "synthetic10": build_synthetic10_model,
}


def data_dir() -> Path:
    return Path(resources.files("fluidbatch") / "data")


def model_preset(name: str) -> ModelSpec:
    """Load a shipped model table; falls back to rebuilding if data is absent."""
    path = data_dir() / f"{name}.json"
    if path.exists():
        return load_model(path)
    return _BUILDERS[name]()


def regenerate_data(out_dir: str | Path | None = None):
    """Rewrite the shipped model and design files from their builders."""
    from .npu import save_design

    out = Path(out_dir) if out_dir is not None else data_dir()
    out.mkdir(parents=True, exist_ok=True)
    for name, builder in _BUILDERS.items():
        save_model(builder(), out / f"{name}.json")
    for name in DESIGN_PRESETS:
        save_design(design_preset(name), out / f"{name}.json")
    return out
