"""Walk through the NPU latency model on a single convolution layer.

Shows how batched matrix dims are formed for different row/reduction splits,
what PE stacking does to the tile grid, and where the roofline lands.
"""

from fluidbatch import LayerKind, LayerPolicy, LayerSpec, Stacking
from fluidbatch.npu import (
    fluid_dims,
    layer_latency,
    layer_throughput,
    peak_performance,
    policy_latency,
    stack_pes,
)
from fluidbatch.presets import design_preset

design = design_preset("zc706_resnet50")
print(f"design <T_R={design.T_R}, T_P={design.T_P}, T_C={design.T_C}> "
      f"@ {design.clock_hz / 1e6:.0f} MHz, peak {peak_performance(design) / 1e9:.1f} GOp/s")

# a mid-network ResNet conv: 14x14 spatial, 3x3 kernel over 128 channels
layer = LayerSpec(index=0, kind=LayerKind.CONV, R=196, P=1152, C=256)
print(f"\nlayer R={layer.R} P={layer.P} C={layer.C} ({layer.macs / 1e6:.1f} MMACs)")

print("\nbatch-dim splits at B_act=4 (B_R samples along rows, rest along P):")
for b_r in range(1, 5):
    dims = fluid_dims(layer, B_act=4, B_R=b_r, T_P=design.T_P)
    lat = layer_latency(design, dims)
    print(f"  B_R={b_r}: R_hat={dims.R_hat:5d} P_hat={dims.P_hat:5d} -> {lat * 1e3:7.3f} ms")

print("\nstacking k=2 halves the PE count and doubles each MAC tree:")
stacked = stack_pes(design, 2)
print(f"  <{stacked.T_R}, {stacked.T_P}, {stacked.T_C}>")

print("\nbest throughput per batch size (brute force over B_R and k):")
from fluidbatch.dse import optimise_layer_policy

for b in (1, 2, 4, 8):
    pol = optimise_layer_policy(design, layer, b)
    tput = layer_throughput(design, layer, b, pol)
    print(f"  B={b}: B_R={pol.B_R} k={pol.k.value:>3s} -> {tput / 1e9:6.1f} GOp/s "
          f"({100 * tput / peak_performance(design):.0f}% of peak)")
