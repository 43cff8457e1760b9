"""DNN workload definitions and stochastic request-traffic generation.

A model is an ordered list of GEMM-shaped layers (conv and FC layers lowered
to R x P by P x C matrix products via Toeplitz/im2col formation) plus a set of
exit points with a marginal exit-rate distribution.  Traffic is a Poisson
arrival process with an i.i.d. categorical exit outcome per sample.
"""

from __future__ import annotations

import json
import warnings
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path

import numpy as np

from .errors import (
    InvalidArgumentError,
    InvalidDescriptorError,
    InvalidProfileError,
)

RATE_SUM_TOL = 1e-9


class LayerKind(Enum):
    CONV = "CONV"
    FC = "FC"


@dataclass(frozen=True)
class LayerSpec:
    """One layer as a GEMM: output rows R, reduction length P, output channels C."""

    index: int
    kind: LayerKind
    R: int
    P: int
    C: int

    def __post_init__(self):
        if self.R < 1 or self.P < 1 or self.C < 1:
            raise InvalidArgumentError(
                f"layer {self.index}: R, P, C must be >= 1, got ({self.R}, {self.P}, {self.C})"
            )
        if self.kind == LayerKind.FC and self.R != 1:
            raise InvalidArgumentError(
                f"layer {self.index}: FC layers have R=1 for a single sample, got R={self.R}"
            )

    @property
    def macs(self) -> int:
        return self.R * self.P * self.C


@dataclass(frozen=True)
class ExitProfile:
    """Exit points (layer indices, ordered) and the marginal probability of each."""

    exit_layer_indices: tuple[int, ...]
    exit_rates: tuple[float, ...]

    def __post_init__(self):
        object.__setattr__(self, "exit_layer_indices", tuple(self.exit_layer_indices))
        object.__setattr__(self, "exit_rates", tuple(self.exit_rates))
        self.validate()

    def validate(self):
        idx, rates = self.exit_layer_indices, self.exit_rates
        if len(idx) != len(rates) or not idx:
            raise InvalidProfileError("exit indices and rates must be non-empty and equal length")
        if any(r < 0.0 or r > 1.0 for r in rates):
            raise InvalidProfileError(f"exit rates must lie in [0, 1], got {rates}")
        if abs(sum(rates) - 1.0) > RATE_SUM_TOL:
            raise InvalidProfileError(f"exit rates must sum to 1, got {sum(rates)!r}")
        if any(b <= a for a, b in zip(idx, idx[1:])):
            raise InvalidProfileError(f"exit layer indices must be strictly increasing, got {idx}")

    @property
    def n_exits(self) -> int:
        return len(self.exit_layer_indices)

    @property
    def intermediate_indices(self) -> tuple[int, ...]:
        """Exit indices (not layer indices) of all exits except the final one."""
        return tuple(range(self.n_exits - 1))


@dataclass(frozen=True)
class ModelSpec:
    name: str
    layers: tuple[LayerSpec, ...]
    exits: ExitProfile

    def __post_init__(self):
        object.__setattr__(self, "layers", tuple(self.layers))
        n = len(self.layers)
        for i, layer in enumerate(self.layers):
            if layer.index != i:
                raise InvalidArgumentError(f"layer indices must be dense 0..L-1, got {layer.index} at {i}")
        for li in self.exits.exit_layer_indices:
            if not 0 <= li < n:
                raise InvalidProfileError(f"exit layer index {li} outside [0, {n - 1}]")
        if self.exits.exit_layer_indices[-1] != n - 1:
            raise InvalidProfileError(
                f"final exit must sit after the last layer ({n - 1}), got {self.exits.exit_layer_indices[-1]}"
            )

    @property
    def n_layers(self) -> int:
        return len(self.layers)

    def total_macs(self) -> int:
        return sum(l.macs for l in self.layers)

    def macs_to_exit(self, exit_idx: int) -> int:
        """MACs of all layers up to and including the given exit's layer."""
        last = self.exits.exit_layer_indices[exit_idx]
        return sum(l.macs for l in self.layers[: last + 1])


@dataclass(frozen=True)
class ArrivalTrace:
    """Request stream: arrival timestamps (s), dense sample ids, optional per-sample exits."""

    arrival_times: np.ndarray
    sample_ids: np.ndarray
    assigned_exits: np.ndarray | None = None

    def __post_init__(self):
        if np.any(np.diff(self.arrival_times) < 0):
            raise InvalidArgumentError("arrival_times must be non-decreasing")
        if not np.array_equal(self.sample_ids, np.arange(len(self.arrival_times))):
            raise InvalidArgumentError("sample_ids must be dense 0..n-1")

    @property
    def n_samples(self) -> int:
        return len(self.arrival_times)


def gen_poisson_arrivals(rate: float, n_samples: int, seed: int) -> ArrivalTrace:
    """Generate n_samples Poisson arrivals at the given rate (samples/s).

    Interarrival gaps are i.i.d. Exp(rate); timestamps are their cumulative
    sums.  Deterministic for a fixed seed.
    """
    if rate <= 0:
        raise InvalidArgumentError(f"arrival rate must be > 0, got {rate}")
    if n_samples < 1:
        raise InvalidArgumentError(f"n_samples must be >= 1, got {n_samples}")
    rng = np.random.default_rng(seed)
    gaps = rng.exponential(scale=1.0 / rate, size=n_samples)
    times = np.cumsum(gaps)
    return ArrivalTrace(arrival_times=times, sample_ids=np.arange(n_samples))


def assign_exits(trace: ArrivalTrace, profile: ExitProfile, seed: int) -> ArrivalTrace:
    """Draw an i.i.d. exit index per sample from the profile's categorical rates."""
    profile.validate()
    rng = np.random.default_rng(seed)
    exits = rng.choice(profile.n_exits, size=trace.n_samples, p=np.asarray(profile.exit_rates))
    return ArrivalTrace(
        arrival_times=trace.arrival_times,
        sample_ids=trace.sample_ids,
        assigned_exits=exits.astype(np.int64),
    )


def place_exits_equidistant(layers: list[LayerSpec] | tuple[LayerSpec, ...], n_intermediate: int) -> list[int]:
    """Place n_intermediate exits equidistantly in cumulative MACs, plus the final exit.

    The i-th intermediate exit lands after the first layer whose cumulative MAC
    count reaches i/(n_intermediate+1) of the model total.  An intermediate
    exit landing on the final layer is pulled back to L-2; collisions between
    intermediates shift the later one forward, and exits pushed past L-2 are
    dropped with a warning.
    """
    if n_intermediate < 1:
        raise InvalidArgumentError("n_intermediate must be >= 1")
    n = len(layers)
    if n < n_intermediate + 1:
        raise InvalidArgumentError(f"model with {n} layers cannot host {n_intermediate + 1} exits")
    cum = np.cumsum([l.macs for l in layers])
    total = cum[-1]
    indices: list[int] = []
    for i in range(1, n_intermediate + 1):
        threshold = total * i / (n_intermediate + 1)
        idx = int(np.searchsorted(cum, threshold))
        idx = min(idx, n - 2)  # layer L-1 is reserved for the final exit
        while indices and idx <= indices[-1]:
            idx = indices[-1] + 1
        if idx > n - 2:
            warnings.warn(
                f"dropping intermediate exit {i}: no layer left before the final exit",
                stacklevel=2,
            )
            continue
        indices.append(idx)
    indices.append(n - 1)
    return indices


@dataclass(frozen=True)
class ConvDescriptor:
    """One conv/FC layer of a network descriptor.

    For conv layers the input is (in_h, in_w, in_ch); when omitted it is taken
    from the previous layer's output (chain consistency is then enforced).
    Branch layers in flattened non-chain topologies declare their input
    explicitly.  ``pool`` entries only transform the spatial dims.
    """

    kind: str  # "conv" | "fc" | "pool"
    out_ch: int = 0
    kernel: tuple[int, int] = (1, 1)
    stride: int = 1
    padding: int | tuple[int, int] | None = None  # default: kernel // 2 per axis ("same" for odd kernels)
    in_h: int | None = None
    in_w: int | None = None
    in_ch: int | None = None
    in_features: int = 0  # fc only
    out_features: int = 0  # fc only
    branch_input: bool = False  # input comes from an earlier point of a flattened graph

    def pad(self) -> tuple[int, int]:
        if self.padding is None:
            return (self.kernel[0] // 2, self.kernel[1] // 2)
        if isinstance(self.padding, int):
            return (self.padding, self.padding)
        return self.padding


def _conv_output_hw(h: int, w: int, kernel: tuple[int, int], stride: int, pad: tuple[int, int]) -> tuple[int, int]:
    oh = (h + 2 * pad[0] - kernel[0]) // stride + 1
    ow = (w + 2 * pad[1] - kernel[1]) // stride + 1
    return oh, ow


def conv_net_to_gemm(descriptors: list[ConvDescriptor]) -> list[LayerSpec]:
    """Lower a conv-network description to GEMM layer dims.

    Per conv layer: R = H_out * W_out, P = C_in * k_h * k_w, C = C_out.
    Per FC layer: R = 1, P = in_features, C = out_features.
    """
    layers: list[LayerSpec] = []
    prev_out: tuple[int, int, int] | None = None  # (h, w, ch) of the running chain
    idx = 0
    for d in descriptors:
        if d.kind == "pool":
            if prev_out is None:
                raise InvalidDescriptorError("pool layer with no preceding output")
            h, w, ch = prev_out
            oh, ow = _conv_output_hw(h, w, d.kernel, d.stride, d.pad())
            prev_out = (oh, ow, ch)
            continue
        if d.kind == "fc":
            if prev_out is not None and not d.branch_input:
                flat = prev_out[0] * prev_out[1] * prev_out[2]
                # allow either flattened activations or a pooled feature vector
                if d.in_features not in (flat, prev_out[2]):
                    raise InvalidDescriptorError(
                        f"fc layer expects {d.in_features} inputs but predecessor provides {flat} (or {prev_out[2]} pooled)"
                    )
            layers.append(LayerSpec(index=idx, kind=LayerKind.FC, R=1, P=d.in_features, C=d.out_features))
            prev_out = (1, 1, d.out_features)
            idx += 1
            continue
        if d.kind != "conv":
            raise InvalidDescriptorError(f"unknown layer kind {d.kind!r}")
        explicit = d.in_h is not None or d.in_w is not None or d.in_ch is not None
        if explicit:
            if d.in_h is None or d.in_w is None or d.in_ch is None:
                raise InvalidDescriptorError("explicit conv input must give in_h, in_w and in_ch")
            h, w, ch = d.in_h, d.in_w, d.in_ch
            if prev_out is not None and not d.branch_input and (h, w, ch) != prev_out:
                raise InvalidDescriptorError(
                    f"conv layer {idx}: declared input {(h, w, ch)} does not match "
                    f"predecessor output {prev_out}"
                )
        else:
            if prev_out is None:
                raise InvalidDescriptorError("first conv layer must declare its input shape")
            h, w, ch = prev_out
        oh, ow = _conv_output_hw(h, w, d.kernel, d.stride, d.pad())
        if oh < 1 or ow < 1:
            raise InvalidDescriptorError(f"conv layer {idx}: kernel/stride produce empty output ({oh}x{ow})")
        layers.append(
            LayerSpec(
                index=idx,
                kind=LayerKind.CONV,
                R=oh * ow,
                P=ch * d.kernel[0] * d.kernel[1],
                C=d.out_ch,
            )
        )
        prev_out = (oh, ow, d.out_ch)
        idx += 1
    return layers


# ---------------------------------------------------------------------------
# Model files: JSON documents with layers [{index, kind, R, P, C}] and exits
# {layer_indices: [...], rates: [...]}.
# ---------------------------------------------------------------------------

def save_model(model: ModelSpec, path: str | Path):
    doc = {
        "name": model.name,
        "layers": [
            {"index": l.index, "kind": l.kind.value, "R": l.R, "P": l.P, "C": l.C}
            for l in model.layers
        ],
        "exits": {
            "layer_indices": list(model.exits.exit_layer_indices),
            "rates": list(model.exits.exit_rates),
        },
    }
    Path(path).write_text(json.dumps(doc, indent=1) + "\n")


def load_model(path: str | Path) -> ModelSpec:
    doc = json.loads(Path(path).read_text())
    layers = tuple(
        LayerSpec(index=l["index"], kind=LayerKind(l["kind"]), R=l["R"], P=l["P"], C=l["C"])
        for l in doc["layers"]
    )
    exits = ExitProfile(
        exit_layer_indices=tuple(doc["exits"]["layer_indices"]),
        exit_rates=tuple(doc["exits"]["rates"]),
    )
    return ModelSpec(name=doc["name"], layers=layers, exits=exits)
