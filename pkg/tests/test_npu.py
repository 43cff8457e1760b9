"""NPU model: batched dims, stacking, roofline latency, FBCB, latency LUT."""

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fluidbatch.errors import (
    InvalidArgumentError,
    InvalidPolicyError,
    PolicyLookupError,
    UnsupportedStackingError,
)
from fluidbatch.npu import (
    BatchedLayerDims,
    Fbcb,
    LayerPolicy,
    NpuDesign,
    Stacking,
    build_latency_lut,
    fbcb_lookup,
    fbcb_size_bits,
    fluid_dims,
    layer_latency,
    layer_throughput,
    peak_performance,
    pipeline_fill_cycles,
    policy_latency,
    segment_latency,
    stack_pes,
    uniform_fbcb,
)
from fluidbatch.workload import ExitProfile, LayerKind, LayerSpec, ModelSpec


def design(t_r=4652, t_p=7, t_c=128, clock=150e6, **kw):
    kw.setdefault("dsp_budget", max(900, t_p * t_c))
    kw.setdefault("bram_budget_words", 4 * (t_r * t_p + t_p * t_c + t_r * t_c))
    return NpuDesign(T_R=t_r, T_P=t_p, T_C=t_c, clock_hz=clock, **kw)


def layer(r, p, c, idx=0, kind=LayerKind.CONV):
    return LayerSpec(index=idx, kind=kind, R=r, P=p, C=c)


class TestFluidDims:
    def test_single_sample_identity(self):
        dims = fluid_dims(layer(196, 576, 64), B_act=1, B_R=1, T_P=7)
        assert (dims.R_hat, dims.P_hat) == (196, 576)

    def test_pure_row_batching(self):
        dims = fluid_dims(layer(196, 576, 64), B_act=4, B_R=4, T_P=7)
        assert (dims.R_hat, dims.P_hat) == (784, 576)

    def test_hybrid_split(self):
        # B_P = 3 groups of (576 + 576 mod 7) = 578 along the reduction dim
        dims = fluid_dims(layer(196, 576, 64), B_act=4, B_R=2, T_P=7)
        assert (dims.R_hat, dims.P_hat) == (392, 3 * 578)

    def test_strict_guard_mode(self):
        dims = fluid_dims(layer(196, 576, 64), B_act=4, B_R=4, T_P=7, strict_guards=True)
        assert dims.P_hat == 578  # guards applied even for a single P group

    def test_out_of_range_b_r(self):
        with pytest.raises(InvalidPolicyError):
            fluid_dims(layer(196, 576, 64), B_act=4, B_R=5, T_P=7)
        with pytest.raises(InvalidPolicyError):
            fluid_dims(layer(196, 576, 64), B_act=4, B_R=0, T_P=7)

    @given(
        st.integers(min_value=1, max_value=2000),  # R
        st.integers(min_value=1, max_value=4000),  # P
        st.integers(min_value=1, max_value=64),    # T_P
        st.integers(min_value=1, max_value=16),    # B_act
        st.data(),
    )
    @settings(max_examples=200, deadline=None)
    def test_sample_conservation_and_special_cases(self, r, p, t_p, b_act, data):
        b_r = data.draw(st.integers(min_value=1, max_value=b_act))
        lay = layer(r, p, 8)
        dims = fluid_dims(lay, b_act, b_r, t_p)
        b_p = b_act - b_r + 1
        assert b_r + b_p - 1 == b_act  # every sample appended exactly once
        assert dims.R_hat == b_r * r
        assert dims.useful_macs == b_act * lay.macs
        if b_r == b_act:
            assert dims.P_hat == p  # uniform R-batching
        if b_r == 1 and b_act > 1:
            assert dims.P_hat == b_act * (p + p % t_p)  # uniform P-batching
        strict = fluid_dims(lay, b_act, b_r, t_p, strict_guards=True)
        assert strict.P_hat == b_p * (p + p % t_p)  # printed-form guards


class TestStackPes:
    def test_double_stacking(self):
        d = design(4652, 7, 128)
        s = stack_pes(d, 2)
        assert (s.T_R, s.T_P, s.T_C) == (2326, 14, 64)
        assert s.clock_hz == d.clock_hz and s.dsp_budget == d.dsp_budget

    def test_identity(self):
        d = design()
        assert stack_pes(d, 1) is d

    def test_half_stacking_needs_even_t_p(self):
        with pytest.raises(UnsupportedStackingError):
            stack_pes(design(4652, 7, 128), 0.5)
        s = stack_pes(design(4652, 8, 112), 0.5)
        assert (s.T_R, s.T_P, s.T_C) == (2326, 4, 224)

    def test_invalid_factor(self):
        with pytest.raises(InvalidArgumentError):
            stack_pes(design(), 3)

    @given(st.integers(min_value=2, max_value=512), st.integers(min_value=2, max_value=256),
           st.sampled_from([Stacking.HALF, Stacking.TWO]))
    @settings(max_examples=100, deadline=None)
    def test_stacking_never_exceeds_mac_budget(self, t_p, t_c, k):
        if k == Stacking.HALF and t_p % 2:
            t_p += 1
        d = design(64, t_p, t_c)
        s = stack_pes(d, k)
        assert s.T_P * s.T_C <= t_p * t_c


class TestLayerLatency:
    def test_single_tile(self):
        d = design(64, 8, 16, clock=1e8)
        dims = BatchedLayerDims(R_hat=64, P_hat=8, C=16, useful_macs=64 * 8 * 16)
        cycles = 64 + pipeline_fill_cycles(8)
        assert layer_latency(d, dims) == cycles / 1e8

    def test_doubling_rows_doubles_tiles(self):
        d = design(64, 8, 16, clock=1e8)
        one = BatchedLayerDims(64, 8, 16, 1)
        two = BatchedLayerDims(128, 8, 16, 1)
        fill = pipeline_fill_cycles(8)
        c1 = layer_latency(d, one) * 1e8 - fill
        c2 = layer_latency(d, two) * 1e8 - fill
        assert c2 == pytest.approx(2 * c1)

    def test_arithmetic_oracle_zc706(self):
        # spreadsheet-style check on <4652, 7, 128> @150 MHz, 12.8 GB/s:
        # tiles = ceil(3136/4652) * ceil(576/7) * ceil(128/128) = 83
        # compute = 83 * 4652 + (ceil(log2 7) + 4) = 386123 cycles
        # bytes = 2 * (3136*576 + 576*128 + 3136*128) = 4562944 -> 0.3565 ms
        d = design(4652, 7, 128, clock=150e6)
        dims = BatchedLayerDims(R_hat=3136, P_hat=576, C=128, useful_macs=1)
        expected = 386123 / 150e6
        assert layer_latency(d, dims) == pytest.approx(expected, rel=1e-12)
        assert 4562944 / 12.8e9 < expected  # compute-bound here

    def test_memory_bound_branch(self):
        d = design(64, 8, 16, clock=1e12, mem_bandwidth_bytes_per_s=1e6)
        dims = BatchedLayerDims(64, 8, 16, 1)
        mem_bytes = 2 * (64 * 8 + 8 * 16 + 64 * 16)
        assert layer_latency(d, dims) == pytest.approx(mem_bytes / 1e6)

    @given(st.integers(min_value=1, max_value=300), st.integers(min_value=1, max_value=300),
           st.integers(min_value=1, max_value=300))
    @settings(max_examples=100, deadline=None)
    def test_monotone_in_dims(self, r, p, c):
        d = design(16, 4, 8, clock=1e8)
        base = layer_latency(d, BatchedLayerDims(r, p, c, 1))
        assert layer_latency(d, BatchedLayerDims(r + 1, p, c, 1)) >= base
        assert layer_latency(d, BatchedLayerDims(r, p + 1, c, 1)) >= base
        assert layer_latency(d, BatchedLayerDims(r, p, c + 1, 1)) >= base


class TestPeakPerformance:
    def test_zc706(self):
        assert peak_performance(design(1, 7, 128, clock=150e6)) == pytest.approx(268.8e9)

    def test_zcu104(self):
        assert peak_performance(design(1, 10, 172, clock=200e6, dsp_budget=1728)) == pytest.approx(688.0e9)

    def test_unit(self):
        assert peak_performance(design(1, 1, 1, clock=1.0)) == 2.0


class TestLayerThroughput:
    @given(
        st.integers(min_value=1, max_value=1024),
        st.integers(min_value=1, max_value=2048),
        st.integers(min_value=1, max_value=512),
        st.integers(min_value=1, max_value=8),
        st.data(),
    )
    @settings(max_examples=150, deadline=None)
    def test_roofline_bound(self, r, p, c, b_act, data):
        b_r = data.draw(st.integers(min_value=1, max_value=b_act))
        k = data.draw(st.sampled_from(list(Stacking)))
        d = design(64, 8, 32, clock=1e8)
        pol = LayerPolicy(B_R=b_r, k=k)
        tput = layer_throughput(d, layer(r, p, c), b_act, pol)
        assert tput <= peak_performance(stack_pes(d, k)) * (1 + 1e-12)

    def test_single_tile_throughput(self):
        d = design(64, 8, 16, clock=1e8)
        lay = layer(64, 8, 16)
        tput = layer_throughput(d, lay, 1, LayerPolicy(B_R=1))
        cycles = 64 + pipeline_fill_cycles(8)
        assert tput == pytest.approx(2 * lay.macs / (cycles / 1e8))

    def test_stacking_gain_on_narrow_layer(self):
        # C = T_C/2 wastes half the PEs at k=1; k=2 re-purposes them when
        # P offers at least 2*T_P of reduction parallelism
        d = design(64, 8, 32, clock=1e8)
        lay = layer(640, 64, 16)
        t1 = layer_throughput(d, lay, 1, LayerPolicy(B_R=1, k=Stacking.ONE))
        t2 = layer_throughput(d, lay, 1, LayerPolicy(B_R=1, k=Stacking.TWO))
        assert t2 > t1


class TestFbcb:
    def _fbcb(self, n_layers=6, b_max=4):
        rows = tuple(
            tuple(LayerPolicy(B_R=max(1, b // 2) if l == 5 else b) for b in range(1, b_max + 1))
            for l in range(n_layers)
        )
        return Fbcb(entries=rows, b_max=b_max)

    def test_b_act_one(self):
        fbcb = self._fbcb()
        assert fbcb_lookup(fbcb, 0, 1) == (1, 1, Stacking.ONE)

    def test_b_p_identity(self):
        rows = [[LayerPolicy(B_R=1)] * 4 for _ in range(6)]
        rows[5][3] = LayerPolicy(B_R=2, k=Stacking.TWO)
        fbcb = Fbcb(entries=tuple(tuple(r) for r in rows), b_max=4)
        assert fbcb_lookup(fbcb, 5, 4) == (2, 3, Stacking.TWO)

    def test_out_of_range(self):
        fbcb = self._fbcb()
        with pytest.raises(PolicyLookupError):
            fbcb_lookup(fbcb, 6, 1)
        with pytest.raises(PolicyLookupError):
            fbcb_lookup(fbcb, 0, 5)
        with pytest.raises(PolicyLookupError):
            fbcb_lookup(fbcb, 0, 0)

    def test_size_bits(self):
        assert fbcb_size_bits(53, 8) == 53 * 8 * (3 + 2) == 2120
        assert fbcb_size_bits(1, 1) == 2
        assert math.ceil(math.log2(8)) == 3  # B_R field width at B_max=8


def four_layer_model():
    layers = tuple(
        LayerSpec(index=i, kind=LayerKind.CONV, R=r, P=p, C=c)
        for i, (r, p, c) in enumerate([(196, 64, 32), (196, 288, 32), (49, 288, 64), (49, 576, 64)])
    )
    return ModelSpec("m4", layers, ExitProfile((1, 3), (0.4, 0.6)))


class TestSegmentLatency:
    def test_hand_summed(self):
        model = four_layer_model()
        d = design(64, 8, 32, clock=1e8)
        fbcb = uniform_fbcb(model, 4, "r")
        expected = sum(
            policy_latency(d, model.layers[l], 2, LayerPolicy(B_R=2)) for l in (2, 3)
        )
        assert segment_latency(d, model, fbcb, 0, 1, 2) == pytest.approx(expected)

    def test_single_layer_segment(self):
        model = four_layer_model()
        d = design(64, 8, 32, clock=1e8)
        fbcb = uniform_fbcb(model, 4, "r")
        # exits at layers 1 and 3; a model with an exit after layer 0 too
        m2 = ModelSpec("m", model.layers, ExitProfile((0, 1, 3), (0.2, 0.2, 0.6)))
        got = segment_latency(d, m2, fbcb, 0, 1, 3)
        assert got == pytest.approx(policy_latency(d, model.layers[1], 3, LayerPolicy(B_R=3)))

    def test_additivity(self):
        model = four_layer_model()
        d = design(64, 8, 32, clock=1e8)
        fbcb = uniform_fbcb(model, 4, "r")
        for b in range(1, 5):
            whole = segment_latency(d, model, fbcb, None, 1, b)
            parts = segment_latency(d, model, fbcb, None, 0, b) + segment_latency(d, model, fbcb, 0, 1, b)
            assert whole == pytest.approx(parts)

    def test_bad_exit_indices(self):
        model = four_layer_model()
        d = design(64, 8, 32)
        fbcb = uniform_fbcb(model, 4, "r")
        with pytest.raises(PolicyLookupError):
            segment_latency(d, model, fbcb, 1, 1, 2)
        with pytest.raises(PolicyLookupError):
            segment_latency(d, model, fbcb, None, 2, 2)


class TestLatencyLut:
    def test_entry_count_four_exit_model(self):
        layers = tuple(LayerSpec(i, LayerKind.CONV, 49, 64, 32) for i in range(8))
        model = ModelSpec("m8", layers, ExitProfile((1, 3, 5, 7), (0.25,) * 4))
        d = design(64, 8, 32, clock=1e8)
        lut = build_latency_lut(d, model, uniform_fbcb(model, 8, "r"), 8)
        assert lut.table.shape == (4, 8)
        assert lut.table.size == 32
        assert np.all(lut.table > 0)

    def test_row_sums_equal_full_network(self):
        model = four_layer_model()
        d = design(64, 8, 32, clock=1e8)
        fbcb = uniform_fbcb(model, 4, "r")
        lut = build_latency_lut(d, model, fbcb, 4)
        for b in range(1, 5):
            full = sum(policy_latency(d, lay, b, LayerPolicy(B_R=b)) for lay in model.layers)
            assert lut.from_start(model.exits.n_exits - 1, b) == pytest.approx(full)

    def test_non_decreasing_in_batch_for_optimal_policies(self):
        from fluidbatch.dse import optimise_layer_policy

        model = four_layer_model()
        d = design(64, 8, 32, clock=1e8)
        rows = tuple(
            tuple(optimise_layer_policy(d, lay, b) for b in range(1, 5)) for lay in model.layers
        )
        lut = build_latency_lut(d, model, Fbcb(entries=rows, b_max=4), 4)
        assert np.all(np.diff(lut.table, axis=1) >= 0)
