"""Baseline policies: adaptive-batching dispatch, FC-only latency, Lazy estimator."""

import numpy as np
import pytest

from fluidbatch.baselines import (
    AdaptBConfig,
    BatchingMode,
    LazyScheduler,
    adaptb_dispatch,
    adaptb_timeouts,
    fc_only_latency,
    lazy_segment_estimate,
)
from fluidbatch.npu import LayerPolicy, NpuDesign, policy_latency, uniform_fbcb
from fluidbatch.presets import build_resnet50_model, design_preset
from fluidbatch.scheduler import BatchState, Request, SloConfig
from fluidbatch.workload import ExitProfile, LayerKind, LayerSpec, ModelSpec


def small_design():
    return NpuDesign(T_R=64, T_P=8, T_C=32, clock_hz=1e8,
                     dsp_budget=512, bram_budget_words=10_000_000)


class TestAdaptBDispatch:
    CFG = AdaptBConfig(b_max=4, t_timeout=0.020)

    def test_full_batch_goes_immediately(self):
        assert adaptb_dispatch([0.0] * 4, self.CFG, now=0.0) == ("dispatch", 4)
        assert adaptb_dispatch([0.0] * 9, self.CFG, now=0.0) == ("dispatch", 4)

    def test_partial_waits_out_the_window(self):
        assert adaptb_dispatch([0.100], self.CFG, now=0.105) == ("wait_until", pytest.approx(0.120))
        assert adaptb_dispatch([0.100], self.CFG, now=0.120) == ("dispatch", 1)

    def test_empty_queue(self):
        assert adaptb_dispatch([], self.CFG, now=1.0) == ("none", 0)

    def test_timeout_measured_from_oldest(self):
        assert adaptb_dispatch([0.0, 0.019], self.CFG, now=0.020) == ("dispatch", 2)

    def test_slo_fractions(self):
        t = adaptb_timeouts(0.400)
        assert t["s"] == pytest.approx(0.020)
        assert t["m"] == pytest.approx(0.180)
        assert t["l"] == pytest.approx(0.380)


class TestFcOnlyLatency:
    def test_b1_equals_full_single_sample(self):
        d = small_design()
        model = build_resnet50_model()
        single = sum(policy_latency(d, l, 1, LayerPolicy(B_R=1)) for l in model.layers)
        assert fc_only_latency(d, model, 1) == pytest.approx(single)

    def test_conv_only_model_scales_linearly(self):
        d = small_design()
        layers = tuple(LayerSpec(i, LayerKind.CONV, 196, 64, 16) for i in range(3))
        model = ModelSpec("c", layers, ExitProfile((2,), (1.0,)))
        assert fc_only_latency(d, model, 4) == pytest.approx(4 * fc_only_latency(d, model, 1))

    def test_conv_plus_fc_composite(self):
        d = small_design()
        layers = (
            LayerSpec(0, LayerKind.CONV, 196, 64, 16),
            LayerSpec(1, LayerKind.FC, 1, 256, 100),
        )
        model = ModelSpec("cf", layers, ExitProfile((1,), (1.0,)))
        conv_part = 4 * policy_latency(d, layers[0], 1, LayerPolicy(B_R=1))
        fc_part = policy_latency(d, layers[1], 4, LayerPolicy(B_R=4))
        assert fc_only_latency(d, model, 4) == pytest.approx(conv_part + fc_part)


class TestLazyEstimator:
    def test_coarse_product(self):
        assert lazy_segment_estimate(0.010, 4) == pytest.approx(0.040)

    def test_overestimates_true_batched_latency_on_shipped_model(self):
        # B x single-sample >= true R-batched latency, per layer and segment
        model = build_resnet50_model()
        d = design_preset("zc706_resnet50")
        fbcb = uniform_fbcb(model, 8, "r")
        for lay in model.layers:
            single = policy_latency(d, lay, 1, LayerPolicy(B_R=1))
            for b in range(2, 9):
                batched = policy_latency(d, lay, b, LayerPolicy(B_R=b))
                assert lazy_segment_estimate(single, b) >= batched - 1e-12

    def _sched(self, n_layers=5, per_layer=10, b_max=8, t_slo=1000):
        prefix = np.arange(n_layers + 1) * per_layer
        return LazyScheduler(prefix, SloConfig(t_slo=1.0, b_max=b_max), t_slo)

    def _batch(self, size, dispatch=0):
        members = [Request(i, arrival_time=0, assigned_exit=0, dispatch_time=dispatch)
                   for i in range(size)]
        return BatchState(batch_id=0, members=members)

    def test_full_batch_skips_preemption(self):
        sched = self._sched(b_max=4)
        assert sched.decide(self._batch(4), layer_idx=2, queue_len=3, now=0) is None
        assert sched.decisions_evaluated == 0

    def test_decision_uses_coarse_overhead(self):
        # 5 layers x 10 each; at layer 1 with b_act=2, queue 2:
        # overhead = 2*20 + 4*30 = 160
        sched = self._sched(t_slo=1000)
        dec = sched.decide(self._batch(2), layer_idx=1, queue_len=2, now=0)
        assert dec.T_overhead == 160
        assert dec.preempt  # slack 1000
        dec = sched.decide(self._batch(2, dispatch=0), layer_idx=1, queue_len=2, now=900)
        assert not dec.preempt  # slack 100 < 160

    def test_no_decision_at_final_layer(self):
        sched = self._sched()
        assert sched.decide(self._batch(2), layer_idx=4, queue_len=2, now=0) is None


class TestConfigValidation:
    def test_negative_timeout_rejected(self):
        from fluidbatch.errors import InvalidArgumentError

        with pytest.raises(InvalidArgumentError):
            AdaptBConfig(b_max=4, t_timeout=-0.1)
