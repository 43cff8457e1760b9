"""Scheduler decision logic: slack, preemption criterion, preemptible points."""

import numpy as np
import pytest

from fluidbatch.npu import LatencyLut
from fluidbatch.scheduler import (
    BatchState,
    Request,
    SloConfig,
    compute_slack,
    invocations_per_inference_exit_level,
    invocations_per_inference_layerwise,
    preemptible_points,
    preemption_criterion,
)
from fluidbatch.workload import ExitProfile, LayerKind, LayerSpec, ModelSpec


def model_with_exits(n_layers, exit_layers, rates=None):
    layers = tuple(LayerSpec(i, LayerKind.CONV, 10, 10, 10) for i in range(n_layers))
    rates = rates or tuple(1.0 / len(exit_layers) for _ in exit_layers)
    return ModelSpec("m", layers, ExitProfile(tuple(exit_layers), tuple(rates)))


class TestComputeSlack:
    def _req(self, arrival, dispatch):
        return Request(sample_id=0, arrival_time=arrival, assigned_exit=0, dispatch_time=dispatch)

    def test_eq3_arithmetic(self):
        # T_SLO=400ms, T_wait=120ms, T_exec=150ms -> 130ms (in ms units)
        oldest = self._req(arrival=0, dispatch=120)
        assert compute_slack(oldest, now=270, t_slo=400) == 130

    def test_fresh_sample_gets_full_slo(self):
        oldest = self._req(arrival=50, dispatch=50)
        assert compute_slack(oldest, now=50, t_slo=400) == 400

    def test_boundary_zero(self):
        oldest = self._req(arrival=0, dispatch=250)
        assert compute_slack(oldest, now=400, t_slo=400) == 0

    def test_can_go_negative(self):
        oldest = self._req(arrival=0, dispatch=300)
        assert compute_slack(oldest, now=500, t_slo=400) == -100


class TestPreemptionCriterion:
    def _lut(self):
        # segments (ms): exit0 then exit1; columns are batch sizes 1..8.
        # T_{0:0}^3 = 40, T_{1:1}^6 = 80 by construction.
        t0 = [30, 35, 40, 45, 50, 55, 60, 65]
        t1 = [50, 56, 62, 68, 74, 80, 86, 92]
        return LatencyLut(table=np.array([t0, t1], dtype=float))

    def test_fig4_style_preempt(self):
        dec = preemption_criterion(self._lut(), 0, B_incr=3, B_merged=6, slack=130)
        assert dec.preempt and dec.T_overhead == 120

    def test_boundary_no_preempt(self):
        dec = preemption_criterion(self._lut(), 0, B_incr=3, B_merged=6, slack=110)
        assert not dec.preempt and dec.T_overhead == 120

    def test_equal_overhead_does_not_preempt(self):
        dec = preemption_criterion(self._lut(), 0, B_incr=3, B_merged=6, slack=120)
        assert not dec.preempt  # strict inequality

    def test_no_slack_never_preempts(self):
        for slack in (0, -50):
            assert not preemption_criterion(self._lut(), 0, 1, 2, slack).preempt


class TestPreemptiblePoints:
    def test_four_exit_model(self):
        m = model_with_exits(8, [1, 3, 5, 7])
        assert preemptible_points(m) == (0, 1, 2)

    def test_single_exit_model(self):
        m = model_with_exits(4, [3])
        assert preemptible_points(m) == ()

    def test_invocation_ratio_fifty_layer_model(self):
        m = model_with_exits(50, [12, 25, 37, 49])
        layerwise = invocations_per_inference_layerwise(m)
        exit_level = invocations_per_inference_exit_level(m)
        assert layerwise == 50 and exit_level == 3
        assert layerwise / exit_level == pytest.approx(16.67, abs=0.01)


class TestBatchState:
    def test_oldest_by_arrival(self):
        members = [
            Request(3, arrival_time=500, assigned_exit=0, dispatch_time=600),
            Request(1, arrival_time=200, assigned_exit=1, dispatch_time=600),
            Request(2, arrival_time=200, assigned_exit=1, dispatch_time=600),
        ]
        batch = BatchState(batch_id=0, members=members)
        assert batch.oldest().sample_id == 1  # earliest arrival, ties by id
        assert batch.B_act == 3

    def test_slo_config_validation(self):
        from fluidbatch.errors import InvalidArgumentError

        with pytest.raises(InvalidArgumentError):
            SloConfig(t_slo=0.0, b_max=8)
        with pytest.raises(InvalidArgumentError):
            SloConfig(t_slo=0.4, b_max=0)
