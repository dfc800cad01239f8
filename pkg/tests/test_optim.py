import math

import numpy as np
import pytest

from panpretrain.errors import NonFiniteGradient
from panpretrain.model import GROUPS, ModelParams, TuneMode, init_params
from panpretrain.optim import AdamWState, ScheduleConfig, adamw_step, clip_grad_norm, lr_at
from panpretrain.rng import RngStream


def _scalar_params(value=0.0):
    return ModelParams(1, 1, {g: np.full((1,), value, np.float64) for g in GROUPS})


def _grads(value):
    return {g: np.full((1,), value, np.float64) for g in GROUPS}


def test_first_step_bias_correction():
    p = _scalar_params(0.0)
    st = AdamWState.zeros_like(p, weight_decay=0.0)
    adamw_step(st, p, _grads(1.0), 1e-3)
    assert p["conv1.weight"][0] == pytest.approx(-1e-3 / (1 + 1e-8), rel=1e-12)
    assert st.step == 1


def test_zero_gradient_no_decay_is_noop():
    p = init_params(4, RngStream(0))
    before = p.copy()
    st = AdamWState.zeros_like(p, weight_decay=0.0)
    adamw_step(st, p, {g: np.zeros_like(p[g]) for g in GROUPS}, 1e-2)
    assert p.equal(before)


def _reference_adamw(theta, steps, lr, wd, b1=0.9, b2=0.999, eps=1e-8):
    m = v = 0.0
    for t in range(1, steps + 1):
        g = 2.0 * (theta - 3.0)
        m = b1 * m + (1 - b1) * g
        v = b2 * v + (1 - b2) * g * g
        mh, vh = m / (1 - b1**t), v / (1 - b2**t)
        theta = theta - lr * (mh / (math.sqrt(vh) + eps) + wd * theta)
    return theta


def test_quadratic_matches_reference():
    p = _scalar_params(0.5)
    st = AdamWState.zeros_like(p, weight_decay=0.01)
    for _ in range(10):
        adamw_step(st, p, {g: 2.0 * (p[g] - 3.0) for g in GROUPS}, 0.05)
    assert p["conv2.bias"][0] == pytest.approx(_reference_adamw(0.5, 10, 0.05, 0.01), abs=1e-10)


def test_freeze_step_leaves_backbone_bit_identical(np_rng):
    p = init_params(8, RngStream(1))
    before = p.copy()
    st = AdamWState.zeros_like(p)
    grads = {g: np_rng.standard_normal(p[g].shape).astype(np.float32) for g in GROUPS}
    adamw_step(st, p, grads, 1e-3, TuneMode.FREEZE)
    assert p.equal(before, ["conv1.weight", "conv1.bias", "conv2.weight", "conv2.bias"])
    assert not p.equal(before, ["conv_out.weight"])
    assert not st.m["conv1.weight"].any()


def test_non_finite_gradient_aborts_before_mutation():
    p = init_params(4, RngStream(2))
    before = p.copy()
    st = AdamWState.zeros_like(p)
    grads = {g: np.zeros_like(p[g]) for g in GROUPS}
    grads["conv2.weight"][0, 0, 0, 0] = np.nan
    with pytest.raises(NonFiniteGradient):
        adamw_step(st, p, grads, 1e-3)
    assert p.equal(before) and st.step == 0
    # a NaN in a frozen group does not matter in freeze mode
    adamw_step(st, p, grads, 1e-3, TuneMode.FREEZE)


def test_second_moment_nonnegative(np_rng):
    p = init_params(4, RngStream(3))
    st = AdamWState.zeros_like(p)
    for _ in range(3):
        adamw_step(st, p, {g: np_rng.standard_normal(p[g].shape).astype(np.float32) for g in GROUPS}, 1e-3)
    assert all((st.v[g] >= 0).all() for g in GROUPS)


def test_clip_grad_norm():
    grads = {g: np.full((2,), 3.0) for g in GROUPS}
    total = clip_grad_norm(grads, 1.0)
    assert total == pytest.approx(math.sqrt(12 * 9.0))
    assert math.sqrt(sum((grads[g] ** 2).sum() for g in GROUPS)) == pytest.approx(1.0, rel=1e-9)


SCHED = ScheduleConfig(peak_lr=1e-3, warmup_epochs=10, total_epochs=100, steps_per_epoch=3)


def test_schedule_closed_form_points():
    w, t = SCHED.warmup_steps, SCHED.total_steps
    assert (w, t) == (30, 300)
    assert lr_at(w - 1, SCHED) == pytest.approx(1e-3, abs=1e-15)
    assert lr_at(w + (t - w) // 2, SCHED) == pytest.approx(5e-4, abs=1e-12)
    assert abs(lr_at(t, SCHED)) < 1e-12
    assert lr_at(0, SCHED) == pytest.approx(1e-3 / 30)


def test_schedule_continuity_and_monotonicity():
    w = SCHED.warmup_steps
    assert lr_at(w, SCHED) == pytest.approx(lr_at(w - 1, SCHED))
    lrs = [lr_at(s, SCHED) for s in range(w, SCHED.total_steps + 1)]
    assert all(a >= b for a, b in zip(lrs, lrs[1:]))


def test_finetune_schedule_is_pure_cosine():
    cfg = ScheduleConfig(1e-4, 0, 40)
    assert lr_at(0, cfg) == 1e-4
    assert lr_at(20, cfg) == pytest.approx(5e-5)
    assert lr_at(39, cfg) > 0


def test_schedule_rejects_long_warmup():
    with pytest.raises(ValueError):
        ScheduleConfig(1e-3, 10, 10)


def test_state_copy_is_deep():
    p = init_params(4, RngStream(0))
    st = AdamWState.zeros_like(p)
    cp = st.copy()
    cp.m["conv1.bias"][0] = 1.0
    assert st.m["conv1.bias"][0] == 0.0
