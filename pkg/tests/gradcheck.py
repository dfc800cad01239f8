"""Central finite-difference check of the hand-written backward pass."""

from __future__ import annotations

import numpy as np

from panpretrain.model import _conv, backward, forward_prepared, init_params, l1_loss, trainable_groups
from panpretrain.rng import RngStream


def _set_margin_biases(params, layer, x_nhwc, on, margin):
    """Bias each channel fully on or fully off with ``margin`` from the ReLU kink."""
    w = params[f"{layer}.weight"]
    z, _ = _conv(x_nhwc, w, np.zeros(w.shape[0]))
    lo, hi = z.min(axis=(0, 1, 2)), z.max(axis=(0, 1, 2))
    params.arrays[f"{layer}.bias"] = np.where(on, margin - lo, -margin - hi)
    z, _ = _conv(x_nhwc, w, params[f"{layer}.bias"])
    return np.maximum(z, 0)


def make_instance(seed: int = 0, c_max: int = 4, size: int = 8, margin: float = 0.1):
    """A float64 instance whose pre-activations stay clear of the ReLU kinks.

    Central differences are only valid where the loss is smooth, so every
    hidden channel is biased to be active everywhere or dead everywhere (about
    half each), which still exercises the gating in the backward pass.
    """
    rng = np.random.default_rng(seed)
    params = init_params(c_max, RngStream(seed)).astype(np.float64)
    # a non-zero head so every group receives gradient
    params.arrays["conv_out.weight"] = rng.normal(0.0, 0.1, params["conv_out.weight"].shape)
    params.arrays["conv_out.bias"] = rng.normal(0.0, 0.1, params["conv_out.bias"].shape)
    up = rng.random((1, c_max, size, size))
    pan = rng.random((1, 1, size, size))
    x = np.concatenate([up, pan], axis=1).transpose(0, 2, 3, 1)
    hidden = params.hidden
    a1 = _set_margin_biases(params, "conv1", x, rng.random(hidden) < 0.5, margin)
    _set_margin_biases(params, "conv2", a1, rng.random(hidden) < 0.5, margin)
    pred0, _ = forward_prepared(params, up, pan)
    # keep |pred - gt| >= 0.25 so no perturbation crosses the kink of |.|
    gt = pred0 + rng.choice([-1.0, 1.0], pred0.shape) * rng.uniform(0.25, 0.5, pred0.shape)
    return params, up, pan, gt


def loss_at(params, up, pan, gt) -> float:
    pred, _ = forward_prepared(params, up, pan)
    return l1_loss(pred, gt)[0]


def gradient_errors(mode, seed: int = 0, h: float = 1e-3) -> dict[str, float]:
    """Relative error ||g_analytic - g_fd|| / ||g_fd|| for each trainable group."""
    params, up, pan, gt = make_instance(seed)
    pred, tape = forward_prepared(params, up, pan)
    _, dpred = l1_loss(pred, gt)
    grads = backward(params, tape, dpred)
    errors = {}
    for g in trainable_groups(mode):
        arr = params.arrays[g]
        fd = np.zeros_like(arr)
        for idx in np.ndindex(arr.shape):
            old = arr[idx]
            arr[idx] = old + h
            plus = loss_at(params, up, pan, gt)
            arr[idx] = old - h
            minus = loss_at(params, up, pan, gt)
            arr[idx] = old
            fd[idx] = (plus - minus) / (2 * h)
        errors[g] = float(np.linalg.norm(grads[g] - fd) / max(np.linalg.norm(fd), 1e-30))
    return errors
