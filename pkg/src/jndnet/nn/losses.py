"""Training objectives: mean squared error and focal loss.

Both return ``(loss, grad_wrt_prediction)`` so the caller can feed the
gradient straight into the network's backward pass.
"""

from __future__ import annotations

import numpy as np

P_FLOOR = 1e-12


def mse_loss(pred, target):
    """Mean of squared differences over every element."""
    if pred.shape != target.shape:
        raise ValueError(f"shape mismatch: {pred.shape} vs {target.shape}")
    diff = pred - target
    loss = float(np.mean(diff**2))
    grad = (2.0 / diff.size) * diff
    return loss, grad


def focal_loss(probs, target, focusing=2.0):
    """Mean over pixels of ``-(1 - p_true)**focusing * ln(p_true)``.

    ``probs`` holds per-pixel class probabilities (last axis a simplex),
    ``target`` the one-hot class mask. ``focusing=0`` reduces to the
    categorical cross-entropy. Probabilities are floored at 1e-12 (and
    capped symmetrically) to keep the value and gradient finite.
    """
    if probs.shape != target.shape:
        raise ValueError(f"shape mismatch: {probs.shape} vs {target.shape}")
    if focusing < 0.0:
        raise ValueError("focusing must be >= 0")
    p_true = np.clip((probs * target).sum(axis=-1), P_FLOOR, 1.0 - P_FLOOR)
    n_pix = p_true.size
    log_p = np.log(p_true)
    one_minus = 1.0 - p_true
    loss = float(np.mean(-(one_minus**focusing) * log_p))
    if focusing == 0.0:
        dl_dp = -1.0 / p_true
    else:
        dl_dp = focusing * one_minus ** (focusing - 1.0) * log_p - one_minus**focusing / p_true
    grad = target * (dl_dp / n_pix)[..., None]
    return loss, grad.astype(probs.dtype)
