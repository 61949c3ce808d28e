"""Training criterion: softmax negative log-likelihood plus regression RMSE."""
from __future__ import annotations

import numpy as np

from .model import NUM_CLASSES, log_softmax, softmax


def loss(probs, pred_offsets, labels, target_offsets, mask) -> float:
    """Mean NLL of ``probs`` plus the RMSE of offsets over regression-masked rows.

    The RMSE is taken over all masked offset components of the batch and is 0
    when no row is masked in.
    """
    probs = np.asarray(probs, dtype=np.float64)
    labels = np.asarray(labels)
    nll = -np.mean(np.log(probs[np.arange(len(labels)), labels]))
    return float(nll + _rmse(pred_offsets, target_offsets, mask)[0])


def _rmse(pred, target, mask):
    mask = np.asarray(mask, dtype=bool)
    m = int(mask.sum())
    if m == 0:
        return 0.0, np.zeros_like(np.asarray(pred, dtype=np.float64))
    diff = (np.asarray(pred, dtype=np.float64) - np.asarray(target, dtype=np.float64)) * mask[:, None]
    mse = float((diff ** 2).sum()) / (diff.shape[1] * m)
    rmse = np.sqrt(mse)
    grad = diff / (diff.shape[1] * m * rmse) if rmse > 0 else np.zeros_like(diff)
    return rmse, grad


def drow_loss(outputs, labels, target_offsets, mask):
    """Loss value and its gradient with respect to the raw (batch, 5) network outputs."""
    out = np.asarray(outputs, dtype=np.float64)
    n = len(out)
    logits = out[:, :NUM_CLASSES]
    nll = -np.mean(log_softmax(logits)[np.arange(n), labels])
    dlogits = softmax(logits)
    dlogits[np.arange(n), labels] -= 1.0
    dlogits /= n
    rmse, dreg = _rmse(out[:, NUM_CLASSES:], target_offsets, mask)
    grad = np.concatenate([dlogits, dreg], axis=1)
    return float(nll + rmse), grad.astype(outputs.dtype, copy=False)
