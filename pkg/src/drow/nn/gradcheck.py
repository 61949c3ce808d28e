"""Central finite-difference gradient checks."""
from __future__ import annotations

import numpy as np


def relative_error(a, b, floor: float = 1e-6) -> float:
    return float(np.max(relative_errors(a, b, floor)))


def numeric_grad(f, x: np.ndarray, step: float = 1e-5, indices=None) -> np.ndarray:
    """d f / d x at ``indices`` (all entries by default); ``x`` is perturbed in place and restored."""
    grad = np.zeros_like(x, dtype=np.float64)
    flat = x.reshape(-1)
    idx = range(flat.size) if indices is None else indices
    for i in idx:
        orig = flat[i]
        flat[i] = orig + step
        fp = f()
        flat[i] = orig - step
        fm = f()
        flat[i] = orig
        grad.reshape(-1)[i] = (fp - fm) / (2 * step)
    return grad


def relative_errors(a, b, floor: float = 1e-6) -> np.ndarray:
    a, b = np.asarray(a, dtype=np.float64), np.asarray(b, dtype=np.float64)
    return np.abs(a - b) / np.maximum(np.abs(a) + np.abs(b), floor)


def check_model(model, x, loss_fn, seed: int = 0, step=1e-5, max_entries: int | None = None,
                rng=None, floor: float = 1e-6) -> dict:
    """Compare backprop gradients of ``loss_fn(outputs) -> (value, dout)`` with finite differences.

    Dropout masks are re-seeded before every forward pass so all evaluations see the
    same network.  ``step`` may be a sequence; each entry then keeps its smallest error
    over the steps, so a ReLU or max-pool kink that one perturbation happens to cross
    does not count as a mismatch.  Returns the max relative error per parameter.
    """
    rng = rng or np.random.default_rng(seed)
    steps = np.atleast_1d(step)

    def value():
        model.seed_dropout(seed)
        return loss_fn(model.forward(x, train=True))[0]

    model.seed_dropout(seed)
    out = model.forward(x, train=True)
    _, dout = loss_fn(out)
    grads = {k: g.copy() for k, g in model.backward(dout).items()}
    errors = {}
    for name, p in model.named_params():
        idx = None
        if max_entries is not None and p.size > max_entries:
            idx = rng.choice(p.size, max_entries, replace=False)
        sel = slice(None) if idx is None else idx
        analytic = grads[name].reshape(-1)[sel]
        err = np.min([relative_errors(analytic, numeric_grad(value, p, h, idx).reshape(-1)[sel], floor)
                      for h in steps], axis=0)
        errors[name] = float(err.max()) if err.size else 0.0
    return errors
