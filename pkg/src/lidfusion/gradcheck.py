"""Central finite-difference check of the DNN's analytic gradients.

Runs on a small smooth configuration (tanh, dropout off) so the loss is
differentiable everywhere the check samples it.
"""

from __future__ import annotations

import numpy as np

from . import dnn

CHECK_CONFIG = dnn.DnnConfig(
    layer_sizes=(12, 10, 8),
    activation="tanh",
    dropout_rate=0.0,
    layer_norm=True,
    head_kind="skew_bilinear",
)


def relative_errors(model, fv, y, w, step: float = 1e-5):
    """Max relative error between analytic and central-difference gradients,
    per parameter tensor."""
    _, grads = dnn.loss_and_grads(model, fv, y, w, train=False)
    errors = {}
    for key, param in model.params.items():
        g = np.atleast_1d(np.asarray(grads[key], dtype=float))
        base = np.array(param, dtype=float)
        flat = base.reshape(-1)
        fd = np.empty(flat.shape)
        for i in range(flat.size):
            orig = flat[i]
            # write back through the dict: params may be immutable 0-d scalars
            flat[i] = orig + step
            model.params[key] = flat.reshape(base.shape)
            hi = dnn.batch_loss(model, fv, y, w)
            flat[i] = orig - step
            model.params[key] = flat.reshape(base.shape)
            lo = dnn.batch_loss(model, fv, y, w)
            flat[i] = orig
            fd[i] = (hi - lo) / (2 * step)
        model.params[key] = base
        ga = g.reshape(-1)
        denom = np.maximum(np.abs(ga) + np.abs(fd), 1e-3)
        errors[key] = float(np.max(np.abs(ga - fd) / denom))
    return errors


def run_gradcheck(n_draws: int = 20, seed: int = 0,
                  config: dnn.DnnConfig = CHECK_CONFIG, batch: int = 4) -> float:
    """Worst relative gradient error over n_draws random model/input draws."""
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(n_draws):
        model = dnn.init_model(config, rng.integers(2**63))
        # perturb away from the symmetric init so gradients are generic
        for k, p in model.params.items():
            model.params[k] = p + 0.1 * rng.standard_normal(p.shape)
        fv = rng.uniform(-1, 1, size=(batch, 12))
        y = rng.integers(0, 2, size=batch).astype(float)
        w = rng.uniform(0.5, 1.5, size=batch)
        errors = relative_errors(model, fv, y, w)
        worst = max(worst, max(errors.values()))
    return worst
