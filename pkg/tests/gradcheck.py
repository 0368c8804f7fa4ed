"""Central finite differences over every parameter of the shrunken model."""

from __future__ import annotations

import numpy as np

from oracular.cvrnn import DropoutMasks, ModelConfig, backprop, elbo_loss, init_params

SMALL = ModelConfig(pitch_range=12, conv_channels=(4, 8), enc_hidden=8, dec_hidden=8, z_dim=4)
FD_STEP = 1e-4
# denominators below this are treated as this, so near-zero gradients are judged absolutely
REL_FLOOR = 1e-5


def relative_error(analytic: np.ndarray, numeric: np.ndarray) -> np.ndarray:
    scale = np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), REL_FLOOR)
    return np.abs(analytic - numeric) / scale


def small_problem(seed: int, cfg: ModelConfig = SMALL, steps: int = 3, dropout_p: float = 0.3):
    rng = np.random.default_rng(seed)
    params = init_params(cfg, rng).map(lambda _, a: a + rng.normal(0.0, 0.3, a.shape))
    batch = (rng.random((steps, cfg.frame_steps, cfg.pitch_range)) < 0.3).astype(float)
    eps = rng.standard_normal((1, cfg.z_dim))
    masks = DropoutMasks.sample(rng, dropout_p, steps, cfg)
    return params, batch, eps, masks


def max_relative_error(seed: int, cfg: ModelConfig = SMALL, step: float = FD_STEP) -> tuple[float, str]:
    """Largest backprop-vs-central-difference relative error and the tensor holding it."""
    params, batch, eps, masks = small_problem(seed, cfg)
    _, grads = backprop(batch, params, eps, cfg, masks)
    analytic = dict(grads.named_arrays())
    worst, where = 0.0, ""
    for name, array in params.named_arrays():
        numeric = np.zeros_like(array)
        flat, out = array.reshape(-1), numeric.reshape(-1)
        for k in range(flat.size):
            keep = flat[k]
            flat[k] = keep + step
            up = elbo_loss(batch, params, eps, cfg, masks).total
            flat[k] = keep - step
            down = elbo_loss(batch, params, eps, cfg, masks).total
            flat[k] = keep
            out[k] = (up - down) / (2 * step)
        err = float(relative_error(analytic[name], numeric).max())
        if err > worst:
            worst, where = err, name
    return worst, where
