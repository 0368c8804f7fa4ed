"""Adam with bias correction, per-matrix gradient clipping, and the epoch loop."""

from __future__ import annotations

import csv
import io
import logging
from dataclasses import dataclass, field

import numpy as np

from ..midi_io import PianoRoll, piano_roll_to_frames
from .model import CvrnnParams, DropoutMasks, ModelConfig, backprop, init_params

log = logging.getLogger(__name__)


class EmptyCorpus(ValueError):
    pass


class NoFullBatch(ValueError):
    pass


@dataclass(frozen=True)
class TrainingConfig:
    learning_rate: float = 0.001
    clip_norm: float = 10.0
    dropout_p: float = 0.3
    epochs: int = 200
    mc_samples: int = 1
    rng_seed: int = 0
    model: ModelConfig = field(default_factory=ModelConfig)

    def __post_init__(self) -> None:
        if not 0.0 <= self.dropout_p < 1.0:
            raise ValueError(f"dropout_p must lie in [0, 1), got {self.dropout_p}")
        if self.learning_rate <= 0 or self.clip_norm <= 0:
            raise ValueError("learning_rate and clip_norm must be positive")
        if self.epochs < 1 or self.mc_samples < 1:
            raise ValueError("epochs and mc_samples must be >= 1")

    @property
    def z_dim(self) -> int:
        return self.model.z_dim


@dataclass
class AdamState:
    m: dict[str, np.ndarray]
    v: dict[str, np.ndarray]
    step: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    @classmethod
    def zeros(cls, params: CvrnnParams) -> AdamState:
        return cls(
            {n: np.zeros_like(a) for n, a in params.named_arrays()},
            {n: np.zeros_like(a) for n, a in params.named_arrays()},
        )


def adam_update(
    params: CvrnnParams, grads: CvrnnParams, state: AdamState, lr: float = 0.001
) -> tuple[CvrnnParams, AdamState]:
    """One Adam step; inputs are left untouched."""
    step = state.step + 1
    b1, b2 = state.beta1, state.beta2
    g = dict(grads.named_arrays())
    m = {n: b1 * state.m[n] + (1 - b1) * g[n] for n in g}
    v = {n: b2 * state.v[n] + (1 - b2) * g[n] ** 2 for n in g}
    c1, c2 = 1 - b1**step, 1 - b2**step
    new = params.map(lambda n, a: a - lr * (m[n] / c1) / (np.sqrt(v[n] / c2) + state.eps))
    return new, AdamState(m, v, step, b1, b2, state.eps)


def is_weight_matrix(name: str) -> bool:
    leaf = name.rsplit(".", 1)[-1]
    return not leaf.startswith("b_") and not leaf.endswith("_b")


def clip_gradients(grads: CvrnnParams, clip_norm: float = 10.0) -> CvrnnParams:
    """Rescale each weight matrix's gradient to L2 norm ``clip_norm`` if it is longer.

    Bias gradients pass through unchanged.
    """

    def clip(name: str, g: np.ndarray) -> np.ndarray:
        if not is_weight_matrix(name):
            return g
        norm = float(np.sqrt(np.sum(g * g)))
        return g * (clip_norm / norm) if norm > clip_norm else g

    return grads.map(clip)


@dataclass
class EpochLoss:
    epoch: int
    kl: float
    reconstruction: float
    total: float


def history_csv(history: list[EpochLoss]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["epoch", "kl", "reconstruction", "total"])
    for h in history:
        w.writerow([h.epoch, repr(h.kl), repr(h.reconstruction), repr(h.total)])
    return buf.getvalue()


def corpus_batches(corpus: list[PianoRoll], cfg: ModelConfig) -> list[list[np.ndarray]]:
    """Per song, its non-overlapping full 16-frame batches as ``(16, n, r)`` arrays."""
    out = []
    for roll in corpus:
        frames = piano_roll_to_frames(roll, cfg.frame_steps)
        if frames.frames.shape[2] != cfg.pitch_range:
            raise ValueError(f"roll has {frames.frames.shape[2]} pitches, model expects {cfg.pitch_range}")
        out.append([b[..., 0].astype(float) for b in frames.batches()])
    return out


def train(
    corpus: list[PianoRoll],
    config: TrainingConfig,
    params: CvrnnParams | None = None,
) -> tuple[CvrnnParams, list[EpochLoss]]:
    """Forward, backprop, clip, Adam over every full batch of every song, per epoch."""
    if not corpus:
        raise EmptyCorpus("no songs to train on")
    songs = corpus_batches(corpus, config.model)
    if not any(songs):
        raise NoFullBatch("no song is long enough for one 16-frame (8-bar) batch")
    for k, batches in enumerate(songs):
        if not batches:
            log.warning("song %d is shorter than one batch; skipped", k)

    rng = np.random.default_rng(config.rng_seed)
    if params is None:
        params = init_params(config.model, rng)
    state = AdamState.zeros(params)
    history: list[EpochLoss] = []
    for epoch in range(1, config.epochs + 1):
        kl = rec = 0.0
        count = 0
        for batches in songs:
            for batch in batches:
                eps = rng.standard_normal((config.mc_samples, config.model.z_dim))
                masks = DropoutMasks.sample(rng, config.dropout_p, len(batch), config.model)
                loss, grads = backprop(batch, params, eps, config.model, masks)
                grads = clip_gradients(grads, config.clip_norm)
                params, state = adam_update(params, grads, state, config.learning_rate)
                kl += float(loss.kl)
                rec += float(loss.reconstruction)
                count += 1
        history.append(EpochLoss(epoch, kl / count, rec / count, (kl + rec) / count))
        log.info("epoch %d: kl=%.4f reconstruction=%.4f", epoch, kl / count, rec / count)
    return params, history
