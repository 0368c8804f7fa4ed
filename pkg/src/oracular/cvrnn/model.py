"""Convolutional-variational recurrent model: forward pass, loss, exact gradients, sampling.

Shapes for one training batch of ``T`` frames, each ``n x r``:

* conv feature ``m_l``: ``(T, k)`` with ``k = C2 * (n/4) * (r/4)``
* encoder GRU over ``m_l`` -> ``h_q`` (``e``), then ``mu``, ``sigma`` (``z_dim``)
* decoder GRU inputs: ``z`` at step 0, ``W_z m_l[t-1] + b_z`` afterwards
* logits ``W_p h_p[t] + b_p`` of length ``n * r``

The loss minimized is ``kl + reconstruction`` (the negative ELBO), with the
reconstruction a summed Bernoulli cross-entropy in nats.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from typing import Iterator

import numpy as np

from ..midi_io import NUM_PITCHES, PianoRoll
from .layers import (
    GruCell,
    ShapeMismatch,
    conv3x3_backward,
    conv3x3_forward,
    gru_step,
    gru_step_backward,
    maxpool2_backward,
    maxpool2_forward,
    sigmoid,
    softplus,
)

SIGMA_FLOOR = 1e-6


@dataclass(frozen=True)
class ModelConfig:
    frame_steps: int = 4
    pitch_range: int = NUM_PITCHES
    conv_channels: tuple[int, int] = (16, 32)
    enc_hidden: int = 256
    dec_hidden: int = 512
    z_dim: int = 64
    candidate_bias: str = "b_r"  # "b_r" as printed, or "b_h"

    def __post_init__(self) -> None:
        if self.frame_steps % 4 or self.pitch_range % 4:
            raise ValueError("frame dimensions must be divisible by 4 (two 2x2 pools)")
        if self.candidate_bias not in ("b_r", "b_h"):
            raise ValueError(f"candidate_bias must be 'b_r' or 'b_h', got {self.candidate_bias!r}")
        object.__setattr__(self, "conv_channels", tuple(self.conv_channels))

    @property
    def feature_size(self) -> int:
        return self.conv_channels[1] * (self.frame_steps // 4) * (self.pitch_range // 4)

    @property
    def frame_size(self) -> int:
        return self.frame_steps * self.pitch_range


@dataclass
class CvrnnParams:
    conv1_w: np.ndarray
    conv1_b: np.ndarray
    conv2_w: np.ndarray
    conv2_b: np.ndarray
    enc: GruCell
    w_mu: np.ndarray
    b_mu: np.ndarray
    w_sigma: np.ndarray
    b_sigma: np.ndarray
    w_z: np.ndarray
    b_z: np.ndarray
    dec: GruCell
    w_p: np.ndarray
    b_p: np.ndarray

    def named_arrays(self) -> Iterator[tuple[str, np.ndarray]]:
        for f in dataclasses.fields(self):
            value = getattr(self, f.name)
            if isinstance(value, GruCell):
                for g in dataclasses.fields(value):
                    yield f"{f.name}.{g.name}", getattr(value, g.name)
            else:
                yield f.name, value

    def map(self, fn) -> CvrnnParams:
        """New params with ``fn(name, array)`` applied to every tensor."""
        return self.from_named({name: fn(name, a) for name, a in self.named_arrays()})

    def zeros_like(self) -> CvrnnParams:
        return self.map(lambda _, a: np.zeros_like(a))

    def copy(self) -> CvrnnParams:
        return self.map(lambda _, a: a.copy())

    @classmethod
    def from_named(cls, arrays: dict[str, np.ndarray]) -> CvrnnParams:
        cells: dict[str, dict[str, np.ndarray]] = {"enc": {}, "dec": {}}
        top = {}
        for name, a in arrays.items():
            head, _, tail = name.partition(".")
            if tail:
                cells[head][tail] = a
            else:
                top[name] = a
        return cls(enc=GruCell(**cells["enc"]), dec=GruCell(**cells["dec"]), **top)

    @property
    def num_parameters(self) -> int:
        return sum(a.size for _, a in self.named_arrays())


def param_shapes(cfg: ModelConfig) -> dict[str, tuple[int, ...]]:
    c1, c2 = cfg.conv_channels
    k, e, d, z = cfg.feature_size, cfg.enc_hidden, cfg.dec_hidden, cfg.z_dim

    def gru(prefix: str, inp: int, hid: int) -> dict[str, tuple[int, ...]]:
        out = {}
        for gate in "srh":
            out[f"{prefix}.w_{gate}"] = (hid, inp)
            out[f"{prefix}.u_{gate}"] = (hid, hid)
            out[f"{prefix}.b_{gate}"] = (hid,)
        return out

    return {
        "conv1_w": (c1, 1, 3, 3), "conv1_b": (c1,),
        "conv2_w": (c2, c1, 3, 3), "conv2_b": (c2,),
        **gru("enc", k, e),
        "w_mu": (z, e), "b_mu": (z,),
        "w_sigma": (z, e), "b_sigma": (z,),
        "w_z": (z, k), "b_z": (z,),
        **gru("dec", z, d),
        "w_p": (cfg.frame_size, d), "b_p": (cfg.frame_size,),
    }


def _fans(shape: tuple[int, ...]) -> tuple[int, int]:
    if len(shape) == 4:
        return shape[1] * 9, shape[0] * 9
    return shape[1], shape[0]


def init_params(cfg: ModelConfig, rng: np.random.Generator) -> CvrnnParams:
    """Glorot-uniform weights, zero biases."""
    arrays = {}
    for name, shape in param_shapes(cfg).items():
        if len(shape) == 1:
            arrays[name] = np.zeros(shape)
        else:
            fan_in, fan_out = _fans(shape)
            limit = np.sqrt(6.0 / (fan_in + fan_out))
            arrays[name] = rng.uniform(-limit, limit, size=shape)
    return CvrnnParams.from_named(arrays)


def zero_params(cfg: ModelConfig) -> CvrnnParams:
    return CvrnnParams.from_named({n: np.zeros(s) for n, s in param_shapes(cfg).items()})


def check_shapes(params: CvrnnParams, cfg: ModelConfig) -> None:
    expected = param_shapes(cfg)
    for name, a in params.named_arrays():
        if a.shape != expected[name]:
            raise ShapeMismatch(f"{name}: expected {expected[name]}, got {a.shape}")


# ---------------------------------------------------------------------------
# Domain types
# ---------------------------------------------------------------------------


@dataclass
class LatentGaussian:
    mu: np.ndarray
    sigma: np.ndarray
    pre_sigma: np.ndarray | None = None  # linear output before softplus

    def __post_init__(self) -> None:
        if np.any(self.sigma <= 0):
            raise ValueError("sigma must be strictly positive")


@dataclass
class ElboBreakdown:
    """Negative ELBO split into the KL regularizer and the reconstruction cost (nats)."""

    kl: float
    reconstruction: float

    @property
    def total(self) -> float:
        return self.kl + self.reconstruction


# ---------------------------------------------------------------------------
# Forward pieces
# ---------------------------------------------------------------------------


def _as_batch(frames: np.ndarray, cfg: ModelConfig) -> np.ndarray:
    x = np.asarray(frames, dtype=float)
    if x.ndim == 4 and x.shape[-1] == 1:
        x = x[..., 0]
    if x.ndim == 2:
        x = x[None]
    if x.ndim != 3 or x.shape[1:] != (cfg.frame_steps, cfg.pitch_range):
        raise ShapeMismatch(
            f"frames must be (T, {cfg.frame_steps}, {cfg.pitch_range}[, 1]), got {np.shape(frames)}"
        )
    return x


def _cnn(params: CvrnnParams, x: np.ndarray):
    """x: (T, n, r) -> features (T, k) plus caches."""
    a1, c1 = conv3x3_forward(x[:, None], params.conv1_w, params.conv1_b)
    r1 = np.maximum(a1, 0.0)
    p1, cp1 = maxpool2_forward(r1)
    a2, c2 = conv3x3_forward(p1, params.conv2_w, params.conv2_b)
    r2 = np.maximum(a2, 0.0)
    p2, cp2 = maxpool2_forward(r2)
    return p2.reshape(len(x), -1), (c1, a1, cp1, c2, a2, cp2, p2.shape)


def _cnn_backward(params: CvrnnParams, grad: CvrnnParams, dm: np.ndarray, cache) -> None:
    c1, a1, cp1, c2, a2, cp2, p2_shape = cache
    dr2 = maxpool2_backward(dm.reshape(p2_shape), cp2)
    dp1, dw2, db2 = conv3x3_backward(dr2 * (a2 > 0), c2)
    grad.conv2_w += dw2
    grad.conv2_b += db2
    dr1 = maxpool2_backward(dp1, cp1)
    _, dw1, db1 = conv3x3_backward(dr1 * (a1 > 0), c1, need_input_grad=False)
    grad.conv1_w += dw1
    grad.conv1_b += db1


def cnn_forward(frame: np.ndarray, params: CvrnnParams, cfg: ModelConfig | None = None) -> np.ndarray:
    """Feature vector ``m_l`` (length ``k``) of one binary ``n x r [x 1]`` frame."""
    cfg = cfg or config_from_params(params)
    x = np.asarray(frame, dtype=float)
    if x.ndim == 3:
        if x.shape[-1] != 1:
            raise ShapeMismatch(f"frame must have one channel, got {x.shape}")
        x = x[..., 0]
    if x.shape != (cfg.frame_steps, cfg.pitch_range):
        raise ShapeMismatch(f"frame must be {cfg.frame_steps}x{cfg.pitch_range}, got {np.shape(frame)}")
    if not np.isin(x, (0.0, 1.0)).all():
        raise ValueError("frame must be binary")
    return _cnn(params, x[None])[0][0]


def config_from_params(params: CvrnnParams, candidate_bias: str = "b_r") -> ModelConfig:
    """Recover the architecture from tensor shapes (frames are 4 steps tall)."""
    frame_steps = 4
    cfg = ModelConfig(
        frame_steps=frame_steps,
        pitch_range=params.w_p.shape[0] // frame_steps,
        conv_channels=(params.conv1_w.shape[0], params.conv2_w.shape[0]),
        enc_hidden=params.enc.hidden,
        dec_hidden=params.dec.hidden,
        z_dim=params.w_mu.shape[0],
        candidate_bias=candidate_bias,
    )
    check_shapes(params, cfg)
    return cfg


def encode(frames: np.ndarray, params: CvrnnParams, cfg: ModelConfig) -> np.ndarray:
    """Final encoder state ``h_q`` after reading every frame's conv features."""
    m, _ = _cnn(params, _as_batch(frames, cfg))
    h = np.zeros(cfg.enc_hidden)
    for t in range(len(m)):
        h, _ = gru_step(params.enc, m[t], h, cfg.candidate_bias)
    return h


def latent_params(h_q: np.ndarray, params: CvrnnParams) -> LatentGaussian:
    mu = params.w_mu @ h_q + params.b_mu
    pre = params.w_sigma @ h_q + params.b_sigma
    return LatentGaussian(mu, softplus(pre) + SIGMA_FLOOR, pre)


def reparameterize(g: LatentGaussian, epsilon: np.ndarray) -> np.ndarray:
    return g.mu + g.sigma * epsilon


def kl_divergence(g: LatentGaussian) -> float:
    """KL(q || N(0, I)) for a diagonal Gaussian.

    Scalars keep the parameters' float type so extended-precision checks work.
    """
    var = g.sigma**2
    return 0.5 * np.sum(var + g.mu**2 - 1.0 - np.log(var))


def bernoulli_cross_entropy(targets: np.ndarray, logits: np.ndarray) -> float:
    """Summed ``-[x log p + (1-x) log(1-p)]`` with ``p = logistic(logits)``, computed stably."""
    return np.sum(softplus(logits) - targets * logits)


def decode_sequence(
    z: np.ndarray,
    teacher_frames: np.ndarray,
    params: CvrnnParams,
    cfg: ModelConfig,
    dropout_mask: np.ndarray | None = None,
) -> list[np.ndarray]:
    """Teacher-forced decoder logits, one length-``n*r`` vector per frame."""
    x = _as_batch(teacher_frames, cfg)
    m, _ = _cnn(params, x)
    logits, _ = _decode(z, m, params, cfg, dropout_mask)
    return list(logits)


def _decode(z, m, params, cfg, dec_mask):
    steps = len(m)
    h = np.zeros(cfg.dec_hidden)
    caches, outs, logits = [], [], np.empty((steps, cfg.frame_size))
    for t in range(steps):
        u = z if t == 0 else params.w_z @ m[t - 1] + params.b_z
        h, cache = gru_step(params.dec, u, h, cfg.candidate_bias)
        out = h if dec_mask is None else h * dec_mask[t]
        logits[t] = params.w_p @ out + params.b_p
        caches.append(cache)
        outs.append(out)
    return logits, (caches, outs)


def probabilities(logits: np.ndarray, cfg: ModelConfig) -> np.ndarray:
    """Logistic output reshaped to ``(T, n, r)``."""
    return sigmoid(np.asarray(logits)).reshape(-1, cfg.frame_steps, cfg.pitch_range)


# ---------------------------------------------------------------------------
# Loss and exact gradients
# ---------------------------------------------------------------------------


@dataclass
class DropoutMasks:
    """Inverted-dropout multipliers (0 or 1/(1-p)); ``None`` disables a site."""

    cnn: np.ndarray | None = None  # (T, k)
    decoder: np.ndarray | None = None  # (T, d)

    @classmethod
    def sample(cls, rng: np.random.Generator, p: float, steps: int, cfg: ModelConfig) -> DropoutMasks:
        if p <= 0:
            return cls()
        keep = 1.0 - p
        return cls(
            (rng.random((steps, cfg.feature_size)) < keep) / keep,
            (rng.random((steps, cfg.dec_hidden)) < keep) / keep,
        )


@dataclass
class _Trace:
    x: np.ndarray
    cnn_cache: tuple
    m: np.ndarray
    enc_caches: list = field(default_factory=list)
    h_q: np.ndarray | None = None
    latent: LatentGaussian | None = None
    samples: list = field(default_factory=list)  # (eps, z, logits, dec_trace)


def _forward(batch, params, epsilon, cfg, masks):
    x = _as_batch(batch, cfg)
    eps = np.atleast_2d(np.asarray(epsilon, dtype=params.w_p.dtype))
    if eps.shape[1] != cfg.z_dim:
        raise ShapeMismatch(f"epsilon must have z_dim={cfg.z_dim} columns, got {eps.shape}")
    m_raw, cnn_cache = _cnn(params, x)
    m = m_raw if masks.cnn is None else m_raw * masks.cnn
    tr = _Trace(x, cnn_cache, m)
    h = np.zeros(cfg.enc_hidden)
    for t in range(len(m)):
        h, cache = gru_step(params.enc, m[t], h, cfg.candidate_bias)
        tr.enc_caches.append(cache)
    tr.h_q = h
    tr.latent = latent_params(h, params)
    targets = x.reshape(len(x), -1)
    recon = 0.0
    for e in eps:
        z = reparameterize(tr.latent, e)
        logits, dec_trace = _decode(z, m, params, cfg, masks.decoder)
        recon += bernoulli_cross_entropy(targets, logits)
        tr.samples.append((e, z, logits, dec_trace))
    return ElboBreakdown(kl_divergence(tr.latent), recon / len(eps)), tr


def elbo_loss(batch, params: CvrnnParams, epsilon, cfg: ModelConfig, masks: DropoutMasks | None = None) -> ElboBreakdown:
    """Negative ELBO for one batch; ``epsilon`` is ``(L, z_dim)`` standard-normal noise."""
    return _forward(batch, params, epsilon, cfg, masks or DropoutMasks())[0]


def backprop(batch, params: CvrnnParams, epsilon, cfg: ModelConfig, masks: DropoutMasks | None = None):
    """Return ``(ElboBreakdown, gradients)`` with gradients shaped like ``params``."""
    masks = masks or DropoutMasks()
    loss, tr = _forward(batch, params, epsilon, cfg, masks)
    g = params.zeros_like()
    targets = tr.x.reshape(len(tr.x), -1)
    n_samples = len(tr.samples)
    mu, sigma = tr.latent.mu, tr.latent.sigma

    dm = np.zeros_like(tr.m)
    dmu = mu.copy()  # d kl / d mu
    dsigma = sigma - 1.0 / sigma  # d kl / d sigma
    for e, _, logits, (caches, outs) in tr.samples:
        da = (sigmoid(logits) - targets) / n_samples
        dh_next = np.zeros(cfg.dec_hidden)
        for t in range(len(da) - 1, -1, -1):
            g.w_p += np.outer(da[t], outs[t])
            g.b_p += da[t]
            dh = params.w_p.T @ da[t]
            if masks.decoder is not None:
                dh = dh * masks.decoder[t]
            du, dh_next = gru_step_backward(params.dec, g.dec, dh + dh_next, caches[t], cfg.candidate_bias)
            if t == 0:
                dmu += du
                dsigma += du * e
            else:
                g.w_z += np.outer(du, tr.m[t - 1])
                g.b_z += du
                dm[t - 1] += params.w_z.T @ du

    dpre = dsigma * sigmoid(tr.latent.pre_sigma)
    g.w_mu += np.outer(dmu, tr.h_q)
    g.b_mu += dmu
    g.w_sigma += np.outer(dpre, tr.h_q)
    g.b_sigma += dpre
    dh = params.w_mu.T @ dmu + params.w_sigma.T @ dpre
    for t in range(len(tr.m) - 1, -1, -1):
        dx, dh = gru_step_backward(params.enc, g.enc, dh, tr.enc_caches[t], cfg.candidate_bias)
        dm[t] += dx

    if masks.cnn is not None:
        dm = dm * masks.cnn
    _cnn_backward(params, g, dm, tr.cnn_cache)
    return loss, g


# ---------------------------------------------------------------------------
# Sampling
# ---------------------------------------------------------------------------


def generate(
    params: CvrnnParams,
    cfg: ModelConfig,
    num_bars: float,
    rng_seed: int,
    binarize: str = "threshold",
) -> PianoRoll:
    """Decode from ``z ~ N(0, I)``, feeding each binarized frame back through the CNN.

    ``binarize`` is ``"threshold"`` (cell on iff p > 0.5) or ``"bernoulli"``.
    Frames past the first batch keep running the same decoder loop; nothing is
    re-encoded.
    """
    if cfg.pitch_range != NUM_PITCHES:
        raise ShapeMismatch(f"generation emits piano-rolls, needs pitch_range={NUM_PITCHES}")
    if binarize not in ("threshold", "bernoulli"):
        raise ValueError(f"unknown binarize mode {binarize!r}")
    steps_per_bar = 8
    if (num_bars * steps_per_bar) % cfg.frame_steps or num_bars <= 0:
        raise ValueError(f"num_bars must be a positive multiple of half a bar, got {num_bars}")
    num_frames = int(num_bars * steps_per_bar) // cfg.frame_steps

    rng = np.random.default_rng(rng_seed)
    z = rng.standard_normal(cfg.z_dim)
    h = np.zeros(cfg.dec_hidden)
    u = z
    frames = np.zeros((num_frames, cfg.frame_steps, cfg.pitch_range), dtype=np.uint8)
    for t in range(num_frames):
        h, _ = gru_step(params.dec, u, h, cfg.candidate_bias)
        p = sigmoid(params.w_p @ h + params.b_p)
        if binarize == "threshold":
            on = p > 0.5
        else:
            on = rng.random(p.shape) < p
        frames[t] = on.reshape(cfg.frame_steps, cfg.pitch_range)
        m, _ = _cnn(params, frames[t][None].astype(float))
        u = params.w_z @ m[0] + params.b_z
    return PianoRoll(frames.reshape(-1, cfg.pitch_range))
