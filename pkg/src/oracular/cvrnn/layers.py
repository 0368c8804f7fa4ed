"""Forward/backward numpy kernels: 3x3 same convolution, 2x2 max-pool, GRU cell.

Every ``*_forward`` returns ``(output, cache)``; the matching ``*_backward``
takes the upstream gradient and that cache.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view


class ShapeMismatch(ValueError):
    pass


def sigmoid(a: np.ndarray) -> np.ndarray:
    # split by sign so exp never overflows
    a = np.asarray(a)
    out = np.empty_like(a, dtype=np.result_type(a, float))
    pos = a >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-a[pos]))
    e = np.exp(a[~pos])
    out[~pos] = e / (1.0 + e)
    return out


def softplus(a: np.ndarray) -> np.ndarray:
    return np.logaddexp(0.0, a)


# ---------------------------------------------------------------------------
# Convolution / pooling, batched over frames: arrays are (B, C, H, W)
# ---------------------------------------------------------------------------


def conv3x3_forward(x: np.ndarray, w: np.ndarray, b: np.ndarray):
    bsz, c_in, h, wd = x.shape
    if w.shape[1:] != (c_in, 3, 3):
        raise ShapeMismatch(f"kernel {w.shape} does not fit input channels {c_in}")
    xp = np.pad(x, ((0, 0), (0, 0), (1, 1), (1, 1)))
    windows = sliding_window_view(xp, (3, 3), axis=(2, 3))  # (B, C, H, W, 3, 3)
    cols = windows.transpose(0, 2, 3, 1, 4, 5).reshape(bsz * h * wd, c_in * 9)
    out = cols @ w.reshape(w.shape[0], -1).T + b
    out = out.reshape(bsz, h, wd, -1).transpose(0, 3, 1, 2)
    return out, (x.shape, cols, w)


def conv3x3_backward(dout: np.ndarray, cache, need_input_grad: bool = True):
    (bsz, c_in, h, wd), cols, w = cache
    d2 = dout.transpose(0, 2, 3, 1).reshape(-1, w.shape[0])
    dw = (d2.T @ cols).reshape(w.shape)
    db = d2.sum(axis=0)
    if not need_input_grad:
        return None, dw, db
    dcols = (d2 @ w.reshape(w.shape[0], -1)).reshape(bsz, h, wd, c_in, 3, 3)
    dxp = np.zeros((bsz, c_in, h + 2, wd + 2))
    for di in range(3):
        for dj in range(3):
            dxp[:, :, di:di + h, dj:dj + wd] += dcols[..., di, dj].transpose(0, 3, 1, 2)
    return dxp[:, :, 1:-1, 1:-1], dw, db


def maxpool2_forward(x: np.ndarray):
    bsz, c, h, w = x.shape
    if h % 2 or w % 2:
        raise ShapeMismatch(f"max-pool needs even spatial dims, got {h}x{w}")
    win = x.reshape(bsz, c, h // 2, 2, w // 2, 2).transpose(0, 1, 2, 4, 3, 5).reshape(bsz, c, h // 2, w // 2, 4)
    idx = win.argmax(axis=-1)  # first maximum takes the gradient on ties
    out = np.take_along_axis(win, idx[..., None], axis=-1)[..., 0]
    return out, (x.shape, idx)


def maxpool2_backward(dout: np.ndarray, cache):
    (bsz, c, h, w), idx = cache
    dwin = np.zeros((bsz, c, h // 2, w // 2, 4))
    np.put_along_axis(dwin, idx[..., None], dout[..., None], axis=-1)
    return dwin.reshape(bsz, c, h // 2, w // 2, 2, 2).transpose(0, 1, 2, 4, 3, 5).reshape(bsz, c, h, w)


# ---------------------------------------------------------------------------
# GRU
# ---------------------------------------------------------------------------


@dataclass
class GruCell:
    """Update gate ``s``, reset gate ``r`` and candidate ``h`` weights."""

    w_s: np.ndarray
    u_s: np.ndarray
    b_s: np.ndarray
    w_r: np.ndarray
    u_r: np.ndarray
    b_r: np.ndarray
    w_h: np.ndarray
    u_h: np.ndarray
    b_h: np.ndarray

    @property
    def hidden(self) -> int:
        return self.u_s.shape[0]

    @property
    def input(self) -> int:
        return self.w_s.shape[1]


def gru_step(cell: GruCell, x: np.ndarray, h_prev: np.ndarray, candidate_bias: str = "b_r"):
    """One GRU update; returns ``(h, cache)``.

    ``candidate_bias`` picks the bias inside the tanh: ``"b_r"`` follows the
    equations as printed (the reset-gate bias reused), ``"b_h"`` uses the
    candidate's own bias.
    """
    if x.shape != (cell.input,) or h_prev.shape != (cell.hidden,):
        raise ShapeMismatch(f"GRU({cell.input}->{cell.hidden}) got x{x.shape}, h{h_prev.shape}")
    s = sigmoid(cell.w_s @ x + cell.u_s @ h_prev + cell.b_s)
    r = sigmoid(cell.w_r @ x + cell.u_r @ h_prev + cell.b_r)
    bias = cell.b_r if candidate_bias == "b_r" else cell.b_h
    rh = r * h_prev
    c = np.tanh(cell.w_h @ x + cell.u_h @ rh + bias)
    h = s * h_prev + (1.0 - s) * c
    return h, (x, h_prev, s, r, rh, c)


def gru_step_backward(cell: GruCell, grad: GruCell, dh: np.ndarray, cache, candidate_bias: str = "b_r"):
    """Accumulate parameter gradients into ``grad``; return ``(dx, dh_prev)``."""
    x, h_prev, s, r, rh, c = cache
    ds = dh * (h_prev - c)
    dc = dh * (1.0 - s)
    dh_prev = dh * s

    da_c = dc * (1.0 - c * c)
    grad.w_h += np.outer(da_c, x)
    grad.u_h += np.outer(da_c, rh)
    if candidate_bias == "b_r":
        grad.b_r += da_c
    else:
        grad.b_h += da_c
    dx = cell.w_h.T @ da_c
    drh = cell.u_h.T @ da_c
    dr = drh * h_prev
    dh_prev += drh * r

    da_s = ds * s * (1.0 - s)
    grad.w_s += np.outer(da_s, x)
    grad.u_s += np.outer(da_s, h_prev)
    grad.b_s += da_s
    dx += cell.w_s.T @ da_s
    dh_prev += cell.u_s.T @ da_s

    da_r = dr * r * (1.0 - r)
    grad.w_r += np.outer(da_r, x)
    grad.u_r += np.outer(da_r, h_prev)
    grad.b_r += da_r
    dx += cell.w_r.T @ da_r
    dh_prev += cell.u_r.T @ da_r
    return dx, dh_prev
