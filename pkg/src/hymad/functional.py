"""Differentiable building blocks composed from the tensor primitives.

Everything here works on trailing axes so the same code serves single
sequences ([T, d]) and batches ([B, T, d]).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from hymad.errors import NumericError, ShapeError
from hymad.tensor import Tensor, concat, grad_enabled


def softmax_rows(m: Tensor) -> Tensor:
    """Row-wise softmax over the last axis, stabilized by max subtraction."""
    m = Tensor._coerce(m)
    if np.isnan(m.data).any():
        raise NumericError("softmax input contains NaN")
    shifted = m - m.data.max(axis=-1, keepdims=True)
    e = shifted.exp()
    return e / e.sum(axis=-1, keepdims=True)


def attention(q: Tensor, k: Tensor, v: Tensor) -> Tensor:
    """Scaled dot-product attention: softmax(Q K^T / sqrt(d_k)) V."""
    q, k, v = Tensor._coerce(q), Tensor._coerce(k), Tensor._coerce(v)
    d_k = q.shape[-1]
    if k.shape[-1] != d_k:
        raise ShapeError(f"query width {d_k} != key width {k.shape[-1]}")
    if k.shape[-2] != v.shape[-2]:
        raise ShapeError(f"key rows {k.shape[-2]} != value rows {v.shape[-2]}")
    scores = (q @ k.T) * (1.0 / math.sqrt(d_k))
    return softmax_rows(scores) @ v


@dataclass
class RnnParams:
    """Elman recurrence weights: h_t = tanh(W_h h_{t-1} + W_x f_t + b)."""

    w_h: Tensor  # [H, H]
    w_x: Tensor  # [H, C_in]
    b: Tensor    # [H]

    def __post_init__(self):
        h1, h2 = self.w_h.shape
        if h1 != h2:
            raise ShapeError(f"W_h must be square, got {self.w_h.shape}")
        if self.w_x.shape[0] != h1 or self.b.shape != (h1,):
            raise ShapeError("RNN parameter shapes disagree")

    @property
    def hidden(self) -> int:
        return self.b.shape[0]


def rnn_forward(f: Tensor, p: RnnParams, h0: Tensor | None = None) -> Tensor:
    """Run the recurrence over a [T, C] or [B, T, C] feature sequence.

    Returns the full hidden-state sequence ([T, H] or [B, T, H]).
    """
    f = Tensor._coerce(f)
    batched = f.ndim == 3
    seq = f if batched else f.reshape(1, *f.shape)
    bsz, steps, c_in = seq.shape
    if p.w_x.shape[1] != c_in:
        raise ShapeError(f"W_x expects {p.w_x.shape[1]} features, got {c_in}")
    if h0 is None:
        h = Tensor(np.zeros((bsz, p.hidden)))
    else:
        h0 = Tensor._coerce(h0)
        if h0.shape[-1] != p.hidden:
            raise ShapeError(f"h0 width {h0.shape[-1]} != hidden {p.hidden}")
        h = h0 if h0.ndim == 2 else h0.reshape(1, -1)

    wht, wxt = p.w_h.T, p.w_x.T
    states = []
    for t in range(steps):
        h = (h @ wht + seq[:, t, :] @ wxt + p.b).tanh()
        states.append(h.reshape(bsz, 1, p.hidden))
    out = concat(states, axis=1)
    return out if batched else out.reshape(steps, p.hidden)


def dense(x: Tensor, w: Tensor, b: Tensor, act: str = "linear") -> Tensor:
    """Affine layer act(x W + b) with act in {relu, linear}."""
    z = Tensor._coerce(x) @ w + b
    if act == "relu":
        return z.relu()
    if act == "linear":
        return z
    raise ValueError(f"unknown activation {act!r}")


def bce_with_logits(logits: Tensor, targets) -> Tensor:
    """Mean binary cross-entropy from raw logits, in stable log-sum-exp form.

    Per cell: softplus(z) - z*y, with softplus(z) = max(z,0) + log1p(e^-|z|).
    """
    logits = Tensor._coerce(logits)
    y = targets.data if isinstance(targets, Tensor) else np.asarray(targets, dtype=np.float64)
    if y.shape != logits.shape:
        raise ShapeError(f"targets shape {y.shape} != logits shape {logits.shape}")
    if not np.all((y == 0.0) | (y == 1.0)):
        raise ValueError("targets must be binary (0/1)")

    z = logits.data
    val = (np.maximum(z, 0.0) + np.log1p(np.exp(-np.abs(z))) - z * y).mean()

    def back(g):
        sig = np.where(z >= 0, 1.0 / (1.0 + np.exp(-z)),
                       np.exp(z) / (1.0 + np.exp(z)))
        return (g * (sig - y) / z.size,)

    return Tensor._result(val, (logits,), back)


def sigmoid(z: np.ndarray) -> np.ndarray:
    return np.where(z >= 0, 1.0 / (1.0 + np.exp(-z)),
                    np.exp(z) / (1.0 + np.exp(z)))


def conv1d_same(x: Tensor, kernels: Tensor) -> Tensor:
    """Same-padded 1-d convolution of signals with a filter bank, via FFT.

    x: [T] or [B, T]; kernels: [C, L] with odd L, stored over centered lags
    -(L-1)/2 .. (L-1)/2.  Output [B, C, T] (or [C, T] for a single signal):
    y[b, c, m] = sum_n x[b, m-n] k[c, n], zero-padded at the edges.
    """
    x, kernels = Tensor._coerce(x), Tensor._coerce(kernels)
    single = x.ndim == 1
    xd = x.data[None, :] if single else x.data
    kd = kernels.data
    if kd.ndim != 2:
        raise ShapeError(f"kernels must be [C, L], got {kernels.shape}")
    bsz, t_len = xd.shape
    n_filt, l_len = kd.shape
    if l_len % 2 != 1:
        raise ShapeError(f"kernel length must be odd, got {l_len}")
    if t_len < l_len:
        raise ShapeError(f"signal length {t_len} < kernel length {l_len}")
    half = (l_len - 1) // 2

    nfft = 1 << (t_len + l_len - 1).bit_length()
    xf = np.fft.rfft(xd, nfft)                      # [B, F]
    kf = np.fft.rfft(kd, nfft)                      # [C, F]
    full = np.fft.irfft(xf[:, None, :] * kf[None, :, :], nfft)
    out = full[:, :, half:half + t_len]             # 'same' window of full conv

    def back(g):
        gx = gk = None
        gf = np.fft.rfft(g, nfft)                   # [B, C, F]
        if x.requires_grad:
            # dL/dx = same-conv of grad with the reversed kernel
            krev_f = np.fft.rfft(kd[:, ::-1], nfft)
            gx_full = np.fft.irfft((gf * krev_f[None, :, :]).sum(axis=1), nfft)
            gx = gx_full[:, half:half + t_len]
            if single:
                gx = gx[0]
        if kernels.requires_grad:
            # dL/dk[c, n] = sum_{b,m} g[b,c,m] x[b, m-n], n in [-half, half]
            xrev_f = np.fft.rfft(xd[:, ::-1], nfft)
            corr = np.fft.irfft(gf * xrev_f[:, None, :], nfft).sum(axis=0)
            # corr[k] = sum_m g[m] x[T-1-k+m]; lag n sits at k = T-1+n
            gk = corr[:, t_len - 1 - half:t_len + half]
        return (gx, gk)

    out_t = Tensor._result(out, (x, kernels), back)
    return out_t.reshape(n_filt, t_len) if single else out_t


def conv1d_same_naive(x: np.ndarray, kernels: np.ndarray) -> np.ndarray:
    """Double-loop reference for conv1d_same; used by tests as the oracle."""
    x = np.asarray(x, dtype=np.float64)
    kernels = np.asarray(kernels, dtype=np.float64)
    n_filt, l_len = kernels.shape
    half = (l_len - 1) // 2
    t_len = x.shape[0]
    out = np.zeros((n_filt, t_len))
    for c in range(n_filt):
        for m in range(t_len):
            acc = 0.0
            for n in range(-half, half + 1):
                idx = m - n
                if 0 <= idx < t_len:
                    acc += x[idx] * kernels[c, n + half]
            out[c, m] = acc
    return out


def conv1d_strided(x: Tensor, kernels: Tensor, stride: int,
                   chunk: int = 16) -> Tensor:
    """conv1d_same evaluated only at every `stride`-th lag.

    Exactly equals conv1d_same(x, kernels)[..., ::stride] but never
    materialises the full-resolution convolution; the batch is processed in
    chunks so the patch matrices stay small.
    x: [B, T]; kernels: [C, L] odd-length centered lags; returns [B, C, T/stride].
    """
    x, kernels = Tensor._coerce(x), Tensor._coerce(kernels)
    xd, kd = x.data, kernels.data
    if xd.ndim != 2:
        raise ShapeError(f"x must be [B, T], got {x.shape}")
    if kd.ndim != 2 or kd.shape[1] % 2 != 1:
        raise ShapeError(f"kernels must be [C, odd L], got {kernels.shape}")
    bsz, t_len = xd.shape
    n_filt, l_len = kd.shape
    if t_len % stride != 0:
        raise ShapeError(f"length {t_len} not divisible by conv stride {stride}")
    half = (l_len - 1) // 2
    n_out = t_len // stride
    krev = np.ascontiguousarray(kd[:, ::-1])

    # out[b, c, p] = sum_w xpad[b, pS + w] k[c, L-1-w]
    xpad = np.pad(xd, ((0, 0), (half, half)))

    def _patches(rows):
        view = np.lib.stride_tricks.sliding_window_view(rows, l_len, axis=1)
        return np.ascontiguousarray(view[:, ::stride, :])   # [b, P, L]

    out = np.empty((bsz, n_filt, n_out))
    for i in range(0, bsz, chunk):
        pc = _patches(xpad[i:i + chunk])
        b = pc.shape[0]
        out[i:i + chunk] = (pc.reshape(b * n_out, l_len) @ krev.T) \
            .reshape(b, n_out, n_filt).swapaxes(1, 2)

    def back(g):
        gx = gk = None
        need_k = kernels.requires_grad
        gkrev = np.zeros_like(krev) if need_k else None
        if x.requires_grad:
            gxpad = np.zeros_like(xpad)
        for i in range(0, bsz, chunk):
            gt = np.ascontiguousarray(g[i:i + chunk].swapaxes(1, 2))
            b = gt.shape[0]
            flat = gt.reshape(b * n_out, n_filt)
            if need_k:
                pc = _patches(xpad[i:i + chunk])
                gkrev += flat.T @ pc.reshape(b * n_out, l_len)
            if x.requires_grad:
                gp = (flat @ krev).reshape(b, n_out, l_len)
                for p in range(n_out):
                    gxpad[i:i + chunk, p * stride:p * stride + l_len] += \
                        gp[:, p, :]
        if x.requires_grad:
            gx = gxpad[:, half:half + t_len]
        if need_k:
            gk = gkrev[:, ::-1]
        return (gx, gk)

    return Tensor._result(out, (x, kernels), back)


def avg_pool1d(x: Tensor, stride: int) -> Tensor:
    """Non-overlapping average pooling over the last axis."""
    x = Tensor._coerce(x)
    t_len = x.shape[-1]
    if t_len % stride != 0:
        raise ShapeError(f"length {t_len} not divisible by pool stride {stride}")
    pooled_shape = x.shape[:-1] + (t_len // stride, stride)
    return x.reshape(*pooled_shape).mean(axis=-1)
