"""Differentiable kernels needed by the baseline architectures.

Every function takes and returns :class:`Tensor` objects and records its
adjoint on the active tape when any input requires gradients.
"""
from __future__ import annotations

from functools import lru_cache

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view
from scipy.special import erf

from ..errors import ConfigurationError, DimensionError
from .tensor import Tensor, _unbroadcast, as_tensor, make_result

NORM_EPS = 1e-5
DEFAULT_MODES = 12


def matmul(a: Tensor, b: Tensor) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim < 2 or b.ndim < 2:
        raise DimensionError(f"matmul needs matrices, got {a.shape} and {b.shape}")
    if a.shape[-1] != b.shape[-2]:
        raise DimensionError(f"matmul inner extents differ: {a.shape} x {b.shape}")

    def adj(g):
        ga = _unbroadcast(g @ np.swapaxes(b.data, -1, -2), a.shape) if a.requires_grad else None
        gb = _unbroadcast(np.swapaxes(a.data, -1, -2) @ g, b.shape) if b.requires_grad else None
        return ga, gb

    return make_result(a.data @ b.data, (a, b), adj)


def linear(x: Tensor, weight: Tensor, bias: Tensor | None = None) -> Tensor:
    """``x @ weight + bias`` with ``weight`` stored as [in, out]."""
    y = matmul(x, weight)
    return y if bias is None else y + bias


# ---------------------------------------------------------------------------
# convolution family


def _correlate(x, w):
    # x [N,C,H,W] already padded, w [O,C,k,k] -> [N,O,H-k+1,W-k+1]
    k = w.shape[-1]
    if k == 1:
        return np.einsum("nchw,oc->nohw", x, w[:, :, 0, 0], optimize=True)
    win = sliding_window_view(x, (k, k), axis=(2, 3))
    out = np.tensordot(win, w, axes=([1, 4, 5], [1, 2, 3]))
    return np.ascontiguousarray(out.transpose(0, 3, 1, 2))


def conv2d(x: Tensor, kernel: Tensor, bias: Tensor | None = None, padding: int = 0) -> Tensor:
    """Zero-padded 2-D cross-correlation, stride 1.

    ``x`` is [C_in,H,W] or [N,C_in,H,W]; ``kernel`` is [C_out,C_in,k,k].
    """
    x, kernel = as_tensor(x), as_tensor(kernel)
    unbatched = x.ndim == 3
    xd = x.data[None] if unbatched else x.data
    if xd.ndim != 4 or kernel.ndim != 4:
        raise DimensionError(f"conv2d expects [N,C,H,W] and [O,C,k,k], got {x.shape} and {kernel.shape}")
    k = kernel.shape[-1]
    if kernel.shape[-2] != k or k % 2 == 0:
        raise DimensionError(f"conv2d kernel must be square with odd size, got {kernel.shape}")
    if padding < 0:
        raise DimensionError("padding must be non-negative")
    if xd.shape[1] != kernel.shape[1]:
        raise DimensionError(f"conv2d channel mismatch: input {x.shape}, kernel {kernel.shape}")
    hp, wp = xd.shape[2] + 2 * padding, xd.shape[3] + 2 * padding
    if k > hp or k > wp:
        raise DimensionError(f"kernel {kernel.shape} larger than padded input {(hp, wp)}")
    p = padding
    xp = np.pad(xd, ((0, 0), (0, 0), (p, p), (p, p))) if p else xd
    out = _correlate(xp, kernel.data)
    if bias is not None:
        out = out + bias.data[None, :, None, None]
    if unbatched:
        out = out[0]
    parents = (x, kernel) if bias is None else (x, kernel, bias)

    def adj(g):
        gb = g[None] if unbatched else g
        grads = []
        if x.requires_grad:
            gpad = np.pad(gb, ((0, 0), (0, 0), (k - 1, k - 1), (k - 1, k - 1)))
            wflip = kernel.data[:, :, ::-1, ::-1].transpose(1, 0, 2, 3)
            gx = _correlate(gpad, np.ascontiguousarray(wflip))
            if p:
                gx = gx[:, :, p:-p, p:-p]
            grads.append(gx[0] if unbatched else gx)
        else:
            grads.append(None)
        if kernel.requires_grad:
            if k == 1:
                gw = np.einsum("nohw,nchw->oc", gb, xp, optimize=True)[:, :, None, None]
            else:
                win = sliding_window_view(xp, (k, k), axis=(2, 3))
                gw = np.tensordot(gb, win, axes=([0, 2, 3], [0, 2, 3]))
            grads.append(gw)
        else:
            grads.append(None)
        if bias is not None:
            grads.append(gb.sum(axis=(0, 2, 3)) if bias.requires_grad else None)
        return tuple(grads)

    return make_result(out, parents, adj)


def upconv2x2(x: Tensor, weight: Tensor, bias: Tensor | None = None) -> Tensor:
    """Transposed convolution with a 2x2 kernel and stride 2 (doubles H and W).

    ``weight`` is [C_in, C_out, 2, 2].
    """
    n, c, h, w = x.shape
    if weight.shape[0] != c or weight.shape[2:] != (2, 2):
        raise DimensionError(f"upconv2x2 weight {weight.shape} incompatible with input {x.shape}")
    o = weight.shape[1]
    t = np.tensordot(x.data, weight.data, axes=([1], [0]))  # [N,H,W,O,2,2]
    out = t.transpose(0, 3, 1, 4, 2, 5).reshape(n, o, 2 * h, 2 * w)
    if bias is not None:
        out = out + bias.data[None, :, None, None]
    parents = (x, weight) if bias is None else (x, weight, bias)

    def adj(g):
        gt = g.reshape(n, o, h, 2, w, 2).transpose(0, 2, 4, 1, 3, 5)  # [N,H,W,O,2,2]
        gx = np.tensordot(gt, weight.data, axes=([3, 4, 5], [1, 2, 3])).transpose(0, 3, 1, 2)
        gw = np.tensordot(x.data, gt, axes=([0, 2, 3], [0, 1, 2]))
        grads = [gx, gw]
        if bias is not None:
            grads.append(g.sum(axis=(0, 2, 3)))
        return tuple(grads)

    return make_result(out, parents, adj)


def max_pool2d(x: Tensor) -> Tensor:
    """2x2 max pooling with stride 2 on [N,C,H,W]."""
    n, c, h, w = x.shape
    if h % 2 or w % 2:
        raise DimensionError(f"max_pool2d needs even spatial extents, got {x.shape}")
    blocks = x.data.reshape(n, c, h // 2, 2, w // 2, 2).transpose(0, 1, 2, 4, 3, 5).reshape(n, c, h // 2, w // 2, 4)
    idx = blocks.argmax(axis=-1)[..., None]
    out = np.take_along_axis(blocks, idx, axis=-1)[..., 0]

    def adj(g):
        gb = np.zeros_like(blocks)
        np.put_along_axis(gb, idx, g[..., None], axis=-1)
        return (gb.reshape(n, c, h // 2, w // 2, 2, 2).transpose(0, 1, 2, 4, 3, 5).reshape(n, c, h, w),)

    return make_result(out, (x,), adj)


def batch_norm(x: Tensor, gamma: Tensor, beta: Tensor, running_mean: np.ndarray,
               running_var: np.ndarray, training: bool, momentum: float = 0.1,
               eps: float = NORM_EPS) -> Tensor:
    """Per-channel batch normalization over (N, H, W); updates running stats in training mode."""
    axes = (0, 2, 3)
    shape = (1, -1, 1, 1)
    if training:
        mean = x.data.mean(axis=axes)
        var = x.data.var(axis=axes)
        m = x.data.size // x.shape[1]
        running_mean *= 1 - momentum
        running_mean += momentum * mean
        running_var *= 1 - momentum
        running_var += momentum * var * (m / max(m - 1, 1))
    else:
        mean, var = running_mean, running_var
    inv = 1.0 / np.sqrt(var + eps)
    xhat = (x.data - mean.reshape(shape)) * inv.reshape(shape)
    out = gamma.data.reshape(shape) * xhat + beta.data.reshape(shape)

    def adj(g):
        gg = (g * xhat).sum(axis=axes)
        gbeta = g.sum(axis=axes)
        dxhat = g * gamma.data.reshape(shape)
        if training:
            m = x.data.size // x.shape[1]
            gx = (inv.reshape(shape) / m) * (
                m * dxhat - dxhat.sum(axis=axes).reshape(shape)
                - xhat * (dxhat * xhat).sum(axis=axes).reshape(shape))
        else:
            gx = dxhat * inv.reshape(shape)
        return gx, gg, gbeta

    return make_result(out.astype(x.dtype, copy=False), (x, gamma, beta), adj)


# ---------------------------------------------------------------------------
# spectral convolution


def _retained_full_axis(n, m):
    pos = (m + 1) // 2
    neg = m // 2
    return np.concatenate([np.arange(pos), np.arange(n - neg, n)]).astype(int)


@lru_cache(maxsize=64)
def _dft_mats(h, w, mh, mw, cdtype):
    cdtype = np.dtype(cdtype)
    kh = np.arange(mh)
    hh = np.arange(h)
    fw = _retained_full_axis(w, mw)
    ww = np.arange(w)
    fwd_h = np.exp(-2j * np.pi * np.outer(kh, hh) / h)
    fwd_w = np.exp(-2j * np.pi * np.outer(fw, ww) / w)
    weight = np.full(mh, 2.0)
    weight[0] = 1.0
    if h % 2 == 0 and mh == h // 2 + 1:
        weight[-1] = 1.0
    inv_h = (weight[None, :] * np.exp(2j * np.pi * np.outer(hh, kh) / h)) / h
    inv_w = np.exp(2j * np.pi * np.outer(ww, fw) / w) / w
    return tuple(a.astype(cdtype) for a in (fwd_h, fwd_w, inv_h, inv_w))


def spectral_modes(modes, h, w):
    """Resolve ``modes`` (int or pair) to (m_h, m_w) and check grid capacity."""
    mh, mw = (modes, modes) if np.isscalar(modes) else tuple(modes)
    if mh < 1 or mw < 1 or mh > h // 2 + 1 or mw > w:
        raise ConfigurationError(
            f"modes {(mh, mw)} exceed grid capacity for {h}x{w} (limits {h // 2 + 1}, {w})")
    return int(mh), int(mw)


def spectral_conv(x: Tensor, weights: Tensor, modes=DEFAULT_MODES) -> Tensor:
    """Truncated Fourier-space channel mixing.

    ``x`` is [C_in,H,W] or [N,C_in,H,W]; ``weights`` is real with shape
    [C_out, C_in, m_h, m_w, 2] holding the real and imaginary parts of the
    complex per-mode mixing matrices. The real-input transform runs along H
    (modes 0..m_h-1 kept) and the full transform along W (the m_w
    lowest-magnitude frequencies kept).
    """
    unbatched = x.ndim == 3
    xd = x.data[None] if unbatched else x.data
    n, c, h, w = xd.shape
    mh, mw = spectral_modes(modes, h, w)
    if weights.shape != (weights.shape[0], c, mh, mw, 2):
        raise DimensionError(f"spectral weights {weights.shape} do not match input {x.shape} and modes {(mh, mw)}")
    cdtype = np.complex64 if xd.dtype == np.float32 else np.complex128
    fh, fw, ih, iw = _dft_mats(h, w, mh, mw, np.dtype(cdtype).str)
    wc = weights.data[..., 0] + 1j * weights.data[..., 1]
    wc = wc.astype(cdtype, copy=False)
    X = fh @ xd @ fw.T  # [N,C,mh,mw]
    Y = np.einsum("ocij,ncij->noij", wc, X, optimize=True)
    out = np.real(ih @ Y @ iw.T).astype(xd.dtype, copy=False)
    if unbatched:
        out = out[0]

    def adj(g):
        gb = g[None] if unbatched else g
        gY = ih.conj().T @ gb @ iw.conj()
        gx = gw = None
        if x.requires_grad:
            gX = np.einsum("ocij,noij->ncij", wc.conj(), gY, optimize=True)
            gx = np.real(fh.conj().T @ gX @ fw.conj()).astype(xd.dtype, copy=False)
            if unbatched:
                gx = gx[0]
        if weights.requires_grad:
            gwc = np.einsum("ncij,noij->ocij", X.conj(), gY, optimize=True)
            gw = np.stack([gwc.real, gwc.imag], axis=-1).astype(weights.dtype, copy=False)
        return gx, gw

    return make_result(out, (x, weights), adj)


# ---------------------------------------------------------------------------
# activations


def standardize(x: Tensor, axis: int = -1, eps: float = NORM_EPS) -> Tensor:
    """Zero-mean, unit-variance along ``axis`` (no affine parameters)."""
    mean = x.data.mean(axis=axis, keepdims=True)
    var = x.data.var(axis=axis, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    xhat = (x.data - mean) * inv
    m = x.shape[axis]

    def adj(g):
        return ((inv / m) * (m * g - g.sum(axis=axis, keepdims=True)
                             - xhat * (g * xhat).sum(axis=axis, keepdims=True)),)

    return make_result(xhat, (x,), adj)


def relu(x: Tensor) -> Tensor:
    mask = x.data > 0
    return make_result(np.where(mask, x.data, 0).astype(x.dtype, copy=False), (x,), lambda g: (g * mask,))


def tanh(x: Tensor) -> Tensor:
    out = np.tanh(x.data)
    return make_result(out, (x,), lambda g: (g * (1.0 - out * out),))


_SQRT2 = np.sqrt(2.0)
_INV_SQRT_2PI = 1.0 / np.sqrt(2.0 * np.pi)


def gelu(x: Tensor) -> Tensor:
    cdf = 0.5 * (1.0 + erf(x.data / _SQRT2))
    out = (x.data * cdf).astype(x.dtype, copy=False)

    def adj(g):
        pdf = _INV_SQRT_2PI * np.exp(-0.5 * x.data * x.data)
        return ((g * (cdf + x.data * pdf)).astype(x.dtype, copy=False),)

    return make_result(out, (x,), adj)


_ACTIVATIONS = {"relu": relu, "tanh": tanh, "gelu": gelu}


def activation(x: Tensor, kind: str = "relu", pre_normalize: bool = False, axis: int = -1) -> Tensor:
    try:
        fn = _ACTIVATIONS[kind.lower()]
    except KeyError:
        raise ConfigurationError(f"unknown activation {kind!r}; expected one of {sorted(_ACTIVATIONS)}") from None
    if pre_normalize:
        x = standardize(x, axis=axis)
    return fn(x)
