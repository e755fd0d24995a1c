"""Network layer primitives built on the autodiff core, plus parameter
storage and the binary weights file format.

Shapes follow the convention that the last axis is the feature axis and any
leading axes are batch-like, so the same code serves single frames and
minibatches.
"""

import struct

import numpy as np

from . import autodiff as ad
from .autodiff import Parameter, Tensor, as_tensor


def linear(x, w, b):
    """y = x @ w + b over the last axis."""
    x = as_tensor(x)
    if x.shape[-1] != w.shape[0]:
        raise ValueError(f"linear: input dim {x.shape[-1]} does not match weight {w.shape}")
    return ad.matmul(x, w) + b


def conv2d(x, kernel, bias, stride=2, padding=1):
    """3x3 cross-correlation with zero padding, default stride 2.

    x is (C_in, H, W) or batched (B, C_in, H, W); kernel is
    (C_out, C_in, 3, 3). Output spatial extents are ceil(H/s) x ceil(W/s).
    """
    x = as_tensor(x)
    squeeze = x.ndim == 3
    xd = x.data[None] if squeeze else x.data
    if xd.ndim != 4:
        raise ValueError(f"conv2d: expected 3D or 4D input, got shape {x.shape}")
    B, C, H, W = xd.shape
    C_out, C_in, kh, kw = kernel.data.shape
    if C != C_in:
        raise ValueError(f"conv2d: input channels {C} != kernel channels {C_in}")
    if H < 2 or W < 2:
        raise ValueError("conv2d: spatial extent must be at least 2")
    Ho = (H + 2 * padding - kh) // stride + 1
    Wo = (W + 2 * padding - kw) // stride + 1

    xp = np.zeros((B, C, H + 2 * padding, W + 2 * padding))
    xp[:, :, padding:padding + H, padding:padding + W] = xd

    # im2col: one BLAS matmul instead of per-offset contractions
    sB, sC, sH, sW = xp.strides
    view = np.lib.stride_tricks.as_strided(
        xp, shape=(B, Ho, Wo, C, kh, kw),
        strides=(sB, stride * sH, stride * sW, sC, sH, sW))
    cols = view.reshape(B * Ho * Wo, C * kh * kw)
    kmat = kernel.data.reshape(C_out, C * kh * kw)
    out = (cols @ kmat.T).reshape(B, Ho, Wo, C_out).transpose(0, 3, 1, 2)
    out = out + bias.data[None, :, None, None]

    def vjp(g):
        if squeeze:
            g = g[None]
        g2d = g.transpose(0, 2, 3, 1).reshape(B * Ho * Wo, C_out)
        if bias.requires_grad:
            ad._accumulate(bias, g.sum(axis=(0, 2, 3)))
        if kernel.requires_grad:
            ad._accumulate(kernel, (g2d.T @ cols).reshape(kernel.data.shape))
        if x.requires_grad:
            gcols = (g2d @ kmat).reshape(B, Ho, Wo, C, kh, kw)
            gxp = np.zeros_like(xp)
            for di in range(kh):
                for dj in range(kw):
                    gxp[:, :, di:di + stride * (Ho - 1) + 1:stride,
                        dj:dj + stride * (Wo - 1) + 1:stride] += gcols[:, :, :, :, di, dj].transpose(0, 3, 1, 2)
            gx = gxp[:, :, padding:padding + H, padding:padding + W]
            ad._accumulate(x, gx[0] if squeeze else gx)

    out_t = Tensor(out[0] if squeeze else out, _parents=(x, kernel, bias), _vjp=vjp)
    return out_t


def layer_norm(x, gain, bias, eps=1e-5):
    """Normalize each row of the last axis to zero mean and unit (population)
    variance, then apply the learned affine."""
    x = as_tensor(x)
    mu = ad.mean(x, axis=-1, keepdims=True)
    centered = x - mu
    var = ad.mean(centered * centered, axis=-1, keepdims=True)
    normed = centered / ad.sqrt(var + eps)
    return normed * gain + bias


def softmax(x, axis=-1):
    shifted = x - ad.tmax(x, axis=axis, keepdims=True)
    e = ad.exp(shifted)
    return e / ad.tsum(e, axis=axis, keepdims=True)


def multi_head_attention(x, weights, heads):
    """Scaled dot-product self-attention over the second-to-last axis.

    x is (N, d) or (B, N, d); weights is a dict with w_q/w_k/w_v/w_o of
    shape (d, d) and b_q/b_k/b_v/b_o of shape (d,).
    """
    x = as_tensor(x)
    d = x.shape[-1]
    if d % heads != 0:
        raise ValueError(f"attention dim {d} not divisible by {heads} heads")
    hd = d // heads
    n = x.shape[-2]
    lead = x.shape[:-2]

    def split(t):
        # (..., N, d) -> (..., heads, N, hd)
        t = ad.reshape(t, lead + (n, heads, hd))
        order = tuple(range(len(lead))) + (len(lead) + 1, len(lead), len(lead) + 2)
        return ad.transpose(t, order)

    q = split(linear(x, weights["w_q"], weights["b_q"]))
    k = split(linear(x, weights["w_k"], weights["b_k"]))
    v = split(linear(x, weights["w_v"], weights["b_v"]))

    kt = ad.transpose(k, tuple(range(k.ndim - 2)) + (k.ndim - 1, k.ndim - 2))
    scores = ad.matmul(q, kt) * (1.0 / np.sqrt(hd))
    attn = softmax(scores, axis=-1)
    ctx = ad.matmul(attn, v)  # (..., heads, N, hd)
    order = tuple(range(len(lead))) + (len(lead) + 1, len(lead), len(lead) + 2)
    ctx = ad.reshape(ad.transpose(ctx, order), lead + (n, d))
    return linear(ctx, weights["w_o"], weights["b_o"])


class ParameterStore:
    """Ordered name -> Parameter mapping; the unit of save/load and of the
    optimizer loop."""

    def __init__(self):
        self._params = {}

    def add(self, name, data):
        if name in self._params:
            raise ValueError(f"duplicate parameter {name}")
        p = Parameter(name, data)
        self._params[name] = p
        return p

    def __getitem__(self, name):
        return self._params[name]

    def __contains__(self, name):
        return name in self._params

    def __iter__(self):
        return iter(self._params.values())

    def __len__(self):
        return len(self._params)

    def names(self):
        return list(self._params.keys())

    def zero_grads(self):
        for p in self:
            p.zero_grad()

    def state_copy(self):
        return {p.name: p.data.copy() for p in self}

    def load_state(self, state):
        for p in self:
            if p.name not in state:
                raise KeyError(f"missing parameter {p.name}")
            if state[p.name].shape != p.data.shape:
                raise ValueError(f"shape mismatch for {p.name}")
            p.data[...] = state[p.name]


WEIGHTS_MAGIC = b"SAGW"
WEIGHTS_VERSION = 1


def save_weights(store, path):
    """Little-endian binary dump: magic, version, count, then per tensor the
    name, rank, dims and a float32 row-major payload."""
    with open(path, "wb") as f:
        f.write(WEIGHTS_MAGIC)
        f.write(struct.pack("<II", WEIGHTS_VERSION, len(store)))
        for p in store:
            name = p.name.encode("utf-8")
            f.write(struct.pack("<H", len(name)))
            f.write(name)
            f.write(struct.pack("<B", p.data.ndim))
            f.write(struct.pack(f"<{p.data.ndim}I", *p.data.shape))
            f.write(np.ascontiguousarray(p.data, dtype="<f4").tobytes())


def load_weights(path):
    """Read a weights file back into a ParameterStore, upcasting to float64."""
    store = ParameterStore()
    with open(path, "rb") as f:
        magic = f.read(4)
        if magic != WEIGHTS_MAGIC:
            raise ValueError(f"{path}: bad magic {magic!r}")
        version, count = struct.unpack("<II", f.read(8))
        if version != WEIGHTS_VERSION:
            raise ValueError(f"{path}: unsupported version {version}")
        for _ in range(count):
            (nlen,) = struct.unpack("<H", f.read(2))
            name = f.read(nlen).decode("utf-8")
            (rank,) = struct.unpack("<B", f.read(1))
            dims = struct.unpack(f"<{rank}I", f.read(4 * rank))
            n = int(np.prod(dims)) if rank else 1
            payload = np.frombuffer(f.read(4 * n), dtype="<f4")
            store.add(name, payload.astype(np.float64).reshape(dims))
    return store


def weights_manifest(store):
    """(name, shape) rows in storage order."""
    return [(p.name, tuple(p.data.shape)) for p in store]


def uniform_fan_in(rng, shape, fan_in):
    bound = 1.0 / np.sqrt(fan_in)
    return rng.uniform(-bound, bound, size=shape)
