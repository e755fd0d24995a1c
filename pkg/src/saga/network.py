"""The anchor-refinement planner network.

One forward pass maps a depth image plus a 9-component body motion state to,
for every lattice anchor, a normalized terminal-state refinement (9 values
in (-1,1)) and a nonnegative planning score:

  depth -> five stride-2 convs -> per-cell projection -> 15 tokens
       -> + polar anchor encoding -> pre-norm residual self-attention
       -> state-conditioned feature modulation -> per-token 10-channel head.

Token i corresponds to feature-map cell (i // 5, i % 5) and to lattice
anchor i; the polar encoding is what tells the otherwise permutation-
equivariant attention block which direction each token owns.
"""

from dataclasses import dataclass, replace

import numpy as np

from . import autodiff as ad
from . import layers as ly
from .autodiff import NumericsError
from .geometry import N_ANCHORS, N_COLS, N_ROWS, U_DIM

HEAD_CHANNELS = U_DIM + 1


@dataclass(frozen=True)
class PlannerConfig:
    height: int = 96
    width: int = 160
    channels: tuple = (16, 32, 64, 64, 64)
    token_dim: int = 256
    heads: int = 4
    mod_hidden: int = 128
    v_max: float = 3.0        # m/s, scales the velocity input
    max_range: float = 20.0   # m, scales the depth input
    ppe_enabled: bool = True

    def __post_init__(self):
        h, w = self.height, self.width
        for _ in self.channels:
            h, w = (h + 1) // 2, (w + 1) // 2
        if (h, w) != (N_ROWS, N_COLS):
            raise ValueError(
                f"{self.height}x{self.width} through {len(self.channels)} stride-2 convs "
                f"gives {h}x{w}, not the {N_ROWS}x{N_COLS} anchor grid")
        if self.token_dim % self.heads != 0:
            raise ValueError("token_dim must be divisible by heads")


def tiny_config(**overrides):
    """Shrunken variant for finite-difference checking: same wiring, few
    hundred parameters."""
    cfg = PlannerConfig(channels=(2, 2, 2, 2, 4), token_dim=16, heads=2,
                        mod_hidden=16)
    return replace(cfg, **overrides) if overrides else cfg


def init_weights(config, seed):
    """Fan-in scaled uniform weights, zero biases, unit layer-norm gains.

    The polar-encoding affine starts at exactly zero, so an untrained
    network is bitwise identical to its no-positional-encoding ablation.
    """
    rng = np.random.default_rng(seed)
    store = ly.ParameterStore()
    d = config.token_dim

    c_in = 1
    for k, c_out in enumerate(config.channels):
        store.add(f"backbone.conv{k}.kernel",
                  ly.uniform_fan_in(rng, (c_out, c_in, 3, 3), c_in * 9))
        store.add(f"backbone.conv{k}.bias", np.zeros(c_out))
        c_in = c_out

    store.add("proj.W", ly.uniform_fan_in(rng, (c_in, d), c_in))
    store.add("proj.b", np.zeros(d))
    store.add("pe.W", np.zeros((2, d)))
    store.add("pe.b", np.zeros(d))

    store.add("attn.ln.gain", np.ones(d))
    store.add("attn.ln.bias", np.zeros(d))
    for name in ("q", "k", "v", "o"):
        store.add(f"attn.{name}.W", ly.uniform_fan_in(rng, (d, d), d))
        store.add(f"attn.{name}.b", np.zeros(d))

    store.add("mod.ln.gain", np.ones(d))
    store.add("mod.ln.bias", np.zeros(d))
    store.add("mod.mlp0.W", ly.uniform_fan_in(rng, (9, config.mod_hidden), 9))
    store.add("mod.mlp0.b", np.zeros(config.mod_hidden))
    store.add("mod.mlp1.W", ly.uniform_fan_in(rng, (config.mod_hidden, 2 * d), config.mod_hidden))
    store.add("mod.mlp1.b", np.zeros(2 * d))

    store.add("head.ln.gain", np.ones(d))
    store.add("head.ln.bias", np.zeros(d))
    store.add("head.W", ly.uniform_fan_in(rng, (d, HEAD_CHANNELS), d))
    store.add("head.b", np.zeros(HEAD_CHANNELS))
    return store


@dataclass
class PlannerOutput:
    """Per-anchor normalized refinements and scores, anchor-index order."""

    u_norm: np.ndarray   # (15, 9), each in (-1, 1)
    scores: np.ndarray   # (15,), each > 0


def scale_state(state_vec, v_max):
    """Bring the raw 9-vector [v_b, a_b, g_b] to O(1) network inputs:
    velocity over v_max, acceleration over 10 m/s^2, goal clamped to 10 m
    then over 10 m."""
    o = np.asarray(state_vec, dtype=float)
    if o.shape != (9,) and not (o.ndim == 2 and o.shape[1] == 9):
        raise ValueError(f"state must be one or many 9-vectors, got {o.shape}")
    v = o[..., 0:3] / v_max
    a = o[..., 3:6] / 10.0
    g = o[..., 6:9]
    norm = np.linalg.norm(g, axis=-1, keepdims=True)
    g = np.where(norm > 10.0, g * (10.0 / np.maximum(norm, 1e-12)), g) / 10.0
    return np.concatenate([v, a, g], axis=-1)


class PlannerNet:
    """Weights plus the staged forward pass. One instance per worker; the
    parameter store is never shared mutably."""

    def __init__(self, config, store, lattice):
        self.config = config
        self.store = store
        self.lattice = lattice
        self._anchor_angles = lattice.all_angles()  # (15, 2)

    # -- stages; every stage takes and returns autodiff tensors --

    def encode_depth(self, depth_norm):
        """(1,H,W) or (B,1,H,W) normalized depth -> (...,C,3,5) features."""
        x = ad.as_tensor(depth_norm)
        expect = (self.config.height, self.config.width)
        if x.shape[-2:] != expect:
            raise ValueError(f"depth must be {expect}, got {x.shape[-2:]}")
        for k in range(len(self.config.channels)):
            x = ly.conv2d(x, self.store[f"backbone.conv{k}.kernel"],
                          self.store[f"backbone.conv{k}.bias"])
            x = ad.leaky_relu(x, 0.01)
        return x

    def tokenize(self, features):
        """(...,C,3,5) -> (...,15,token_dim), token i = cell (i//5, i%5)."""
        f = features
        lead = f.shape[:-3]
        c = f.shape[-3]
        f = ad.reshape(f, lead + (c, N_ANCHORS))
        axes = tuple(range(len(lead))) + (len(lead) + 1, len(lead))
        f = ad.transpose(f, axes)
        return ly.linear(f, self.store["proj.W"], self.store["proj.b"])

    def polar_encode(self):
        """(15,token_dim) anchor-direction encoding; constant across inputs."""
        return ly.linear(ad.as_tensor(self._anchor_angles),
                         self.store["pe.W"], self.store["pe.b"])

    def attention_block(self, z_tilde):
        ln = ly.layer_norm(z_tilde, self.store["attn.ln.gain"], self.store["attn.ln.bias"])
        weights = {f"{kind}_{name}": self.store[f"attn.{name}.{'W' if kind == 'w' else 'b'}"]
                   for kind in ("w", "b") for name in ("q", "k", "v", "o")}
        return z_tilde + ly.multi_head_attention(ln, weights, self.config.heads)

    def goal_modulation(self, z1, o_scaled):
        """Feature-wise affine conditioning on the motion state, one (gain,
        shift) pair shared by all tokens of a sample."""
        h = ly.linear(ad.as_tensor(o_scaled), self.store["mod.mlp0.W"], self.store["mod.mlp0.b"])
        h = ad.leaky_relu(h, 0.01)
        gb = ly.linear(h, self.store["mod.mlp1.W"], self.store["mod.mlp1.b"])
        d = self.config.token_dim
        gamma, beta = gb[..., :d], gb[..., d:]
        ln = ly.layer_norm(z1, self.store["mod.ln.gain"], self.store["mod.ln.bias"])
        if gamma.ndim > 1:  # batched: broadcast over the token axis
            gamma = ad.reshape(gamma, gamma.shape[:-1] + (1, d))
            beta = ad.reshape(beta, beta.shape[:-1] + (1, d))
        one = ad.as_tensor(1.0)
        return ln * (one + ad.tanh(gamma)) + beta

    def prediction_head(self, z2):
        """(...,15,token_dim) -> u (...,15,9) in (-1,1), scores (...,15) > 0."""
        ln = ly.layer_norm(z2, self.store["head.ln.gain"], self.store["head.ln.bias"])
        y = ly.linear(ln, self.store["head.W"], self.store["head.b"])
        u = ad.tanh(y[..., :U_DIM])
        scores = ad.softplus(y[..., U_DIM])
        return u, scores

    def forward_tensors(self, depth_norm, o_scaled, token_permutation=None):
        """Full differentiable pass on pre-scaled inputs; single sample or
        batch. Returns (u tensor, scores tensor).

        token_permutation reorders the anchor tokens after tokenization and
        before the direction encoding; single-sample input only. It exists
        for the equivariance probe: without the encoding the whole tail is
        permutation-equivariant, with it the direction identity sticks to
        the token contents rather than the slot.
        """
        feats = self.encode_depth(depth_norm)
        z = self.tokenize(feats)
        if token_permutation is not None:
            if z.ndim != 2:
                raise ValueError("token_permutation expects a single sample")
            z = ad.getitem(z, np.asarray(token_permutation))
        if self.config.ppe_enabled:
            z = z + self.polar_encode()
        z1 = self.attention_block(z)
        z2 = self.goal_modulation(z1, o_scaled)
        return self.prediction_head(z2)

    def forward(self, depth_m, state_vec):
        """Plain-number planning call: depth in meters, raw state 9-vector.

        Returns a PlannerOutput; raises NumericsError if any score fails to
        be positive or any refinement saturates tanh exactly.
        """
        depth = np.asarray(depth_m, dtype=float) / self.config.max_range
        o = scale_state(state_vec, self.config.v_max)
        with ad.no_grad():
            u_t, c_t = self.forward_tensors(depth[None, :, :], o)
        u, scores = u_t.data.copy(), c_t.data.copy()
        if not (np.all(scores > 0.0) and np.all(np.abs(u) < 1.0)):
            raise NumericsError("planner output outside (-1,1)/positive-score contract")
        return PlannerOutput(u_norm=u, scores=scores)


def permutation_sensitivity(net, depth_norm, o_scaled, perm):
    """Max-norm deviation from token-permutation equivariance.

    Runs the net twice, once plain and once with the anchor tokens permuted,
    and compares the permuted outputs against the permutation of the plain
    outputs. Zero (to rounding) when the direction encoding is disabled or
    all-zero; grows once the encoding makes slots direction-aware.
    """
    perm = np.asarray(perm)
    with ad.no_grad():
        u0, c0 = net.forward_tensors(depth_norm, o_scaled)
        u1, c1 = net.forward_tensors(depth_norm, o_scaled, token_permutation=perm)
    du = np.abs(u1.data - u0.data[perm]).max()
    dc = np.abs(c1.data - c0.data[perm]).max()
    return max(float(du), float(dc))


def manifest_lines(store):
    """Human-readable name/shape listing in storage order."""
    return [f"{name}  {'x'.join(map(str, shape)) or 'scalar'}"
            for name, shape in ly.weights_manifest(store)]
