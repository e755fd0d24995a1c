"""Differentiable batched twin of the plain-number cost route.

Training needs gradients of the structured cost through decode -> quintic
-> cost for every anchor of every sample at once, so this module rebuilds
that chain as tensor ops over (batch, anchor, ...) arrays. Values are
tested to agree with geometry.decode_terminal + trajectory.solve_quintic +
costs.structured_cost to float precision; only this route carries a tape.

World geometry enters as constants: per-sample pillar lists are padded to a
common length with a far-away sentinel whose hinge contribution is exactly
zero, so padding never changes values or gradients.
"""

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from . import trajectory as tj
from .autodiff import Tensor
from .costs import cost_sample_fracs, project_goal

SENTINEL_XY = 1.0e6  # padding pillars sit here: hinge-dead, finite math


@dataclass
class TrainingBatch:
    """Per-sample constants for one differentiable cost evaluation.

    depth_norm: (B, 1, H, W) in [0, 1]; o_scaled: (B, 9) network inputs;
    v0/a0: (B, 3) body-frame start conditions m/s, m/s^2; g_b: (B, 3)
    body-frame goals m; pose_rot: (B, 3, 3) body-to-world rotations;
    pose_pos: (B, 3) world positions m; pillars: (B, P, 3) padded
    (x, y, radius) rows.
    """

    depth_norm: np.ndarray
    o_scaled: np.ndarray
    v0: np.ndarray
    a0: np.ndarray
    g_b: np.ndarray
    pose_rot: np.ndarray
    pose_pos: np.ndarray
    pillars: np.ndarray

    def __len__(self):
        return len(self.o_scaled)


def pad_pillars(pillar_lists):
    """Stack variable-length (P_i, 3) pillar arrays into one (B, P_max, 3)
    array, padding with sentinel pillars of radius 0 far outside any arena."""
    p_max = max((len(p) for p in pillar_lists), default=0)
    p_max = max(p_max, 1)
    out = np.zeros((len(pillar_lists), p_max, 3))
    out[:, :, 0] = SENTINEL_XY
    out[:, :, 1] = SENTINEL_XY
    for i, p in enumerate(pillar_lists):
        if len(p):
            out[i, :len(p)] = p
    return out


def decode_batch(u, lattice, v0, a0, v_max):
    """Tensor decode of (B, 15, 9) refinements into quintic boundary data.

    Returns (p1, v1, a1, T): terminal position/velocity/acceleration
    tensors of shape (B, 15, 3) and durations (B, 15) from the clamped
    r / v_max rule. Start conditions are the body-frame state, identical
    across anchors of a sample.
    """
    angles = lattice.all_angles()  # (15, 2) constants
    alpha = u[..., 0] * lattice.delta_yaw_max + angles[:, 0]
    beta = u[..., 1] * lattice.delta_pitch_max + angles[:, 1]
    r = (u[..., 2] + 1.0) * ((lattice.r_max - lattice.r_min) / 2.0) + lattice.r_min

    ca, sa = ad.cos(alpha), ad.sin(alpha)
    cb, sb = ad.cos(beta), ad.sin(beta)
    zero = Tensor(np.zeros(ca.shape))

    # columns of Rz(alpha) @ Ry(-beta); col0 is the refined direction
    col0 = ad.stack([cb * ca, cb * sa, sb], axis=-1)
    col1 = ad.stack([-sa, ca, zero], axis=-1)
    col2 = ad.stack([-sb * ca, -sb * sa, cb], axis=-1)

    p1 = ad.reshape(r, r.shape + (1,)) * col0

    def rotate(comp):
        cx = ad.reshape(comp[..., 0], comp.shape[:-1] + (1,))
        cy = ad.reshape(comp[..., 1], comp.shape[:-1] + (1,))
        cz = ad.reshape(comp[..., 2], comp.shape[:-1] + (1,))
        return col0 * cx + col1 * cy + col2 * cz

    v1 = rotate(u[..., 3:6] * lattice.v_term_max)
    a1 = rotate(u[..., 6:9] * lattice.a_term_max)

    T = ad.clamp(r / v_max, tj.T_MIN, tj.T_MAX)
    # start conditions broadcast over anchors
    b = v0.shape[0]
    v0_t = Tensor(v0.reshape(b, 1, 3))
    a0_t = Tensor(a0.reshape(b, 1, 3))
    return p1, v1, a1, T, v0_t, a0_t


def quintic_coeffs_batch(p1, v1, a1, T, v0_t, a0_t):
    """Closed-form quintic solve with tensor durations; start position 0.

    Returns the six coefficient tensors c0..c5, each (B, 15, 3).
    """
    Tb = ad.reshape(T, T.shape + (1,))  # (B, 15, 1)
    T2 = Tb * Tb
    T3 = T2 * Tb
    T4 = T3 * Tb
    T5 = T4 * Tb

    c0 = Tensor(np.zeros(p1.shape))
    c1 = v0_t + c0  # broadcast to (B, 15, 3)
    c2 = a0_t * 0.5 + c0

    a0b = a0_t + c0
    v0b = v0_t + c0
    c3 = (a0b * (-3.0) * T2 + a1 * T2 + v0b * (-12.0) * Tb + v1 * (-8.0) * Tb
          + p1 * 20.0) / (T3 * 2.0)
    c4 = (a0b * 1.5 * T2 - a1 * T2 + v0b * 8.0 * Tb + v1 * 7.0 * Tb
          - p1 * 15.0) / T4
    c5 = (a0b * (-1.0) * T2 + a1 * T2 + v0b * (-6.0) * Tb + v1 * (-6.0) * Tb
          + p1 * 12.0) / (T5 * 2.0)
    return c0, c1, c2, c3, c4, c5


def _gram_integral(deriv_coeffs, T):
    """Exact integral of the summed squared polynomial rows with tensor
    coefficients: sum_{i,j} <d_i, d_j> T^(i+j+1) / (i+j+1); T is (B, 15)."""
    n = len(deriv_coeffs)
    total = None
    for i in range(n):
        for j in range(i, n):
            dot = ad.tsum(deriv_coeffs[i] * deriv_coeffs[j], axis=-1)
            k = i + j + 1
            factor = (1.0 if i == j else 2.0) / k
            term = dot * ad.pow_const(T, k) * factor
            total = term if total is None else total + term
    return total


def jerk_integral_batch(coeffs, T):
    c3, c4, c5 = coeffs[3], coeffs[4], coeffs[5]
    return _gram_integral([c3 * 6.0, c4 * 24.0, c5 * 60.0], T)


def acc_integral_batch(coeffs, T):
    c2, c3, c4, c5 = coeffs[2], coeffs[3], coeffs[4], coeffs[5]
    return _gram_integral([c2 * 2.0, c3 * 6.0, c4 * 12.0, c5 * 20.0], T)


def sample_positions_batch(coeffs, T, n_samples):
    """Body-frame positions at the shared time grid: (B, 15, n, 3)."""
    fracs = cost_sample_fracs(n_samples)  # (n,)
    Tb = ad.reshape(T, T.shape + (1, 1))
    t = Tb * Tensor(fracs.reshape(1, 1, n_samples, 1))  # (B, 15, n, 1)
    expand = [ad.reshape(c, c.shape[:2] + (1, 3)) for c in coeffs]
    p = expand[5]
    for k in (4, 3, 2, 1, 0):
        p = p * t + expand[k]
    return p


def safety_cost_batch(p_body, pose_rot, pose_pos, pillars, d_safe):
    """Mean squared hinge on the pillar signed distance over the sample
    grid. The distance cap used by the plain route is omitted: it only
    binds beyond d_safe where the hinge is already exactly zero."""
    rot_t = Tensor(pose_rot.reshape(-1, 1, 3, 3))
    p_world = ad.matmul(p_body, ad.transpose(rot_t, (0, 1, 3, 2)))
    p_world = p_world + Tensor(pose_pos.reshape(-1, 1, 1, 3))

    px = Tensor(pillars[:, None, None, :, 0])
    py = Tensor(pillars[:, None, None, :, 1])
    pr = Tensor(pillars[:, None, None, :, 2])
    n = p_world.shape[2]
    dx = ad.reshape(p_world[..., 0], p_world.shape[:2] + (n, 1)) - px
    dy = ad.reshape(p_world[..., 1], p_world.shape[:2] + (n, 1)) - py
    dist = ad.sqrt(dx * dx + dy * dy) - pr           # (B, 15, n, P)
    sd = ad.tmin(dist, axis=-1)                      # (B, 15, n)
    hinge = ad.relu(d_safe - sd)
    return ad.mean(hinge * hinge, axis=-1)           # (B, 15)


def goal_cost_batch(coeffs, T, g_target):
    """Squared body-frame endpoint error against the shell-projected goal."""
    Tb = ad.reshape(T, T.shape + (1,))
    expand = [c for c in coeffs]
    p_end = expand[5]
    for k in (4, 3, 2, 1, 0):
        p_end = p_end * Tb + expand[k]
    diff = p_end - Tensor(g_target.reshape(-1, 1, 3))
    return ad.tsum(diff * diff, axis=-1)


def batch_costs(u, batch, lattice, weights, v_max):
    """Structured cost tensor J of shape (B, 15) for decoded refinements.

    u is the (B, 15, 9) network output tensor; batch carries the constants.
    """
    p1, v1, a1, T, v0_t, a0_t = decode_batch(u, lattice, batch.v0, batch.a0, v_max)
    coeffs = quintic_coeffs_batch(p1, v1, a1, T, v0_t, a0_t)

    j_smooth = jerk_integral_batch(coeffs, T)
    p_body = sample_positions_batch(coeffs, T, weights.n_samples)
    j_safe = safety_cost_batch(p_body, batch.pose_rot, batch.pose_pos,
                               batch.pillars, weights.d_safe)
    g_target = np.stack([project_goal(g, lattice.r_max) for g in batch.g_b])
    j_goal = goal_cost_batch(coeffs, T, g_target)
    j_acc = acc_integral_batch(coeffs, T)

    return (j_smooth * weights.lambda_smooth + j_safe * weights.lambda_safe
            + j_goal * weights.lambda_goal + j_acc * weights.lambda_acc)


def batch_loss(u, scores, batch, lattice, weights, v_max):
    """Total training loss tensor plus the pieces tests inspect.

    Score targets are detached cost values: the score head learns to
    predict J but never reshapes it.
    """
    J = batch_costs(u, batch, lattice, weights, v_max)
    l_traj = ad.mean(J)
    targets = ad.detach(J)
    l_score = ad.mean(ad.smooth_l1(scores, targets))
    loss = l_traj * weights.lambda_traj + l_score * weights.lambda_score
    return {"loss": loss, "l_traj": l_traj, "l_score": l_score, "J": J}


# ----------------------------------------------------------- gradient audits

# Exact power-of-two loss scaling. Some gradients are structurally zero
# (the key-projection bias cancels inside softmax), so the finite-difference
# rounding noise on them must sit below the relative-error floor; scaling the
# loss down scales that noise with it without touching any nonzero check.
FD_SCALE = 2.0 ** -14


def _randomized_sum(rng, shape):
    r = rng.standard_normal(shape)
    return lambda t: ad.tsum(t * r) * FD_SCALE


def end_to_end_grad_check(tiny=True, seed=0, h=1e-5):
    """Max relative error, backprop vs central differences, for the complete
    loss (forward -> decode -> quintic -> structured cost) on a shrunken
    network with one sample.

    The scene is prescreened to sit away from every kink: the distance hinge
    boundary, closest-pillar ties, and the duration clamp edges, with the
    hinge active on at least one sample so the safety path carries gradient.
    """
    from . import geometry as geo
    from . import network as nw
    from .costs import CostWeights

    config = nw.tiny_config(height=12, width=20, channels=(2, 2),
                            token_dim=8, mod_hidden=8)
    store = nw.init_weights(config, seed)
    lattice = geo.build_lattice(v_term_max=2.0)
    weights = CostWeights()
    v_max = 2.0

    rng = np.random.default_rng(seed + 1)
    batch = TrainingBatch(
        depth_norm=rng.uniform(0.05, 1.0, (1, 1, config.height, config.width)),
        o_scaled=rng.uniform(-0.6, 0.6, (1, 9)),
        v0=rng.uniform(-0.4, 0.4, (1, 3)),
        a0=rng.uniform(-0.4, 0.4, (1, 3)),
        g_b=np.array([[5.0, 0.7, 0.4]]),
        pose_rot=np.eye(3)[None],
        pose_pos=np.zeros((1, 3)),
        pillars=np.array([[[2.6, 0.5, 0.35], [4.1, -1.2, 0.45]]]))

    net = nw.PlannerNet(config, store, lattice)

    # Freeze the score targets at the base point: the live loss detaches
    # them, so differencing a builder whose targets move with the weights
    # would measure a different function than backprop reports. At the base
    # point the frozen-target loss and its gradient match the live ones
    # exactly.
    with ad.no_grad():
        u0, s0 = net.forward_tensors(batch.depth_norm, batch.o_scaled)
        targets0 = batch_costs(u0, batch, lattice, weights, v_max).data.copy()

    def builder():
        u, scores = net.forward_tensors(batch.depth_norm, batch.o_scaled)
        J = batch_costs(u, batch, lattice, weights, v_max)
        l_traj = ad.mean(J)
        l_score = ad.mean(ad.smooth_l1(scores, ad.as_tensor(targets0)))
        loss = l_traj * weights.lambda_traj + l_score * weights.lambda_score
        return loss * FD_SCALE

    with ad.no_grad():
        u_t, _ = net.forward_tensors(batch.depth_norm, batch.o_scaled)
        margins = kink_margins(u_t.data, batch, lattice, weights, v_max)
    # The squared hinge is C1 (gradient continuous at the boundary), so only
    # a token margin is needed there; tmin ties and clamp edges jump in
    # gradient and must stay well clear of the step size.
    floors = {"hinge": 1e-4, "pillar_tie": 1e-3, "duration_clamp": 1e-3}
    if not margins["hinge_active"]:
        raise RuntimeError("inactive hinge: safety path untested")
    for name, floor in floors.items():
        if margins[name] < floor:
            raise RuntimeError(
                f"scene too close to a kink: {name}={margins[name]:.2e}")

    params = [store[name] for name in store.names()]
    return ad.grad_check(builder, params, h=h)


def kink_margins(u, batch, lattice, weights, v_max):
    """Distances from a configuration to the nondifferentiable points of the
    cost: hinge boundary, closest-pillar ties, duration clamp edges."""


    with ad.no_grad():
        p1, v1, a1, T, v0_t, a0_t = decode_batch(
            ad.as_tensor(u), lattice, batch.v0, batch.a0, v_max)
        coeffs = quintic_coeffs_batch(p1, v1, a1, T, v0_t, a0_t)
        p_body = sample_positions_batch(coeffs, T, weights.n_samples)

    pw = np.einsum("bij,banj->bani", batch.pose_rot, p_body.data) \
        + batch.pose_pos[:, None, None, :]
    d = np.hypot(pw[..., 0:1] - batch.pillars[:, None, None, :, 0],
                 pw[..., 1:2] - batch.pillars[:, None, None, :, 1]) \
        - batch.pillars[:, None, None, :, 2]
    d_sorted = np.sort(d, axis=-1)
    sd = d_sorted[..., 0]
    tie = (d_sorted[..., 1] - d_sorted[..., 0]) if d.shape[-1] > 1 else np.inf

    r = np.linalg.norm(p1.data, axis=-1)
    ratio = r / v_max
    clamp_margin = np.minimum(np.abs(ratio - tj.T_MIN), np.abs(tj.T_MAX - ratio))

    return {
        "hinge": float(np.abs(sd - weights.d_safe).min()),
        "hinge_active": bool((sd < weights.d_safe - 1e-3).any()),
        "pillar_tie": float(np.min(tie)),
        "duration_clamp": float(clamp_margin.min()),
    }


def primitive_grad_checks(seed=0, h=1e-5):
    """Finite-difference audit of each differentiable building block in
    isolation; returns (name, max relative error) pairs.

    Inputs are kept away from kinks by construction (leaky-relu origin,
    clamp edges, the huber elbow), since the checks certify smooth-region
    gradients only.
    """
    from . import layers as ly

    rng = np.random.default_rng(seed)
    out = []

    def param(name, data):
        return ad.Parameter(name, np.asarray(data, dtype=float))

    def run(name, params, builder):
        out.append((name, ad.grad_check(builder, params, h=h)))

    # arithmetic: add, sub, mul, div, pow, neg
    x = param("x", rng.uniform(-0.8, 0.8, (3, 4)))
    y = param("y", rng.uniform(-0.8, 0.8, (3, 4)))
    to_scalar = _randomized_sum(rng, (3, 4))
    run("arithmetic", [x, y],
        lambda: to_scalar(x * y + x / (y + 3.0) + x ** 2 - (-y) + (x - y)))

    # transcendental: exp, log, sqrt, sin, cos
    x = param("x", rng.uniform(0.3, 1.5, (3, 4)))
    to_scalar = _randomized_sum(rng, (3, 4))
    run("transcendental", [x],
        lambda: to_scalar(ad.exp(x) + ad.log(x) + ad.sqrt(x)
                          + ad.sin(x) + ad.cos(x)))

    # smooth activations
    x = param("x", rng.uniform(-2.0, 2.0, (3, 4)))
    to_scalar = _randomized_sum(rng, (3, 4))
    run("tanh_softplus", [x], lambda: to_scalar(ad.tanh(x) + ad.softplus(x)))

    # leaky_relu away from the origin kink
    mags = rng.uniform(0.2, 1.5, (3, 4))
    signs = np.where(rng.uniform(size=(3, 4)) < 0.5, -1.0, 1.0)
    x = param("x", mags * signs)
    to_scalar = _randomized_sum(rng, (3, 4))
    run("leaky_relu", [x], lambda: to_scalar(ad.leaky_relu(x)))

    # clamp away from its edges
    inner = rng.uniform(-0.8, 0.8, 8)
    outer = rng.uniform(1.2, 1.6, 4) * np.where(rng.uniform(size=4) < 0.5, -1, 1)
    x = param("x", np.concatenate([inner, outer]))
    to_scalar = _randomized_sum(rng, (12,))
    run("clamp", [x], lambda: to_scalar(ad.clamp(x, -1.0, 1.0)))

    # smooth_l1 with residuals straddling but avoiding the unit elbow
    target = np.zeros(8)
    resid = np.concatenate([rng.uniform(-0.8, 0.8, 4),
                            rng.uniform(1.2, 2.0, 2), -rng.uniform(1.2, 2.0, 2)])
    x = param("x", resid)
    to_scalar = _randomized_sum(rng, (8,))
    run("smooth_l1", [x], lambda: to_scalar(ad.smooth_l1(x, ad.as_tensor(target))))

    # structural: matmul, reshape, transpose, getitem
    x = param("x", rng.standard_normal((4, 6)))
    w = param("w", rng.standard_normal((6, 4)))
    idx = np.array([2, 0, 3, 1])
    to_scalar = _randomized_sum(rng, (2, 4, 2))
    run("matmul_reshape_gather", [x, w],
        lambda: to_scalar(ad.transpose(ad.reshape(
            ad.getitem(x @ w, idx), (4, 2, 2)), (1, 0, 2))))

    # linear layer
    x = param("x", rng.standard_normal((5, 6)))
    w = param("w", rng.standard_normal((6, 3)) * 0.5)
    b = param("b", rng.standard_normal(3) * 0.1)
    to_scalar = _randomized_sum(rng, (5, 3))
    run("linear", [x, w, b], lambda: to_scalar(ly.linear(x, w, b)))

    # strided padded convolution, batched
    x = param("x", rng.standard_normal((2, 2, 9, 11)))
    k = param("k", rng.standard_normal((3, 2, 3, 3)) * 0.3)
    b = param("b", rng.standard_normal(3) * 0.1)
    to_scalar = _randomized_sum(rng, (2, 3, 5, 6))
    run("conv2d", [x, k, b],
        lambda: to_scalar(ly.conv2d(x, k, b, stride=2, padding=1)))

    # layer norm
    x = param("x", rng.standard_normal((5, 8)))
    g = param("g", 1.0 + 0.2 * rng.standard_normal(8))
    b = param("b", 0.1 * rng.standard_normal(8))
    to_scalar = _randomized_sum(rng, (5, 8))
    run("layer_norm", [x, g, b], lambda: to_scalar(ly.layer_norm(x, g, b)))

    # softmax
    x = param("x", rng.standard_normal((4, 7)))
    to_scalar = _randomized_sum(rng, (4, 7))
    run("softmax", [x], lambda: to_scalar(ly.softmax(x)))

    # multi-head self-attention (b_k is the structurally zero gradient)
    d = 8
    x = param("x", rng.standard_normal((5, d)) * 0.7)
    mha = {}
    for gate in ("q", "k", "v", "o"):
        mha[f"w_{gate}"] = param(f"w_{gate}", rng.standard_normal((d, d)) * 0.4)
        mha[f"b_{gate}"] = param(f"b_{gate}", rng.standard_normal(d) * 0.1)
    to_scalar = _randomized_sum(rng, (5, d))
    run("multi_head_attention", [x] + list(mha.values()),
        lambda: to_scalar(ly.multi_head_attention(x, mha, heads=2)))

    return out
