"""Structured per-candidate cost and the training losses built from it.

A candidate trajectory is charged for jerk, for passing within d_safe of a
pillar (mean squared hinge over uniform time samples), for missing the goal
point projected onto the reachable shell, and for integrated squared
acceleration. The per-candidate total J feeds both the trajectory loss
(mean over candidates) and the score-regression targets.

This module is the plain-number route used by flight and evaluation; the
differentiable twin used in training lives in pipeline.py and is tested to
agree with it exactly.
"""

from dataclasses import dataclass

import numpy as np

from . import trajectory as tj
from .geometry import N_ANCHORS
from .world import signed_distance_many


@dataclass(frozen=True)
class CostWeights:
    lambda_smooth: float = 0.01
    lambda_safe: float = 10.0
    lambda_goal: float = 1.0
    lambda_acc: float = 0.01
    lambda_traj: float = 1.0
    lambda_score: float = 0.5
    d_safe: float = 0.8       # m
    n_samples: int = 20

    def __post_init__(self):
        for name in ("lambda_smooth", "lambda_safe", "lambda_goal",
                     "lambda_acc", "lambda_traj", "lambda_score"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be nonnegative")
        if self.d_safe <= 0:
            raise ValueError("d_safe must be positive")
        if self.n_samples < 2:
            raise ValueError("n_samples must be at least 2")


@dataclass
class CostBreakdown:
    j_smooth: float
    j_safe: float
    j_goal: float
    j_acc: float
    total: float


def smooth_cost(traj):
    return tj.jerk_integral(traj)


def cost_sample_fracs(n_samples):
    """Shared time-sampling grid (fractions of T, endpoints included) so the
    plain and differentiable cost routes sample identical instants."""
    return np.linspace(0.0, 1.0, n_samples)


def safety_cost(traj, world, d_safe=0.8, n_samples=20):
    """Mean over uniform times in [0, T] of max(0, d_safe - sd)^2 at the
    world-frame sample position."""
    ts = cost_sample_fracs(n_samples) * traj.duration
    p_body = tj.sample_positions(traj, ts)
    p_world = p_body @ traj.pose.rotation().T + traj.pose.position
    sd = signed_distance_many(world, p_world)
    hinge = np.maximum(0.0, d_safe - sd)
    return float(np.mean(hinge * hinge))


def project_goal(g_b, r_max):
    """Goal pulled onto the reachable shell: same direction, norm capped at
    r_max. A zero goal projects to itself."""
    g_b = np.asarray(g_b, dtype=float)
    norm = np.linalg.norm(g_b)
    if norm == 0.0 or norm <= r_max:
        return g_b.copy()
    return g_b * (r_max / norm)


def goal_cost(traj, g_b, r_max):
    """Squared body-frame distance between the trajectory endpoint and the
    shell-projected goal."""
    p_end = tj.sample(traj, traj.duration).position
    g_target = project_goal(g_b, r_max)
    diff = p_end - g_target
    return float(diff @ diff)


def acc_cost(traj):
    return tj.acc_integral(traj)


def structured_cost(traj, world, g_b, weights, r_max):
    js = smooth_cost(traj)
    jc = safety_cost(traj, world, weights.d_safe, weights.n_samples)
    jg = goal_cost(traj, g_b, r_max)
    ja = acc_cost(traj)
    total = (weights.lambda_smooth * js + weights.lambda_safe * jc
             + weights.lambda_goal * jg + weights.lambda_acc * ja)
    return CostBreakdown(j_smooth=js, j_safe=jc, j_goal=jg, j_acc=ja, total=total)


def traj_loss(breakdowns):
    """Mean total over the full candidate set."""
    if len(breakdowns) != N_ANCHORS:
        raise ValueError(f"expected {N_ANCHORS} cost breakdowns, got {len(breakdowns)}")
    return float(np.mean([b.total for b in breakdowns]))


def smooth_l1(d):
    d = np.asarray(d, dtype=float)
    return np.where(np.abs(d) < 1.0, 0.5 * d * d, np.abs(d) - 0.5)


def score_loss(scores, targets):
    """Mean smooth-L1 between predicted scores and cost targets; targets are
    plain numbers, never gradients."""
    scores = np.asarray(scores, dtype=float)
    targets = np.asarray(targets, dtype=float)
    if scores.shape != targets.shape:
        raise ValueError("scores and targets must have matching shapes")
    return float(np.mean(smooth_l1(scores - targets)))


def total_loss(l_traj, l_score, weights):
    return weights.lambda_traj * l_traj + weights.lambda_score * l_score
