"""Anchor lattice geometry and the analytic decode from normalized network
outputs to body-frame terminal states.

The lattice is a fixed 3x5 grid of (yaw, pitch) directions in front of the
vehicle. Each anchor owns a 9-vector of normalized refinements
(dyaw, dpitch, radius, terminal velocity x3, terminal acceleration x3), all
in [-1, 1], which decode to a terminal position on a sphere of radius r plus
terminal velocity and acceleration expressed along the refined direction.

Body frame is FLU: x forward, y left, z up. Yaw is positive toward +y,
pitch positive toward +z. Anchor index i = row*5 + col, row-major over
(pitch row, yaw col); i=7 is the straight-ahead anchor.
"""

from dataclasses import dataclass

import numpy as np

N_ROWS = 3
N_COLS = 5
N_ANCHORS = N_ROWS * N_COLS
U_DIM = 9


@dataclass(frozen=True)
class AnchorLattice:
    """Fixed anchor directions and the refinement ranges around them."""

    yaw_angles: np.ndarray      # (5,) radians, strictly increasing, symmetric about 0
    pitch_angles: np.ndarray    # (3,) radians, strictly increasing, symmetric about 0
    delta_yaw_max: float        # radians
    delta_pitch_max: float      # radians
    r_min: float                # m
    r_max: float                # m
    v_term_max: float = 3.0     # m/s
    a_term_max: float = 5.0     # m/s^2

    def __post_init__(self):
        yaws, pitches = np.asarray(self.yaw_angles), np.asarray(self.pitch_angles)
        if yaws.shape != (N_COLS,) or pitches.shape != (N_ROWS,):
            raise ValueError("lattice must be 3 pitch rows x 5 yaw columns")
        for angles in (yaws, pitches):
            if not np.all(np.diff(angles) > 0):
                raise ValueError("anchor angles must be strictly increasing")
            if not np.allclose(angles, -angles[::-1], atol=1e-12):
                raise ValueError("anchor angles must be symmetric about 0")
        if not 0 < self.r_min < self.r_max:
            raise ValueError(f"need 0 < r_min < r_max, got [{self.r_min}, {self.r_max}]")
        if self.delta_yaw_max > np.diff(yaws).min() / 2 + 1e-12:
            raise ValueError("yaw refinement range exceeds half the grid spacing")
        if self.delta_pitch_max > np.diff(pitches).min() / 2 + 1e-12:
            raise ValueError("pitch refinement range exceeds half the grid spacing")

    def anchor_angles(self, index):
        """(yaw, pitch) of anchor i = row*5 + col."""
        if not 0 <= index < N_ANCHORS:
            raise IndexError(f"anchor index {index} outside [0, {N_ANCHORS})")
        row, col = divmod(index, N_COLS)
        return float(self.yaw_angles[col]), float(self.pitch_angles[row])

    def all_angles(self):
        """(15, 2) array of (yaw, pitch) rows in anchor-index order."""
        out = np.empty((N_ANCHORS, 2))
        for i in range(N_ANCHORS):
            out[i] = self.anchor_angles(i)
        return out


def build_lattice(yaw_span=np.deg2rad(40.0), pitch_span=np.deg2rad(15.0),
                  r_min=1.0, r_max=6.0, v_term_max=3.0, a_term_max=5.0):
    """Evenly spaced anchors over [-yaw_span, yaw_span] x [-pitch_span,
    pitch_span]; refinement half-ranges are half the grid spacing so
    neighboring refinement regions tile without overlap."""
    if yaw_span <= 0 or pitch_span <= 0:
        raise ValueError("spans must be positive")
    yaws = np.linspace(-yaw_span, yaw_span, N_COLS)
    pitches = np.linspace(-pitch_span, pitch_span, N_ROWS)
    return AnchorLattice(
        yaw_angles=yaws,
        pitch_angles=pitches,
        delta_yaw_max=yaw_span / (N_COLS - 1),
        delta_pitch_max=pitch_span / (N_ROWS - 1),
        r_min=r_min,
        r_max=r_max,
        v_term_max=v_term_max,
        a_term_max=a_term_max,
    )


@dataclass
class BodyState:
    """Instantaneous body-frame inputs to the planner: velocity,
    acceleration, and the goal direction vector, concatenated as a
    9-vector in that order."""

    v_b: np.ndarray
    a_b: np.ndarray
    g_b: np.ndarray

    def as_vector(self):
        return np.concatenate([self.v_b, self.a_b, self.g_b])

    @staticmethod
    def from_vector(o):
        o = np.asarray(o, dtype=float)
        if o.shape != (9,):
            raise ValueError(f"state vector must have 9 components, got {o.shape}")
        return BodyState(o[0:3].copy(), o[3:6].copy(), o[6:9].copy())


@dataclass
class TerminalState:
    """Decoded body-frame endpoint: position on the radius-r shell plus
    terminal velocity and acceleration."""

    p_b: np.ndarray
    v_b: np.ndarray
    a_b: np.ndarray


def anchor_rotation(alpha, beta):
    """Rotation taking the body x axis to the (alpha, beta) anchor direction:
    R = Rz(alpha) @ Ry(-beta), so R @ [1,0,0] = [cosb*cosa, cosb*sina, sinb]."""
    ca, sa = np.cos(alpha), np.sin(alpha)
    cb, sb = np.cos(beta), np.sin(beta)
    rz = np.array([[ca, -sa, 0.0], [sa, ca, 0.0], [0.0, 0.0, 1.0]])
    ry_neg = np.array([[cb, 0.0, -sb], [0.0, 1.0, 0.0], [sb, 0.0, cb]])
    return rz @ ry_neg


class ClampCounter:
    """Counts decode inputs that fell outside [-1, 1]. The network's tanh
    head guarantees the range, so any hit means hand-built inputs."""

    def __init__(self):
        self.count = 0


_default_clamp_counter = ClampCounter()


def decode_terminal(lattice, anchor_index, u, clamp_counter=None):
    """Map a normalized 9-vector refinement at one anchor to a body-frame
    terminal state.

    Parameters
    ----------
    lattice : AnchorLattice
    anchor_index : int in [0, 15)
    u : (9,) array in [-1, 1]: (dyaw, dpitch, radius, v_dir x3, a_dir x3)
    clamp_counter : ClampCounter, optional
        Incremented once per call whose inputs needed clamping.

    Returns
    -------
    TerminalState with norm(p_b) = r exactly.
    """
    alpha0, beta0 = lattice.anchor_angles(anchor_index)
    u = np.asarray(u, dtype=float)
    if u.shape != (U_DIM,):
        raise ValueError(f"refinement must have 9 components, got {u.shape}")
    if np.any(np.abs(u) > 1.0):
        counter = clamp_counter if clamp_counter is not None else _default_clamp_counter
        counter.count += 1
        u = np.clip(u, -1.0, 1.0)

    alpha = alpha0 + u[0] * lattice.delta_yaw_max
    beta = beta0 + u[1] * lattice.delta_pitch_max
    r = lattice.r_min + (u[2] + 1.0) / 2.0 * (lattice.r_max - lattice.r_min)

    direction = np.array([np.cos(beta) * np.cos(alpha),
                          np.cos(beta) * np.sin(alpha),
                          np.sin(beta)])
    rot = anchor_rotation(alpha, beta)
    return TerminalState(
        p_b=r * direction,
        v_b=rot @ (u[3:6] * lattice.v_term_max),
        a_b=rot @ (u[6:9] * lattice.a_term_max),
    )


def decode_all(lattice, u_all, clamp_counter=None):
    """Decode every anchor of a (15, 9) refinement matrix; returns a list of
    15 TerminalStates in anchor-index order."""
    u_all = np.asarray(u_all, dtype=float)
    if u_all.shape != (N_ANCHORS, U_DIM):
        raise ValueError(f"expected (15, 9) refinements, got {u_all.shape}")
    return [decode_terminal(lattice, i, u_all[i], clamp_counter) for i in range(N_ANCHORS)]
