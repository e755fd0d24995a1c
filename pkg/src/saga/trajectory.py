"""Per-axis quintic boundary-value trajectories.

Each axis carries the unique degree-5 polynomial matching position,
velocity, and acceleration at both ends. Jerk and acceleration integrals
use exact coefficient algebra, so nothing in the cost path depends on a
quadrature tolerance.

Trajectories are solved in the body frame at plan time; the pose recorded
at solve time (world position + yaw) turns body-frame samples into world
coordinates for execution.
"""

from dataclasses import dataclass

import numpy as np


@dataclass
class Pose:
    """World position and heading of the body frame at solve time."""

    position: np.ndarray  # (3,) m
    yaw: float            # radians, world-frame heading of body +x

    def rotation(self):
        c, s = np.cos(self.yaw), np.sin(self.yaw)
        return np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])

    def to_world(self, p_body):
        return self.rotation() @ np.asarray(p_body, dtype=float) + self.position

    def vec_to_world(self, v_body):
        return self.rotation() @ np.asarray(v_body, dtype=float)

    def to_body(self, p_world):
        return self.rotation().T @ (np.asarray(p_world, dtype=float) - self.position)

    def vec_to_body(self, v_world):
        return self.rotation().T @ np.asarray(v_world, dtype=float)


@dataclass
class KinematicSample:
    position: np.ndarray
    velocity: np.ndarray
    acceleration: np.ndarray
    jerk: np.ndarray


@dataclass
class QuinticTrajectory:
    """coeffs[axis, m] multiplies t^m; duration T; pose anchors the body
    frame the coefficients live in."""

    coeffs: np.ndarray  # (3, 6)
    duration: float
    pose: Pose

    def derivative_coeffs(self, order):
        """Coefficient matrix of the order-th time derivative, shape (3, 6-order)."""
        c = self.coeffs
        for _ in range(order):
            c = c[:, 1:] * np.arange(1, c.shape[1])
        return c


def solve_quintic(p0, v0, a0, p1, v1, a1, duration, pose=None):
    """Unique per-axis quintic through the six boundary constraints.

    The first three coefficients are fixed by the start conditions
    (c0=p0, c1=v0, c2=a0/2); the remaining three solve a 3x3 linear system
    per axis, which is nonsingular for every duration > 0.
    """
    if duration <= 0:
        raise ValueError(f"duration must be positive, got {duration}")
    T = float(duration)
    p0, v0, a0 = (np.asarray(x, dtype=float) for x in (p0, v0, a0))
    p1, v1, a1 = (np.asarray(x, dtype=float) for x in (p1, v1, a1))

    coeffs = np.zeros((3, 6))
    coeffs[:, 0] = p0
    coeffs[:, 1] = v0
    coeffs[:, 2] = a0 / 2.0

    # remaining constraints: position, velocity, acceleration at t=T
    A = np.array([
        [T ** 3, T ** 4, T ** 5],
        [3 * T ** 2, 4 * T ** 3, 5 * T ** 4],
        [6 * T, 12 * T ** 2, 20 * T ** 3],
    ])
    rhs = np.stack([
        p1 - (p0 + v0 * T + 0.5 * a0 * T ** 2),
        v1 - (v0 + a0 * T),
        a1 - a0,
    ])  # (3 constraints, 3 axes)
    coeffs[:, 3:6] = np.linalg.solve(A, rhs).T

    if pose is None:
        pose = Pose(np.zeros(3), 0.0)
    return QuinticTrajectory(coeffs=coeffs, duration=T, pose=pose)


def _horner(coeffs, t):
    """Evaluate polynomial rows at t (scalar or array)."""
    t = np.asarray(t, dtype=float)
    out = np.zeros(coeffs.shape[:1] + t.shape)
    for m in range(coeffs.shape[1] - 1, -1, -1):
        out = out * t + coeffs[:, m][(...,) + (None,) * t.ndim]
    return out


def sample(traj, t):
    """Body-frame kinematic state at time t in [0, T]."""
    t = float(t)
    if not 0.0 <= t <= traj.duration + 1e-12:
        raise ValueError(f"t={t} outside [0, {traj.duration}]")
    return KinematicSample(
        position=_horner(traj.coeffs, t),
        velocity=_horner(traj.derivative_coeffs(1), t),
        acceleration=_horner(traj.derivative_coeffs(2), t),
        jerk=_horner(traj.derivative_coeffs(3), t),
    )


def sample_positions(traj, ts):
    """Body-frame positions at an array of times, shape (len(ts), 3)."""
    return _horner(traj.coeffs, np.asarray(ts, dtype=float)).T


def sample_world(traj, t):
    """World-frame kinematic state at time t, using the pose at solve time."""
    s = sample(traj, t)
    return KinematicSample(
        position=traj.pose.to_world(s.position),
        velocity=traj.pose.vec_to_world(s.velocity),
        acceleration=traj.pose.vec_to_world(s.acceleration),
        jerk=traj.pose.vec_to_world(s.jerk),
    )


def _square_integral(coeffs, T):
    """Exact integral over [0, T] of the summed squared polynomial rows:
    int sum_k q_k(t)^2 dt = sum_{i,j} (sum_k c_ki c_kj) T^(i+j+1)/(i+j+1)."""
    n = coeffs.shape[1]
    if n == 0:
        return 0.0
    gram = coeffs.T @ coeffs  # (n, n) summed over axes
    i = np.arange(n)
    powers = i[:, None] + i[None, :] + 1
    return float(np.sum(gram * T ** powers / powers))


def jerk_integral(traj):
    """int_0^T norm(jerk)^2 dt, exact."""
    return _square_integral(traj.derivative_coeffs(3), traj.duration)


def acc_integral(traj):
    """int_0^T norm(acceleration)^2 dt, exact."""
    return _square_integral(traj.derivative_coeffs(2), traj.duration)


T_MIN = 0.5   # s
T_MAX = 3.0   # s


def duration_rule(r, v_max):
    """Trajectory duration from radial extent and speed setting:
    T = clamp(r / v_max, T_MIN, T_MAX)."""
    if r <= 0 or v_max <= 0:
        raise ValueError("radial extent and speed limit must be positive")
    return float(np.clip(r / v_max, T_MIN, T_MAX))


LOG_HEADER = "t,px,py,pz,vx,vy,vz,ax,ay,az,jx,jy,jz"


def log_line(t, s):
    """One world-frame trajectory log row, 9 significant digits."""
    vals = np.concatenate([[t], s.position, s.velocity, s.acceleration, s.jerk])
    return ",".join(f"{v:.9g}" for v in vals)
