"""Closed-form quintic segments: boundary fitting and effort integrals.

Run: python3 demos/quintic_shapes.py
"""
import numpy as np

import saga.trajectory as tj

np.set_printoptions(precision=4, suppress=True)

# rest-to-rest unit displacement, the canonical shape
traj = tj.solve_quintic(np.zeros(3), np.zeros(3), np.zeros(3),
                        np.array([1.0, 0, 0]), np.zeros(3), np.zeros(3), 1.0)
print("rest-to-rest x coefficients:", traj.coeffs[0])
print("squared-jerk integral:", tj.jerk_integral(traj))        # 720
print("squared-acc  integral:", tj.acc_integral(traj))         # 120/7
print()

# a moving-start segment: board at 1.2 m/s, brake into a lateral offset
p1 = np.array([3.0, 1.0, 0.2])
traj = tj.solve_quintic(np.zeros(3), np.array([1.2, 0, 0]), np.zeros(3),
                        p1, np.array([0.4, 0.3, 0.0]), np.zeros(3), 2.0)
print("moving-start segment over", traj.duration, "s")
for t in np.linspace(0.0, traj.duration, 5):
    s = tj.sample(traj, t)
    print(f"  t={t:4.1f}  p={s.position}  v={s.velocity}")
print("peak |acc| over a dense grid:",
      max(np.linalg.norm(tj.sample(traj, t).acceleration)
          for t in np.linspace(0, traj.duration, 400)).round(3))
print()

# durations follow distance over speed, clamped to a sane band
for r in (0.4, 3.0, 9.0):
    print(f"r={r:3.1f} m at v_max=2 m/s -> T={tj.duration_rule(r, 2.0):.2f} s")
