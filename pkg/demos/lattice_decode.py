"""The 3x5 anchor lattice and refinement decoding.

Run: python3 demos/lattice_decode.py
"""
import numpy as np

import saga.geometry as geo

lattice = geo.build_lattice()
print("yaw anchors  (deg):", np.rad2deg(lattice.yaw_angles))
print("pitch anchors(deg):", np.rad2deg(lattice.pitch_angles))
print(f"radial shell: {lattice.r_min}..{lattice.r_max} m")
print()

# zero refinement puts every candidate on its anchor direction mid-shell
print("idx  yaw   pitch  terminal position (u = 0)")
for i in range(geo.N_ANCHORS):
    yaw, pitch = np.rad2deg(lattice.anchor_angles(i))
    term = geo.decode_terminal(lattice, i, np.zeros(9))
    px, py, pz = term.p_b
    print(f"{i:3d}  {yaw:5.0f}  {pitch:5.0f}  [{px:6.3f} {py:6.3f} {pz:6.3f}]")
print()

# the radius channel moves along the shell without bending the direction
u = np.zeros(9)
for val in (-1.0, 0.0, 1.0):
    u[2] = val
    term = geo.decode_terminal(lattice, 7, u)
    print(f"u_r={val:+.0f} -> |p|={np.linalg.norm(term.p_b):.3f} m")
print()

# norm identity holds for arbitrary refinements
rng = np.random.default_rng(0)
worst = 0.0
for _ in range(2000):
    i = int(rng.integers(0, geo.N_ANCHORS))
    u = rng.uniform(-1, 1, 9)
    term = geo.decode_terminal(lattice, i, u)
    r = lattice.r_min + (u[2] + 1) / 2 * (lattice.r_max - lattice.r_min)
    worst = max(worst, abs(np.linalg.norm(term.p_b) - r))
print("worst |p|-r mismatch over 2000 random decodes:", worst)
