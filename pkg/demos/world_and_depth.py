"""Pillar-forest sampling and the analytic depth camera.

Run: python3 demos/world_and_depth.py
"""
import os
import tempfile

import numpy as np

import saga.world as ws
from saga.trajectory import Pose

world = ws.generate_world(seed=4, density=0.08)
print(f"world seed=4 density=0.08: {len(world.pillars)} pillars in "
      f"{world.bounds}")
radii = world.pillars[:, 2]
print(f"radii {radii.min():.2f}..{radii.max():.2f} m, "
      f"start clearance {ws.signed_distance(world, world.start):.2f} m")

pose = Pose(world.start, 0.0)
depth = ws.render_depth(world, pose)
print(f"depth image {depth.shape[0]}x{depth.shape[1]}: "
      f"min {depth.min():.2f} m, max {depth.max():.2f} m "
      f"({(depth >= ws.MAX_RANGE).mean():.0%} of rays hit nothing)")

# coarse ascii view, nearest-in-column
cols = depth.min(axis=0)
bins = np.linspace(0, ws.MAX_RANGE, 8)
glyphs = "#%*+=-. "
row = "".join(glyphs[min(int(np.digitize(c, bins)) - 1, 7)]
              for c in cols[::4])
print("near-to-far profile:", row)

out = tempfile.mkdtemp(prefix="saga_demo_")
ws.save_world(world, os.path.join(out, "world.json"))
ws.save_depth(depth, os.path.join(out, "depth.sdpt"))
back, _ = ws.load_depth(os.path.join(out, "depth.sdpt"))
print("save/load max err:", float(np.abs(back - depth).max()))
print("files in", out)
