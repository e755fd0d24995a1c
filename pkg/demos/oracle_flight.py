"""One receding-horizon episode with exhaustive candidate selection.

Run: python3 demos/oracle_flight.py
"""
import numpy as np

import saga.harness as hn
import saga.world as ws

world = ws.generate_world(seed=3, density=0.05)
config = hn.EpisodeConfig(v_max=2.0, selection_mode="oracle")
print(f"flying seed=3 density=0.05 ({len(world.pillars)} pillars), "
      f"start {world.start} -> goal {world.goal}")

result = hn.run_episode(world, config)
print()
print("success:         ", result.success)
print("failure cause:   ", result.failure_cause)
print(f"time:             {result.time_consumption:.2f} s")
print(f"path length:      {result.traj_length:.2f} m "
      f"(straight line {np.linalg.norm(world.goal - world.start):.2f} m)")
print(f"avg clearance:    {result.avg_safety:.2f} m")
print(f"min clearance:    {result.min_safety:.2f} m")
print(f"smoothness:       {result.smoothness:.1f} m^2/s^5")
print(f"log:              {len(result.log)} control ticks, "
      f"{len(result.segments)} replans")

# sparse trace of the flown path
print()
print("   t      x      y      z   clearance")
for row in result.log[:: len(result.log) // 10]:
    print(f"{row[0]:5.1f} {row[1]:6.2f} {row[2]:6.2f} {row[3]:6.2f} "
          f"{row[13]:8.2f}")
