"""Micro training run: collect a handful of oracle frames, fit the net.

Uses a reduced dataset so it finishes in about a minute; the real
configuration is the same code with more worlds and epochs.

Run: python3 demos/tiny_training.py
"""
import tempfile

import saga.network as nw
import saga.training as tr

config = tr.TrainConfig(batch_size=8, epochs=5, collect_density=0.05)
out = tempfile.mkdtemp(prefix="saga_train_")

samples, skipped = tr.collect_dataset([0, 1, 2], 8, config, out)
print(f"collected {len(samples)} frames from 3 worlds "
      f"({skipped} failed episodes skipped)")

worlds = tr.load_worlds(samples, out)
store, curve = tr.train(samples, worlds, config, out_dir=out)
print()
print(tr.curve_csv(curve))

planner = nw.PlannerNet(config.net_config(), store, config.lattice())
stats = tr.evaluate_regret(planner, samples, worlds, config.cost_weights,
                           config.planning_margin, config.v_max)
print(f"on-train regret {stats.mean_regret:.3f} "
      f"(random baseline {stats.random_regret:.3f}), "
      f"agreement {stats.agreement:.2f} over {stats.frames} frames")
print("checkpoints in", out)
