"""Self-supervised training: dataset collection from oracle flights, the
minibatch loop with adaptive moment estimation, selection-regret evaluation
against the exhaustive reference, and the direction-encoding ablation.

Supervision is generated, not labeled: each frame's targets are structured
costs computed on the fly from the frame's own world geometry, evaluated on
the same inflated planning view the flight harness uses, so the scores the
network learns are the quantities the selector acts on.
"""

import os
import struct
from dataclasses import dataclass, field, replace

import numpy as np

from . import autodiff as ad
from . import costs as cs
from . import geometry as geo
from . import harness as hn
from . import layers as ly
from . import network as nw
from . import pipeline as pl
from . import trajectory as tj
from . import world as ws
from .autodiff import NumericsError
from .geometry import N_ANCHORS

DATASET_MAGIC = b"SGDS"


@dataclass
class DatasetSample:
    depth: np.ndarray          # (H, W) meters, float32 storage
    state: np.ndarray          # (9,) body-frame v, a, goal
    world_path: str            # relative to the dataset file
    pose: np.ndarray           # (4,) world x, y, z, yaw


@dataclass
class TrainConfig:
    batch_size: int = 32
    epochs: int = 20
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    seed: int = 0
    ppe_enabled: bool = True
    v_max: float = 2.0             # collection speed, duration rule, lattice
    planning_margin: float = 0.8   # same inflation the harness plans with
    collect_density: float = 0.10
    cost_weights: cs.CostWeights = field(default_factory=cs.CostWeights)

    def __post_init__(self):
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if self.lr < 0:
            raise ValueError("step size must be >= 0")

    def lattice(self):
        return geo.build_lattice(v_term_max=self.v_max)

    def net_config(self):
        return nw.PlannerConfig(ppe_enabled=self.ppe_enabled)


@dataclass
class RegretStats:
    mean_regret: float      # true-cost gap, network pick vs best pick
    agreement: float        # top-1 match rate with the exhaustive reference
    random_regret: float    # uniform-selection baseline (exact expectation)
    frames: int


def save_dataset(samples, path):
    """Magic, u32 count; per sample an embedded depth blob, 9 f64 state
    values, u16 world path length + UTF-8 path, 4 f64 pose."""
    with open(path, "wb") as f:
        f.write(DATASET_MAGIC)
        f.write(struct.pack("<I", len(samples)))
        for s in samples:
            blob = ws.encode_depth(s.depth)
            f.write(struct.pack("<I", len(blob)))
            f.write(blob)
            f.write(np.asarray(s.state, dtype="<f8").tobytes())
            raw = s.world_path.encode("utf-8")
            f.write(struct.pack("<H", len(raw)))
            f.write(raw)
            f.write(np.asarray(s.pose, dtype="<f8").tobytes())


def load_dataset(path):
    with open(path, "rb") as f:
        data = f.read()
    if data[:4] != DATASET_MAGIC:
        raise ValueError(f"bad dataset magic {data[:4]!r}")
    (count,) = struct.unpack_from("<I", data, 4)
    off = 8
    samples = []
    for _ in range(count):
        (blob_len,) = struct.unpack_from("<I", data, off)
        off += 4
        depth, _ = ws.decode_depth(data[off:off + blob_len])
        off += blob_len
        state = np.frombuffer(data, dtype="<f8", count=9, offset=off).copy()
        off += 72
        (path_len,) = struct.unpack_from("<H", data, off)
        off += 2
        world_path = data[off:off + path_len].decode("utf-8")
        off += path_len
        pose = np.frombuffer(data, dtype="<f8", count=4, offset=off).copy()
        off += 32
        samples.append(DatasetSample(depth.astype(np.float32), state,
                                     world_path, pose))
    return samples


def collect_dataset(world_seeds, frames_per_world, config, out_dir,
                    camera=None):
    """Fly oracle-mode episodes and keep an even subsample of the replan
    frames, rendering depth at each kept pose.

    World files are written under out_dir/worlds so every sample's costs
    stay recomputable. Failed episodes contribute nothing; their count is
    returned alongside the samples.
    """
    camera = camera or ws.CameraModel()
    worlds_dir = os.path.join(out_dir, "worlds")
    os.makedirs(worlds_dir, exist_ok=True)
    ep_config = hn.EpisodeConfig(v_max=config.v_max, selection_mode="oracle",
                                 planning_margin=config.planning_margin,
                                 cost_weights=config.cost_weights)
    samples = []
    skipped = 0
    for seed in world_seeds:
        world = ws.generate_world(seed, config.collect_density)
        result = hn.run_episode(world, ep_config, record_frames=True)
        if not result.success:
            skipped += 1
            continue
        rel_path = os.path.join("worlds", f"world_{seed:04d}.txt")
        ws.save_world(world, os.path.join(out_dir, rel_path))
        n = len(result.replan_frames)
        keep = np.unique(np.linspace(0, n - 1,
                                     min(frames_per_world, n)).round().astype(int))
        for i in keep:
            pose, state = result.replan_frames[i]
            depth = ws.render_depth(world, pose, camera)
            samples.append(DatasetSample(
                depth.astype(np.float32), state.copy(), rel_path,
                np.array([*pose.position, pose.yaw])))
    return samples, skipped


def load_worlds(samples, base_dir):
    """Path -> PillarWorld for every world referenced by the samples."""
    worlds = {}
    for s in samples:
        if s.world_path not in worlds:
            worlds[s.world_path] = ws.load_world(
                os.path.join(base_dir, s.world_path))
    return worlds


class _Stacked:
    """Dataset columns stacked once so batch slicing is cheap."""

    def __init__(self, samples, worlds, config, net_config):
        n = len(samples)
        self.depth = np.stack([s.depth for s in samples])[:, None, :, :]
        states = np.stack([s.state for s in samples])
        self.o_scaled = nw.scale_state(states, net_config.v_max)
        self.v0 = states[:, 0:3]
        self.a0 = states[:, 3:6]
        self.g_b = states[:, 6:9]
        self.rot = np.empty((n, 3, 3))
        self.pos = np.empty((n, 3))
        pillar_lists = []
        inflated = {p: ws.inflated(w, config.planning_margin)
                    for p, w in worlds.items()}
        for i, s in enumerate(samples):
            pose = tj.Pose(s.pose[:3], s.pose[3])
            self.rot[i] = pose.rotation()
            self.pos[i] = pose.position
            pillar_lists.append(inflated[s.world_path].pillars)
        self.pillars = pl.pad_pillars(pillar_lists)
        self.max_range = net_config.max_range

    def batch(self, idx):
        return pl.TrainingBatch(
            depth_norm=self.depth[idx].astype(np.float64) / self.max_range,
            o_scaled=self.o_scaled[idx],
            v0=self.v0[idx], a0=self.a0[idx], g_b=self.g_b[idx],
            pose_rot=self.rot[idx], pose_pos=self.pos[idx],
            pillars=self.pillars[idx])


class Adam:
    """Adaptive moment estimation over a ParameterStore."""

    def __init__(self, store, lr, beta1=0.9, beta2=0.999, eps=1e-8):
        self.store = store
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self.m = {name: np.zeros_like(store[name].data) for name in store.names()}
        self.v = {name: np.zeros_like(store[name].data) for name in store.names()}

    def step(self):
        self.t += 1
        b1, b2 = self.beta1, self.beta2
        for name in self.store.names():
            p = self.store[name]
            g = p.grad
            self.m[name] = b1 * self.m[name] + (1 - b1) * g
            self.v[name] = b2 * self.v[name] + (1 - b2) * g * g
            m_hat = self.m[name] / (1 - b1 ** self.t)
            v_hat = self.v[name] / (1 - b2 ** self.t)
            p.data = p.data - self.lr * m_hat / (np.sqrt(v_hat) + self.eps)


LOSS_HEADER = "epoch,l_traj,l_score,l_total"


def train(samples, worlds, config, out_dir=None, store=None):
    """Minibatch descent on the combined cost; deterministic given the seed.

    Returns (store, curve) where curve rows are (epoch, l_traj, l_score,
    l_total) means. Checkpoints land in out_dir per epoch when given. A
    non-finite loss aborts with the epoch and batch index in the message.
    """
    if not samples:
        raise ValueError("empty dataset")
    net_config = config.net_config()
    lattice = config.lattice()
    if store is None:
        store = nw.init_weights(net_config, seed=config.seed)
    net = nw.PlannerNet(net_config, store, lattice)
    stacked = _Stacked(samples, worlds, config, net_config)
    opt = Adam(store, config.lr, config.beta1, config.beta2, config.eps)
    rng = np.random.default_rng(config.seed)
    n = len(samples)
    curve = []
    for epoch in range(config.epochs):
        order = rng.permutation(n)
        sums = np.zeros(3)
        for start in range(0, n, config.batch_size):
            idx = order[start:start + config.batch_size]
            batch = stacked.batch(idx)
            store.zero_grads()
            u, scores = net.forward_tensors(ad.Tensor(batch.depth_norm),
                                            ad.Tensor(batch.o_scaled))
            out = pl.batch_loss(u, scores, batch, lattice,
                                config.cost_weights, config.v_max)
            loss = out["loss"]
            if not np.isfinite(loss.data):
                raise NumericsError(
                    f"non-finite loss at epoch {epoch}, "
                    f"batch {start // config.batch_size}")
            ad.backward(loss)
            opt.step()
            sums += len(idx) * np.array([out["l_traj"].data,
                                         out["l_score"].data, loss.data])
        means = sums / n
        curve.append((epoch, means[0], means[1], means[2]))
        if out_dir is not None:
            ly.save_weights(store, os.path.join(out_dir, f"epoch_{epoch:02d}.sagw"))
    return store, curve


def curve_csv(curve):
    lines = [LOSS_HEADER]
    for epoch, lt, lsc, ltot in curve:
        lines.append(f"{epoch},{lt:.9g},{lsc:.9g},{ltot:.9g}")
    return "\n".join(lines) + "\n"


def frame_anchor_costs(planner, sample, world, weights, margin, v_max):
    """True structured cost of each anchor decoded with its own predicted
    refinement, on the inflated planning view; returns (J (15,), scores)."""
    out = planner.forward(sample.depth.astype(np.float64), sample.state)
    planning_world = ws.inflated(world, margin)
    pose = tj.Pose(sample.pose[:3], sample.pose[3])
    v_b, a_b, g_b = sample.state[0:3], sample.state[3:6], sample.state[6:9]
    lattice = planner.lattice
    totals = np.empty(N_ANCHORS)
    for i in range(N_ANCHORS):
        traj = hn.candidate_trajectory(lattice, i, out.u_norm[i], v_b, a_b,
                                       v_max, pose)
        totals[i] = cs.structured_cost(traj, planning_world, g_b, weights,
                                       lattice.r_max).total
    return totals, out.scores


def evaluate_regret(planner, samples, worlds, weights, margin, v_max):
    """Score-based selection vs the exhaustive best over the same candidate
    set. The random baseline is the exact expectation of uniform selection,
    so the whole evaluation is deterministic."""
    regrets = np.empty(len(samples))
    randoms = np.empty(len(samples))
    hits = 0
    for j, sample in enumerate(samples):
        totals, scores = frame_anchor_costs(planner, sample,
                                            worlds[sample.world_path],
                                            weights, margin, v_max)
        chosen = hn.select_anchor(scores)
        best = int(np.argmin(totals))
        regrets[j] = totals[chosen] - totals[best]
        randoms[j] = totals.mean() - totals[best]
        hits += chosen == best
    return RegretStats(float(regrets.mean()), hits / len(samples),
                       float(randoms.mean()), len(samples))


ABLATION_HEADER = ("arm,ppe,final_l_total,regret,random_regret,agreement,"
                   "bench_success_rate,perm_sensitivity")


def ablate_ppe(train_samples, heldout_samples, worlds, config, out_dir,
               bench_seeds=(0, 1, 2), bench_density=0.05):
    """Paired runs differing only in the direction encoding.

    Both arms start from the same initialization (the encoding weights
    init to zero, so the arms are identical at step 0), train on the same
    data in the same order, and are graded the same way. Returns the rows
    and the CSV text of the paired table.
    """
    rows = []
    rng = np.random.default_rng(config.seed)
    probe_perm = rng.permutation(N_ANCHORS)
    probe = heldout_samples[0] if heldout_samples else train_samples[0]
    for arm_name, enabled in (("ppe_on", True), ("ppe_off", False)):
        arm_cfg = replace(config, ppe_enabled=enabled)
        arm_dir = os.path.join(out_dir, arm_name)
        os.makedirs(arm_dir, exist_ok=True)
        store, curve = train(train_samples, worlds, arm_cfg, out_dir=arm_dir)
        weights_path = os.path.join(arm_dir, "weights.sagw")
        ly.save_weights(store, weights_path)
        with open(os.path.join(arm_dir, "loss.csv"), "w") as f:
            f.write(curve_csv(curve))
        planner = nw.PlannerNet(arm_cfg.net_config(), store, arm_cfg.lattice())
        stats = evaluate_regret(planner, heldout_samples, worlds,
                                arm_cfg.cost_weights, arm_cfg.planning_margin,
                                arm_cfg.v_max)
        bench_rows = hn.run_benchmark(
            seeds=list(bench_seeds), speeds=[arm_cfg.v_max],
            densities=[bench_density], modes=["learned"],
            config_kwargs={"planning_margin": arm_cfg.planning_margin,
                           "ppe_enabled": enabled},
            weights_path=weights_path, net_config=arm_cfg.net_config())
        success_rate = np.mean([r.result.success for r in bench_rows])
        sens = nw.permutation_sensitivity(
            planner, probe.depth.astype(np.float64)[None, :, :] / arm_cfg.net_config().max_range,
            nw.scale_state(probe.state, arm_cfg.net_config().v_max), probe_perm)
        rows.append((arm_name, enabled, curve[-1][3], stats.mean_regret,
                     stats.random_regret, stats.agreement,
                     float(success_rate), sens))
    lines = [ABLATION_HEADER]
    for r in rows:
        lines.append(f"{r[0]},{int(r[1])},{r[2]:.9g},{r[3]:.9g},{r[4]:.9g},"
                     f"{r[5]:.9g},{r[6]:.9g},{r[7]:.9g}")
    return rows, "\n".join(lines) + "\n"
