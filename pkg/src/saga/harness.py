"""Receding-horizon flight: episode execution, anchor selection, the
exhaustive selection reference, metrics, and benchmark reporting.

The vehicle ideally tracks each planned quintic for one replan interval,
then replans from the exactly-reached state. Selection runs in one of three
modes: "learned" (network scores), "oracle" (true structured cost over the
unrefined candidates, full world knowledge), or "random" (seeded uniform
pick over unrefined candidates). Successes require reaching the goal
tolerance without any control step dipping below the vehicle radius.
"""

import multiprocessing
from dataclasses import dataclass, field

import numpy as np

from . import costs as cs
from . import geometry as geo
from . import trajectory as tj
from . import world as ws
from .geometry import N_ANCHORS

YAW_SPEED_THRESHOLD = 0.2  # m/s; below this the camera faces the goal


@dataclass
class EpisodeConfig:
    v_max: float = 2.0
    replan_interval: float = 0.1
    control_dt: float = 0.02
    goal_tolerance: float = 1.5
    vehicle_radius: float = 0.3
    planning_margin: float = 0.8       # m added to pillar radii for planning
    timeout: float = 120.0
    ppe_enabled: bool = True
    selection_mode: str = "oracle"     # learned | oracle | random
    cost_weights: cs.CostWeights = field(default_factory=cs.CostWeights)
    r_min: float = 1.0
    r_max: float = 6.0

    def __post_init__(self):
        if not 0 < self.control_dt <= self.replan_interval:
            raise ValueError("need 0 < control_dt <= replan_interval")
        steps = self.replan_interval / self.control_dt
        if abs(steps - round(steps)) > 1e-9:
            raise ValueError("replan_interval must be a multiple of control_dt")
        if self.goal_tolerance <= 0 or self.timeout <= 0:
            raise ValueError("goal_tolerance and timeout must be positive")
        if self.selection_mode not in ("learned", "oracle", "random"):
            raise ValueError(f"unknown selection mode {self.selection_mode!r}")

    def lattice(self):
        return geo.build_lattice(r_min=self.r_min, r_max=self.r_max,
                                 v_term_max=self.v_max)


@dataclass
class EpisodeResult:
    success: bool
    failure_cause: str                 # none | collision | timeout
    time_consumption: float            # s
    traj_length: float                 # m
    avg_safety: float                  # m
    min_safety: float                  # m
    smoothness: float                  # m^2/s^5
    log: np.ndarray                    # rows: t, p(3), v(3), a(3), j(3), sd
    segments: list                     # (coeffs (3,6) body, pose, executed seconds)
    replan_frames: list = field(default_factory=list)  # (pose, state 9-vec) per replan

LOG_HEADER = tj.LOG_HEADER + ",sd"


def select_anchor(scores):
    """Index of the minimum score; ties go to the lowest index."""
    scores = np.asarray(scores)
    if scores.shape != (N_ANCHORS,):
        raise ValueError(f"expected {N_ANCHORS} scores, got {scores.shape}")
    return int(np.argmin(scores))


def candidate_trajectory(lattice, index, u, v_b, a_b, v_max, pose):
    """Decode one anchor and solve its quintic from the current body state."""
    term = geo.decode_terminal(lattice, index, u)
    r = float(np.linalg.norm(term.p_b))
    duration = tj.duration_rule(r, v_max)
    return tj.solve_quintic(np.zeros(3), v_b, a_b,
                            term.p_b, term.v_b, term.a_b, duration, pose)


def oracle_select(world, pose, v_b, a_b, g_b, lattice, weights, v_max):
    """Exhaustive true-cost selection over the unrefined (u=0) candidates.

    Returns (best index, per-candidate totals). Ties break to the lowest
    index via argmin.
    """
    totals = np.empty(N_ANCHORS)
    u0 = np.zeros(9)
    for i in range(N_ANCHORS):
        traj = candidate_trajectory(lattice, i, u0, v_b, a_b, v_max, pose)
        totals[i] = cs.structured_cost(traj, world, g_b, weights, lattice.r_max).total
    return int(np.argmin(totals)), totals


def heading_yaw(velocity, position, goal):
    """Camera yaw: velocity azimuth when moving, goal azimuth when slow."""
    if np.hypot(velocity[0], velocity[1]) >= YAW_SPEED_THRESHOLD:
        return float(np.arctan2(velocity[1], velocity[0]))
    to_goal = goal - position
    if np.hypot(to_goal[0], to_goal[1]) < 1e-12:
        return 0.0
    return float(np.arctan2(to_goal[1], to_goal[0]))


def run_episode(world, config, planner=None, camera=None, record_frames=False):
    """Fly one episode; fully deterministic given (world, config, weights).

    planner is a network.PlannerNet and is required in learned mode, where
    each replan renders a depth image from the current pose. Oracle and
    random modes never consume depth, so rendering is skipped there; the
    logged kinematics are unaffected.
    """
    if config.selection_mode == "learned" and planner is None:
        raise ValueError("learned selection requires a planner")
    lattice = config.lattice()
    camera = camera or ws.CameraModel()
    planning_world = ws.inflated(world, config.planning_margin)
    rng = np.random.default_rng(world.seed * 1000003 + 17)  # random mode only

    position = world.start.astype(float).copy()
    velocity = np.zeros(3)
    acceleration = np.zeros(3)
    t = 0.0
    steps_per_replan = int(round(config.replan_interval / config.control_dt))

    log_rows = []
    segments = []
    frames = []

    def log_state(tstamp, s_world, pose):
        sd = ws.signed_distance(world, s_world.position)
        log_rows.append(np.concatenate([
            [tstamp], s_world.position, s_world.velocity,
            s_world.acceleration, s_world.jerk, [sd]]))
        return sd

    success = False
    failure_cause = "none"

    if np.linalg.norm(position - world.goal) <= config.goal_tolerance:
        # degenerate episode: already at the goal
        log_rows.append(np.concatenate([
            [0.0], position, velocity, acceleration, np.zeros(3),
            [ws.signed_distance(world, position)]]))
        log = np.array(log_rows)
        return EpisodeResult(True, "none", 0.0, 0.0,
                             max(log[0, 13], 0.0), max(log[0, 13], 0.0),
                             0.0, log, [], [])

    while True:
        if t > config.timeout:
            failure_cause = "timeout"
            break

        yaw = heading_yaw(velocity, position, world.goal)
        pose = tj.Pose(position.copy(), yaw)
        rot_t = pose.rotation().T
        v_b = rot_t @ velocity
        a_b = rot_t @ acceleration
        g_b = rot_t @ (world.goal - position)
        state_vec = np.concatenate([v_b, a_b, g_b])

        if config.selection_mode == "learned":
            depth = ws.render_depth(world, pose, camera)
            out = planner.forward(depth, state_vec)
            index = select_anchor(out.scores)
            u = out.u_norm[index]
        elif config.selection_mode == "oracle":
            index, _ = oracle_select(planning_world, pose, v_b, a_b, g_b,
                                     lattice, config.cost_weights, config.v_max)
            u = np.zeros(9)
        else:
            index = int(rng.integers(0, N_ANCHORS))
            u = np.zeros(9)

        if record_frames:
            frames.append((pose, state_vec.copy()))

        traj = candidate_trajectory(lattice, index, u, v_b, a_b,
                                    config.v_max, pose)
        if t == 0.0:
            log_state(0.0, tj.sample_world(traj, 0.0), pose)

        executed = 0.0
        stop = False
        for k in range(1, steps_per_replan + 1):
            t_local = k * config.control_dt
            s = tj.sample_world(traj, t_local)
            t_abs = t + t_local
            sd = log_state(t_abs, s, pose)
            executed = t_local
            if sd < config.vehicle_radius:
                failure_cause = "collision"
                stop = True
                break
            if np.linalg.norm(s.position - world.goal) <= config.goal_tolerance:
                success = True
                stop = True
                break
        segments.append((traj.coeffs.copy(), pose, executed))

        last = tj.sample_world(traj, executed)
        position = last.position
        velocity = last.velocity
        acceleration = last.acceleration
        t += executed
        if stop:
            break

    log = np.array(log_rows)
    time_c, length, avg_s, min_s, smooth = compute_metrics(log, world, segments)
    return EpisodeResult(success, "none" if success else failure_cause,
                         time_c, length, avg_s, min_s, smooth, log, segments,
                         frames)


def compute_metrics(log, world, segments):
    """The six per-episode metrics from an executed log.

    time = last timestamp; length = summed position deltas; avg/min safety
    = mean/min signed distance over log points, clamped below at zero;
    smoothness = sum over executed segments of the closed-form squared-jerk
    integral over the slice actually flown.
    """
    if len(log) == 0:
        raise ValueError("empty episode log")
    time_c = float(log[-1, 0])
    deltas = np.diff(log[:, 1:4], axis=0)
    length = float(np.sqrt((deltas ** 2).sum(axis=1)).sum())
    sd = np.maximum(log[:, 13], 0.0)
    avg_s = float(sd.mean())
    min_s = float(sd.min())
    smooth = 0.0
    for coeffs, _pose, executed in segments:
        if executed > 0.0:
            piece = tj.QuinticTrajectory(coeffs, executed, tj.Pose(np.zeros(3), 0.0))
            smooth += tj.jerk_integral(piece)
    return time_c, length, avg_s, min_s, smooth


def episode_csv(result):
    lines = [LOG_HEADER]
    for row in result.log:
        lines.append(",".join(f"{v:.9g}" for v in row))
    return "\n".join(lines) + "\n"


REPORT_HEADER = ("speed,seed,density,mode,success,failure_cause,"
                 "time_s,length_m,avg_safety_m,min_safety_m,smoothness")


@dataclass
class BenchmarkRow:
    speed: float
    seed: int
    density: float
    mode: str
    result: EpisodeResult

    def csv(self):
        r = self.result
        vals = [f"{self.speed:.9g}", str(self.seed), f"{self.density:.9g}",
                self.mode, "1" if r.success else "0", r.failure_cause,
                f"{r.time_consumption:.9g}", f"{r.traj_length:.9g}",
                f"{r.avg_safety:.9g}", f"{r.min_safety:.9g}",
                f"{r.smoothness:.9g}"]
        return ",".join(vals)


def _episode_task(task):
    """Worker entry: regenerates the world and flies one episode."""
    speed, seed, density, mode, config_kwargs, weights_path, net_config = task
    world = ws.generate_world(seed, density)
    config = EpisodeConfig(v_max=speed, selection_mode=mode, **config_kwargs)
    planner = None
    if mode == "learned":
        from . import layers as ly
        from . import network as nw
        store = ly.load_weights(weights_path)
        planner = nw.PlannerNet(net_config, store, config.lattice())
    result = run_episode(world, config, planner)
    return BenchmarkRow(speed, seed, density, mode, result)


def run_benchmark(seeds, speeds, densities, modes, config_kwargs=None,
                  weights_path=None, net_config=None, jobs=1):
    """Cartesian product of settings; deterministic row order regardless of
    worker count (modes, then densities, then speeds, then seeds)."""
    config_kwargs = config_kwargs or {}
    tasks = [(speed, seed, density, mode, config_kwargs, weights_path, net_config)
             for mode in modes for density in densities
             for speed in speeds for seed in seeds]
    if jobs > 1:
        with multiprocessing.get_context("fork").Pool(jobs) as pool:
            rows = pool.map(_episode_task, tasks, chunksize=1)
    else:
        rows = [_episode_task(t) for t in tasks]
    return rows


def aggregate_rows(rows):
    """Per (speed, density, mode): success rate over all rows, metric means
    over the successful ones. Returns list of (key, stats dict)."""
    groups = {}
    for row in rows:
        groups.setdefault((row.speed, row.density, row.mode), []).append(row)
    out = []
    for key in sorted(groups, key=lambda k: (k[2], k[1], k[0])):
        block = groups[key]
        succ = [r.result for r in block if r.result.success]
        stats = {"n": len(block), "success_rate": len(succ) / len(block)}
        for name in ("time_consumption", "traj_length", "avg_safety",
                     "min_safety", "smoothness"):
            stats[name] = (float(np.mean([getattr(r, name) for r in succ]))
                           if succ else float("nan"))
        out.append((key, stats))
    return out


def report_csv(rows):
    """Row block then '#agg'-prefixed aggregate block, all 9-digit floats."""
    lines = [REPORT_HEADER]
    lines += [row.csv() for row in rows]
    for (speed, density, mode), st in aggregate_rows(rows):
        vals = [f"{speed:.9g}", f"{density:.9g}", mode,
                f"{st['success_rate']:.9g}"]
        for name in ("time_consumption", "traj_length", "avg_safety",
                     "min_safety", "smoothness"):
            v = st[name]
            vals.append("" if np.isnan(v) else f"{v:.9g}")
        lines.append("#agg," + ",".join(vals))
    return "\n".join(lines) + "\n"
