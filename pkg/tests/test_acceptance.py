"""End-to-end acceptance gates for the planner package.

Each test prints one PASS/FAIL line (with the measured numbers) straight to
the terminal, then asserts. Criterion 7 trains the full default model and
dominates the runtime; everything else finishes in seconds.
"""

import time

import numpy as np
import pytest
from scipy.integrate import simpson

import saga.cli as cli
import saga.costs as cs
import saga.geometry as geo
import saga.harness as hn
import saga.network as nw
import saga.pipeline as pl
import saga.trajectory as tj
import saga.training as tr
import saga.world as ws


@pytest.fixture
def announce(capsys):
    def _announce(num, ok, detail):
        with capsys.disabled():
            print(f"\ncriterion {num:02d} {'PASS' if ok else 'FAIL'}: {detail}")
        assert ok, f"criterion {num}: {detail}"
    return _announce


def _quintic_oracle(p0, v0, a0, p1, v1, a1, t):
    A = np.array([
        [1, 0, 0, 0, 0, 0],
        [0, 1, 0, 0, 0, 0],
        [0, 0, 2, 0, 0, 0],
        [1, t, t**2, t**3, t**4, t**5],
        [0, 1, 2 * t, 3 * t**2, 4 * t**3, 5 * t**4],
        [0, 0, 2, 6 * t, 12 * t**2, 20 * t**3]], dtype=float)
    b = np.stack([p0, v0, a0, p1, v1, a1]).astype(float)
    return np.linalg.solve(A, b).T


def test_criterion_01_quintic_solver(announce):
    t0 = time.perf_counter()
    rng = np.random.default_rng(0)
    worst_coeff = 0.0
    worst_resid = 0.0
    worst_integ = 0.0
    for trial in range(20):
        p0, v0, a0 = rng.uniform(-2, 2, 3), rng.uniform(-1, 1, 3), rng.uniform(-1, 1, 3)
        p1, v1, a1 = rng.uniform(-2, 6, 3), rng.uniform(-1, 1, 3), rng.uniform(-1, 1, 3)
        T = rng.uniform(0.5, 3.0)
        traj = tj.solve_quintic(p0, v0, a0, p1, v1, a1, T)
        worst_coeff = max(worst_coeff, np.abs(
            traj.coeffs - _quintic_oracle(p0, v0, a0, p1, v1, a1, T)).max())
        # boundary residuals across a dense time grid
        ts = np.linspace(0.0, T, 500)
        for t in (0.0, T):
            s = tj.sample(traj, t)
            ref = (p0, v0, a0) if t == 0.0 else (p1, v1, a1)
            worst_resid = max(worst_resid,
                              np.abs(s.position - ref[0]).max(),
                              np.abs(s.velocity - ref[1]).max(),
                              np.abs(s.acceleration - ref[2]).max())
        if trial < 5:
            ts = np.linspace(0.0, T, 10001)
            jerks = np.array([np.sum(tj.sample(traj, t).jerk ** 2) for t in ts])
            accs = np.array([np.sum(tj.sample(traj, t).acceleration ** 2) for t in ts])
            jq = simpson(jerks, x=ts)
            aq = simpson(accs, x=ts)
            worst_integ = max(worst_integ,
                              abs(tj.jerk_integral(traj) - jq) / abs(jq),
                              abs(tj.acc_integral(traj) - aq) / abs(aq))
    # dense residuals against the solved polynomial for one trajectory
    traj = tj.solve_quintic(np.zeros(3), np.zeros(3), np.zeros(3),
                            np.ones(3), np.zeros(3), np.zeros(3), 1.0)
    for t in np.linspace(0, 1, 10000):
        s = tj.sample(traj, t)
        tt = np.array([1, t, t**2, t**3, t**4, t**5])
        worst_resid = max(worst_resid, np.abs(s.position - traj.coeffs @ tt).max())
    elapsed = time.perf_counter() - t0
    ok = worst_coeff <= 1e-9 and worst_resid <= 1e-9 and worst_integ <= 1e-9 \
        and elapsed < 5.0
    announce(1, ok,
             f"quintic solver: coeff err {worst_coeff:.2e}, boundary/path "
             f"residual {worst_resid:.2e}, integral rel err {worst_integ:.2e} "
             f"(all <= 1e-9), {elapsed:.1f}s < 5s")


def test_criterion_02_gradient_fidelity(announce):
    t0 = time.perf_counter()
    prim = pl.primitive_grad_checks(seed=0, h=1e-5)
    prim_worst = max(err for _, err in prim)
    end_err = pl.end_to_end_grad_check(tiny=True, seed=0, h=1e-5)
    elapsed = time.perf_counter() - t0
    worst = max(prim_worst, end_err)
    ok = worst < 1e-4 and elapsed < 120.0
    announce(2, ok,
             f"gradient fidelity: {len(prim)} primitives worst "
             f"{prim_worst:.2e}, end-to-end {end_err:.2e} (< 1e-4), "
             f"{elapsed:.1f}s < 120s")


def test_criterion_03_permutation_equivariance(announce):
    t0 = time.perf_counter()
    cfg = nw.tiny_config(height=12, width=20, channels=(2, 2), token_dim=8,
                         mod_hidden=8)
    store = nw.init_weights(cfg, seed=0)
    lattice = geo.build_lattice(v_term_max=2.0)
    net = nw.PlannerNet(cfg, store, lattice)
    rng = np.random.default_rng(1)
    depth = rng.uniform(0.05, 1.0, (1, cfg.height, cfg.width))
    o = rng.uniform(-0.5, 0.5, 9)
    # zero direction encoding: the token tail must be permutation equivariant
    dev_off = max(nw.permutation_sensitivity(net, depth, o,
                                             rng.permutation(geo.N_ANCHORS))
                  for _ in range(5))
    # nonzero encoding: slot identity must matter
    store["pe.W"].data[:] = rng.standard_normal(store["pe.W"].data.shape)
    store["pe.b"].data[:] = rng.standard_normal(store["pe.b"].data.shape)
    perm = np.roll(np.arange(geo.N_ANCHORS), 1)
    dev_on = nw.permutation_sensitivity(net, depth, o, perm)
    elapsed = time.perf_counter() - t0
    ok = dev_off <= 1e-10 and dev_on > 1e-3 and elapsed < 5.0
    announce(3, ok,
             f"token permutation: zero-encoding deviation {dev_off:.2e} "
             f"<= 1e-10, nonzero-encoding sensitivity {dev_on:.2e} > 1e-3, "
             f"{elapsed:.1f}s < 5s")


def test_criterion_04_decode_geometry(announce):
    t0 = time.perf_counter()
    lattice = geo.build_lattice()
    rng = np.random.default_rng(2)
    n = 100000
    idx = rng.integers(0, geo.N_ANCHORS, n)
    us = rng.uniform(-1, 1, (n, 9))
    worst_norm = 0.0
    for i in range(n):
        term = geo.decode_terminal(lattice, int(idx[i]), us[i])
        r = lattice.r_min + (us[i, 2] + 1) / 2 * (lattice.r_max - lattice.r_min)
        worst_norm = max(worst_norm, abs(np.linalg.norm(term.p_b) - r))
    worst_orth = 0.0
    for _ in range(10000):
        rot = geo.anchor_rotation(rng.uniform(-np.pi, np.pi),
                                  rng.uniform(-np.pi / 2, np.pi / 2))
        worst_orth = max(worst_orth, np.abs(rot.T @ rot - np.eye(3)).max(),
                         abs(np.linalg.det(rot) - 1.0))
    elapsed = time.perf_counter() - t0
    ok = worst_norm <= 1e-12 and worst_orth <= 1e-12 and elapsed < 5.0
    announce(4, ok,
             f"decode geometry: radius norm err {worst_norm:.2e} over {n} "
             f"decodes, rotation orthonormality err {worst_orth:.2e} "
             f"(both <= 1e-12), {elapsed:.1f}s < 5s")


def test_criterion_05_renderer_vs_sphere_trace(announce):
    t0 = time.perf_counter()
    cam = ws.CameraModel()
    rng = np.random.default_rng(3)
    worst = 0.0
    for seed in range(10):
        world = ws.generate_world(seed, 0.05)
        pose = tj.Pose(world.start + rng.uniform(-0.5, 0.5, 3),
                       rng.uniform(-np.pi, np.pi))
        depth = ws.render_depth(world, pose, cam)
        pix = np.stack([rng.integers(0, cam.height, 100),
                        rng.integers(0, cam.width, 100)], axis=1)
        ref = ws.sphere_trace_depths(world, pose, cam, pix)
        worst = max(worst, np.abs(depth[pix[:, 0], pix[:, 1]] - ref).max())
    elapsed = time.perf_counter() - t0
    ok = worst <= 1e-3 and elapsed < 30.0
    announce(5, ok,
             f"depth renderer: max |analytic - sphere trace| {worst:.2e} "
             f"<= 1e-3 over 1000 rays x 10 worlds, {elapsed:.1f}s < 30s")


def test_criterion_06_oracle_flights(announce):
    t0 = time.perf_counter()
    config = hn.EpisodeConfig(v_max=2.0, selection_mode="oracle")
    successes = 0
    worst_safety = np.inf
    for seed in range(10):
        world = ws.generate_world(seed, 0.05)
        result = hn.run_episode(world, config)
        successes += result.success
        if result.success:
            worst_safety = min(worst_safety, result.min_safety)
    elapsed = time.perf_counter() - t0
    ok = successes == 10 and worst_safety >= config.vehicle_radius \
        and elapsed < 120.0
    announce(6, ok,
             f"oracle flights: {successes}/10 reached the goal, worst "
             f"min_safety {worst_safety:.3f} >= vehicle radius "
             f"{config.vehicle_radius}, {elapsed:.0f}s < 120s")


def test_criterion_07_default_training(announce, tmp_path_factory):
    t0 = time.perf_counter()
    out_dir = str(tmp_path_factory.mktemp("training"))
    config = tr.TrainConfig()

    samples, skipped = tr.collect_dataset(range(100, 160), 100, config, out_dir)
    held, _ = tr.collect_dataset(range(200, 210), 30, config, out_dir)
    worlds = tr.load_worlds(samples + held, out_dir)

    store, curve = tr.train(samples, worlds, config)
    first, last = curve[0][3], curve[-1][3]
    drop = 1.0 - last / first

    planner = nw.PlannerNet(config.net_config(), store, config.lattice())
    stats = tr.evaluate_regret(planner, held, worlds, config.cost_weights,
                               config.planning_margin, config.v_max)
    ratio = stats.mean_regret / stats.random_regret
    elapsed = time.perf_counter() - t0
    ok = drop >= 0.5 and ratio <= 0.5 and elapsed < 3600.0
    announce(7, ok,
             f"default training: {len(samples)} frames, loss {first:.2f} -> "
             f"{last:.2f} (drop {100 * drop:.1f}% >= 50%), heldout regret "
             f"{stats.mean_regret:.3f} vs random {stats.random_regret:.3f} "
             f"(ratio {ratio:.3f} <= 0.5), agreement {stats.agreement:.2f}, "
             f"{elapsed:.0f}s < 3600s")


def test_criterion_08_ablation_report(announce, tmp_path_factory):
    t0 = time.perf_counter()
    out_dir = str(tmp_path_factory.mktemp("ablation"))
    import dataclasses
    config = dataclasses.replace(tr.TrainConfig(), epochs=6)
    samples, _ = tr.collect_dataset(range(100, 108), 40, config, out_dir)
    held, _ = tr.collect_dataset(range(200, 205), 10, config, out_dir)
    worlds = tr.load_worlds(samples + held, out_dir)
    rows, csv = tr.ablate_ppe(samples, held, worlds, config, out_dir,
                              bench_seeds=(0,), bench_density=0.05)
    elapsed = time.perf_counter() - t0
    arms = {r[0] for r in rows}
    finite = all(np.isfinite([r[2], r[3], r[4], r[5], r[6], r[7]]).all()
                 for r in rows)
    on = next(r for r in rows if r[0] == "ppe_on")
    off = next(r for r in rows if r[0] == "ppe_off")
    direction = "on<=off" if on[3] <= off[3] else "on>off"
    ok = arms == {"ppe_on", "ppe_off"} and finite and len(csv.splitlines()) == 3
    announce(8, ok,
             f"direction-encoding ablation: paired report produced "
             f"({len(samples)} train frames, 6 epochs each arm); regret "
             f"on={on[3]:.3f} off={off[3]:.3f} ({direction}), sensitivity "
             f"on={on[7]:.2e} off={off[7]:.2e}, {elapsed:.0f}s")


def test_criterion_09_metric_definitions(announce):
    t0 = time.perf_counter()
    world = ws.generate_world(seed=0, density=0.0)
    # smoothness sums closed-form squared-jerk integrals over the flown slices
    rng = np.random.default_rng(4)
    worst_rel = 0.0
    for _ in range(5):
        traj = tj.solve_quintic(rng.uniform(-1, 1, 3), rng.uniform(-1, 1, 3),
                                rng.uniform(-1, 1, 3), rng.uniform(-1, 5, 3),
                                rng.uniform(-1, 1, 3), rng.uniform(-1, 1, 3),
                                rng.uniform(0.5, 3.0))
        executed = 0.6 * traj.duration
        ts = np.linspace(0.0, executed, 10001)
        ref = simpson(np.array([np.sum(tj.sample(traj, t).jerk ** 2)
                                for t in ts]), x=ts)
        log = np.zeros((2, 14))
        log[1, 0] = executed
        got = hn.compute_metrics(log, world,
                                 [(traj.coeffs, traj.pose, executed)])[4]
        worst_rel = max(worst_rel, abs(got - ref) / abs(ref))
    # unit rest-to-rest displacement over one second
    unit = tj.solve_quintic(np.zeros(3), np.zeros(3), np.zeros(3),
                            np.array([1.0, 0, 0]), np.zeros(3), np.zeros(3), 1.0)
    log = np.zeros((2, 14))
    log[1, 0] = 1.0
    unit_smooth = hn.compute_metrics(log, world,
                                     [(unit.coeffs, unit.pose, 1.0)])[4]
    # constant 0.5 m clearance log
    log = np.zeros((4, 14))
    log[:, 0] = [0, 1, 2, 3]
    log[:, 13] = 0.5
    _, _, avg_s, min_s, _ = hn.compute_metrics(log, world, [])
    # straight 10 m at a steady 2 m/s
    n = 1001
    log = np.zeros((n, 14))
    log[:, 0] = np.linspace(0, 5, n)
    log[:, 1] = 2.0 * log[:, 0]
    log[:, 13] = 1.0
    t_c, length = hn.compute_metrics(log, world, [])[:2]
    elapsed = time.perf_counter() - t0
    ok = (worst_rel <= 1e-6 and abs(unit_smooth - 720.0) < 1e-9
          and avg_s == 0.5 and min_s == 0.5
          and abs(t_c - 5.0) < 1e-12 and abs(length - 10.0) < 1e-9)
    announce(9, ok,
             f"metric definitions: smoothness vs quadrature rel err "
             f"{worst_rel:.2e} <= 1e-6, unit quintic {unit_smooth:.1f} = 720, "
             f"constant clearance avg={avg_s} min={min_s} = 0.5, straight "
             f"run {t_c:.1f}s/{length:.1f}m, {elapsed:.1f}s")


def test_criterion_10_bench_determinism(announce, tmp_path_factory):
    t0 = time.perf_counter()
    out_dir = tmp_path_factory.mktemp("bench")
    blobs = []
    for name, jobs in (("a.csv", "1"), ("b.csv", "1"), ("c.csv", "2")):
        out = out_dir / name
        rc = cli.main(["bench", "--seeds", "0-1", "--speeds", "2",
                       "--density", "0.05", "--modes", "oracle",
                       "--jobs", jobs, "--out", str(out)])
        assert rc == 0
        blobs.append(out.read_bytes())
    elapsed = time.perf_counter() - t0
    ok = blobs[0] == blobs[1] == blobs[2] and len(blobs[0]) > 0
    announce(10, ok,
             f"bench determinism: three runs (serial x2, --jobs 2) "
             f"byte-identical, {len(blobs[0])} bytes, {elapsed:.0f}s")
