import numpy as np
import pytest

import saga.costs as cs
import saga.geometry as geo
import saga.harness as hn
import saga.trajectory as tj
import saga.world as ws


def test_select_anchor_min_and_ties():
    scores = np.full(geo.N_ANCHORS, 2.0)
    scores[9] = 0.5
    assert hn.select_anchor(scores) == 9
    scores[3] = 0.5
    assert hn.select_anchor(scores) == 3  # tie goes to the lowest index
    with pytest.raises(ValueError):
        hn.select_anchor(np.zeros(14))


def test_oracle_prefers_center_anchor_in_empty_world():
    """With no pillars and the goal dead ahead, the straight-out candidate
    wins on goal distance and smoothness."""
    world = ws.generate_world(seed=0, density=0.0)
    pose = tj.Pose(world.start, 0.0)
    g_b = pose.to_body(world.goal)
    lattice = geo.build_lattice(v_term_max=2.0)
    best, totals = hn.oracle_select(world, pose, np.zeros(3), np.zeros(3),
                                    g_b, lattice, cs.CostWeights(), 2.0)
    assert best == 7
    assert totals.shape == (geo.N_ANCHORS,)
    assert totals[7] == totals.min()


def test_oracle_avoids_blocked_center():
    """A fat pillar dead ahead pushes the oracle off the center anchor.

    Pillars are infinite in z, so only yaw offers an escape."""
    world = ws.PillarWorld(bounds=(-20, 20, -10, 10),
                           pillars=np.array([[3.5, 0.0, 1.0]]),
                           seed=0, density=0.0,
                           start=np.array([0.0, 0.0, 1.5]),
                           goal=np.array([18.0, 0.0, 1.5]))
    pose = tj.Pose(world.start, 0.0)
    g_b = pose.to_body(world.goal)
    lattice = geo.build_lattice(v_term_max=2.0)
    best, totals = hn.oracle_select(world, pose, np.zeros(3), np.zeros(3),
                                    g_b, lattice, cs.CostWeights(), 2.0)
    assert best != 7
    assert totals[best] < totals[7]


def test_heading_yaw_velocity_vs_goal():
    # moving fast: velocity azimuth
    yaw = hn.heading_yaw(np.array([0.0, 1.0, 0.0]), np.zeros(3),
                         np.array([10.0, 0, 0]))
    np.testing.assert_allclose(yaw, np.pi / 2)
    # hovering: goal azimuth
    yaw = hn.heading_yaw(np.array([0.05, 0.0, 0.0]), np.zeros(3),
                         np.array([0.0, -5.0, 0]))
    np.testing.assert_allclose(yaw, -np.pi / 2)
    # degenerate: goal on top of the vehicle
    assert hn.heading_yaw(np.zeros(3), np.zeros(3), np.zeros(3)) == 0.0


def test_episode_oracle_empty_world_flies_straight():
    world = ws.generate_world(seed=0, density=0.0)
    config = hn.EpisodeConfig(selection_mode="oracle")
    result = hn.run_episode(world, config)
    assert result.success and result.failure_cause == "none"
    straight = np.linalg.norm(world.goal - world.start)
    assert result.traj_length < 1.05 * straight
    assert result.min_safety >= 0  # no pillars: clamped max-range distances
    assert result.log.shape[1] == 14
    assert result.smoothness > 0


def test_episode_terminates_within_goal_tolerance():
    world = ws.generate_world(seed=0, density=0.0)
    config = hn.EpisodeConfig(selection_mode="oracle")
    result = hn.run_episode(world, config)
    end = result.log[-1, 1:4]
    assert np.linalg.norm(world.goal - end) <= config.goal_tolerance + 1e-9


def test_episode_timeout_reported():
    world = ws.generate_world(seed=0, density=0.0)
    config = hn.EpisodeConfig(selection_mode="oracle", timeout=1.0)
    result = hn.run_episode(world, config)
    assert not result.success and result.failure_cause == "timeout"
    # the flight stops at the first replan boundary past the limit
    assert 1.0 - 1e-9 <= result.time_consumption <= 1.0 + 2 * config.replan_interval


def test_episode_deterministic():
    world = ws.generate_world(seed=1, density=0.05)
    config = hn.EpisodeConfig(selection_mode="oracle")
    a = hn.run_episode(world, config)
    b = hn.run_episode(world, config)
    assert (a.log == b.log).all()
    assert a.success == b.success


def test_random_mode_seeded_by_world():
    world = ws.generate_world(seed=2, density=0.0)
    config = hn.EpisodeConfig(selection_mode="random", timeout=5.0)
    a = hn.run_episode(world, config)
    b = hn.run_episode(world, config)
    assert (a.log == b.log).all()


def test_metrics_unit_quintic_smoothness():
    coeffs = np.zeros((3, 6))
    coeffs[0] = [0, 0, 0, 10, -15, 6]  # rest-to-rest unit move
    segments = [(coeffs, tj.Pose(np.zeros(3), 0.0), 1.0)]
    log = np.zeros((2, 14))
    log[1, 0] = 1.0
    log[1, 1] = 1.0
    log[:, 13] = 3.0
    world = ws.generate_world(seed=0, density=0.0)
    t, length, avg_s, min_s, smooth = hn.compute_metrics(log, world, segments)
    np.testing.assert_allclose(smooth, 720.0, rtol=1e-12)
    np.testing.assert_allclose(t, 1.0)
    np.testing.assert_allclose(length, 1.0)


def test_metrics_constant_distance_log():
    # every log point exactly 0.5 m from the nearest surface
    log = np.zeros((5, 14))
    log[:, 0] = np.arange(5) * 0.1
    log[:, 1] = np.arange(5) * 0.2
    log[:, 13] = 0.5
    world = ws.generate_world(seed=0, density=0.0)
    t, length, avg_s, min_s, smooth = hn.compute_metrics(log, world, [])
    np.testing.assert_allclose(avg_s, 0.5)
    np.testing.assert_allclose(min_s, 0.5)
    np.testing.assert_allclose(length, 0.8, atol=1e-12)
    assert smooth == 0.0


def test_metrics_straight_line_time_and_length():
    # 10 m at a steady 2 m/s: 5 s, 10 m
    n = 501
    log = np.zeros((n, 14))
    log[:, 0] = np.linspace(0, 5, n)
    log[:, 1] = 2.0 * log[:, 0]
    log[:, 4] = 2.0
    log[:, 13] = 1.0
    world = ws.generate_world(seed=0, density=0.0)
    t, length, avg_s, min_s, _ = hn.compute_metrics(log, world, [])
    np.testing.assert_allclose(t, 5.0)
    np.testing.assert_allclose(length, 10.0, rtol=1e-12)


def test_metrics_negative_distance_clamped():
    log = np.zeros((3, 14))
    log[:, 0] = [0, 1, 2]
    log[:, 13] = [-0.2, 0.4, 1.0]
    world = ws.generate_world(seed=0, density=0.0)
    _, _, avg_s, min_s, _ = hn.compute_metrics(log, world, [])
    assert min_s == 0.0
    np.testing.assert_allclose(avg_s, (0.0 + 0.4 + 1.0) / 3)
    with pytest.raises(ValueError):
        hn.compute_metrics(np.zeros((0, 14)), world, [])


def test_episode_metrics_recomputable_from_log():
    world = ws.generate_world(seed=3, density=0.05)
    config = hn.EpisodeConfig(selection_mode="oracle")
    result = hn.run_episode(world, config)
    t, length, avg_s, min_s, smooth = hn.compute_metrics(result.log, world,
                                                         result.segments)
    np.testing.assert_allclose(result.time_consumption, t)
    np.testing.assert_allclose(result.traj_length, length)
    np.testing.assert_allclose(result.avg_safety, avg_s)
    np.testing.assert_allclose(result.min_safety, min_s)
    np.testing.assert_allclose(result.smoothness, smooth)
    # the sd column matches fresh signed distances at the logged positions
    sd = ws.signed_distance_many(world, result.log[:, 1:4])
    np.testing.assert_allclose(result.log[:, 13], sd, atol=1e-9)


def test_benchmark_rows_and_aggregates():
    rows = hn.run_benchmark(seeds=[0, 1], speeds=[2.0], densities=[0.0],
                            modes=["oracle"],
                            config_kwargs={"timeout": 60.0})
    assert len(rows) == 2
    for row in rows:
        assert row.mode == "oracle" and row.result.success
    agg = hn.aggregate_rows(rows)
    assert len(agg) == 1
    report = hn.report_csv(rows)
    lines = report.strip().split("\n")
    assert lines[0] == hn.REPORT_HEADER
    assert len([l for l in lines if l.startswith("#agg")]) == 1
    assert len(lines) == 1 + 2 + 1


def test_benchmark_parallel_matches_serial():
    kwargs = dict(seeds=[0, 1], speeds=[2.0], densities=[0.0],
                  modes=["oracle"], config_kwargs={"timeout": 60.0})
    serial = hn.report_csv(hn.run_benchmark(**kwargs, jobs=1))
    parallel = hn.report_csv(hn.run_benchmark(**kwargs, jobs=2))
    assert serial == parallel


def test_aggregate_success_rate_and_means():
    rows = hn.run_benchmark(seeds=[0, 1, 2], speeds=[2.0], densities=[0.0],
                            modes=["oracle"], config_kwargs={"timeout": 60.0})
    (key, stats), = hn.aggregate_rows(rows)
    assert key == (2.0, 0.0, "oracle")
    succ = [r.result for r in rows if r.result.success]
    assert stats["n"] == 3
    assert stats["success_rate"] == len(succ) / 3
    assert succ
    np.testing.assert_allclose(stats["time_consumption"],
                               np.mean([r.time_consumption for r in succ]))
    np.testing.assert_allclose(stats["min_safety"],
                               np.mean([r.min_safety for r in succ]))


def test_aggregate_all_failures_reports_nan_means():
    rows = hn.run_benchmark(seeds=[0], speeds=[2.0], densities=[0.0],
                            modes=["oracle"], config_kwargs={"timeout": 0.5})
    (_, stats), = hn.aggregate_rows(rows)
    assert stats["success_rate"] == 0.0
    assert np.isnan(stats["traj_length"])
    # empty cells in the aggregate line, not "nan"
    agg_line = [l for l in hn.report_csv(rows).strip().split("\n")
                if l.startswith("#agg")][0]
    assert "nan" not in agg_line
    assert ",," in agg_line
