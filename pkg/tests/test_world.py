import numpy as np
import pytest

import saga.world as ws
from saga.trajectory import Pose


def test_generation_deterministic():
    a = ws.generate_world(seed=3, density=0.05)
    b = ws.generate_world(seed=3, density=0.05)
    assert (a.pillars == b.pillars).all()
    c = ws.generate_world(seed=4, density=0.05)
    assert a.pillars.shape != c.pillars.shape or not (a.pillars == c.pillars).all()


def test_pillar_count_follows_density():
    # 40 m x 20 m footprint: round(density * 800)
    w = ws.generate_world(seed=0, density=0.05)
    assert len(w.pillars) == 40
    w2 = ws.generate_world(seed=0, density=0.10)
    assert len(w2.pillars) == 80
    assert len(ws.generate_world(seed=0, density=0.0).pillars) == 0


def test_pillars_respect_radius_bounds_and_gap():
    w = ws.generate_world(seed=7, density=0.10)
    radii = w.pillars[:, 2]
    assert (radii >= ws.PILLAR_R_MIN).all() and (radii <= ws.PILLAR_R_MAX).all()
    centers = w.pillars[:, :2]
    diff = centers[:, None, :] - centers[None, :, :]
    dist = np.linalg.norm(diff, axis=-1)
    surface = dist - radii[:, None] - radii[None, :]
    np.fill_diagonal(surface, np.inf)
    assert surface.min() >= ws.MIN_GAP - 1e-12


def test_start_goal_discs_are_clear():
    w = ws.generate_world(seed=11, density=0.10)
    for p in (w.start, w.goal):
        d = np.linalg.norm(w.pillars[:, :2] - p[:2], axis=1) - w.pillars[:, 2]
        assert d.min() >= ws.CLEAR_DISC - 1e-12


def test_signed_distance_brute_force():
    w = ws.generate_world(seed=5, density=0.05)
    rng = np.random.default_rng(0)
    pts = rng.uniform([-20, -10, 0], [20, 10, 3], (200, 3))
    for p in pts:
        expect = np.min(np.linalg.norm(w.pillars[:, :2] - p[:2], axis=1)
                        - w.pillars[:, 2])
        assert abs(ws.signed_distance(w, p) - expect) < 1e-12
    many = ws.signed_distance_many(w, pts)
    singles = np.array([ws.signed_distance(w, p) for p in pts])
    np.testing.assert_allclose(many, singles, atol=1e-12)


def test_signed_distance_empty_world_is_max_range():
    w = ws.generate_world(seed=0, density=0.0)
    assert ws.signed_distance(w, np.zeros(3)) == ws.MAX_RANGE


def test_collision_uses_vehicle_radius():
    w = ws.generate_world(seed=5, density=0.05)
    cx, cy, r = w.pillars[0]
    inside = np.array([cx + r + 0.1, cy, 1.5])
    assert ws.collision(w, inside, vehicle_radius=0.3)
    assert not ws.collision(w, inside, vehicle_radius=0.05)


def test_inflated_world_grows_radii_only():
    w = ws.generate_world(seed=5, density=0.05)
    grown = ws.inflated(w, 0.8)
    np.testing.assert_allclose(grown.pillars[:, :2], w.pillars[:, :2])
    np.testing.assert_allclose(grown.pillars[:, 2], w.pillars[:, 2] + 0.8)
    p = np.array([w.pillars[0, 0], w.pillars[0, 1], 1.5])
    np.testing.assert_allclose(ws.signed_distance(grown, p),
                               ws.signed_distance(w, p) - 0.8, atol=1e-12)


def test_camera_defaults():
    cam = ws.CameraModel()
    assert (cam.height, cam.width) == (96, 160)
    dirs = ws.ray_directions_body(cam)
    assert dirs.shape == (96, 160, 3)
    # x component pinned at 1 so the ray parameter is z-depth
    np.testing.assert_allclose(dirs[..., 0], 1.0)
    # principal-point ray is straight ahead
    center = dirs[cam.height // 2, cam.width // 2]
    np.testing.assert_allclose(center, [1.0, 0.0, 0.0], atol=1e-12)
    # image right is body -y, image down is body -z
    assert dirs[0, -1, 1] < 0 and dirs[0, 0, 1] > 0
    assert dirs[-1, 0, 2] < 0 and dirs[0, 0, 2] > 0


def test_render_matches_sphere_trace():
    rng = np.random.default_rng(0)
    cam = ws.CameraModel()
    for seed in range(3):
        w = ws.generate_world(seed=seed, density=0.05)
        pose = Pose(w.start, rng.uniform(-np.pi, np.pi))
        depth = ws.render_depth(w, pose, cam)
        assert depth.shape == (96, 160)
        assert (depth > 0).all() and (depth <= ws.MAX_RANGE).all()
        pix = np.stack([rng.integers(0, 96, 40), rng.integers(0, 160, 40)], axis=1)
        ref = ws.sphere_trace_depths(w, pose, cam, pix)
        got = depth[pix[:, 0], pix[:, 1]]
        np.testing.assert_allclose(got, ref, atol=1e-3)


def test_render_empty_world_hits_max_range():
    w = ws.generate_world(seed=0, density=0.0)
    depth = ws.render_depth(w, Pose(w.start, 0.0))
    np.testing.assert_allclose(depth, ws.MAX_RANGE)


def test_world_save_load_roundtrip(tmp_path):
    w = ws.generate_world(seed=9, density=0.07)
    path = tmp_path / "w.txt"
    ws.save_world(w, str(path))
    loaded = ws.load_world(str(path))
    # text format keeps 9 significant digits
    np.testing.assert_allclose(loaded.pillars, w.pillars, rtol=1e-8, atol=1e-8)
    assert loaded.seed == w.seed and loaded.density == w.density
    np.testing.assert_allclose(loaded.start, w.start)
    np.testing.assert_allclose(loaded.goal, w.goal)
    assert loaded.bounds == w.bounds
    # write -> read -> write is byte-identical
    path2 = tmp_path / "w2.txt"
    ws.save_world(loaded, str(path2))
    assert path.read_bytes() == path2.read_bytes()


def test_depth_save_load_roundtrip(tmp_path):
    w = ws.generate_world(seed=2, density=0.05)
    depth = ws.render_depth(w, Pose(w.start, 0.0))
    path = tmp_path / "d.sdpt"
    ws.save_depth(depth, str(path))
    loaded, max_range = ws.load_depth(str(path))
    # payload is float32: one quantization, then exact
    expect = depth.astype("<f4").astype(np.float64)
    assert (loaded == expect).all()
    assert max_range == ws.MAX_RANGE
    assert path.read_bytes()[:4] == ws.DEPTH_MAGIC
    # encode/decode without files agrees with the file path
    again, _ = ws.decode_depth(ws.encode_depth(depth))
    assert (again == loaded).all()
    with pytest.raises(ValueError):
        ws.decode_depth(b"XXXX" + path.read_bytes()[4:])


def test_generate_world_rejects_bad_inputs():
    with pytest.raises(ValueError):
        ws.generate_world(seed=0, density=-0.1)
    with pytest.raises(ValueError):
        ws.generate_world(seed=0, density=0.05, bounds=(0, 0, -1, 1))
