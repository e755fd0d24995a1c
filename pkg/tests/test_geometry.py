import numpy as np
import pytest

import saga.geometry as geo


def test_lattice_grid_is_three_by_five():
    lat = geo.build_lattice()
    np.testing.assert_allclose(np.rad2deg(lat.yaw_angles), [-40, -20, 0, 20, 40])
    np.testing.assert_allclose(np.rad2deg(lat.pitch_angles), [-15, 0, 15])
    np.testing.assert_allclose(np.rad2deg(lat.delta_yaw_max), 10.0)
    np.testing.assert_allclose(np.rad2deg(lat.delta_pitch_max), 7.5)


def test_center_anchor_index_seven():
    lat = geo.build_lattice()
    alpha, beta = lat.anchor_angles(7)
    assert alpha == 0.0 and beta == 0.0
    # row-major: index = row * 5 + col
    alpha, beta = lat.anchor_angles(2 * 5 + 4)
    np.testing.assert_allclose([np.rad2deg(alpha), np.rad2deg(beta)], [40, 15])


def test_lattice_rejects_bad_spans():
    with pytest.raises(ValueError):
        geo.build_lattice(yaw_span=0.0)
    with pytest.raises(ValueError):
        geo.build_lattice(pitch_span=-0.1)


def test_zero_refinement_sits_on_anchor_direction():
    lat = geo.build_lattice()
    term = geo.decode_terminal(lat, 7, np.zeros(9))
    r_mid = 0.5 * (lat.r_min + lat.r_max)
    np.testing.assert_allclose(term.p_b, [r_mid, 0, 0], atol=1e-14)
    np.testing.assert_allclose(term.v_b, 0, atol=1e-14)
    np.testing.assert_allclose(term.a_b, 0, atol=1e-14)


def test_radius_channel_spans_shell_range():
    lat = geo.build_lattice()
    u = np.zeros(9)
    u[2] = -1.0
    near = geo.decode_terminal(lat, 7, u)
    u[2] = 1.0
    far = geo.decode_terminal(lat, 7, u)
    np.testing.assert_allclose(np.linalg.norm(near.p_b), lat.r_min, atol=1e-13)
    np.testing.assert_allclose(np.linalg.norm(far.p_b), lat.r_max, atol=1e-13)


def test_decode_position_norm_equals_radius():
    lat = geo.build_lattice()
    rng = np.random.default_rng(0)
    for _ in range(200):
        i = int(rng.integers(0, geo.N_ANCHORS))
        u = rng.uniform(-1, 1, 9)
        term = geo.decode_terminal(lat, i, u)
        r = lat.r_min + (u[2] + 1) / 2 * (lat.r_max - lat.r_min)
        assert abs(np.linalg.norm(term.p_b) - r) < 1e-12


def test_anchor_rotation_orthonormal_and_direction_aligned():
    rng = np.random.default_rng(1)
    for _ in range(200):
        a = rng.uniform(-np.pi, np.pi)
        b = rng.uniform(-np.pi / 2, np.pi / 2)
        rot = geo.anchor_rotation(a, b)
        np.testing.assert_allclose(rot.T @ rot, np.eye(3), atol=1e-13)
        np.testing.assert_allclose(np.linalg.det(rot), 1.0, atol=1e-13)
        # +x of the refined frame is the refined direction
        direction = np.array([np.cos(b) * np.cos(a),
                              np.cos(b) * np.sin(a), np.sin(b)])
        np.testing.assert_allclose(rot[:, 0], direction, atol=1e-13)


def test_terminal_velocity_rotated_from_refined_frame():
    lat = geo.build_lattice()
    u = np.zeros(9)
    u[3] = 1.0  # forward unit velocity in the refined frame
    term = geo.decode_terminal(lat, 7, u)
    np.testing.assert_allclose(term.v_b, [lat.v_term_max, 0, 0], atol=1e-13)
    term5 = geo.decode_terminal(lat, 5, u)  # yaw -40, pitch 0
    expect = lat.v_term_max * np.array([np.cos(np.deg2rad(-40)),
                                        np.sin(np.deg2rad(-40)), 0.0])
    np.testing.assert_allclose(term5.v_b, expect, atol=1e-13)


def test_out_of_range_refinement_clamps_and_counts():
    lat = geo.build_lattice()
    counter = geo.ClampCounter()
    u = np.zeros(9)
    u[0] = 1.5
    term = geo.decode_terminal(lat, 7, u, clamp_counter=counter)
    assert counter.count == 1
    u[0] = 1.0
    expect = geo.decode_terminal(lat, 7, u)
    np.testing.assert_allclose(term.p_b, expect.p_b, atol=1e-14)
    geo.decode_terminal(lat, 7, np.zeros(9), clamp_counter=counter)
    assert counter.count == 1


def test_decode_rejects_wrong_shape():
    lat = geo.build_lattice()
    with pytest.raises(ValueError):
        geo.decode_terminal(lat, 7, np.zeros(8))
    with pytest.raises(IndexError):
        lat.anchor_angles(15)


def test_decode_all_matches_per_anchor():
    lat = geo.build_lattice()
    rng = np.random.default_rng(2)
    u_all = rng.uniform(-1, 1, (geo.N_ANCHORS, 9))
    terms = geo.decode_all(lat, u_all)
    for i, term in enumerate(terms):
        single = geo.decode_terminal(lat, i, u_all[i])
        np.testing.assert_allclose(term.p_b, single.p_b, atol=1e-14)
        np.testing.assert_allclose(term.v_b, single.v_b, atol=1e-14)
        np.testing.assert_allclose(term.a_b, single.a_b, atol=1e-14)
