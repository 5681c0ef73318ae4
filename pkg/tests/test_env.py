import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from lamarl.env import (
    EnvConfig,
    SwarmEnv,
    SwarmState,
    TARGET_SATURATION,
    build_local_view,
    build_observation,
    collision_pairs,
    contact_forces,
    integrate,
    passive_force,
    reset,
    select_target_cell,
    sense_cells,
    sense_neighbors,
    step,
)
from lamarl.region import compute_occupancy, load_region
from lamarl.shapes import builtin_letters, square_region


def swarm(points, velocities=None):
    p = np.asarray(points, dtype=float).reshape(-1, 2)
    v = np.zeros_like(p) if velocities is None else np.asarray(velocities, dtype=float).reshape(-1, 2)
    return SwarmState(p, v, np.ones(len(p)))


CFG = EnvConfig(n_robot=2)


# --------------------------------------------------------------------------- sensing


def test_no_neighbors_in_range():
    s = swarm([[0, 0], [1, 0]])
    assert sense_neighbors(0, s, CFG) == []


def test_nearest_six_of_eight():
    angles = np.linspace(0, 2 * np.pi, 8, endpoint=False)
    radii = 0.1 + 0.03 * np.arange(8)
    pts = [[0, 0]] + [[r * math.cos(a), r * math.sin(a)] for r, a in zip(radii, angles)]
    assert sense_neighbors(0, swarm(pts), CFG) == [1, 2, 3, 4, 5, 6]


def test_neighbor_order_matches_sort_oracle():
    pts = [[0, 0], [0.3, 0], [0, -0.1], [-0.2, 0], [0.0, 0.2]]  # equal distances for ids 3 and 4
    s = swarm(pts)
    oracle = sorted(
        (j for j in range(1, 5) if math.dist(pts[0], pts[j]) < CFG.r_sense),
        key=lambda j: (math.dist(pts[0], pts[j]), j),
    )
    assert sense_neighbors(0, s, CFG) == oracle == [2, 3, 4, 1]


def test_all_cells_occupied_gives_empty_cell_list():
    region = load_region("##\n##\n", 0.1)
    s = swarm(np.vstack([[0.1, 0.1], region.cell_centers]))
    occ = compute_occupancy(region, s.p, CFG.r_avoid)
    assert len(sense_cells(0, s, region, occ, CFG, np.random.default_rng(0))) == 0


def test_cell_subsample_is_n_hc_distinct_and_seeded():
    region = load_region(np.ones((9, 10), dtype=bool), 0.05)  # 90 cells, all within r_sense of the middle
    cfg = EnvConfig(n_robot=1, n_hc=80)
    s = swarm([[0.25, 0.225]])
    occ = compute_occupancy(region, s.p, cfg.r_avoid)
    a = sense_cells(0, s, region, occ, cfg, np.random.default_rng(3))
    b = sense_cells(0, s, region, occ, cfg, np.random.default_rng(3))
    assert len(a) == 79 and len(set(a.tolist())) == 79  # one block is the target's
    assert a.tolist() == b.tolist()
    d = np.hypot(*(region.cell_centers[a] - s.p[0]).T)
    assert np.all(np.diff(d) >= 0)


def test_own_cell_stays_free():
    region = load_region("#\n", 0.1)
    s = swarm([region.cell_centers[0]])
    occ = compute_occupancy(region, s.p, CFG.r_avoid)
    assert occ.occupied[0]
    assert len(sense_cells(0, s, region, occ, CFG, np.random.default_rng(0))) == 1


def test_target_is_nearest_free_cell():
    region = load_region("####\n####\n", 0.1)
    s = swarm([[-1.0, 0.06]])
    occ = compute_occupancy(region, [[9.0, 9.0]], CFG.r_avoid)
    d = [math.dist(s.p[0], c) for c in region.cell_centers]
    assert np.array_equal(select_target_cell(0, s, region, occ, CFG), region.cell_centers[int(np.argmin(d))])
    assert region.cell_centers[int(np.argmin(d))][0] == pytest.approx(0.05)


def test_target_on_only_free_cell_is_zero_offset():
    region = load_region("##\n", 0.25)
    s = swarm([region.cell_centers[1], region.cell_centers[0]])
    occ = compute_occupancy(region, s.p, CFG.r_avoid)
    view = build_local_view(0, s, region, occ, CFG, np.random.default_rng(0))
    assert np.array_equal(view.target, [0.0, 0.0])


def test_target_fallback_when_everything_occupied():
    region = load_region("##\n", 0.25)
    s = swarm([[2.0, 0.1], region.cell_centers[0], region.cell_centers[1]])
    occ = compute_occupancy(region, s.p, CFG.r_avoid)
    assert np.array_equal(select_target_cell(0, s, region, occ, CFG), region.cell_centers[1])


def test_far_target_is_saturated():
    region = load_region("#\n", 0.1)
    s = swarm([[5.0, 0.05]])
    occ = compute_occupancy(region, [[9.0, 9.0]], CFG.r_avoid)
    view = build_local_view(0, s, region, occ, CFG, np.random.default_rng(0))
    assert np.hypot(*view.target) == pytest.approx(TARGET_SATURATION * CFG.r_sense)
    assert view.target[0] < 0


# --------------------------------------------------------------------------- observation


def test_observation_length_190():
    assert EnvConfig().obs_dim == 190


def test_isolated_robot_padding():
    region = load_region("#\n", 0.1)
    s = swarm([[3.0, 3.0]], [[0.2, -0.1]])
    occ = compute_occupancy(region, s.p, CFG.r_avoid)
    o = build_observation(0, s, region, occ, CFG, np.random.default_rng(0))
    t0 = 6 + 4 * CFG.n_hn
    assert o.shape == (190,)
    assert np.all(o[6:t0] == 0) and np.all(o[t0 + 2 :] == 0)
    assert o[0:4].tolist() == [3.0, 3.0, 0.2, -0.1]
    assert o[4] == 0.0 and o[5] == CFG.r_sense


def test_hand_built_two_robot_four_cell_scene():
    region = load_region("##\n##\n", 0.25)  # centers (0.125|0.375, 0.125|0.375)
    cfg = EnvConfig(n_robot=2, n_hn=2, n_hc=4)
    s = swarm([[0.125, 0.125], [0.375, 0.125]], [[0.5, 0.0], [0.0, 0.25]])
    occ = compute_occupancy(region, s.p, cfg.r_avoid)
    o = build_observation(0, s, region, occ, cfg, np.random.default_rng(0))
    expected = [
        0.125, 0.125, 0.5, 0.0, 1.0, 0.25,  # p, v, inside flag, nearest neighbour distance
        0.25, 0.0, -0.5, 0.25,  # robot 1 relative to robot 0
        0.0, 0.0, 0.0, 0.0,  # empty neighbour slot
        0.0, 0.0,  # target: robot 0's own cell is free for it
        0.0, 0.0,  # free cells by distance: own cell,
        0.0, 0.25,  # the one above,
        0.25, 0.25,  # the diagonal one (0.354 < r_sense); robot 1's cell is taken
    ]
    assert o.tolist() == pytest.approx(expected, abs=1e-15)


# --------------------------------------------------------------------------- dynamics


def test_two_robot_contact_force():
    cfg = EnvConfig(n_robot=2, k_contact=50.0)
    region = load_region("#\n", 1.0)
    s = swarm([[0.0, 0.5], [0.15, 0.5]])  # overlap 0.2 - 0.15 = 0.05
    f0 = passive_force(0, s, region, cfg)
    f1 = passive_force(1, s, region, cfg)
    assert f0 == pytest.approx([-2.5, 0.0])
    assert f1 == pytest.approx([2.5, 0.0])


def test_no_overlap_no_force():
    s = swarm([[0, 0], [0.3, 0]])
    assert np.array_equal(contact_forces(s, CFG), np.zeros((2, 2)))


def test_coincident_robots_fallback_axis():
    s = swarm([[0.5, 0.5], [0.5, 0.5]])
    f = contact_forces(s, CFG)
    assert f[1] == pytest.approx([CFG.k_contact * 2 * CFG.r_avoid, 0.0])
    assert f[0] == pytest.approx(-f[1])


def test_symmetric_three_robot_overlap_sums_to_zero():
    pts = [[0.08 * math.cos(a), 0.08 * math.sin(a)] for a in (0, 2 * math.pi / 3, 4 * math.pi / 3)]
    f = contact_forces(swarm(pts), CFG)
    assert np.abs(f.sum(axis=0)).max() < 1e-12


def test_single_step_hand_integration():
    region = load_region("#\n", 1.0)
    cfg = EnvConfig(n_robot=1)
    s = swarm([[0.5, 0.5]])
    new = integrate(s, [[1.0, 0.0]], region, cfg)
    assert new.v[0] == pytest.approx([0.05, 0.0])
    assert new.p[0] == pytest.approx([0.5025, 0.5])


def test_force_free_motion():
    region = load_region("#\n", 1.0)
    cfg = EnvConfig(n_robot=2)
    s = swarm([[0.2, 0.2], [0.8, 0.8]], [[0.1, -0.3], [0.0, 0.7]])
    new = integrate(s, np.zeros((2, 2)), region, cfg)
    assert np.array_equal(new.v, s.v)
    assert np.array_equal(new.p, s.p + cfg.dt * s.v)


def test_actions_are_clamped():
    region = load_region("#\n", 1.0)
    cfg = EnvConfig(n_robot=1)
    new = integrate(swarm([[0.5, 0.5]]), [[5.0, -7.0]], region, cfg)
    assert new.v[0] == pytest.approx([0.05, -0.05])


def test_collision_reported_when_driven_together():
    region = load_region("#\n", 1.0)
    cfg = EnvConfig(n_robot=2)
    s = swarm([[0.3, 0.5], [0.52, 0.5]], [[0.4, 0.0], [-0.4, 0.0]])
    new, res = step(s, [[1, 0], [-1, 0]], region, cfg, None, np.random.default_rng(0))
    assert res.collisions == [(0, 1)]


@settings(max_examples=100, deadline=None)
@given(st.integers(2, 12), st.integers(0, 2**32 - 1))
def test_collision_set_symmetric_irreflexive(n, seed):
    p = np.random.default_rng(seed).uniform(0, 0.6, (n, 2))
    pairs = collision_pairs(p, 0.1)
    assert all(i < j for i, j in pairs)
    d = np.hypot(*(p[:, None] - p[None]).transpose(2, 0, 1))
    brute = {(i, j) for i in range(n) for j in range(i + 1, n) if d[i, j] < 0.2}
    assert set(pairs) == brute


# --------------------------------------------------------------------------- lifecycle


def test_single_shape_library_and_clean_start():
    cfg = EnvConfig(n_robot=8)
    shape = square_region(6, 0.1)
    for seed in range(10):
        s, region = reset(cfg, [shape], np.random.default_rng(seed))
        assert region is shape
        assert not np.any(s.v)
        assert collision_pairs(s.p, cfg.r_avoid) == []
        assert compute_occupancy(region, s.p, cfg.r_avoid).n_occupied == 0
        assert not region.contains(s.p).any()


def test_letter_sequence_reproducible():
    cfg = EnvConfig(n_robot=30)
    letters = builtin_letters(0.17)
    seq = lambda seed: [reset(cfg, letters, rng)[1].name for rng in [np.random.default_rng(seed)] for _ in range(15)]
    assert seq(4) == seq(4)
    assert len(set(seq(4))) > 5


def test_thirty_robots_start_clear_of_every_letter():
    cfg = EnvConfig(n_robot=30)
    rng = np.random.default_rng(0)
    for shape in builtin_letters(0.17):
        s, region = reset(cfg, [shape], rng)
        d = np.hypot(*(s.p[:, None] - s.p[None]).transpose(2, 0, 1))
        np.fill_diagonal(d, np.inf)
        assert d.min() > 2 * cfg.r_avoid
        assert compute_occupancy(region, s.p, cfg.r_avoid).n_occupied == 0


def test_env_rejects_oversized_swarm():
    with pytest.raises(ValueError, match="capacity"):
        SwarmEnv(EnvConfig(n_robot=10), [square_region(6, 0.1)])


def test_step_replay_is_bit_identical():
    def run():
        env = SwarmEnv(EnvConfig(n_robot=8), [square_region(6, 0.1)], seed=11)
        obs, _ = env.reset()
        rng = np.random.default_rng(5)
        out = [obs]
        for _ in range(30):
            out.append(env.step(rng.uniform(-1, 1, (8, 2))).observations)
        return np.stack(out)

    assert np.array_equal(run(), run())


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_relabeling_equivariance(seed):
    rng = np.random.default_rng(seed)
    region = square_region(6, 0.1)
    n = 5
    p = rng.uniform(-0.2, 0.8, (n, 2))
    v = rng.uniform(-0.5, 0.5, (n, 2))
    perm = rng.permutation(n)
    a = integrate(SwarmState(p, v, np.ones(n)), np.zeros((n, 2)), region, CFG)
    b = integrate(SwarmState(p[perm], v[perm], np.ones(n)), np.zeros((n, 2)), region, CFG)
    assert np.allclose(a.p[perm], b.p, atol=1e-12)
    assert np.allclose(a.v[perm], b.v, atol=1e-12)
