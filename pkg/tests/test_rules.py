import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from soccer_marl.config import Config
from soccer_marl.rules import (OwnershipState, SpawnError, StatsAccumulator, assign_ownership,
                               ball_band, detect_events, field_scale, ownership_transitions,
                               spawn_episode)
from soccer_marl.world import BLUE, RED, StepEvents, World


def owner_oracle(pos, team, active, ball, radius):
    """Direct reading of the ownership rule, one instance at a time."""
    d = [float(np.hypot(*(ball - p))) for p in pos]
    cands = {t: [i for i in range(len(pos)) if active[i] and team[i] == t and d[i] < radius]
             for t in (BLUE, RED)}
    if bool(cands[BLUE]) == bool(cands[RED]):
        return -1, -1
    t = BLUE if cands[BLUE] else RED
    best = min(cands[t], key=lambda i: (d[i], i))
    return best, t


def world_with(cfg, pos, ball, n_blue, n_red):
    w = World.empty(1, n_blue, n_red, cfg.field)
    w.pos[0] = pos
    w.ball_pos[0] = ball
    return w


def test_ownership_examples(cfg):
    w = world_with(cfg, [[0.20, 0.0], [0.30, 0.0], [3.0, 0.0]], [0.0, 0.0], 2, 1)
    own = assign_ownership(w, cfg.field)
    assert own.owner_agent[0] == 0 and own.owner_team[0] == BLUE
    w = world_with(cfg, [[0.20, 0.0], [-0.24, 0.0]], [0.0, 0.0], 1, 1)
    own = assign_ownership(w, cfg.field)
    assert own.owner_agent[0] == -1
    w = world_with(cfg, [[0.25, 0.0], [-1.0, 0.0]], [0.0, 0.0], 1, 1)
    assert assign_ownership(w, cfg.field).owner_agent[0] == -1


def test_ownership_tie_lowest_index(cfg):
    w = world_with(cfg, [[0.1, 0.0], [-0.1, 0.0], [3.0, 0.0]], [0.0, 0.0], 2, 1)
    assert assign_ownership(w, cfg.field).owner_agent[0] == 0


def test_ownership_ignores_inactive(cfg):
    w = world_with(cfg, [[0.1, 0.0], [-0.05, 0.0], [3.0, 0.0]], [0.0, 0.0], 2, 1)
    w.active[0, 1] = False
    assert assign_ownership(w, cfg.field).owner_agent[0] == 0


@given(st.integers(0, 2**31 - 1))
def test_ownership_matches_oracle(seed):
    cfg = Config()
    rng = np.random.default_rng(seed)
    n = 50
    w = World.empty(n, 3, 3, cfg.field)
    w.ball_pos = rng.uniform(-0.5, 0.5, (n, 2))
    w.pos = w.ball_pos[:, None, :] + rng.uniform(-0.4, 0.4, (n, 6, 2))
    w.active = np.zeros((n, 6), dtype=bool)
    for e in range(n):
        w.active[e, :rng.integers(1, 4)] = True
        w.active[e, 3:3 + rng.integers(1, 4)] = True
    own = assign_ownership(w, cfg.field)
    for e in range(n):
        exp = owner_oracle(w.pos[e], w.team, w.active[e], w.ball_pos[e], cfg.field.ownership_radius)
        assert (own.owner_agent[e], own.owner_team[e]) == exp


def _own(agent, team):
    return OwnershipState(np.array([agent]), np.array([team]))


def _step(ball_out=False, goal=0):
    ev = StepEvents.empty(1, 4)
    ev.ball_out[0] = ball_out
    ev.goal[0] = goal
    return ev


def test_pass_through_gap(cfg):
    w = World.empty(1, 2, 2, cfg.field)
    last = OwnershipState.empty(1)
    kinds = []
    for cur in (_own(0, BLUE), _own(-1, -1), _own(-1, -1), _own(1, BLUE)):
        events, last = detect_events(last, cur, _step(), w)
        kinds += [(e.kind, e.team, e.agents) for e in events]
    assert kinds == [("pass", BLUE, (0, 1))]


def test_ownership_loss(cfg):
    w = World.empty(1, 2, 2, cfg.field)
    last = OwnershipState.empty(1)
    events, last = detect_events(last, _own(0, BLUE), _step(), w)
    assert events == []
    events, last = detect_events(last, _own(3, RED), _step(), w)
    assert [(e.kind, e.team) for e in events] == [("ownership_loss", BLUE)]


def test_same_owner_no_event(cfg):
    w = World.empty(1, 2, 2, cfg.field)
    last = _own(0, BLUE)
    events, last = detect_events(last, _own(0, BLUE), _step(), w)
    assert events == []


def test_ball_out_clears_memory(cfg):
    w = World.empty(1, 2, 2, cfg.field)
    last = _own(0, BLUE)
    events, last = detect_events(last, _own(-1, -1), _step(ball_out=True), w)
    assert [e.kind for e in events] == ["ball_out"]
    events, last = detect_events(last, _own(3, RED), _step(), w)
    assert events == []


@given(st.lists(st.sampled_from([(-1, -1), (0, BLUE), (1, BLUE), (2, RED), (3, RED)]), max_size=30))
def test_pass_count_bounded_by_transitions(seq):
    last = OwnershipState.empty(1)
    passes = losses = transitions = 0
    prev = None
    for agent, team in seq:
        p, l, last_new = ownership_transitions(last, _own(agent, team), np.array([False]))
        passes += int(p[0])
        losses += int(l[0])
        if agent >= 0 and prev is not None and agent != prev:
            transitions += 1
        if agent >= 0:
            prev = agent
        last = last_new
    assert passes + losses <= transitions


def test_levels_and_bands(cfg):
    cur = cfg.curriculum
    assert field_scale(0, cur) == pytest.approx(0.6)
    assert field_scale(cur.field_levels - 1, cur) == pytest.approx(1.0)
    assert ball_band(0, cur) == (0.0, 0.25)
    assert ball_band(cur.init_pos_levels - 1, cur) == (0.0, 1.0)


@given(st.integers(0, 4), st.integers(0, 4), st.integers(1, 3), st.integers(1, 3), st.integers(0, 10**6))
def test_spawn_regions(init_level, field_level, nb, nr, seed):
    cfg = Config()
    w = spawn_episode(cfg, nb, nr, init_level, field_level, np.random.default_rng(seed), slots=(3, 3))
    L = w.field_length[0]
    assert L == pytest.approx(cfg.field.field_length * field_scale(field_level, cfg.curriculum))
    blue = w.active[0] & (w.team == BLUE)
    red = w.active[0] & (w.team == RED)
    assert blue.sum() == nb and red.sum() == nr
    assert np.all(w.pos[0, blue, 0] < 0) and np.all(w.pos[0, red, 0] > 0)
    assert np.all(np.abs(w.pos[0, w.active[0], 1]) < w.field_width[0] / 2)
    assert np.all(w.heading[0] > -np.pi) and np.all(w.heading[0] <= np.pi)
    lo, hi = ball_band(init_level, cfg.curriculum)
    assert -L / 2 + lo * L - 1e-9 <= w.ball_pos[0, 0] <= -L / 2 + hi * L + 1e-9
    act = np.nonzero(w.active[0])[0]
    p = w.pos[0, act]
    d = np.linalg.norm(p[:, None] - p[None], axis=-1) + np.eye(len(act)) * 9
    assert d.min() >= 2 * cfg.field.agent_radius


def test_spawn_ball_distribution_by_level(cfg):
    rng = np.random.default_rng(0)
    L = cfg.field.field_length
    xs0 = [spawn_episode(cfg, 1, 1, 0, 4, rng).ball_pos[0, 0] for _ in range(300)]
    xs4 = [spawn_episode(cfg, 1, 1, 4, 4, rng).ball_pos[0, 0] for _ in range(300)]
    assert max(xs0) <= -L / 2 + 0.25 * L
    assert min(xs4) < -L / 4 and max(xs4) > L / 4
    # agent distribution does not depend on the level
    a0 = [spawn_episode(cfg, 1, 1, 0, 4, np.random.default_rng(s)).pos[0, 0, 0] for s in range(200)]
    a4 = [spawn_episode(cfg, 1, 1, 4, 4, np.random.default_rng(s)).pos[0, 0, 0] for s in range(200)]
    assert abs(np.mean(a0) - np.mean(a4)) < 0.3


def test_spawn_impossible_raises(cfg):
    cfg.field.agent_radius = 1.2
    with pytest.raises(SpawnError):
        spawn_episode(cfg, 3, 3, 0, 0, np.random.default_rng(0), max_tries=20)


def test_spawn_invalid_level(cfg):
    with pytest.raises(ValueError):
        spawn_episode(cfg, 1, 1, 9, 0, np.random.default_rng(0))


def test_stats_accumulator(cfg):
    acc = StatsAccumulator(1)
    team = np.array([BLUE, BLUE, RED, RED])
    ev = StepEvents.empty(1, 4)
    ev.touches[0, 0] = True
    live = np.array([True])
    last = _own(0, BLUE)
    acc.update(_own(1, BLUE), np.array([True]), np.array([False]), last, ev, team, 0.1, live)
    acc.update(_own(2, RED), np.array([False]), np.array([True]), _own(1, BLUE), StepEvents.empty(1, 4),
               team, 0.1, live)
    s = acc.finish(0, "draw", 0.2, 2, 2)
    assert s.passes_blue == 1 and s.ownership_losses_blue == 1 and s.touches_blue == 1
    assert s.ownership_time_blue == pytest.approx(0.1) and s.ownership_time_red == pytest.approx(0.1)
    assert s.ownership_time_blue + s.ownership_time_red <= s.duration + 1e-12
    assert acc.counts.sum() == 0
