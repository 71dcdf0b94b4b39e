"""Vectorised soccer environment: a batch of independent games with their
own random streams, observation histories, ownership memory and episode
statistics.  Episode termination is reported by :meth:`SoccerEnv.step`;
callers reset finished instances explicitly with :meth:`SoccerEnv.reset`.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .config import Config
from .perception import HistoryBuffer, ObservationBundle, build_observation
from .rewards import compute_rewards
from .rules import (EpisodeStats, OwnershipState, StatsAccumulator, assign_ownership,
                    ownership_transitions, spawn_episode)
from .world import (BLUE, BLUE_WIN, NONE, RED, RED_WIN, TIMEOUT, StepEvents, World,
                    check_termination, step_world)

OUTCOME_NAMES = {BLUE_WIN: "win", RED_WIN: "loss", TIMEOUT: "draw"}


@dataclass
class StepResult:
    rewards: np.ndarray      # (E, n_blue_slots)
    done: np.ndarray         # (E,) bool
    timeout: np.ndarray      # (E,) bool, done because of the time limit
    outcome: np.ndarray      # (E,) outcome codes
    events: StepEvents
    ownership: OwnershipState
    finished: list           # [(env, EpisodeStats)]


class SoccerEnv:
    """Batch of soccer games sharing one slot layout.

    ``team_sizes`` / ``team_weights`` define the categorical distribution the
    team composition is resampled from at every reset.  ``band`` and
    ``ball_y_frac`` override the curriculum ball-spawn band (evaluation
    scenarios).
    """

    def __init__(self, cfg: Config, n_envs: int, seed: int | np.random.SeedSequence = 0,
                 team_sizes=None, team_weights=None, band=None, ball_y_frac: float = 1.0):
        self.cfg = cfg
        self.n_envs = n_envs
        self.team_sizes = [tuple(t) for t in (team_sizes or cfg.curriculum.team_sizes)]
        weights = team_weights if team_sizes is not None else cfg.curriculum.team_size_weights
        w = np.ones(len(self.team_sizes)) if weights is None else np.asarray(weights, dtype=float)
        self.team_weights = w / w.sum()
        self.slots = (max(t[0] for t in self.team_sizes), max(t[1] for t in self.team_sizes))
        self.band = band
        self.ball_y_frac = ball_y_frac
        ss = seed if isinstance(seed, np.random.SeedSequence) else np.random.SeedSequence(seed)
        self.rngs = [np.random.default_rng(s) for s in ss.spawn(n_envs)]
        self.reward_cfg = cfg.reward
        self.init_level = np.zeros(n_envs, dtype=np.int64)
        self.field_level = np.zeros(n_envs, dtype=np.int64)
        cur = cfg.curriculum
        if cur.init_pos_fixed is not None:
            self.init_level[:] = cur.init_pos_fixed
        if cur.field_level_fixed is not None:
            self.field_level[:] = cur.field_level_fixed
        self.world = World.empty(n_envs, *self.slots, cfg.field)
        self.history = HistoryBuffer(n_envs, sum(self.slots), cfg.observation.history_len)
        self.last_owner = OwnershipState.empty(n_envs)
        self.stats = StatsAccumulator(n_envs)
        self.episode_count = np.zeros(n_envs, dtype=np.int64)
        self.reset(np.arange(n_envs))

    @property
    def blue_slots(self) -> np.ndarray:
        return np.nonzero(self.world.team == BLUE)[0]

    @property
    def red_slots(self) -> np.ndarray:
        return np.nonzero(self.world.team == RED)[0]

    def team_size(self, env: int) -> tuple[int, int]:
        act = self.world.active[env]
        return int(act[self.blue_slots].sum()), int(act[self.red_slots].sum())

    def reset(self, envs) -> None:
        for e in np.atleast_1d(envs):
            rng = self.rngs[e]
            k = rng.choice(len(self.team_sizes), p=self.team_weights) if len(self.team_sizes) > 1 else 0
            nb, nr = self.team_sizes[k]
            w = spawn_episode(self.cfg, nb, nr, int(self.init_level[e]), int(self.field_level[e]),
                              rng, slots=self.slots, band=self.band, ball_y_frac=self.ball_y_frac)
            self.world.put([e], w)
            self.history.reset(e)
            self.last_owner.owner_agent[e] = -1
            self.last_owner.owner_team[e] = -1
            self.stats.reset(e)

    def observe(self, team: int, role: str = "actor", rng=None, envs=None):
        """Observations of every active agent of ``team`` (optionally only in
        ``envs``).  Returns ``(bundle, env_idx, slot_idx)``."""
        slots = self.blue_slots if team == BLUE else self.red_slots
        envs = np.arange(self.n_envs) if envs is None else np.asarray(envs)
        act = self.world.active[np.ix_(envs, slots)]
        ei, si = np.nonzero(act)
        env_idx, slot_idx = envs[ei], slots[si]
        bundle = build_observation(self.world, env_idx, slot_idx, self.history, self.cfg.observation,
                                   self.cfg.field, role=role, rng=rng)
        return bundle, env_idx, slot_idx

    def step(self, actions) -> StepResult:
        prev = self.world
        self.history.push(prev)
        world, events = step_world(prev, actions, self.cfg.field, self.cfg.physics)
        self.world = world
        own = assign_ownership(world, self.cfg.field)
        passes, losses, new_last = ownership_transitions(self.last_owner, own, events.ball_out)
        live = prev.score == 0
        self.stats.update(own, passes, losses, self.last_owner, events, world.team,
                          self.cfg.physics.dt, live)
        self.last_owner = new_last
        rewards = compute_rewards(prev, world, events, own, self.reward_cfg)
        outcome = check_termination(world, self.cfg.physics)
        done = outcome != NONE
        finished = []
        for e in np.nonzero(done)[0]:
            nb, nr = self.team_size(e)
            finished.append((int(e), self.stats.finish(int(e), OUTCOME_NAMES[int(outcome[e])],
                                                       float(world.sim_time[e]), nb, nr)))
            self.episode_count[e] += 1
        return StepResult(rewards, done, outcome == TIMEOUT, outcome, events, own, finished)


def summarize(stats: list[EpisodeStats]) -> dict:
    n = len(stats)
    if n == 0:
        return {"episodes": 0}
    out = {o: 100.0 * sum(s.outcome == o for s in stats) / n for o in ("win", "draw", "loss")}
    out["episodes"] = n
    return out
