"""Trainee (blue) rewards.

Sparse terms: score (shared), ball leaving the field (shared), collisions
(individual).  Dense shaping terms, active until the first 75 % win-rate
milestone: ball velocity towards the opponent goal (shared), agent velocity
towards the ball while the team does not own it and the ball is far
(individual), and a heading-to-ball bonus (individual).
"""
from __future__ import annotations

import dataclasses

import numpy as np

from .config import RewardConfig
from .rules import OwnershipState
from .world import BLUE, StepEvents, World, wrap_angle


def _unit(v):
    n = np.linalg.norm(v, axis=-1, keepdims=True)
    return v / np.maximum(n, 1e-12)


def direction_term(angle, cfg: RewardConfig):
    return cfg.ball_direction * np.exp(-(np.asarray(angle) / cfg.direction_sigma) ** 2)


def compute_rewards(prev: World, world: World, events: StepEvents, ownership: OwnershipState,
                    cfg: RewardConfig, return_terms: bool = False):
    """Per-blue-slot rewards, shape ``(E, n_blue_slots)``; inactive slots get 0.

    ``ownership`` is the ownership after the step.  The bearing to the
    opponent goal is taken from the ball position before the step so that the
    shaping term does not flip sign on the step the ball crosses the line.
    """
    blue = np.nonzero(world.team == BLUE)[0]
    active = world.active[:, blue]
    n_envs = world.n_envs

    shared = cfg.score * events.goal.astype(np.float64)
    shared = shared - cfg.ball_outside * events.ball_out
    terms = {"score": cfg.score * events.goal.astype(np.float64)[:, None] * active,
             "ball_outside": -cfg.ball_outside * events.ball_out[:, None] * active,
             "collision": -cfg.collision * events.collisions[:, blue] * active}
    individual = terms["collision"].copy()

    if cfg.dense_active:
        goal = np.stack([0.5 * prev.field_length, np.zeros(n_envs)], axis=-1)
        to_goal = _unit(goal - prev.ball_pos)
        ball2goal = cfg.ball2goal_velocity * np.sum(world.ball_vel * to_goal, axis=-1)
        shared = shared + ball2goal

        to_ball = world.ball_pos[:, None, :] - world.pos[:, blue]
        dist = np.linalg.norm(to_ball, axis=-1)
        bearing = np.arctan2(to_ball[..., 1], to_ball[..., 0])
        approach = np.sum(world.vel[:, blue] * _unit(to_ball), axis=-1)
        gate = (ownership.owner_team != BLUE)[:, None] & (dist > cfg.far_threshold)
        base2ball = cfg.base2ball_velocity * approach * gate
        heading = direction_term(wrap_angle(bearing - world.heading[:, blue]), cfg)
        individual = individual + (base2ball + heading) * active
        terms.update(ball2goal=ball2goal[:, None] * active, base2ball=base2ball * active,
                     direction=heading * active)

    rewards = (shared[:, None] + individual) * active
    return (rewards, terms) if return_terms else rewards


def dense_gate(milestone_reached: bool, cfg: RewardConfig) -> RewardConfig:
    """Switch the dense terms off for good once the milestone is reached."""
    if milestone_reached and cfg.dense_active:
        return dataclasses.replace(cfg, dense_active=False)
    return cfg
