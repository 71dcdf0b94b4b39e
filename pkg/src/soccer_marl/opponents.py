"""Role-based scripted adversary.

The team member closest to the ball attacks: it drives at full speed at the
ball and kicks full power at the opponent goal centre as soon as the ball is
kickable.  The member closest to its own goal (among the rest) keeps goal,
everybody else defends.  Keeper and defenders clear the ball the same way
when it comes within reach.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .config import FieldGeometry, PhysicsConfig
from .world import BLUE, World, inverse_remap_unit_disk, rotate, wrap_angle

NO_ROLE, ATTACKER, GOALKEEPER, DEFENDER = 0, 1, 2, 3

KEEPER_DEPTH = 0.3
DEFENDER_STANDOFF = 0.4
DEFENDER_SPACING = 0.5
POSITION_GAIN = 2.0
HEADING_GAIN = 4.0


@dataclass
class BotRoleAssignment:
    attacker: int
    goalkeeper: int | None
    defenders: list


def role_codes(world: World, team: int) -> np.ndarray:
    """Role code per slot, ``(E, A)``; slots of the other team get NO_ROLE."""
    mine = world.active & (world.team == team)[None, :]
    own_x = np.where(team == BLUE, -0.5, 0.5) * world.field_length
    roles = np.zeros(mine.shape, dtype=np.int8)
    rows = np.arange(world.n_envs)

    d_ball = np.linalg.norm(world.pos - world.ball_pos[:, None, :], axis=-1)
    att = np.argmin(np.where(mine, d_ball, np.inf), axis=1)
    has = mine.any(axis=1)
    roles[rows[has], att[has]] = ATTACKER

    rest = mine & (roles == NO_ROLE)
    own_goal = np.stack([own_x, np.zeros(world.n_envs)], axis=-1)
    d_goal = np.linalg.norm(world.pos - own_goal[:, None, :], axis=-1)
    keeper = np.argmin(np.where(rest, d_goal, np.inf), axis=1)
    has_k = rest.any(axis=1)
    roles[rows[has_k], keeper[has_k]] = GOALKEEPER
    roles[mine & (roles == NO_ROLE)] = DEFENDER
    return roles


def assign_roles(world: World, team: int, env: int = 0) -> BotRoleAssignment:
    codes = role_codes(world, team)[env]
    att = np.nonzero(codes == ATTACKER)[0]
    keep = np.nonzero(codes == GOALKEEPER)[0]
    return BotRoleAssignment(int(att[0]), int(keep[0]) if len(keep) else None,
                             [int(i) for i in np.nonzero(codes == DEFENDER)[0]])


def bot_actions(world: World, team: int, geom: FieldGeometry, phys: PhysicsConfig) -> np.ndarray:
    """Raw actions ``(E, A, 5)`` for every active agent of ``team``; other rows are zero."""
    roles = role_codes(world, team)
    n_envs, n_agents = roles.shape
    sign = 1.0 if team == BLUE else -1.0
    half_l = 0.5 * world.field_length
    own_goal = np.stack([-sign * half_l, np.zeros(n_envs)], axis=-1)
    opp_goal = np.stack([sign * half_l, np.zeros(n_envs)], axis=-1)
    ball = world.ball_pos[:, None, :]
    pos = world.pos

    # keeper: fixed depth in front of the goal on the goal-ball line
    to_ball = world.ball_pos - own_goal
    to_ball /= np.maximum(np.linalg.norm(to_ball, axis=-1, keepdims=True), 1e-9)
    keeper_pt = own_goal + KEEPER_DEPTH * to_ball
    # defenders: standoff from the ball towards the own goal, spread sideways
    defend_pt = world.ball_pos + DEFENDER_STANDOFF * (own_goal - world.ball_pos)
    lateral = np.stack([-to_ball[:, 1], to_ball[:, 0]], axis=-1)
    rank = np.cumsum(roles == DEFENDER, axis=1) - 1
    offset = np.where(rank % 2 == 0, 1.0, -1.0) * ((rank + 1) // 2) * DEFENDER_SPACING

    target = np.where((roles == GOALKEEPER)[..., None], keeper_pt[:, None, :],
                      defend_pt[:, None, :] + offset[..., None] * lateral[:, None, :])
    chase = ball - pos
    chase_dir = chase / np.maximum(np.linalg.norm(chase, axis=-1, keepdims=True), 1e-9)
    hold = POSITION_GAIN * (target - pos) / phys.max_speed
    hold_norm = np.linalg.norm(hold, axis=-1, keepdims=True)
    hold = hold / np.maximum(hold_norm, 1.0)
    v_world = np.where((roles == ATTACKER)[..., None], chase_dir, hold)
    v_ego = rotate(v_world, -world.heading)

    bearing = np.arctan2(chase[..., 1], chase[..., 0])
    omega = np.clip(HEADING_GAIN * wrap_angle(bearing - world.heading) / phys.max_angular_speed, -1, 1)

    kick_dir = opp_goal[:, None, :] - ball
    kick_dir = kick_dir / np.maximum(np.linalg.norm(kick_dir, axis=-1, keepdims=True), 1e-9)
    kick_ego = rotate(np.broadcast_to(kick_dir, pos.shape), -world.heading)
    kickable = np.linalg.norm(chase, axis=-1) <= geom.kickable_radius
    kick_ego = kick_ego * kickable[..., None]

    vx, vy = inverse_remap_unit_disk(v_ego[..., 0], v_ego[..., 1])
    kx, ky = inverse_remap_unit_disk(kick_ego[..., 0], kick_ego[..., 1])
    actions = np.stack([vx, vy, omega, kx, ky], axis=-1)
    return actions * (roles != NO_ROLE)[..., None]


def bot_act(world: World, agent_id: int, geom: FieldGeometry, phys: PhysicsConfig) -> np.ndarray:
    """Action of one bot-controlled agent in every instance, ``(E, 5)``."""
    return bot_actions(world, int(world.team[agent_id]), geom, phys)[:, agent_id]
