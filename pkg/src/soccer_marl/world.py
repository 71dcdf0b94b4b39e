"""Batched 2D soccer physics.

A :class:`World` holds many independent game instances as stacked arrays
(leading axis = instance).  Agents occupy fixed slots: the first ``n_blue``
slots are blue, the remaining ones red; unused slots are marked inactive.
Blue defends the goal at ``x = -L/2`` and attacks the goal at ``x = +L/2``.

All functions are pure: they copy their input world and return a new one.
"""
from __future__ import annotations

import dataclasses
import logging
from dataclasses import dataclass

import numpy as np

from .config import FieldGeometry, PhysicsConfig

log = logging.getLogger(__name__)

BLUE, RED = 0, 1

# check_termination outcome codes
NONE, BLUE_WIN, RED_WIN, TIMEOUT = 0, 1, 2, 3

_SQRT2 = np.sqrt(2.0)


def wrap_angle(theta):
    """Wrap angles into (-pi, pi]; in-range values are returned bit-for-bit."""
    theta = np.asarray(theta, dtype=np.float64)
    inside = (theta > -np.pi) & (theta <= np.pi)
    return np.where(inside, theta, np.pi - np.mod(np.pi - theta, 2 * np.pi))


def rotate(vec, angle):
    """Rotate 2-vectors ``vec[..., :2]`` counter-clockwise by ``angle``."""
    c, s = np.cos(angle), np.sin(angle)
    x, y = vec[..., 0], vec[..., 1]
    return np.stack([c * x - s * y, s * x + c * y], axis=-1)


def remap_unit_disk(x, y):
    """Map the square [-1, 1]^2 onto the unit disk.

    Out-of-range inputs are clamped first; that only happens when an upstream
    sampler misbehaves, so it is logged.
    """
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if np.any(np.abs(x) > 1.0 + 1e-9) or np.any(np.abs(y) > 1.0 + 1e-9):
        log.debug("remap_unit_disk: clamping inputs outside [-1, 1]")
    x = np.clip(x, -1.0, 1.0)
    y = np.clip(y, -1.0, 1.0)
    return x * np.sqrt(1.0 - 0.5 * y * y), y * np.sqrt(1.0 - 0.5 * x * x)


def inverse_remap_unit_disk(u, v):
    """Inverse of :func:`remap_unit_disk` for points of the closed unit disk."""
    u = np.asarray(u, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    norm = np.hypot(u, v)
    scale = np.where(norm > 1.0, 1.0 / np.maximum(norm, 1e-300), 1.0)
    u, v = u * scale, v * scale
    t = 2.0 * _SQRT2
    a = 2.0 + u * u - v * v
    b = 2.0 - u * u + v * v
    x = 0.5 * np.sqrt(np.maximum(a + t * u, 0.0)) - 0.5 * np.sqrt(np.maximum(a - t * u, 0.0))
    y = 0.5 * np.sqrt(np.maximum(b + t * v, 0.0)) - 0.5 * np.sqrt(np.maximum(b - t * v, 0.0))
    return np.clip(x, -1.0, 1.0), np.clip(y, -1.0, 1.0)


def pd_track(command, current, phys: PhysicsConfig):
    """Force/torque tracking a velocity command.

    ``command`` and ``current`` are ``(..., 3)`` arrays of (vx, vy, omega) in
    the world frame.  The command is saturated at the configured speed limits.
    The derivative term feeds back the agent's own acceleration; it is solved
    in closed form (F = kp*e - kd*F/m), which keeps the loop dissipative.
    """
    command = np.asarray(command, dtype=np.float64)
    current = np.asarray(current, dtype=np.float64)
    lin = command[..., :2]
    speed = np.linalg.norm(lin, axis=-1, keepdims=True)
    lin = lin * np.minimum(1.0, phys.max_speed / np.maximum(speed, 1e-12))
    ang = np.clip(command[..., 2], -phys.max_angular_speed, phys.max_angular_speed)

    m, inertia = phys.agent_mass, phys.agent_inertia
    force = phys.kp_linear * m / (m + phys.kd_linear) * (lin - current[..., :2])
    fnorm = np.linalg.norm(force, axis=-1, keepdims=True)
    force = force * np.minimum(1.0, phys.max_force / np.maximum(fnorm, 1e-12))
    torque = phys.kp_angular * inertia / (inertia + phys.kd_angular) * (ang - current[..., 2])
    torque = np.clip(torque, -phys.max_torque, phys.max_torque)
    return np.concatenate([force, torque[..., None]], axis=-1)


@dataclass
class World:
    pos: np.ndarray           # (E, A, 2)
    heading: np.ndarray       # (E, A)
    vel: np.ndarray           # (E, A, 2)
    angvel: np.ndarray        # (E, A)
    active: np.ndarray        # (E, A) bool
    team: np.ndarray          # (A,) BLUE / RED
    ball_pos: np.ndarray      # (E, 2)
    ball_vel: np.ndarray      # (E, 2)
    field_length: np.ndarray  # (E,)
    field_width: np.ndarray   # (E,)
    goal_width: np.ndarray    # (E,)
    episode_step: np.ndarray  # (E,) int64
    sim_time: np.ndarray      # (E,)
    score: np.ndarray         # (E,) int8: +1 blue scored, -1 red scored

    ARRAY_FIELDS = ("pos", "heading", "vel", "angvel", "active", "ball_pos", "ball_vel",
                    "field_length", "field_width", "goal_width", "episode_step",
                    "sim_time", "score")

    @classmethod
    def empty(cls, n_envs: int, n_blue: int, n_red: int, geom: FieldGeometry) -> "World":
        a = n_blue + n_red
        return cls(
            pos=np.zeros((n_envs, a, 2)),
            heading=np.zeros((n_envs, a)),
            vel=np.zeros((n_envs, a, 2)),
            angvel=np.zeros((n_envs, a)),
            active=np.ones((n_envs, a), dtype=bool),
            team=np.array([BLUE] * n_blue + [RED] * n_red, dtype=np.int8),
            ball_pos=np.zeros((n_envs, 2)),
            ball_vel=np.zeros((n_envs, 2)),
            field_length=np.full(n_envs, geom.field_length),
            field_width=np.full(n_envs, geom.field_width),
            goal_width=np.full(n_envs, geom.goal_width),
            episode_step=np.zeros(n_envs, dtype=np.int64),
            sim_time=np.zeros(n_envs),
            score=np.zeros(n_envs, dtype=np.int8),
        )

    @property
    def n_envs(self) -> int:
        return self.pos.shape[0]

    @property
    def n_agents(self) -> int:
        return self.pos.shape[1]

    @property
    def n_blue_slots(self) -> int:
        return int(np.sum(self.team == BLUE))

    def copy(self) -> "World":
        return dataclasses.replace(
            self, **{name: getattr(self, name).copy() for name in self.ARRAY_FIELDS})

    def take(self, idx) -> "World":
        """Sub-batch of instances ``idx`` (always a copy)."""
        idx = np.atleast_1d(idx)
        return dataclasses.replace(
            self, **{name: getattr(self, name)[idx].copy() for name in self.ARRAY_FIELDS})

    def put(self, idx, other: "World") -> None:
        """Overwrite instances ``idx`` in place with the instances of ``other``."""
        idx = np.atleast_1d(idx)
        for name in self.ARRAY_FIELDS:
            getattr(self, name)[idx] = getattr(other, name)

    @staticmethod
    def concat(worlds) -> "World":
        first = worlds[0]
        return dataclasses.replace(first, **{
            name: np.concatenate([getattr(w, name) for w in worlds]) for name in World.ARRAY_FIELDS})

    def equals(self, other: "World") -> bool:
        """Bitwise equality of every state array."""
        return bool(np.array_equal(self.team, other.team)) and all(
            np.array_equal(getattr(self, n), getattr(other, n)) for n in self.ARRAY_FIELDS)


@dataclass
class StepEvents:
    goal: np.ndarray        # (E,) +1 blue scored, -1 red scored
    ball_out: np.ndarray    # (E,) bool
    collisions: np.ndarray  # (E, A) bool, agent-agent or agent-wall (ball excluded)
    touches: np.ndarray     # (E, A) bool, agent whose kick moved the ball

    @classmethod
    def empty(cls, n_envs: int, n_agents: int) -> "StepEvents":
        return cls(
            goal=np.zeros(n_envs, dtype=np.int8),
            ball_out=np.zeros(n_envs, dtype=bool),
            collisions=np.zeros((n_envs, n_agents), dtype=bool),
            touches=np.zeros((n_envs, n_agents), dtype=bool),
        )


def apply_kick(world: World, agent_id: int, kick, geom: FieldGeometry, phys: PhysicsConfig) -> World:
    """Kick the ball with one agent in every instance where it is kickable.

    ``kick`` is the remapped (k_x, k_y) command in the agent's ego frame,
    shape ``(2,)`` or ``(E, 2)``.
    """
    w = world.copy()
    kick = np.broadcast_to(np.asarray(kick, dtype=np.float64), (w.n_envs, 2))
    dist = np.linalg.norm(w.ball_pos - w.pos[:, agent_id], axis=-1)
    ok = w.active[:, agent_id] & (dist <= geom.kickable_radius)
    vel = rotate(kick, w.heading[:, agent_id]) * phys.max_kick_speed
    w.ball_vel[ok] = vel[ok]
    return w


def _kick_closest(w: World, kick_ego, live_agents, geom, phys, touches) -> None:
    dist = np.linalg.norm(w.ball_pos[:, None, :] - w.pos, axis=-1)
    in_k = live_agents & (dist <= geom.kickable_radius)
    has = in_k.any(axis=1)
    if not has.any():
        return
    env = np.nonzero(has)[0]
    kicker = np.argmin(np.where(in_k, dist, np.inf), axis=1)[env]
    vel = rotate(kick_ego[env, kicker], w.heading[env, kicker]) * phys.max_kick_speed
    w.ball_vel[env] = vel
    touches[env, kicker] = True


def _resolve_inplace(w: World, live: np.ndarray, geom: FieldGeometry, phys: PhysicsConfig,
                     flags: np.ndarray, passes: int = 4) -> None:
    act = w.active & live[:, None]
    r = geom.agent_radius
    n_agents = w.n_agents
    iu, ju = np.triu_indices(n_agents, k=1)
    for it in range(passes):
        moved = False
        if len(iu):
            diff = w.pos[:, ju] - w.pos[:, iu]                        # (E, P, 2)
            dist = np.linalg.norm(diff, axis=-1)
            overlap = (2 * r - dist) * (act[:, iu] & act[:, ju])
            hit = overlap > 1e-12
            for p in np.nonzero(hit.any(axis=0))[0]:
                i, j = iu[p], ju[p]
                d = w.pos[:, j] - w.pos[:, i]
                dn = np.linalg.norm(d, axis=-1)
                delta = 2 * r - dn
                sel = act[:, i] & act[:, j] & (delta > 1e-12)
                if not sel.any():
                    continue
                n = np.where(dn[:, None] > 1e-12, d / np.maximum(dn, 1e-12)[:, None],
                             np.array([1.0, 0.0]))
                push = (0.5 * delta * sel)[:, None] * n
                w.pos[:, i] -= push
                w.pos[:, j] += push
                vn = np.sum((w.vel[:, j] - w.vel[:, i]) * n, axis=-1)
                imp = np.where(sel & (vn < 0), -0.5 * (1 + phys.agent_restitution) * vn, 0.0)
                w.vel[:, i] -= imp[:, None] * n
                w.vel[:, j] += imp[:, None] * n
                flags[sel, i] = True
                flags[sel, j] = True
                moved = True

        # enclosing wall
        wx = (0.5 * w.field_length + geom.wall_offset - r)[:, None]
        wy = (0.5 * w.field_width + geom.wall_offset - r)[:, None]
        for axis, bound in ((0, wx), (1, wy)):
            coord = w.pos[..., axis]
            hi = act & (coord > bound)
            lo = act & (coord < -bound)
            if hi.any() or lo.any():
                v = w.vel[..., axis]
                e = phys.wall_restitution
                w.pos[..., axis] = np.where(hi, bound, np.where(lo, -bound, coord))
                w.vel[..., axis] = np.where(hi & (v > 0), -e * v, np.where(lo & (v < 0), -e * v, v))
                flags |= hi | lo
                moved = True
        if not moved:
            break

    # ball against agent bodies (never flagged)
    rb = r + geom.ball_radius
    ma, mb = phys.agent_mass, phys.ball_mass
    d = w.ball_pos[:, None, :] - w.pos
    dist = np.linalg.norm(d, axis=-1)
    hit = act & (dist < rb)
    for i in np.nonzero(hit.any(axis=0))[0]:
        d = w.ball_pos - w.pos[:, i]
        dn = np.linalg.norm(d, axis=-1)
        sel = act[:, i] & (dn < rb)
        n = np.where(dn[:, None] > 1e-12, d / np.maximum(dn, 1e-12)[:, None], np.array([1.0, 0.0]))
        w.ball_pos[sel] = w.pos[sel, i] + n[sel] * rb
        vn = np.sum((w.ball_vel - w.vel[:, i]) * n, axis=-1)
        jimp = np.where(sel & (vn < 0), -(1 + phys.ball_restitution) * vn / (1 / ma + 1 / mb), 0.0)
        w.ball_vel += (jimp / mb)[:, None] * n
        w.vel[:, i] -= (jimp / ma)[:, None] * n


def resolve_collisions(world: World, geom: FieldGeometry, phys: PhysicsConfig):
    """Separate overlapping agent discs, keep agents inside the wall and push
    the ball out of agent bodies.

    Returns the new world and per-agent contact flags (agent-agent or
    agent-wall; ball contact is not flagged).
    """
    w = world.copy()
    flags = np.zeros(w.active.shape, dtype=bool)
    _resolve_inplace(w, np.ones(w.n_envs, dtype=bool), geom, phys, flags)
    return w, flags


def _goal_or_out(w: World, prev_ball: np.ndarray, live: np.ndarray, events: StepEvents) -> None:
    half_l = 0.5 * w.field_length
    half_w = 0.5 * w.field_width
    x1, y1 = w.ball_pos[:, 0], w.ball_pos[:, 1]
    outside = live & ((np.abs(x1) > half_l) | (np.abs(y1) > half_w))
    if not outside.any():
        return
    x0, y0 = prev_ball[:, 0], prev_ball[:, 1]
    dx, dy = x1 - x0, y1 - y0
    with np.errstate(divide="ignore", invalid="ignore"):
        tx = np.where(x1 > half_l, (half_l - x0) / dx, np.where(x1 < -half_l, (-half_l - x0) / dx, np.inf))
        ty = np.where(y1 > half_w, (half_w - y0) / dy, np.where(y1 < -half_w, (-half_w - y0) / dy, np.inf))
    tx = np.nan_to_num(tx, nan=0.0)
    ty = np.nan_to_num(ty, nan=0.0)
    t = np.clip(np.minimum(tx, ty), 0.0, 1.0)
    cx = x0 + t * dx
    cy = y0 + t * dy
    through_end = outside & (tx <= ty) & (np.abs(cy) < 0.5 * w.goal_width)
    blue_goal = through_end & (x1 > half_l)
    red_goal = through_end & (x1 < -half_l)
    out = outside & ~(blue_goal | red_goal)
    w.score[blue_goal] = 1
    w.score[red_goal] = -1
    events.goal[blue_goal] = 1
    events.goal[red_goal] = -1
    if out.any():
        w.ball_pos[out, 0] = np.clip(cx, -half_l, half_l)[out]
        w.ball_pos[out, 1] = np.clip(cy, -half_w, half_w)[out]
        w.ball_vel[out] = 0.0
        events.ball_out |= out


def step_world(world: World, actions, geom: FieldGeometry, phys: PhysicsConfig, dt: float | None = None):
    """Advance every instance by one control step.

    ``actions`` has shape ``(E, A, 5)`` holding raw (v_x, v_y, v_theta, k_x,
    k_y) in [-1, 1]; rows of inactive slots are ignored.  Instances whose
    episode already ended (score set) are left untouched.
    """
    dt = phys.dt if dt is None else float(dt)
    if dt <= 0:
        raise ValueError("dt must be positive")
    actions = np.asarray(actions, dtype=np.float64)
    if actions.shape != (world.n_envs, world.n_agents, 5):
        raise ValueError(f"expected actions of shape {(world.n_envs, world.n_agents, 5)}, "
                         f"got {actions.shape}")
    w = world.copy()
    events = StepEvents.empty(w.n_envs, w.n_agents)
    started = w.score == 0

    vx, vy = remap_unit_disk(actions[..., 0], actions[..., 1])
    kx, ky = remap_unit_disk(actions[..., 3], actions[..., 4])
    ego_cmd = np.stack([vx, vy], axis=-1) * phys.max_speed
    omega_cmd = np.clip(actions[..., 2], -1.0, 1.0) * phys.max_angular_speed
    kick_ego = np.stack([kx, ky], axis=-1)

    h = dt / phys.substeps
    decay = 0.5 ** (h / phys.ball_half_life)
    for _ in range(phys.substeps):
        live = w.score == 0
        if not live.any():
            break
        act = w.active & live[:, None]
        command = np.concatenate([rotate(ego_cmd, w.heading), omega_cmd[..., None]], axis=-1)
        current = np.concatenate([w.vel, w.angvel[..., None]], axis=-1)
        ft = pd_track(command, current, phys)
        new_vel = w.vel + h * ft[..., :2] / phys.agent_mass
        new_ang = w.angvel + h * ft[..., 2] / phys.agent_inertia
        w.vel = np.where(act[..., None], new_vel, w.vel)
        w.angvel = np.where(act, new_ang, w.angvel)
        w.pos = np.where(act[..., None], w.pos + h * w.vel, w.pos)
        w.heading = np.where(act, wrap_angle(w.heading + h * w.angvel), w.heading)

        w.ball_vel[live] *= decay
        _kick_closest(w, kick_ego, act, geom, phys, events.touches)
        prev_ball = w.ball_pos.copy()
        w.ball_pos[live] += h * w.ball_vel[live]

        _resolve_inplace(w, live, geom, phys, events.collisions)
        _goal_or_out(w, prev_ball, live, events)

    w.episode_step[started] += 1
    w.sim_time[started] = w.episode_step[started] * dt
    return w, events


def check_termination(world: World, phys: PhysicsConfig) -> np.ndarray:
    """Per-instance outcome code: NONE, BLUE_WIN, RED_WIN or TIMEOUT."""
    out = np.full(world.n_envs, NONE, dtype=np.int8)
    out[world.sim_time >= phys.episode_limit - 1e-9] = TIMEOUT
    out[world.score > 0] = BLUE_WIN
    out[world.score < 0] = RED_WIN
    return out


def kinetic_energy(world: World, phys: PhysicsConfig) -> np.ndarray:
    act = world.active
    agents = 0.5 * phys.agent_mass * np.sum(world.vel ** 2, axis=-1) + 0.5 * phys.agent_inertia * world.angvel ** 2
    return np.sum(agents * act, axis=1) + 0.5 * phys.ball_mass * np.sum(world.ball_vel ** 2, axis=-1)
