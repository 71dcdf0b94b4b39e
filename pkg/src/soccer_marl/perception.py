"""Per-agent observations.

Every agent sees the game from its own team's perspective: red observations
are mirrored through the field centre so that both teams attack towards
``+x``.  The local vector holds (in order)

    base pose (4)       x, y normalised by the half field size, sin/cos heading
    base velocity (3)   vx, vy rotated into the ego frame, angular velocity
    ball position (2)   team frame normalised by the half field size (or ego
                        frame normalised by field length, see ``ball_frame``)
    ball velocity (2)   team frame
    field info (5)      half length, half width, goal half width, wall x, wall y
    active agents (2)   teammates and opponents, clamped and divided by the clamp

Neighbours (teammates / opponents) are the ``n_max_neighbors`` closest agents
of each kind.  Each contributes ``history_len`` stacked poses (current first),
each pose relative to the current ego pose in the ego frame:
(dx, dy) / field_length, sin and cos of the heading difference.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .config import FieldGeometry, ObservationConfig
from .world import BLUE, World, rotate, wrap_angle

LOCAL_DIM = 18
# entries of the local vector expressed in the (team) world frame
WORLD_FRAME_ENTRIES = (0, 1, 2, 3, 7, 8, 9, 10)


def entity_dim(cfg: ObservationConfig) -> int:
    return 4 * cfg.history_len


@dataclass
class ObservationBundle:
    local: np.ndarray            # (B, LOCAL_DIM)
    teammates: np.ndarray        # (B, N, 4H)
    teammate_mask: np.ndarray    # (B, N) bool
    opponents: np.ndarray        # (B, N, 4H)
    opponent_mask: np.ndarray    # (B, N) bool

    FIELDS = ("local", "teammates", "teammate_mask", "opponents", "opponent_mask")

    def __len__(self) -> int:
        return self.local.shape[0]

    def take(self, idx) -> "ObservationBundle":
        return ObservationBundle(*(getattr(self, f)[idx] for f in self.FIELDS))

    def astype(self, dtype) -> "ObservationBundle":
        return ObservationBundle(self.local.astype(dtype), self.teammates.astype(dtype),
                                 self.teammate_mask, self.opponents.astype(dtype),
                                 self.opponent_mask)

    @staticmethod
    def concat(bundles) -> "ObservationBundle":
        return ObservationBundle(*(np.concatenate([getattr(b, f) for b in bundles])
                                   for f in ObservationBundle.FIELDS))


class HistoryBuffer:
    """Past poses (x, y, heading) of every agent, newest first."""

    def __init__(self, n_envs: int, n_agents: int, history_len: int):
        self.depth = history_len - 1
        self.poses = np.zeros((n_envs, n_agents, self.depth, 3))
        self.valid = np.zeros((n_envs, n_agents, self.depth), dtype=bool)

    def push(self, world: World, envs=None) -> None:
        if self.depth == 0:
            return
        envs = np.arange(world.n_envs) if envs is None else np.atleast_1d(envs)
        pose = np.concatenate([world.pos[envs], world.heading[envs][..., None]], axis=-1)
        self.poses[envs, :, 1:] = self.poses[envs, :, :-1]
        self.valid[envs, :, 1:] = self.valid[envs, :, :-1]
        self.poses[envs, :, 0] = pose
        self.valid[envs, :, 0] = world.active[envs]

    def reset(self, envs) -> None:
        self.poses[envs] = 0.0
        self.valid[envs] = False

    def copy(self) -> "HistoryBuffer":
        out = HistoryBuffer.__new__(HistoryBuffer)
        out.depth, out.poses, out.valid = self.depth, self.poses.copy(), self.valid.copy()
        return out


def inject_noise(vector, magnitudes, rng: np.random.Generator):
    """Add independent uniform noise in [-m, m]; zero magnitudes leave the
    entries untouched bit-for-bit."""
    vector = np.asarray(vector)
    mag = np.broadcast_to(np.asarray(magnitudes, dtype=np.float64), vector.shape)
    if np.any(mag < 0):
        raise ValueError("noise magnitudes must be non-negative")
    if not np.any(mag > 0):
        return vector.copy()
    noise = rng.uniform(-1.0, 1.0, size=vector.shape) * mag
    return np.where(mag > 0, vector + noise, vector)


def local_noise_magnitudes(cfg: ObservationConfig) -> np.ndarray:
    return np.array([cfg.noise_pose] * 4 + [cfg.noise_velocity] * 3
                    + [cfg.noise_ball_position] * 2 + [cfg.noise_ball_velocity] * 2
                    + [0.0] * 7)


def build_observation(world: World, env_idx, agent_idx, history: HistoryBuffer | None,
                      cfg: ObservationConfig, geom: FieldGeometry, role: str = "actor",
                      rng: np.random.Generator | None = None) -> ObservationBundle:
    """Observations of the agents ``(env_idx[b], agent_idx[b])``.

    ``geom`` is the full-size field used to normalise the field-info entries;
    positions are normalised by each instance's own (curriculum) field size.
    Actor observations carry uniform noise, critic observations none.
    """
    env_idx = np.atleast_1d(np.asarray(env_idx, dtype=np.int64))
    agent_idx = np.atleast_1d(np.asarray(agent_idx, dtype=np.int64))
    n_b = len(env_idx)
    if role not in ("actor", "critic"):
        raise ValueError("role must be 'actor' or 'critic'")

    team = world.team[agent_idx]
    sign = np.where(team == BLUE, 1.0, -1.0)
    flip = np.where(team == BLUE, 0.0, np.pi)
    length = world.field_length[env_idx]
    width = world.field_width[env_idx]
    half = np.stack([0.5 * length, 0.5 * width], axis=-1)

    pos_all = world.pos[env_idx] * sign[:, None, None]                  # (B, A, 2)
    head_all = world.heading[env_idx] + flip[:, None]
    ego_pos = pos_all[np.arange(n_b), agent_idx]
    ego_head = wrap_angle(head_all[np.arange(n_b), agent_idx])
    ego_vel = world.vel[env_idx, agent_idx] * sign[:, None]
    ego_omega = world.angvel[env_idx, agent_idx]
    ball = world.ball_pos[env_idx] * sign[:, None]
    ball_vel = world.ball_vel[env_idx] * sign[:, None]

    local = np.empty((n_b, LOCAL_DIM))
    local[:, 0:2] = ego_pos / half
    local[:, 2] = np.sin(ego_head)
    local[:, 3] = np.cos(ego_head)
    local[:, 4:6] = rotate(ego_vel, -ego_head)
    local[:, 6] = ego_omega
    if cfg.ball_frame == "world":
        local[:, 7:9] = ball / half
    else:
        local[:, 7:9] = rotate(ball - ego_pos, -ego_head) / length[:, None]
    local[:, 9:11] = ball_vel
    local[:, 11] = length / geom.field_length
    local[:, 12] = width / geom.field_width
    local[:, 13] = world.goal_width[env_idx] / geom.field_width
    local[:, 14] = (0.5 * length + geom.wall_offset) / (0.5 * geom.field_length)
    local[:, 15] = (0.5 * width + geom.wall_offset) / (0.5 * geom.field_width)

    active = world.active[env_idx]                                       # (B, A)
    same = world.team[None, :] == team[:, None]
    is_ego = np.arange(world.n_agents)[None, :] == agent_idx[:, None]
    mates = active & same & ~is_ego
    opps = active & ~same
    clamp = cfg.count_clamp
    local[:, 16] = np.minimum(mates.sum(axis=1), clamp) / clamp
    local[:, 17] = np.minimum(opps.sum(axis=1), clamp) / clamp

    # relative poses of every agent, current step first then history
    rel_now = _relative(pos_all, head_all, ego_pos, ego_head, length)
    stacks = [rel_now]
    valid_stack = [np.ones_like(active)]
    if history is not None and history.depth > 0:
        hp = history.poses[env_idx]                                      # (B, A, D, 3)
        for d in range(min(history.depth, cfg.history_len - 1)):
            rel = _relative(hp[:, :, d, :2] * sign[:, None, None], hp[:, :, d, 2] + flip[:, None],
                            ego_pos, ego_head, length)
            stacks.append(rel)
            valid_stack.append(history.valid[env_idx, :, d])
    while len(stacks) < cfg.history_len:
        stacks.append(np.zeros_like(rel_now))
        valid_stack.append(np.zeros_like(active))
    rel = np.stack(stacks, axis=2) * np.stack(valid_stack, axis=2)[..., None]   # (B, A, H, 4)
    rel = rel.reshape(n_b, world.n_agents, -1)

    dist = np.linalg.norm(pos_all - ego_pos[:, None, :], axis=-1)
    teammates, tm_mask = _nearest(rel, dist, mates, cfg.n_max_neighbors)
    opponents, op_mask = _nearest(rel, dist, opps, cfg.n_max_neighbors)

    if role == "actor" and rng is not None:
        local = inject_noise(local, local_noise_magnitudes(cfg), rng)
        teammates = inject_noise(teammates, cfg.noise_neighbor * tm_mask[..., None], rng)
        opponents = inject_noise(opponents, cfg.noise_neighbor * op_mask[..., None], rng)
    return ObservationBundle(local, teammates, tm_mask, opponents, op_mask)


def _relative(pos, head, ego_pos, ego_head, length):
    d = rotate(pos - ego_pos[:, None, :], -ego_head[:, None]) / length[:, None, None]
    dth = head - ego_head[:, None]
    return np.concatenate([d, np.sin(dth)[..., None], np.cos(dth)[..., None]], axis=-1)


def _nearest(rel, dist, mask, n_max):
    key = np.where(mask, dist, np.inf)
    order = np.argsort(key, axis=1, kind="stable")[:, :n_max]
    rows = np.take_along_axis(rel, order[..., None], axis=1)
    valid = np.take_along_axis(mask, order, axis=1)
    if rows.shape[1] < n_max:
        pad = n_max - rows.shape[1]
        rows = np.concatenate([rows, np.zeros((rows.shape[0], pad, rows.shape[2]))], axis=1)
        valid = np.concatenate([valid, np.zeros((valid.shape[0], pad), dtype=bool)], axis=1)
    rows = rows * valid[..., None]
    return rows, valid
