"""Soccer semantics on top of the physics: ball ownership, pass and
ownership-loss events, curriculum-aware episode spawning and per-episode
statistics."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .config import Config, CurriculumConfig, FieldGeometry
from .world import BLUE, RED, StepEvents, World


class SpawnError(RuntimeError):
    pass


@dataclass
class OwnershipState:
    owner_agent: np.ndarray  # (E,) slot index, -1 if nobody owns the ball
    owner_team: np.ndarray   # (E,) BLUE / RED, -1 if nobody owns the ball

    @classmethod
    def empty(cls, n_envs: int) -> "OwnershipState":
        return cls(np.full(n_envs, -1, dtype=np.int64), np.full(n_envs, -1, dtype=np.int64))

    def copy(self) -> "OwnershipState":
        return OwnershipState(self.owner_agent.copy(), self.owner_team.copy())


@dataclass(frozen=True)
class GameEvent:
    kind: str            # goal, ball_out, pass, ownership_loss, collision
    team: int
    agents: tuple
    sim_time: float
    env: int = 0


def assign_ownership(world: World, geom: FieldGeometry) -> OwnershipState:
    """An agent owns the ball if it is strictly within ``ownership_radius``,
    the closest such agent of its team, and no opponent is within the radius.
    Equidistant candidates resolve to the lowest slot index."""
    dist = np.linalg.norm(world.ball_pos[:, None, :] - world.pos, axis=-1)
    cand = world.active & (dist < geom.ownership_radius)
    blue_any = (cand & (world.team == BLUE)).any(axis=1)
    red_any = (cand & (world.team == RED)).any(axis=1)
    closest = np.argmin(np.where(cand, dist, np.inf), axis=1)
    owned = blue_any ^ red_any
    agent = np.where(owned, closest, -1)
    team = np.where(owned, world.team[closest], -1)
    return OwnershipState(agent.astype(np.int64), team.astype(np.int64))


def ownership_transitions(last: OwnershipState, current: OwnershipState, ball_out: np.ndarray):
    """Vectorised pass / ownership-loss detection.

    Returns ``(passes, losses, new_last)``; ``passes`` and ``losses`` are
    boolean per instance.  A pass credits the current owner's team, a loss
    debits the team in ``last``.
    """
    has = current.owner_agent >= 0
    had = last.owner_agent >= 0
    same_team = last.owner_team == current.owner_team
    passes = has & had & same_team & (last.owner_agent != current.owner_agent)
    losses = has & had & ~same_team
    new_last = OwnershipState(np.where(has, current.owner_agent, last.owner_agent),
                              np.where(has, current.owner_team, last.owner_team))
    new_last.owner_agent[ball_out] = -1
    new_last.owner_team[ball_out] = -1
    return passes, losses, new_last


def detect_events(last: OwnershipState, current: OwnershipState, step: StepEvents,
                  world: World) -> tuple[list[GameEvent], OwnershipState]:
    """Events of one control step.

    ``last`` is the most recent non-empty ownership per instance (it survives
    no-owner gaps while the ball travels).  Returns the events and the updated
    memory.  A ball leaving the field clears the memory, so the next pickup is
    neither a pass nor an ownership loss.
    """
    passes, losses, new_last = ownership_transitions(last, current, step.ball_out)
    events: list[GameEvent] = []
    busy = passes | losses | (step.goal != 0) | step.ball_out | step.collisions.any(axis=1)
    for e in np.nonzero(busy)[0]:
        t = float(world.sim_time[e])
        pair = (int(last.owner_agent[e]), int(current.owner_agent[e]))
        if passes[e]:
            events.append(GameEvent("pass", int(current.owner_team[e]), pair, t, int(e)))
        if losses[e]:
            events.append(GameEvent("ownership_loss", int(last.owner_team[e]), pair, t, int(e)))
        if step.goal[e] != 0:
            events.append(GameEvent("goal", BLUE if step.goal[e] > 0 else RED, (), t, int(e)))
        if step.ball_out[e]:
            events.append(GameEvent("ball_out", -1, (), t, int(e)))
        for i in np.nonzero(step.collisions[e])[0]:
            events.append(GameEvent("collision", int(world.team[i]), (int(i),), t, int(e)))
    return events, new_last


def field_scale(level: int, cur: CurriculumConfig) -> float:
    if cur.field_levels <= 1:
        return 1.0
    return cur.field_scale_min + (1.0 - cur.field_scale_min) * level / (cur.field_levels - 1)


def ball_band(level: int, cur: CurriculumConfig) -> tuple[float, float]:
    """Longitudinal ball spawn band as fractions of field length measured
    from the blue goal line.  The far edge grows linearly with the level."""
    if cur.init_pos_levels <= 1:
        return 0.0, 1.0
    hi = cur.ball_band_min + (1.0 - cur.ball_band_min) * level / (cur.init_pos_levels - 1)
    return 0.0, hi


def spawn_episode(cfg: Config, n_blue: int, n_red: int, init_level: int, field_level: int,
                  rng: np.random.Generator, slots: tuple[int, int] | None = None,
                  band: tuple[float, float] | None = None, ball_y_frac: float = 1.0,
                  max_tries: int = 200) -> World:
    """Fresh single-instance world.

    Blue agents are placed uniformly in the blue half, red agents in the red
    half, headings uniform in (-pi, pi].  The ball is drawn from ``band``
    (default: the init-position curriculum band of ``init_level``).
    """
    cur = cfg.curriculum
    if not 0 <= init_level < cur.init_pos_levels or not 0 <= field_level < cur.field_levels:
        raise ValueError("curriculum level out of range")
    nb_slots, nr_slots = slots or (n_blue, n_red)
    if not (1 <= n_blue <= nb_slots and 1 <= n_red <= nr_slots):
        raise ValueError("team size outside the configured slots")
    geom = cfg.field.scaled(field_scale(field_level, cur))
    w = World.empty(1, nb_slots, nr_slots, geom)
    half_l, half_w = 0.5 * geom.field_length, 0.5 * geom.field_width
    r, rb = geom.agent_radius, geom.ball_radius
    lo, hi = band if band is not None else ball_band(init_level, cur)

    bx = rng.uniform(-half_l + lo * geom.field_length, -half_l + hi * geom.field_length)
    by = rng.uniform(-half_w, half_w) * ball_y_frac
    ball = np.array([np.clip(bx, -half_l + rb, half_l - rb), np.clip(by, -half_w + rb, half_w - rb)])
    w.ball_pos[0] = ball

    placed: list[np.ndarray] = []
    order = [(i, BLUE) for i in range(n_blue)] + [(nb_slots + i, RED) for i in range(n_red)]
    for slot, team in order:
        x_lo, x_hi = (-half_l + r, -r) if team == BLUE else (r, half_l - r)
        for _ in range(max_tries):
            p = np.array([rng.uniform(x_lo, x_hi), rng.uniform(-half_w + r, half_w - r)])
            if np.linalg.norm(p - ball) < r + rb:
                continue
            if any(np.linalg.norm(p - q) < 2 * r for q in placed):
                continue
            break
        else:
            raise SpawnError(f"could not place agent {slot} without overlap; field too small")
        placed.append(p)
        w.pos[0, slot] = p
        w.heading[0, slot] = -rng.uniform(-np.pi, np.pi)
    w.active[0] = False
    w.active[0, :n_blue] = True
    w.active[0, nb_slots:nb_slots + n_red] = True
    return w


@dataclass
class EpisodeStats:
    outcome: str                 # win / draw / loss from blue's perspective
    ownership_time_blue: float
    ownership_time_red: float
    passes_blue: int
    passes_red: int
    ownership_losses_blue: int
    ownership_losses_red: int
    duration: float
    touches_blue: int = 0
    touches_red: int = 0
    n_blue: int = 0
    n_red: int = 0


@dataclass
class StatsAccumulator:
    """Running per-instance counters; converted to :class:`EpisodeStats` when
    an episode ends."""
    n_envs: int
    own_blue: np.ndarray = field(init=False)
    own_red: np.ndarray = field(init=False)
    counts: np.ndarray = field(init=False)  # (E, 6): passes b/r, losses b/r, touches b/r

    def __post_init__(self):
        self.own_blue = np.zeros(self.n_envs)
        self.own_red = np.zeros(self.n_envs)
        self.counts = np.zeros((self.n_envs, 6), dtype=np.int64)

    def update(self, ownership: OwnershipState, passes: np.ndarray, losses: np.ndarray,
               last: OwnershipState, step: StepEvents, team: np.ndarray, dt: float,
               live: np.ndarray) -> None:
        """``last`` is the ownership memory from *before* this step."""
        self.own_blue += dt * ((ownership.owner_team == BLUE) & live)
        self.own_red += dt * ((ownership.owner_team == RED) & live)
        self.counts[:, 0] += passes & live & (ownership.owner_team == BLUE)
        self.counts[:, 1] += passes & live & (ownership.owner_team == RED)
        self.counts[:, 2] += losses & live & (last.owner_team == BLUE)
        self.counts[:, 3] += losses & live & (last.owner_team == RED)
        touches = step.touches & live[:, None]
        self.counts[:, 4] += touches[:, team == BLUE].any(axis=1)
        self.counts[:, 5] += touches[:, team == RED].any(axis=1)

    def finish(self, env: int, outcome: str, duration: float, n_blue: int = 0,
               n_red: int = 0) -> EpisodeStats:
        c = self.counts[env]
        stats = EpisodeStats(outcome, float(self.own_blue[env]), float(self.own_red[env]),
                             int(c[0]), int(c[1]), int(c[2]), int(c[3]), float(duration),
                             int(c[4]), int(c[5]), n_blue, n_red)
        self.reset(env)
        return stats

    def reset(self, env) -> None:
        self.own_blue[env] = 0.0
        self.own_red[env] = 0.0
        self.counts[env] = 0
