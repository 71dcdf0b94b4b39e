"""Matches between a trainee and an adversary, match statistics, trajectory
logs with bitwise replay, and critic value heat maps."""
from __future__ import annotations

import csv
import dataclasses
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .config import Config, ConfigError
from .env import OUTCOME_NAMES, SoccerEnv
from .neural import NetworkParams, policy_forward, sample_action, value_forward
from .opponents import bot_actions
from .perception import HistoryBuffer, build_observation
from .rules import EpisodeStats, OwnershipState, assign_ownership, detect_events
from .world import BLUE, RED, World, step_world


@dataclass(frozen=True)
class Scenario:
    name: str
    band: tuple          # longitudinal ball band, fractions of field length from the blue goal line
    ball_y_frac: float   # lateral spread of the ball spawn (0 = on the centre line)


SCENARIOS = {
    "offensive": Scenario("Offensive", (0.0, 0.25), 1.0),
    "equal": Scenario("Equal", (0.5, 0.5), 0.0),
    "defensive": Scenario("Defensive", (0.75, 1.0), 1.0),
}


def get_scenario(name: str) -> Scenario:
    try:
        return SCENARIOS[name.lower()]
    except KeyError:
        raise ConfigError(f"unknown scenario {name!r}; choose from {sorted(SCENARIOS)}") from None


@dataclass
class MatchReport:
    scenario: str
    win: float
    draw: float
    loss: float
    ownership_blue: float
    ownership_red: float
    passes_blue: float
    passes_red: float
    losses_blue: float
    losses_red: float
    duration: float
    episodes: list

    @classmethod
    def from_stats(cls, scenario: str, stats: list[EpisodeStats]) -> "MatchReport":
        n = len(stats)
        if n == 0:
            return cls(scenario, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, [])
        total = sum(s.duration for s in stats)
        pct = {o: 100.0 * sum(s.outcome == o for s in stats) / n for o in ("win", "draw", "loss")}
        mean = lambda attr: float(np.mean([getattr(s, attr) for s in stats]))
        return cls(scenario, pct["win"], pct["draw"], pct["loss"],
                   100.0 * sum(s.ownership_time_blue for s in stats) / total,
                   100.0 * sum(s.ownership_time_red for s in stats) / total,
                   mean("passes_blue"), mean("passes_red"),
                   mean("ownership_losses_blue"), mean("ownership_losses_red"),
                   total / n, list(stats))

    def summary(self) -> dict:
        d = dataclasses.asdict(self)
        d.pop("episodes")
        d["n_episodes"] = len(self.episodes)
        return d

    def to_csv(self, path) -> None:
        """One row per episode plus a trailing summary row."""
        cols = [f.name for f in dataclasses.fields(EpisodeStats)]
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["row"] + cols)
            for i, s in enumerate(self.episodes):
                w.writerow([i] + [getattr(s, c) for c in cols])
            summ = self.summary()
            w.writerow([])
            w.writerow(["summary"] + list(summ))
            w.writerow(["summary"] + list(summ.values()))


# --- matches ---------------------------------------------------------------

def _policy_actions(env: SoccerEnv, team: int, params: NetworkParams, rng, deterministic: bool):
    obs, ei, si = env.observe(team, "actor", rng)
    if len(ei) == 0:
        return ei, si, np.zeros((0, 5))
    a, b = policy_forward(obs.astype(params.dtype), params)
    return ei, si, sample_action(a, b, rng, deterministic)[0]


def team_actions(env: SoccerEnv, blue, red, rng, deterministic: bool = True) -> np.ndarray:
    """Raw actions of both teams; each side is ``"bot"`` or policy parameters."""
    cfg = env.cfg
    actions = np.zeros((env.n_envs, env.world.n_agents, 5))
    for team, side in ((BLUE, blue), (RED, red)):
        if isinstance(side, str):
            if side != "bot":
                raise ConfigError(f"adversary must be 'bot' or a policy, got {side!r}")
            rows = bot_actions(env.world, team, cfg.field, cfg.physics)
            mask = env.world.team == team
            actions[:, mask] = rows[:, mask]
        else:
            ei, si, a = _policy_actions(env, team, side, rng, deterministic)
            actions[ei, si] = a
    return actions


def make_eval_env(cfg: Config, scenario: Scenario, n_envs: int, seed, n_blue=None, n_red=None) -> SoccerEnv:
    n_blue = cfg.evaluation.n_blue if n_blue is None else n_blue
    n_red = cfg.evaluation.n_red if n_red is None else n_red
    if n_blue < 1 or n_red < 1:
        raise ConfigError(f"both teams need at least one agent (got {n_blue}v{n_red})")
    level = cfg.evaluation.field_level
    if level is None:
        level = cfg.curriculum.field_levels - 1
    cur = dataclasses.replace(cfg.curriculum, field_level_fixed=level, team_sizes=[[n_blue, n_red]],
                              team_size_weights=None)
    ecfg = dataclasses.replace(cfg, curriculum=cur)
    return SoccerEnv(ecfg, n_envs, seed, [(n_blue, n_red)], None, band=scenario.band,
                     ball_y_frac=scenario.ball_y_frac)


def run_match(cfg: Config, blue, red, scenario: Scenario | str = "equal", seed: int = 0,
              duration: float | None = None, episodes: int | None = None,
              n_blue: int | None = None, n_red: int | None = None,
              deterministic: bool | None = None, trajectory_path=None) -> MatchReport:
    """Play ``blue`` against ``red`` (each ``"bot"`` or policy parameters).

    Duration mode (default) plays consecutive episodes in one instance until
    the accumulated simulated time reaches ``duration`` seconds.  Episode mode
    plays ``episodes`` instances in parallel, one episode each.  Fully
    determined by ``seed``.
    """
    if isinstance(scenario, str):
        scenario = get_scenario(scenario)
    deterministic = cfg.evaluation.deterministic if deterministic is None else deterministic
    n_envs = episodes if episodes is not None else 1
    if n_envs < 1:
        raise ConfigError("episodes must be positive")
    ss = np.random.SeedSequence(seed)
    s_env, s_act = ss.spawn(2)
    env = make_eval_env(cfg, scenario, n_envs, s_env, n_blue, n_red)
    rng = np.random.default_rng(s_act)
    budget = cfg.evaluation.duration if duration is None else duration
    recorder = TrajectoryWriter(trajectory_path) if trajectory_path is not None else None
    stats: list = []
    live = np.ones(n_envs, dtype=bool)
    elapsed = 0.0
    try:
        if recorder:
            for e in range(n_envs):
                recorder.episode_start(env, e)
        while live.any():
            actions = team_actions(env, blue, red, rng, deterministic)
            prev_last = env.last_owner.copy()
            res = env.step(actions)
            if recorder:
                events, _ = detect_events(prev_last, res.ownership, res.events, env.world)
                for e in np.nonzero(live)[0]:
                    recorder.step(env, e, actions[e], res, [ev for ev in events if ev.env == e])
            for e, s in res.finished:
                if not live[e]:
                    continue
                stats.append(s)
                if recorder:
                    recorder.episode_end(e, s)
                if episodes is not None:
                    live[e] = False
                else:
                    elapsed += s.duration
                    if elapsed >= budget:
                        live[e] = False
            restart = np.nonzero(res.done & live)[0]
            if len(restart):
                env.reset(restart)
                if recorder:
                    for e in restart:
                        recorder.episode_start(env, int(e))
    finally:
        if recorder:
            recorder.close()
    return MatchReport.from_stats(scenario.name, stats)


# --- trajectories ----------------------------------------------------------

def _world_record(w: World, e: int) -> dict:
    return {f: getattr(w, f)[e].tolist() for f in World.ARRAY_FIELDS} | {"team": w.team.tolist()}


def _world_from_record(rec: dict) -> World:
    dtypes = {"active": bool, "episode_step": np.int64, "score": np.int8}
    kw = {f: np.asarray([rec[f]], dtype=dtypes.get(f, np.float64)) for f in World.ARRAY_FIELDS}
    return World(team=np.asarray(rec["team"], dtype=np.int8), **kw)


class TrajectoryWriter:
    """Line-delimited JSON: an ``episode_start`` record with the full state,
    one ``step`` record per control step (actions applied, resulting poses,
    ball, ownership, events) and an ``episode_end`` record with statistics.
    Floats are written with round-trip precision."""

    def __init__(self, path):
        self.fh = open(path, "w")
        self.counter = {}

    def _write(self, rec: dict) -> None:
        self.fh.write(json.dumps(rec) + "\n")

    def episode_start(self, env: SoccerEnv, e: int) -> None:
        e = int(e)
        self.counter[e] = self.counter.get(e, -1) + 1
        self._write({"type": "episode_start", "env": e, "episode": self.counter[e],
                     "state": _world_record(env.world, e)})

    def step(self, env: SoccerEnv, e: int, actions, res, events) -> None:
        e = int(e)
        w = env.world
        self._write({"type": "step", "env": e, "episode": self.counter[e],
                     "t": float(w.sim_time[e]), "actions": np.asarray(actions).tolist(),
                     "pos": w.pos[e].tolist(), "heading": w.heading[e].tolist(),
                     "vel": w.vel[e].tolist(), "angvel": w.angvel[e].tolist(),
                     "ball_pos": w.ball_pos[e].tolist(), "ball_vel": w.ball_vel[e].tolist(),
                     "owner_agent": int(res.ownership.owner_agent[e]),
                     "owner_team": int(res.ownership.owner_team[e]),
                     "score": int(w.score[e]), "done": bool(res.done[e]),
                     "events": [{"kind": ev.kind, "team": ev.team, "agents": list(ev.agents)}
                                for ev in events]})

    def episode_end(self, e: int, stats: EpisodeStats) -> None:
        e = int(e)
        self._write({"type": "episode_end", "env": e, "episode": self.counter[e],
                     "stats": dataclasses.asdict(stats)})

    def close(self) -> None:
        self.fh.close()


def read_trajectories(path) -> dict:
    """``{(env, episode): {"start": rec, "steps": [...], "end": rec | None}}``."""
    out: dict = {}
    with open(path) as fh:
        for line in fh:
            rec = json.loads(line)
            key = (rec["env"], rec["episode"])
            ep = out.setdefault(key, {"start": None, "steps": [], "end": None})
            if rec["type"] == "episode_start":
                ep["start"] = rec
            elif rec["type"] == "step":
                ep["steps"].append(rec)
            else:
                ep["end"] = rec
    return out


def replay_episode(episode: dict, cfg: Config) -> tuple[bool, int]:
    """Re-simulate a logged episode from its start state with the logged
    actions.  Returns ``(all_match, first_mismatching_step or -1)``."""
    world = _world_from_record(episode["start"]["state"])
    for i, rec in enumerate(episode["steps"]):
        world, _ = step_world(world, np.asarray([rec["actions"]]), cfg.field, cfg.physics)
        for key in ("pos", "heading", "vel", "angvel", "ball_pos", "ball_vel"):
            if not np.array_equal(getattr(world, key)[0], np.asarray(rec[key])):
                return False, i
        if int(world.score[0]) != rec["score"]:
            return False, i
    return True, -1


def replay_log(path, cfg: Config) -> dict:
    eps = read_trajectories(path)
    bad = {k: replay_episode(ep, cfg)[1] for k, ep in eps.items()}
    return {"episodes": len(eps), "mismatches": {k: v for k, v in bad.items() if v >= 0}}


def recount_from_log(path, dt: float) -> dict:
    """Outcome and ownership percentages recomputed from raw step records."""
    outcomes = {"win": 0, "draw": 0, "loss": 0}
    own = {BLUE: 0.0, RED: 0.0}
    total = 0.0
    n = 0
    for ep in read_trajectories(path).values():
        if ep["end"] is None or not ep["steps"]:
            continue
        n += 1
        last = ep["steps"][-1]
        outcomes["win" if last["score"] > 0 else "loss" if last["score"] < 0 else "draw"] += 1
        for rec in ep["steps"]:
            if rec["owner_team"] in own:
                own[rec["owner_team"]] += dt
        total += last["t"]
    out = {k: 100.0 * v / n for k, v in outcomes.items()} if n else {}
    if total > 0:
        out["ownership_blue"] = 100.0 * own[BLUE] / total
        out["ownership_red"] = 100.0 * own[RED] / total
    out["n_episodes"] = n
    return out


# --- value heat maps -------------------------------------------------------

def heatmap_grid(world: World, resolution: int, env: int = 0):
    L = float(world.field_length[env])
    W = float(world.field_width[env])
    return np.linspace(-L / 2, L / 2, resolution), np.linspace(-W / 2, W / 2, resolution)


def export_value_heatmap(params: NetworkParams, world: World, cfg: Config, subject="ball",
                         viewer: int = 0, resolution: int = 80, history: HistoryBuffer | None = None,
                         env: int = 0) -> np.ndarray:
    """Critic value of agent ``viewer`` while ``subject`` (``"ball"`` or an
    agent slot) is swept over a ``resolution x resolution`` grid covering the
    field.  Row ``i`` is the ``i``-th y coordinate, column ``j`` the ``j``-th
    x coordinate (world frame).  ``world`` is not modified."""
    if resolution < 2:
        raise ValueError("resolution must be at least 2")
    if subject != "ball":
        subject = int(subject)
        if not (0 <= subject < world.n_agents) or not world.active[env, subject]:
            raise ValueError(f"subject agent {subject} is not an active slot")
    if not (0 <= viewer < world.n_agents) or not world.active[env, viewer]:
        raise ValueError(f"viewer agent {viewer} is not an active slot")
    xs, ys = heatmap_grid(world, resolution, env)
    gx, gy = np.meshgrid(xs, ys)
    pts = np.stack([gx.ravel(), gy.ravel()], axis=-1)
    n = len(pts)
    base = world.take([env])
    batch = World(team=base.team.copy(),
                  **{f: np.repeat(getattr(base, f), n, axis=0) for f in World.ARRAY_FIELDS})
    hist = None
    if history is not None:
        hist = HistoryBuffer(n, world.n_agents, history.depth + 1)
        hist.poses[:] = history.poses[env]
        hist.valid[:] = history.valid[env]
    if subject == "ball":
        batch.ball_pos[:] = pts
    else:
        batch.pos[:, subject] = pts
        if hist is not None:
            hist.poses[:, subject, :, :2] = pts[:, None, :]
    obs = build_observation(batch, np.arange(n), np.full(n, viewer), hist, cfg.observation,
                            cfg.field, role="critic")
    return value_forward(obs.astype(params.dtype), params).astype(np.float64).reshape(resolution, resolution)


def frozen_state(cfg: Config, n_blue: int = 2, n_red: int = 2, seed: int = 0, field_level=None) -> World:
    """A reproducible single-instance state for heat maps."""
    from .rules import spawn_episode
    level = cfg.curriculum.field_levels - 1 if field_level is None else field_level
    return spawn_episode(cfg, n_blue, n_red, cfg.curriculum.init_pos_levels - 1, level,
                         np.random.default_rng(seed))
