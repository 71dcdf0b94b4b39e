"""PPO trainer for the blue team.

One *epoch* is one rollout collection of ``horizon`` control steps in every
environment followed by ``epochs`` passes of minibatch PPO over the batch.
Every active blue agent in every instance contributes samples to the one
shared actor/critic.  Red is driven per episode by one adversary drawn
uniformly from the pool {scripted bot} + self-play snapshots.
"""
from __future__ import annotations

import collections
import csv
import dataclasses
import json
import logging
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import checkpoint as ckpt
from .config import Config, CurriculumConfig, TrainerConfig
from .env import SoccerEnv
from .neural import (NetDims, NetworkParams, beta_entropy, beta_entropy_grad, beta_log_prob,
                     beta_log_prob_grad, init_params, policy_backward, policy_forward,
                     sample_action, value_backward, value_forward)
from .opponents import bot_actions
from .perception import LOCAL_DIM, ObservationBundle, entity_dim
from .rewards import dense_gate
from .world import BLUE, BLUE_WIN, RED, RED_WIN, World

log = logging.getLogger(__name__)

BOT = -1


def make_dims(cfg: Config) -> NetDims:
    t = cfg.trainer
    return NetDims(LOCAL_DIM, entity_dim(cfg.observation), tuple(t.hidden_encoder),
                   t.encoder_out, tuple(t.hidden_policy))


# --- optimiser -------------------------------------------------------------

class Adam:
    def __init__(self, params: NetworkParams, lr: float, betas=(0.9, 0.999), eps: float = 1e-8):
        self.lr, self.b1, self.b2, self.eps = lr, betas[0], betas[1], eps
        self.m = {k: np.zeros_like(v) for k, v in params.arrays.items()}
        self.v = {k: np.zeros_like(v) for k, v in params.arrays.items()}
        self.t = 0

    def step(self, params: NetworkParams, grads: dict) -> None:
        self.t += 1
        c1 = 1.0 - self.b1 ** self.t
        c2 = 1.0 - self.b2 ** self.t
        for k, g in grads.items():
            m, v = self.m[k], self.v[k]
            m *= self.b1
            m += (1.0 - self.b1) * g
            v *= self.b2
            v += (1.0 - self.b2) * g * g
            p = params.arrays[k]
            p -= (self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)).astype(p.dtype)

    def state(self):
        return {k: (self.m[k].copy(), self.v[k].copy()) for k in self.m}, self.t

    def restore(self, state) -> None:
        moments, self.t = state
        for k, (m, v) in moments.items():
            self.m[k][...] = m
            self.v[k][...] = v


# --- advantages ------------------------------------------------------------

def compute_gae(rewards, values, dones, bootstraps, gamma: float, lam: float,
                last_value=None, terminal_values=None):
    """GAE over the leading (time) axis.

    ``values[t]`` is V(s_t); ``last_value`` is V of the state after the final
    step.  A step with ``bootstraps[t]`` set (time-limit end) bootstraps from
    ``terminal_values[t]`` (falling back to ``values[t+1]``) although its done
    flag stops the backward recursion.
    """
    rewards = np.asarray(rewards, dtype=np.float64)
    values = np.asarray(values, dtype=np.float64)
    dones = np.asarray(dones, dtype=bool)
    bootstraps = np.asarray(bootstraps, dtype=bool)
    T = rewards.shape[0]
    for name, arr in (("values", values), ("dones", dones), ("bootstraps", bootstraps)):
        if arr.shape[0] != T:
            raise ValueError(f"{name} has length {arr.shape[0]}, rewards {T}")
    last = np.zeros_like(values[0]) if last_value is None else np.asarray(last_value, dtype=np.float64)
    nxt = np.concatenate([values[1:], last[None]], axis=0)
    if terminal_values is not None:
        terminal_values = np.asarray(terminal_values, dtype=np.float64)
        if terminal_values.shape[0] != T:
            raise ValueError(f"terminal_values has length {terminal_values.shape[0]}, rewards {T}")
        nxt = np.where(bootstraps, terminal_values, nxt)
    keep = (~dones) | bootstraps
    delta = rewards + gamma * nxt * keep - values
    adv = np.zeros_like(values)
    acc = np.zeros_like(values[0])
    for t in range(T - 1, -1, -1):
        acc = delta[t] + gamma * lam * (~dones[t]) * acc
        adv[t] = acc
    return adv, adv + values


def normalize_advantages(adv):
    adv = np.asarray(adv, dtype=np.float64)
    return (adv - adv.mean()) / (adv.std() + 1e-12)


# --- rollouts --------------------------------------------------------------

@dataclass
class RolloutBuffer:
    """Samples laid out ``(T, E, n_blue_slots)``; ``valid`` marks slots with
    an active agent.  ``terminal_values`` holds V(s_T) for time-limit ends."""
    actor_obs: ObservationBundle
    critic_obs: ObservationBundle
    actions: np.ndarray
    log_probs: np.ndarray
    values: np.ndarray
    rewards: np.ndarray
    dones: np.ndarray
    bootstraps: np.ndarray
    terminal_values: np.ndarray
    valid: np.ndarray
    last_values: np.ndarray
    advantages: np.ndarray | None = None
    returns: np.ndarray | None = None

    @property
    def n_samples(self) -> int:
        return int(self.valid.sum())

    def finalize(self, gamma: float, lam: float, reward_scale: float = 1.0) -> None:
        """GAE over the stored rewards.  ``reward_scale`` only rescales the value
        targets; the environment rewards are stored untouched."""
        T, E, nb = self.rewards.shape
        d = np.broadcast_to(self.dones[..., None], (T, E, nb))
        b = np.broadcast_to(self.bootstraps[..., None], (T, E, nb))
        self.advantages, self.returns = compute_gae(self.rewards * reward_scale, self.values, d, b, gamma, lam,
                                                    self.last_values, self.terminal_values)

    def flat(self):
        """Valid samples in (t, env, slot) order."""
        sel = self.valid.reshape(-1)
        def pick(a):
            return a.reshape(-1, *a.shape[3:])[sel]
        return (ObservationBundle(*(pick(getattr(self.actor_obs, f)) for f in ObservationBundle.FIELDS)),
                ObservationBundle(*(pick(getattr(self.critic_obs, f)) for f in ObservationBundle.FIELDS)),
                pick(self.actions), pick(self.log_probs), pick(self.values),
                pick(self.advantages), pick(self.returns))


class WinRateTracker:
    """Rolling per-adversary window of results (1 win, 0 draw or loss)."""

    def __init__(self, window: int = 100):
        self.window = window
        self.results: dict = {}

    def record(self, adversary: int, won: bool) -> None:
        self.results.setdefault(adversary, collections.deque(maxlen=self.window)).append(1.0 if won else 0.0)

    def rate(self, adversary: int) -> float:
        r = self.results.get(adversary)
        return float(np.mean(r)) if r else 0.0

    def count(self, adversary: int) -> int:
        return len(self.results.get(adversary, ()))

    def average(self, adversaries) -> float:
        return float(np.mean([self.rate(a) for a in adversaries])) if len(adversaries) else 0.0

    def drop(self, adversary: int) -> None:
        self.results.pop(adversary, None)

    def clear(self) -> None:
        self.results.clear()

    def to_dict(self) -> dict:
        return {str(k): list(v) for k, v in self.results.items()}

    @classmethod
    def from_dict(cls, d: dict, window: int) -> "WinRateTracker":
        out = cls(window)
        for k, v in d.items():
            out.results[int(k)] = collections.deque(v, maxlen=window)
        return out


@dataclass
class CurriculumState:
    init_pos_level: np.ndarray
    field_level: np.ndarray
    team_sizes: list
    team_weights: np.ndarray
    snapshots: list = field(default_factory=list)       # frozen NetworkParams, oldest first
    snapshot_ids: list = field(default_factory=list)
    next_snapshot_id: int = 0
    dense_active: bool = True
    milestone_reached: bool = False
    tracker: WinRateTracker = field(default_factory=WinRateTracker)

    @classmethod
    def initial(cls, cfg: Config, n_envs: int) -> "CurriculumState":
        cur = cfg.curriculum
        sizes = [tuple(t) for t in cur.team_sizes]
        w = np.ones(len(sizes)) if cur.team_size_weights is None else np.asarray(cur.team_size_weights, float)
        return cls(np.full(n_envs, cur.init_pos_fixed or 0, dtype=np.int64),
                   np.full(n_envs, cur.field_level_fixed or 0, dtype=np.int64),
                   sizes, w / w.sum(), dense_active=cfg.reward.dense_active,
                   tracker=WinRateTracker(cur.winrate_window))

    @property
    def adversaries(self) -> list:
        return [BOT] + list(self.snapshot_ids)

    def snapshot(self, adversary: int) -> NetworkParams:
        return self.snapshots[self.snapshot_ids.index(adversary)]


def update_selfplay(state: CurriculumState, params: NetworkParams, cur: CurriculumConfig):
    """Promote the trainee when its average win rate over every adversary in
    the pool reaches the threshold.  Returns ``(state, promoted)``."""
    pool = state.adversaries
    if not cur.selfplay and state.milestone_reached:
        return state, False          # nothing left to promote into
    if any(state.tracker.count(a) < cur.min_episodes_for_promotion for a in pool):
        return state, False
    if state.tracker.average(pool) < cur.promotion_winrate:
        return state, False
    if not state.milestone_reached:
        state.milestone_reached = True
        if cur.dense_gate:
            state.dense_active = False
    if cur.selfplay:
        frozen = params.copy()
        for v in frozen.arrays.values():
            v.flags.writeable = False
        state.snapshots.append(frozen)
        state.snapshot_ids.append(state.next_snapshot_id)
        state.next_snapshot_id += 1
        while len(state.snapshots) > cur.selfplay_size:
            state.snapshots.pop(0)
            state.snapshot_ids.pop(0)
    state.tracker.clear()
    return state, True


def update_levels(state: CurriculumState, env: int, outcome: int, cur: CurriculumConfig) -> CurriculumState:
    """Win raises, loss lowers, draw keeps both levels of one instance."""
    step = 1 if outcome == BLUE_WIN else -1 if outcome == RED_WIN else 0
    if step:
        if cur.init_pos_fixed is None:
            state.init_pos_level[env] = np.clip(state.init_pos_level[env] + step, 0, cur.init_pos_levels - 1)
        if cur.field_level_fixed is None:
            state.field_level[env] = np.clip(state.field_level[env] + step, 0, cur.field_levels - 1)
    return state


def red_actions(env: SoccerEnv, state: CurriculumState, adversary: np.ndarray, rng) -> np.ndarray:
    """Actions of every red agent: bot rows from the script, snapshot rows
    from stochastic inference of the frozen policy."""
    cfg = env.cfg
    actions = np.zeros((env.n_envs, env.world.n_agents, 5))
    bot_envs = np.nonzero(adversary == BOT)[0]
    if len(bot_envs):
        sub = env.world.take(bot_envs)
        actions[bot_envs] = bot_actions(sub, RED, cfg.field, cfg.physics)
    for sid in np.unique(adversary[adversary != BOT]):
        envs = np.nonzero(adversary == sid)[0]
        obs, ei, si = env.observe(RED, "actor", rng, envs)
        if len(ei):
            snap = state.snapshot(int(sid))
            a, b = policy_forward(obs.astype(snap.dtype), snap)
            actions[ei, si] = sample_action(a, b, rng)[0]
    return actions


def sample_adversaries(state: CurriculumState, n: int, rng) -> np.ndarray:
    pool = np.asarray(state.adversaries)
    return pool[rng.integers(len(pool), size=n)]


def collect_rollouts(env: SoccerEnv, params: NetworkParams, state: CurriculumState,
                     adversary: np.ndarray, T: int, rng, cfg: Config, finished: list | None = None):
    """Step every instance ``T`` times.  Finished episodes update levels and
    the win-rate tracker, then respawn with a fresh adversary."""
    n_envs = env.n_envs
    blue = env.blue_slots
    nb = len(blue)
    slot_pos = np.full(env.world.n_agents, -1)
    slot_pos[blue] = np.arange(nb)
    dtype = params.dtype
    obs_shapes = None
    store = {}

    def alloc(bundle, key):
        store[key] = ObservationBundle(*(np.zeros((T, n_envs, nb) + getattr(bundle, f).shape[1:],
                                                  dtype=bool if f.endswith("mask") else dtype)
                                         for f in ObservationBundle.FIELDS))

    def put(key, t, ei, bj, bundle):
        for f in ObservationBundle.FIELDS:
            getattr(store[key], f)[t, ei, bj] = getattr(bundle, f)

    z = np.zeros((T, n_envs, nb))
    actions = np.zeros((T, n_envs, nb, 5), dtype=dtype)
    logp, values, rewards, term_values = z.copy(), z.copy(), z.copy(), z.copy()
    valid = np.zeros((T, n_envs, nb), dtype=bool)
    dones = np.zeros((T, n_envs), dtype=bool)
    boots = np.zeros((T, n_envs), dtype=bool)

    for t in range(T):
        obs_a, ei, si = env.observe(BLUE, "actor", rng)
        obs_c, _, _ = env.observe(BLUE, "critic")
        obs_a, obs_c = obs_a.astype(dtype), obs_c.astype(dtype)
        if obs_shapes is None:
            alloc(obs_a, "a")
            alloc(obs_c, "c")
            obs_shapes = True
        bj = slot_pos[si]
        alpha, beta = policy_forward(obs_a, params)
        act, lp = sample_action(alpha, beta, rng)
        v = value_forward(obs_c, params)
        put("a", t, ei, bj, obs_a)
        put("c", t, ei, bj, obs_c)
        actions[t, ei, bj] = act
        logp[t, ei, bj] = lp
        values[t, ei, bj] = v
        valid[t, ei, bj] = True

        full = red_actions(env, state, adversary, rng)
        full[ei, si] = act
        res = env.step(full)
        rewards[t] = res.rewards
        dones[t] = res.done
        boots[t] = res.timeout
        if res.timeout.any():
            tenv = np.nonzero(res.timeout)[0]
            o, te, ts = env.observe(BLUE, "critic", envs=tenv)
            term_values[t, te, slot_pos[ts]] = value_forward(o.astype(dtype), params)
        for e, stats in res.finished:
            state.tracker.record(int(adversary[e]), res.outcome[e] == BLUE_WIN)
            update_levels(state, e, int(res.outcome[e]), cfg.curriculum)
            if finished is not None:
                finished.append((int(adversary[e]), stats))
        done_envs = np.nonzero(res.done)[0]
        if len(done_envs):
            env.reset(done_envs)
            adversary[done_envs] = sample_adversaries(state, len(done_envs), rng)

    obs_c, ei, si = env.observe(BLUE, "critic")
    last = np.zeros((n_envs, nb))
    last[ei, slot_pos[si]] = value_forward(obs_c.astype(dtype), params)
    return RolloutBuffer(store["a"], store["c"], actions, logp, values, rewards, dones, boots,
                         term_values, valid, last)


# --- PPO -------------------------------------------------------------------

def _clip_grads(grads: dict, prefix: str, max_norm: float) -> float:
    keys = [k for k in grads if k.startswith(prefix)]
    norm = float(np.sqrt(sum(float(np.sum(np.square(grads[k], dtype=np.float64))) for k in keys)))
    if max_norm > 0 and norm > max_norm:
        scale = max_norm / (norm + 1e-12)
        for k in keys:
            grads[k] = grads[k] * np.asarray(scale, dtype=grads[k].dtype)
    return norm


def ppo_loss_and_grads(params: NetworkParams, obs_a, obs_c, actions, old_logp, adv, returns,
                       tcfg: TrainerConfig):
    """Clipped-surrogate + value + entropy loss on one minibatch and its
    analytic gradient."""
    n = len(adv)
    alpha, beta, pcache = policy_forward(obs_a, params, return_cache=True)
    value, vcache = value_forward(obs_c, params, return_cache=True)
    lp = beta_log_prob(actions, alpha, beta)
    ratio = np.exp(lp - old_logp)
    clipped = np.clip(ratio, 1.0 - tcfg.clip, 1.0 + tcfg.clip)
    surr = np.minimum(ratio * adv, clipped * adv)
    ent = beta_entropy(alpha, beta)
    v64 = value.astype(np.float64)
    pol_loss = -surr.mean()
    v_loss = np.mean((v64 - returns) ** 2)
    loss = pol_loss + tcfg.value_coef * v_loss - tcfg.entropy_coef * ent.mean()

    d_lp = -np.where(ratio * adv <= clipped * adv, ratio * adv, 0.0) / n
    ga, gb = beta_log_prob_grad(actions, alpha, beta)
    ea, eb = beta_entropy_grad(alpha, beta)
    d_alpha = d_lp[:, None] * ga - tcfg.entropy_coef / n * ea
    d_beta = d_lp[:, None] * gb - tcfg.entropy_coef / n * eb
    grads = policy_backward(d_alpha, d_beta, pcache, params)
    grads.update(value_backward(tcfg.value_coef * 2.0 * (v64 - returns) / n, vcache, params))
    info = {"loss": loss, "policy_loss": pol_loss, "value_loss": v_loss, "entropy": ent.mean(),
            "kl": np.mean((ratio - 1.0) - np.log(ratio)),
            "clip_frac": np.mean(np.abs(ratio - 1.0) > tcfg.clip)}
    return loss, grads, info


def ppo_update(params: NetworkParams, buffer: RolloutBuffer, tcfg: TrainerConfig, opt: Adam, rng):
    """Minibatch PPO over a finalized buffer.  Updates ``params`` in place and
    returns ``(params, metrics)``; a non-finite loss or gradient restores the
    parameters and optimiser state from before the update."""
    obs_a, obs_c, actions, old_lp, _, adv, ret = buffer.flat()
    adv = normalize_advantages(adv)
    n = len(adv)
    backup = params.copy(), opt.state()
    sums = collections.defaultdict(float)
    count = 0
    for _ in range(tcfg.epochs):
        order = rng.permutation(n)
        for mb in np.array_split(order, tcfg.minibatches):
            if len(mb) == 0:
                continue
            mb = np.sort(mb)
            loss, grads, info = ppo_loss_and_grads(params, obs_a.take(mb), obs_c.take(mb), actions[mb],
                                                   old_lp[mb], adv[mb], ret[mb], tcfg)
            if not np.isfinite(loss) or not all(np.all(np.isfinite(g)) for g in grads.values()):
                params.arrays.update(backup[0].arrays)
                opt.restore(backup[1])
                log.warning("non-finite PPO loss; update aborted and parameters restored")
                return params, {"aborted": True, "n_samples": n}
            info["grad_norm_actor"] = _clip_grads(grads, "actor.", tcfg.max_grad_norm)
            info["grad_norm_critic"] = _clip_grads(grads, "critic.", tcfg.max_grad_norm)
            opt.step(params, grads)
            for k, v in info.items():
                sums[k] += float(v)
            count += 1
    metrics = {k: v / max(count, 1) for k, v in sums.items()}
    metrics.update(aborted=False, n_samples=n)
    return params, metrics


# --- trainer ---------------------------------------------------------------

LOG_FIELDS = ("epoch", "policy_loss", "value_loss", "entropy", "kl", "clip_frac", "mean_reward",
              "episodes", "winrate_avg", "winrate_bot", "init_level", "field_level",
              "dense_active", "n_snapshots", "wall_time")


class Trainer:
    """Owns environments, parameters, optimiser and curriculum state."""

    def __init__(self, cfg: Config, seed: int = 0, n_envs: int | None = None):
        self.cfg = cfg
        self.seed = seed
        n_envs = n_envs or cfg.trainer.n_envs
        ss = np.random.SeedSequence(seed)
        s_env, s_net, s_train = ss.spawn(3)
        self.state = CurriculumState.initial(cfg, n_envs)
        self.env = SoccerEnv(cfg, n_envs, s_env, self.state.team_sizes, self.state.team_weights)
        self.env.init_level = self.state.init_pos_level
        self.env.field_level = self.state.field_level
        self.env.reset(np.arange(n_envs))      # respawn under the shared level arrays
        self.env.reward_cfg = dataclasses.replace(cfg.reward, dense_active=self.state.dense_active)
        self.dims = make_dims(cfg)
        self.params = init_params(self.dims, np.random.default_rng(s_net))
        self.opt = Adam(self.params, cfg.trainer.learning_rate)
        self.rng = np.random.default_rng(s_train)
        self.adversary = sample_adversaries(self.state, n_envs, self.rng)
        self.epoch = 0
        self.history: list = []
        self.recent: collections.deque = collections.deque(maxlen=500)

    def train_epoch(self) -> dict:
        t0 = time.perf_counter()
        tcfg = self.cfg.trainer
        finished: list = []
        buf = collect_rollouts(self.env, self.params, self.state, self.adversary, tcfg.horizon,
                               self.rng, self.cfg, finished)
        buf.finalize(tcfg.gamma, tcfg.gae_lambda, tcfg.reward_scale)
        _, metrics = ppo_update(self.params, buf, tcfg, self.opt, self.rng)
        self.recent.extend(finished)
        _, promoted = update_selfplay(self.state, self.params, self.cfg.curriculum)
        if promoted:
            log.info("epoch %d: trainee promoted (pool size %d, dense %s)", self.epoch,
                     len(self.state.snapshots), self.state.dense_active)
        self.env.reward_cfg = dense_gate(not self.state.dense_active, self.env.reward_cfg)
        self.epoch += 1
        metrics.update(epoch=self.epoch, mean_reward=float(buf.rewards[buf.valid].mean()),
                       episodes=len(finished),
                       winrate_avg=self.state.tracker.average(self.state.adversaries),
                       winrate_bot=self.state.tracker.rate(BOT),
                       init_level=float(self.state.init_pos_level.mean()),
                       field_level=float(self.state.field_level.mean()),
                       dense_active=int(self.state.dense_active),
                       n_snapshots=len(self.state.snapshots),
                       wall_time=time.perf_counter() - t0, promoted=promoted)
        self.history.append(metrics)
        return metrics

    def set_team_weights(self, weights) -> None:
        """Re-weight the team-size mix for episodes spawned from now on.
        The sizes themselves (and so the agent slots) stay fixed."""
        w = np.asarray(weights, dtype=float)
        if w.shape != (len(self.state.team_sizes),) or np.any(w < 0) or w.sum() <= 0:
            raise ValueError(f"need {len(self.state.team_sizes)} non-negative weights with a positive sum")
        self.state.team_weights = w / w.sum()
        self.env.team_weights = self.state.team_weights

    def train(self, n_epochs: int, log_path=None, checkpoint_dir=None, time_budget: float | None = None,
              callback=None) -> list:
        start = time.perf_counter()
        writer = None
        fh = None
        if log_path is not None:
            new = not Path(log_path).exists()
            fh = open(log_path, "a", newline="")
            writer = csv.DictWriter(fh, fieldnames=LOG_FIELDS, extrasaction="ignore")
            if new:
                writer.writeheader()
        try:
            for _ in range(n_epochs):
                m = self.train_epoch()
                if writer is not None:
                    writer.writerow(m)
                    fh.flush()
                if checkpoint_dir is not None and self.epoch % self.cfg.trainer.checkpoint_every == 0:
                    self.save(Path(checkpoint_dir) / f"epoch_{self.epoch:06d}.ckpt")
                if callback is not None:
                    callback(self, m)
                if time_budget is not None and time.perf_counter() - start > time_budget:
                    break
        finally:
            if fh is not None:
                fh.close()
        return self.history

    def touch_rate(self) -> float:
        """Blue ball touches per simulated second over recent episodes."""
        eps = [s for _, s in self.recent]
        dur = sum(s.duration for s in eps)
        return sum(s.touches_blue for s in eps) / dur if dur > 0 else 0.0

    # --- persistence ---

    def save(self, path) -> None:
        """Full training state; :meth:`load` resumes bit-exactly."""
        env, st = self.env, self.state
        blocks = ckpt.params_to_blocks(self.params)
        for k in self.params.arrays:
            blocks[f"adam.m.{k}"] = self.opt.m[k].astype("<f4")
            blocks[f"adam.v.{k}"] = self.opt.v[k].astype("<f4")
        for sid, snap in zip(st.snapshot_ids, st.snapshots):
            blocks.update(ckpt.params_to_blocks(snap, prefix=f"snap.{sid}."))
        w = env.world
        for f in World.ARRAY_FIELDS:
            blocks[f"world.{f}"] = getattr(w, f)
        blocks["world.team"] = w.team
        blocks["hist.poses"] = env.history.poses
        blocks["hist.valid"] = env.history.valid
        blocks["owner.agent"] = env.last_owner.owner_agent
        blocks["owner.team"] = env.last_owner.owner_team
        blocks["stats.own_blue"] = env.stats.own_blue
        blocks["stats.own_red"] = env.stats.own_red
        blocks["stats.counts"] = env.stats.counts
        blocks["env.episode_count"] = env.episode_count
        blocks["cur.init_pos_level"] = st.init_pos_level
        blocks["cur.field_level"] = st.field_level
        blocks["adversary"] = self.adversary
        meta = {"kind": "training", "dims": self.dims.to_dict(), "dense_active": st.dense_active,
                "milestone_reached": st.milestone_reached, "epoch": self.epoch, "seed": self.seed,
                "adam_t": self.opt.t, "config": self.cfg.to_dict(),
                "snapshot_ids": st.snapshot_ids, "next_snapshot_id": st.next_snapshot_id,
                "tracker": st.tracker.to_dict(), "team_sizes": [list(t) for t in st.team_sizes],
                "team_weights": st.team_weights.tolist(),
                "rng": self.rng.bit_generator.state,
                "env_rngs": [r.bit_generator.state for r in env.rngs]}
        ckpt.write_blocks(path, blocks, meta)

    @classmethod
    def load(cls, path, cfg: Config | None = None) -> "Trainer":
        blocks, meta = ckpt.read_blocks(path)
        if meta.get("kind") != "training":
            raise ckpt.CheckpointError(f"{path}: not a training checkpoint (kind={meta.get('kind')!r})")
        cfg = cfg or Config.from_dict(meta["config"])
        n_envs = len(meta["env_rngs"])
        self = cls(cfg, meta["seed"], n_envs)
        dims = NetDims.from_dict(meta["dims"])
        self.dims = dims
        self.params = ckpt.params_from_blocks(blocks, dims)
        self.opt = Adam(self.params, cfg.trainer.learning_rate)
        self.opt.t = int(meta["adam_t"])
        for k in self.params.arrays:
            self.opt.m[k] = blocks[f"adam.m.{k}"]
            self.opt.v[k] = blocks[f"adam.v.{k}"]
        st = self.state
        st.snapshot_ids = [int(s) for s in meta["snapshot_ids"]]
        st.snapshots = []
        for sid in st.snapshot_ids:
            snap = ckpt.params_from_blocks(blocks, dims, prefix=f"snap.{sid}.")
            for v in snap.arrays.values():
                v.flags.writeable = False
            st.snapshots.append(snap)
        st.next_snapshot_id = int(meta["next_snapshot_id"])
        st.dense_active = bool(meta["dense_active"])
        st.milestone_reached = bool(meta["milestone_reached"])
        st.tracker = WinRateTracker.from_dict(meta["tracker"], cfg.curriculum.winrate_window)
        st.team_sizes = [tuple(t) for t in meta["team_sizes"]]
        st.team_weights = np.asarray(meta["team_weights"])
        st.init_pos_level[:] = blocks["cur.init_pos_level"]
        st.field_level[:] = blocks["cur.field_level"]
        env = self.env
        for f in World.ARRAY_FIELDS:
            setattr(env.world, f, blocks[f"world.{f}"])
        env.world.team = blocks["world.team"]
        env.history.poses = blocks["hist.poses"]
        env.history.valid = blocks["hist.valid"]
        env.last_owner.owner_agent = blocks["owner.agent"]
        env.last_owner.owner_team = blocks["owner.team"]
        env.stats.own_blue = blocks["stats.own_blue"]
        env.stats.own_red = blocks["stats.own_red"]
        env.stats.counts = blocks["stats.counts"]
        env.episode_count = blocks["env.episode_count"]
        env.reward_cfg = dataclasses.replace(cfg.reward, dense_active=st.dense_active)
        self.adversary = blocks["adversary"]
        self.epoch = int(meta["epoch"])
        self.rng.bit_generator.state = meta["rng"]
        for r, s in zip(env.rngs, meta["env_rngs"]):
            r.bit_generator.state = s
        return self

    def export_policy(self, path) -> None:
        ckpt.save_policy(path, self.params, self.state.dense_active, {"epoch": self.epoch})


def policy_from_checkpoint(path) -> NetworkParams:
    params, _ = ckpt.load_policy(path)
    return params
