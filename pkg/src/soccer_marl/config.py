"""Pipeline configuration.

Every tunable constant of the simulator, observation model, rewards, trainer,
curricula and evaluation lives here.  A config file is a YAML document whose
top-level sections mirror the dataclasses below::

    field:       FieldGeometry
    physics:     PhysicsConfig
    observation: ObservationConfig
    reward:      RewardConfig
    trainer:     TrainerConfig
    curriculum:  CurriculumConfig
    evaluation:  EvaluationConfig

Missing keys fall back to the defaults; unknown keys are rejected.
"""
from __future__ import annotations

import dataclasses
from dataclasses import dataclass
from dataclasses import field as dc_field
from pathlib import Path
from typing import Any

import yaml


class ConfigError(ValueError):
    pass


@dataclass
class FieldGeometry:
    field_length: float = 9.0
    field_width: float = 6.0
    goal_width: float = 1.5
    wall_offset: float = 0.5
    kickable_radius: float = 0.3
    ownership_radius: float = 0.25
    agent_radius: float = 0.15
    ball_radius: float = 0.05

    def __post_init__(self):
        for f in dataclasses.fields(self):
            if not getattr(self, f.name) > 0:
                raise ConfigError(f"field.{f.name} must be > 0")
        if self.goal_width >= self.field_width:
            raise ConfigError("field.goal_width must be smaller than field.field_width")
        if self.ownership_radius <= self.ball_radius:
            raise ConfigError("field.ownership_radius must exceed field.ball_radius")

    def scaled(self, scale: float) -> "FieldGeometry":
        """Field and goal shrunk by ``scale``; body sizes and radii unchanged."""
        return dataclasses.replace(
            self,
            field_length=self.field_length * scale,
            field_width=self.field_width * scale,
            goal_width=self.goal_width * scale,
        )


@dataclass
class PhysicsConfig:
    dt: float = 0.1
    substeps: int = 4
    agent_mass: float = 5.0
    agent_inertia: float = 0.05625
    ball_mass: float = 0.05
    max_speed: float = 1.5
    max_angular_speed: float = 4.0
    max_kick_speed: float = 4.0
    ball_half_life: float = 1.5
    wall_restitution: float = 0.2
    agent_restitution: float = 0.2
    ball_restitution: float = 0.5
    # PD velocity tracking; the derivative gain acts on the agent's own acceleration
    kp_linear: float = 100.0
    kd_linear: float = 0.5
    kp_angular: float = 1.125
    kd_angular: float = 0.005
    max_force: float = 40.0
    max_torque: float = 1.2
    episode_limit: float = 30.0

    def __post_init__(self):
        if self.dt <= 0 or self.substeps < 1:
            raise ConfigError("physics.dt must be > 0 and physics.substeps >= 1")
        for name in ("wall_restitution", "agent_restitution", "ball_restitution"):
            if not 0.0 <= getattr(self, name) <= 1.0:
                raise ConfigError(f"physics.{name} must lie in [0, 1]")


@dataclass
class ObservationConfig:
    history_len: int = 2
    n_max_neighbors: int = 3
    count_clamp: int = 3
    noise_pose: float = 0.002
    noise_velocity: float = 0.005
    noise_ball_position: float = 0.002
    noise_ball_velocity: float = 0.005
    noise_neighbor: float = 0.002
    # frame of the ball position entry: "world" (team frame) or "ego"
    ball_frame: str = "world"

    def __post_init__(self):
        if self.history_len < 1 or self.n_max_neighbors < 1:
            raise ConfigError("observation.history_len and n_max_neighbors must be >= 1")
        if self.ball_frame not in ("world", "ego"):
            raise ConfigError("observation.ball_frame must be 'world' or 'ego'")


@dataclass
class RewardConfig:
    score: float = 100.0
    ball_outside: float = 1.0
    collision: float = 1.0
    ball2goal_velocity: float = 2.0
    base2ball_velocity: float = 0.5
    ball_direction: float = 0.025
    direction_sigma: float = 0.4
    far_threshold: float = 0.5
    dense_active: bool = True

    def __post_init__(self):
        for name in ("score", "ball_outside", "collision", "ball2goal_velocity",
                     "base2ball_velocity", "ball_direction"):
            if getattr(self, name) < 0:
                raise ConfigError(f"reward.{name} must be non-negative")


@dataclass
class TrainerConfig:
    gamma: float = 0.99
    gae_lambda: float = 0.95
    clip: float = 0.2
    learning_rate: float = 3e-4
    epochs: int = 5
    minibatches: int = 4
    entropy_coef: float = 0.005
    value_coef: float = 0.5
    max_grad_norm: float = 1.0
    horizon: int = 24
    reward_scale: float = 0.01     # value targets in units of one goal
    n_envs: int = 64
    total_epochs: int = 1000
    checkpoint_every: int = 100
    hidden_encoder: tuple = (64, 32)
    encoder_out: int = 16
    hidden_policy: tuple = (128, 128, 128)

    def __post_init__(self):
        if not (0 < self.gamma <= 1 and 0 < self.gae_lambda <= 1):
            raise ConfigError("trainer.gamma and trainer.gae_lambda must lie in (0, 1]")
        if self.clip <= 0:
            raise ConfigError("trainer.clip must be > 0")
        self.hidden_encoder = tuple(int(h) for h in self.hidden_encoder)
        self.hidden_policy = tuple(int(h) for h in self.hidden_policy)


@dataclass
class CurriculumConfig:
    init_pos_levels: int = 5
    field_levels: int = 5
    field_scale_min: float = 0.6
    # field level used for every env when the field curriculum is off
    field_level_fixed: int | None = None
    init_pos_fixed: int | None = None
    ball_band_min: float = 0.25
    team_sizes: list = dc_field(default_factory=lambda: [[1, 1], [2, 2], [3, 3], [2, 1], [3, 2]])
    team_size_weights: list | None = None
    selfplay: bool = True
    selfplay_size: int = 8
    promotion_winrate: float = 0.75
    winrate_window: int = 100
    min_episodes_for_promotion: int = 20
    dense_gate: bool = True

    def __post_init__(self):
        self.team_sizes = [tuple(int(n) for n in ts) for ts in self.team_sizes]
        for nb, nr in self.team_sizes:
            if nb < 1 or nr < 1:
                raise ConfigError("curriculum.team_sizes entries must be >= 1 per team")
        if self.team_size_weights is not None and len(self.team_size_weights) != len(self.team_sizes):
            raise ConfigError("curriculum.team_size_weights must match team_sizes")
        if self.init_pos_levels < 1 or self.field_levels < 1:
            raise ConfigError("curriculum level counts must be >= 1")

    @property
    def max_blue(self) -> int:
        return max(nb for nb, _ in self.team_sizes)

    @property
    def max_red(self) -> int:
        return max(nr for _, nr in self.team_sizes)


@dataclass
class EvaluationConfig:
    duration: float = 600.0
    n_blue: int = 3
    n_red: int = 3
    deterministic: bool = True
    field_level: int | None = None


@dataclass
class Config:
    field: FieldGeometry = dc_field(default_factory=FieldGeometry)
    physics: PhysicsConfig = dc_field(default_factory=PhysicsConfig)
    observation: ObservationConfig = dc_field(default_factory=ObservationConfig)
    reward: RewardConfig = dc_field(default_factory=RewardConfig)
    trainer: TrainerConfig = dc_field(default_factory=TrainerConfig)
    curriculum: CurriculumConfig = dc_field(default_factory=CurriculumConfig)
    evaluation: EvaluationConfig = dc_field(default_factory=EvaluationConfig)

    def to_dict(self) -> dict[str, Any]:
        out = dataclasses.asdict(self)
        out["trainer"]["hidden_encoder"] = list(self.trainer.hidden_encoder)
        out["trainer"]["hidden_policy"] = list(self.trainer.hidden_policy)
        out["curriculum"]["team_sizes"] = [list(t) for t in self.curriculum.team_sizes]
        return out

    @classmethod
    def from_dict(cls, data: dict[str, Any] | None) -> "Config":
        data = dict(data or {})
        sections = {f.name: f.type for f in dataclasses.fields(cls)}
        unknown = set(data) - set(sections)
        if unknown:
            raise ConfigError(f"unknown config sections: {sorted(unknown)}")
        kwargs = {}
        for f in dataclasses.fields(cls):
            sub_cls = f.default_factory
            values = data.get(f.name) or {}
            if not isinstance(values, dict):
                raise ConfigError(f"section {f.name!r} must be a mapping")
            names = {g.name for g in dataclasses.fields(sub_cls)}
            bad = set(values) - names
            if bad:
                raise ConfigError(f"unknown keys in {f.name}: {sorted(bad)}")
            kwargs[f.name] = sub_cls(**values)
        return cls(**kwargs)


def load_config(path: str | Path | None) -> Config:
    if path is None:
        return Config()
    with open(path) as fh:
        data = yaml.safe_load(fh)
    return Config.from_dict(data)


def save_config(cfg: Config, path: str | Path) -> None:
    with open(path, "w") as fh:
        yaml.safe_dump(cfg.to_dict(), fh, sort_keys=False)
