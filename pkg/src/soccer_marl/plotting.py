"""Figures written to files (Agg backend, no display needed)."""
from __future__ import annotations

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402
from matplotlib.patches import Rectangle  # noqa: E402

from .world import BLUE  # noqa: E402


def _field(ax, length, width, goal):
    ax.add_patch(Rectangle((-length / 2, -width / 2), length, width, fill=False, lw=1.0, color="0.3"))
    ax.plot([0, 0], [-width / 2, width / 2], color="0.6", lw=0.8)
    for x, c in ((-length / 2, "tab:blue"), (length / 2, "tab:red")):
        ax.plot([x, x], [-goal / 2, goal / 2], color=c, lw=4)
    ax.set_aspect("equal")
    ax.set_xlim(-length / 2 - 0.6, length / 2 + 0.6)
    ax.set_ylim(-width / 2 - 0.6, width / 2 + 0.6)


def plot_match_report(reports, path) -> None:
    """Outcome and ownership bars, one group per report."""
    names = [r.scenario for r in reports]
    x = np.arange(len(reports))
    fig, axes = plt.subplots(1, 2, figsize=(9, 3.5))
    for k, (key, color) in enumerate((("win", "tab:blue"), ("draw", "0.6"), ("loss", "tab:red"))):
        axes[0].bar(x + (k - 1) * 0.25, [getattr(r, key) for r in reports], 0.25, label=key, color=color)
    axes[0].set_ylabel("outcome (%)")
    axes[1].bar(x - 0.15, [r.ownership_blue for r in reports], 0.3, color="tab:blue", label="blue")
    axes[1].bar(x + 0.15, [r.ownership_red for r in reports], 0.3, color="tab:red", label="red")
    axes[1].set_ylabel("ball ownership (%)")
    for ax in axes:
        ax.set_xticks(x, names)
        ax.set_ylim(0, 100)
        ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def plot_heatmap(grid, world, path, subject="ball", viewer: int = 0, env: int = 0) -> None:
    L, W, G = (float(world.field_length[env]), float(world.field_width[env]),
               float(world.goal_width[env]))
    fig, ax = plt.subplots(figsize=(6, 4.2))
    im = ax.imshow(grid, origin="lower", extent=(-L / 2, L / 2, -W / 2, W / 2), cmap="viridis",
                   aspect="equal")
    _field(ax, L, W, G)
    act = world.active[env]
    for i in np.nonzero(act)[0]:
        if subject != "ball" and i == int(subject):
            continue
        c = "tab:blue" if world.team[i] == BLUE else "tab:red"
        ax.plot(*world.pos[env, i], "o", color=c, mec="k" if i == viewer else c, ms=8)
    if subject != "ball":
        ax.plot(*world.ball_pos[env], "o", color="w", mec="k", ms=5)
    fig.colorbar(im, ax=ax, label="value")
    ax.set_title(f"value of agent {viewer}, sweeping {subject}")
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def plot_trajectory(episode: dict, path) -> None:
    """Dotted agent and ball paths of one logged episode."""
    start = episode["start"]["state"]
    L, W, G = start["field_length"], start["field_width"], start["goal_width"]
    steps = episode["steps"]
    fig, ax = plt.subplots(figsize=(6, 4.2))
    _field(ax, L, W, G)
    if steps:
        pos = np.asarray([s["pos"] for s in steps])
        ball = np.asarray([s["ball_pos"] for s in steps])
        for i, (act, team) in enumerate(zip(start["active"], start["team"])):
            if act:
                ax.plot(pos[:, i, 0], pos[:, i, 1], ".", ms=2,
                        color="tab:blue" if team == BLUE else "tab:red")
        ax.plot(ball[:, 0], ball[:, 1], ".", ms=2, color="k")
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def plot_training_curve(history: list, path) -> None:
    ep = [m["epoch"] for m in history]
    fig, axes = plt.subplots(1, 2, figsize=(9, 3.2))
    axes[0].plot(ep, [m.get("winrate_bot", np.nan) for m in history])
    axes[0].set_ylabel("win rate vs bot")
    axes[1].plot(ep, [m.get("mean_reward", np.nan) for m in history])
    axes[1].set_ylabel("mean reward / step")
    for ax in axes:
        ax.set_xlabel("epoch")
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
