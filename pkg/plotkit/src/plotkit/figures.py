"""Renders the seven figure families from exported CSVs.

Input schemas mirror the exporter exactly:

reward / error   episode,reward,td_error,adv_error,actor_loss,critic_loss
traj             seed,episode,uav,slot,x_m,y_m,alt_m
phase            seed,episode,slot,row,col,phase
votes            seed,episode,slot,uav,vote,scheduled_gt
ma               seed,episode,slot,uav,ma
cdf              seed,uav,throughput_bits,total_time_s,throughput_kbps,
                 energy_j,energy_kj

Multiple input files of the same kind are treated as seeds/runs and drawn as
a mean line with a shaded min/max band.  Figures are deterministic for fixed
inputs: a fixed style, no timestamps in metadata.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np
import pandas as pd

FIGURE_KINDS = ("reward", "error", "traj", "phase", "votes", "ma", "cdf")

REQUIRED_COLUMNS = {
    "reward": ["episode", "reward"],
    "error": ["episode", "td_error", "adv_error"],
    "traj": ["uav", "slot", "x_m", "y_m", "alt_m"],
    "phase": ["slot", "row", "col", "phase"],
    "votes": ["slot", "uav", "vote", "scheduled_gt"],
    "ma": ["slot", "uav", "ma"],
    "cdf": ["uav", "throughput_kbps", "energy_kj"],
}

_SAVE_OPTS = dict(dpi=120, metadata={"Software": "plotkit"})


class SchemaError(ValueError):
    pass


@dataclass
class FigureSpec:
    kind: str
    inputs: list[Path]
    output: Path
    smoothing: int = 10
    slot: int | None = None
    uav: int | None = None
    labels: list[str] = field(default_factory=list)

    def __post_init__(self):
        if self.kind not in FIGURE_KINDS:
            raise SchemaError(f"unknown figure kind {self.kind!r}; choose from {FIGURE_KINDS}")
        if not self.inputs:
            raise SchemaError("at least one input CSV is required")
        self.inputs = [Path(p) for p in self.inputs]
        self.output = Path(self.output)


def _load(spec: FigureSpec) -> list[pd.DataFrame]:
    frames = []
    for path in spec.inputs:
        if not path.exists():
            raise SchemaError(f"input file {path} does not exist")
        df = pd.read_csv(path)
        missing = [c for c in REQUIRED_COLUMNS[spec.kind] if c not in df.columns]
        if missing:
            raise SchemaError(f"{path} is missing columns {missing} for kind {spec.kind!r}")
        frames.append(df)
    return frames


def moving_average(values: np.ndarray, window: int) -> np.ndarray:
    """Centered moving average with edge shrinkage; window <= 1 is identity."""
    if window <= 1 or len(values) == 0:
        return np.asarray(values, dtype=float)
    half = window // 2
    out = np.empty(len(values), dtype=float)
    for i in range(len(values)):
        lo = max(0, i - half)
        hi = min(len(values), i + half + 1)
        out[i] = float(np.mean(values[lo:hi]))
    return out


def aggregate_series(
    frames: list[pd.DataFrame], x_col: str, y_col: str, window: int
) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """Align runs on the common x prefix; smoothed per-run, then mean/min/max."""
    n = min(len(f) for f in frames)
    x = frames[0][x_col].to_numpy()[:n]
    stack = np.stack([moving_average(f[y_col].to_numpy()[:n], window) for f in frames])
    return x, stack.mean(axis=0), stack.min(axis=0), stack.max(axis=0)


def compute_cdf(values: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Empirical CDF support points; y is nondecreasing and ends at 1."""
    xs = np.sort(np.asarray(values, dtype=float))
    ys = np.arange(1, len(xs) + 1) / max(1, len(xs))
    return xs, ys


def _band_plot(ax, frames, x_col, y_col, window, label=None):
    if any(len(f) == 0 for f in frames) or min(len(f) for f in frames) == 0:
        return
    x, mean, lo, hi = aggregate_series(frames, x_col, y_col, window)
    (line,) = ax.plot(x, mean, label=label)
    if len(frames) > 1:
        ax.fill_between(x, lo, hi, alpha=0.25, color=line.get_color())


def _render_reward(spec: FigureSpec, frames) -> plt.Figure:
    fig, ax = plt.subplots(figsize=(6, 4))
    _band_plot(ax, frames, "episode", "reward", spec.smoothing)
    ax.set_xlabel("episode")
    ax.set_ylabel("fleet reward")
    ax.set_title(f"reward (moving average, window {spec.smoothing})")
    ax.grid(True, alpha=0.3)
    return fig


def _render_error(spec: FigureSpec, frames) -> plt.Figure:
    fig, axes = plt.subplots(1, 2, figsize=(10, 4))
    for ax, col, title in zip(axes, ["td_error", "adv_error"], ["TD error", "advantage error"]):
        _band_plot(ax, frames, "episode", col, spec.smoothing)
        ax.set_xlabel("episode")
        ax.set_ylabel(col)
        ax.set_title(f"{title} (window {spec.smoothing})")
        ax.grid(True, alpha=0.3)
    return fig


def _render_traj(spec: FigureSpec, frames) -> plt.Figure:
    df = pd.concat(frames, ignore_index=True)
    fig = plt.figure(figsize=(11, 5))
    ax2d = fig.add_subplot(1, 2, 1)
    ax3d = fig.add_subplot(1, 2, 2, projection="3d")
    uavs = sorted(df["uav"].unique()) if spec.uav is None else [spec.uav]
    for uav in uavs:
        track = df[df["uav"] == uav].sort_values("slot")
        if len(track) == 0:
            continue
        ax2d.plot(track["x_m"], track["y_m"], marker=".", label=f"uav {uav}")
        ax3d.plot(track["x_m"], track["y_m"], track["alt_m"])
    ax2d.set_xlabel("x (m)")
    ax2d.set_ylabel("y (m)")
    ax2d.set_title("horizontal track")
    ax2d.grid(True, alpha=0.3)
    if uavs:
        ax2d.legend(fontsize=7)
    ax3d.set_xlabel("x (m)")
    ax3d.set_ylabel("y (m)")
    ax3d.set_zlabel("altitude (m)")
    ax3d.set_title("3D track")
    return fig


def _render_phase(spec: FigureSpec, frames) -> plt.Figure:
    df = pd.concat(frames, ignore_index=True)
    fig, ax = plt.subplots(figsize=(5.5, 4.5))
    if len(df) == 0:
        ax.set_title("surface phases (no data)")
        return fig
    slot = spec.slot if spec.slot is not None else int(df["slot"].max())
    sel = df[df["slot"] == slot]
    if len(sel) == 0:
        raise SchemaError(f"no phase rows for slot {slot}")
    rows = int(sel["row"].max()) + 1
    cols = int(sel["col"].max()) + 1
    grid = np.zeros((rows, cols))
    for _, r in sel.iterrows():
        grid[int(r["row"]), int(r["col"])] = r["phase"]
    im = ax.imshow(grid, cmap="twilight", vmin=-np.pi, vmax=np.pi, origin="lower")
    fig.colorbar(im, ax=ax, label="phase (rad)")
    ax.set_xlabel("column")
    ax.set_ylabel("row")
    ax.set_title(f"aggregated surface phases, slot {slot}")
    return fig


def _render_votes(spec: FigureSpec, frames) -> plt.Figure:
    df = pd.concat(frames, ignore_index=True)
    fig, ax = plt.subplots(figsize=(8, 4))
    if len(df) == 0:
        ax.set_title("votes (no data)")
        return fig
    slots = int(df["slot"].max()) + 1
    gts = int(max(df["vote"].max(), df["scheduled_gt"].max())) + 1
    counts = np.zeros((gts, slots))
    for _, r in df.iterrows():
        counts[int(r["vote"]), int(r["slot"])] += 1
    im = ax.imshow(counts, aspect="auto", cmap="Blues", origin="lower")
    fig.colorbar(im, ax=ax, label="votes")
    mode = df.groupby("slot")["scheduled_gt"].first()
    ax.plot(mode.index.to_numpy(), mode.to_numpy(), color="red", lw=1.5, label="scheduled")
    ax.set_xlabel("slot")
    ax.set_ylabel("terminal")
    ax.set_title("per-slot votes and scheduled terminal")
    ax.legend(fontsize=8)
    return fig


def _render_ma(spec: FigureSpec, frames) -> plt.Figure:
    df = pd.concat(frames, ignore_index=True)
    fig, ax = plt.subplots(figsize=(8, 4))
    if len(df) == 0:
        ax.set_title("antenna selection (no data)")
        return fig
    uavs = sorted(df["uav"].unique()) if spec.uav is None else [spec.uav]
    for uav in uavs:
        track = df[df["uav"] == uav].sort_values("slot")
        ax.step(track["slot"], track["ma"], where="mid", label=f"uav {uav}")
    ax.set_xlabel("slot")
    ax.set_ylabel("antenna slot index")
    ax.set_yticks(sorted(df["ma"].unique()))
    ax.set_title("movable-antenna selection over time")
    ax.legend(fontsize=7)
    ax.grid(True, alpha=0.3)
    return fig


def _render_cdf(spec: FigureSpec, frames) -> plt.Figure:
    fig, axes = plt.subplots(1, 2, figsize=(10, 4))
    labels = spec.labels or [p.stem for p in spec.inputs]
    for ax, col, title in zip(
        axes, ["throughput_kbps", "energy_kj"], ["throughput (kbps)", "propulsion energy (kJ)"]
    ):
        for frame, label in zip(frames, labels):
            if len(frame) == 0:
                continue
            xs, ys = compute_cdf(frame[col].to_numpy())
            ax.step(np.concatenate([[xs[0]], xs]), np.concatenate([[0.0], ys]), where="post", label=label)
        ax.set_xlabel(title)
        ax.set_ylabel("CDF")
        ax.set_ylim(0, 1.05)
        ax.grid(True, alpha=0.3)
        ax.legend(fontsize=8)
    return fig


_RENDERERS = {
    "reward": _render_reward,
    "error": _render_error,
    "traj": _render_traj,
    "phase": _render_phase,
    "votes": _render_votes,
    "ma": _render_ma,
    "cdf": _render_cdf,
}


def render(spec: FigureSpec) -> Path:
    """Render one figure kind to the spec's output path."""
    frames = _load(spec)
    fig = _RENDERERS[spec.kind](spec, frames)
    spec.output.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(spec.output, **_SAVE_OPTS)
    plt.close(fig)
    return spec.output
