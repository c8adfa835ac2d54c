"""CSV writers for run artifacts.

All files are comma-separated with a header row, UTF-8, '.' decimal
separator, and deterministic row order; floats are written with shortest
round-trip formatting so identical runs produce byte-identical files.

Schemas
-------
metrics.csv       episode,reward,td_error,adv_error,actor_loss,critic_loss
eval.csv          seed,episode,slot,uav,x_cell,y_cell,level,ma,vote,
                  scheduled_gt,slot_time,v_h,v_v,energy_j,rate_bps,
                  delivered_bits,reward
phases.csv        seed,episode,slot,row,col,phase
trajectories.csv  seed,episode,uav,slot,x_m,y_m,alt_m
votes.csv         seed,episode,slot,uav,vote,scheduled_gt
ma.csv            seed,episode,slot,uav,ma
cdf.csv           seed,uav,throughput_bits,total_time_s,throughput_kbps,
                  energy_j,energy_kj
"""

from __future__ import annotations

import csv
from pathlib import Path

import numpy as np

from .config import ExperimentConfig
from .training import EpisodeMetrics, EvalEpisode

EXPORT_KINDS = ("metrics", "trajectories", "phases", "votes", "ma", "cdf")


def _fmt(value) -> str:
    if isinstance(value, (bool, np.bool_)):
        return str(int(value))
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    return repr(float(value))


def _write(path: Path, header: list[str], rows) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for row in rows:
            writer.writerow([_fmt(v) for v in row])
    return path


METRICS_HEADER = ["episode", "reward", "td_error", "adv_error", "actor_loss", "critic_loss"]


def write_metrics(path: Path, metrics: list[EpisodeMetrics]) -> Path:
    return _write(
        path,
        METRICS_HEADER,
        (
            (m.episode, m.reward, m.td_error, m.adv_error, m.actor_loss, m.critic_loss)
            for m in metrics
        ),
    )


class MetricsStream:
    """Appends one metrics row per episode as training progresses."""

    def __init__(self, path: Path):
        self.path = Path(path)
        self.path.parent.mkdir(parents=True, exist_ok=True)
        with open(self.path, "w", newline="", encoding="utf-8") as fh:
            csv.writer(fh).writerow(METRICS_HEADER)

    def append(self, m: EpisodeMetrics) -> None:
        row = (m.episode, m.reward, m.td_error, m.adv_error, m.actor_loss, m.critic_loss)
        with open(self.path, "a", newline="", encoding="utf-8") as fh:
            csv.writer(fh).writerow([_fmt(v) for v in row])


def write_eval(path: Path, episodes: list[EvalEpisode]) -> Path:
    def rows():
        for ep in episodes:
            log = ep.log
            for slot in range(log.num_slots):
                rates = log.rates[slot]
                k = log.scheduled[slot]
                for j in range(len(log.rewards[slot])):
                    t_j = log.slot_times[slot][j]
                    yield (
                        ep.seed, ep.episode, slot, j,
                        int(log.cells[slot][j][0]), int(log.cells[slot][j][1]),
                        int(log.levels[slot][j]), int(log.ma[slot][j]),
                        int(log.votes[slot][j]), k,
                        t_j, log.speeds_h[slot][j], log.speeds_v[slot][j],
                        log.energies[slot][j], rates[k], t_j * rates[k],
                        log.rewards[slot][j],
                    )

    return _write(
        path,
        [
            "seed", "episode", "slot", "uav", "x_cell", "y_cell", "level", "ma",
            "vote", "scheduled_gt", "slot_time", "v_h", "v_v", "energy_j",
            "rate_bps", "delivered_bits", "reward",
        ],
        rows(),
    )


def write_phases(path: Path, episodes: list[EvalEpisode], rows_cols: tuple[int, int]) -> Path:
    n_rows, n_cols = rows_cols

    def rows():
        for ep in episodes:
            for slot, angles in enumerate(ep.log.phase_angles):
                grid = np.asarray(angles).reshape(n_rows, n_cols)
                for r in range(n_rows):
                    for c in range(n_cols):
                        yield (ep.seed, ep.episode, slot, r, c, grid[r, c])

    return _write(path, ["seed", "episode", "slot", "row", "col", "phase"], rows())


# -- derived exports from eval.csv ------------------------------------------


def _read_csv(path: Path) -> tuple[list[str], list[list[str]]]:
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        return header, list(reader)


def export_trajectories(run_dir: Path, cfg: ExperimentConfig, out: Path) -> Path:
    header, rows = _read_csv(run_dir / "eval.csv")
    col = {name: i for i, name in enumerate(header)}

    def derived():
        for r in rows:
            yield (
                int(r[col["seed"]]), int(r[col["episode"]]), int(r[col["uav"]]),
                int(r[col["slot"]]),
                int(r[col["x_cell"]]) * cfg.cell_size,
                int(r[col["y_cell"]]) * cfg.cell_size,
                int(r[col["level"]]) * cfg.level_size,
            )

    ordered = sorted(derived(), key=lambda t: (t[0], t[1], t[2], t[3]))
    return _write(out, ["seed", "episode", "uav", "slot", "x_m", "y_m", "alt_m"], ordered)


def export_votes(run_dir: Path, out: Path) -> Path:
    header, rows = _read_csv(run_dir / "eval.csv")
    col = {name: i for i, name in enumerate(header)}
    derived = (
        (int(r[col["seed"]]), int(r[col["episode"]]), int(r[col["slot"]]),
         int(r[col["uav"]]), int(r[col["vote"]]), int(r[col["scheduled_gt"]]))
        for r in rows
    )
    return _write(out, ["seed", "episode", "slot", "uav", "vote", "scheduled_gt"], derived)


def export_ma(run_dir: Path, out: Path) -> Path:
    header, rows = _read_csv(run_dir / "eval.csv")
    col = {name: i for i, name in enumerate(header)}
    derived = (
        (int(r[col["seed"]]), int(r[col["episode"]]), int(r[col["slot"]]),
         int(r[col["uav"]]), int(r[col["ma"]]))
        for r in rows
    )
    return _write(out, ["seed", "episode", "slot", "uav", "ma"], derived)


def export_cdf(run_dir: Path, out: Path) -> Path:
    """Per-UAV totals over all evaluated episodes of one seed."""
    header, rows = _read_csv(run_dir / "eval.csv")
    col = {name: i for i, name in enumerate(header)}
    totals: dict[tuple[int, int], dict[str, float]] = {}
    for r in rows:
        key = (int(r[col["seed"]]), int(r[col["uav"]]))
        agg = totals.setdefault(key, {"bits": 0.0, "time": 0.0, "energy": 0.0})
        agg["bits"] += float(r[col["delivered_bits"]])
        agg["time"] += float(r[col["slot_time"]])
        agg["energy"] += float(r[col["energy_j"]])

    def derived():
        for (seed, uav), agg in sorted(totals.items()):
            kbps = agg["bits"] / agg["time"] / 1e3 if agg["time"] > 0 else 0.0
            yield (seed, uav, agg["bits"], agg["time"], kbps, agg["energy"], agg["energy"] / 1e3)

    return _write(
        out,
        ["seed", "uav", "throughput_bits", "total_time_s", "throughput_kbps", "energy_j", "energy_kj"],
        derived(),
    )


def export(run_dir: Path, what: str, out_path: Path | None = None, cfg: ExperimentConfig | None = None) -> Path:
    """Materialize one named export from a completed run directory."""
    run_dir = Path(run_dir)
    if what not in EXPORT_KINDS:
        raise ValueError(f"unknown export kind {what!r}; choose from {EXPORT_KINDS}")
    out = Path(out_path) if out_path else run_dir / f"{what}.csv"
    if what == "metrics":
        src = run_dir / "metrics.csv"
        if not src.exists():
            raise FileNotFoundError(f"{src} is missing; run training first")
        if out != src:
            out.write_bytes(src.read_bytes())
        return out
    if what == "phases":
        src = run_dir / "phases.csv"
        if not src.exists():
            raise FileNotFoundError(f"{src} is missing; run evaluation first")
        if out != src:
            out.write_bytes(src.read_bytes())
        return out
    if not (run_dir / "eval.csv").exists():
        raise FileNotFoundError(f"{run_dir / 'eval.csv'} is missing; run evaluation first")
    if what == "trajectories":
        if cfg is None:
            raise ValueError("trajectories export needs the run config")
        return export_trajectories(run_dir, cfg, out)
    if what == "votes":
        return export_votes(run_dir, out)
    if what == "ma":
        return export_ma(run_dir, out)
    return export_cdf(run_dir, out)
