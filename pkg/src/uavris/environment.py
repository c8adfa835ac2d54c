"""Networked multi-UAV service environment.

One instance owns the static scene (grid, reflecting surface, radio and
power constants); episode state is passed explicitly through ``reset`` and
``step`` so trajectories are pure functions of (seed, action sequence).
Per slot the fleet moves on the grid, recommends surface phases that are
complex-averaged, majority-votes the single served terminal, and earns the
data-per-energy local reward.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import channel, mobility
from .config import ExperimentConfig, derive_seed
from .mobility import HEADINGS, VERTICALS, InfeasibleActionError, UavState


@dataclass(frozen=True)
class WorldState:
    uav_states: tuple[UavState, ...]
    gt_positions: np.ndarray  # (K, 2) meters
    gt_remaining: np.ndarray  # (K,) bits
    slot_index: int  # 1-based; slot_index > num_slots means finished


@dataclass(frozen=True)
class JointAction:
    heading: np.ndarray  # (J,) indices into HEADINGS
    vertical: np.ndarray  # (J,) indices into VERTICALS
    ma: np.ndarray  # (J,) body antenna slots, 1-based
    gt_vote: np.ndarray  # (J,) terminal indices, 0-based
    slot_time: np.ndarray  # (J,) seconds
    phases: np.ndarray  # (J, M) radians in [-pi, pi)


@dataclass(frozen=True)
class StepOutcome:
    state: WorldState
    rewards: np.ndarray  # (J,) local data-per-energy rewards
    rates: np.ndarray  # (K,) bits/s, nonzero only for the scheduled terminal
    scheduled_gt: int
    energies: np.ndarray  # (J,) joules
    speeds_h: np.ndarray
    speeds_v: np.ndarray
    delivered_bits: float
    phase_diag: np.ndarray  # (M,) aggregated complex reflection coefficients
    h_clamped: np.ndarray
    v_clamped: np.ndarray
    infeasible: np.ndarray
    steering_clamps: int


def aggregate_ris(phase_matrix: np.ndarray) -> np.ndarray:
    """Complex mean of per-agent unit-modulus phase recommendations."""
    phases = np.atleast_2d(np.asarray(phase_matrix, dtype=float))
    if phases.shape[0] < 1:
        raise ValueError("need at least one phase recommendation")
    return np.mean(np.exp(1j * phases), axis=0)


def tdma_vote(votes: np.ndarray) -> int:
    """Majority vote over terminal indices; ties go to the lowest index."""
    counts = np.bincount(np.asarray(votes, dtype=int))
    return int(np.argmax(counts))


class Environment:
    def __init__(self, cfg: ExperimentConfig):
        self.cfg = cfg
        self.limits = mobility.KinematicLimits(
            max_speed_h=cfg.max_speed_h,
            max_speed_v=cfg.max_speed_v,
            t_min=cfg.t_min,
            t_max=cfg.t_max,
            cell_size=cfg.cell_size,
            level_size=cfg.level_size,
        )
        self.power = mobility.PowerConstants(
            profile_power=cfg.profile_power,
            induced_power=cfg.induced_power,
            climb_power=cfg.climb_power,
            tip_speed=cfg.tip_speed,
            rotor_induced_speed=cfg.rotor_induced_speed,
            drag_ratio=cfg.drag_ratio,
            solidity=cfg.solidity,
            air_density=cfg.air_density,
            disc_area=cfg.disc_area,
        )
        self.ris = channel.RisConfig(
            rows=cfg.ris_rows,
            cols=cfg.ris_cols,
            spacing_r=cfg.ris_spacing,
            spacing_c=cfg.ris_spacing,
            position=(cfg.ris_cell[0] * cfg.cell_size, cfg.ris_cell[1] * cfg.cell_size),
            height=cfg.ris_level * cfg.level_size,
            wavelength=cfg.wavelength,
            reflect_amp=cfg.reflect_amp,
            pathloss_ref=cfg.pathloss_ref,
            cosine_floor=cfg.cosine_floor,
            convention=cfg.steering_convention,
        )
        self._gt_steering: list[channel.SteeringResult] = []

    # -- lifecycle ---------------------------------------------------------

    def reset(self, seed: int) -> WorldState:
        """Fleet at the start cell and initial altitude, fresh demands, and
        terminal positions drawn uniformly over the area from the seed."""
        cfg = self.cfg
        rng = np.random.default_rng(derive_seed(seed, "gt-placement"))
        gt_xy = rng.uniform(
            low=[0.0, 0.0],
            high=[cfg.grid_x * cfg.cell_size, cfg.grid_y * cfg.cell_size],
            size=(cfg.num_gts, 2),
        )
        self._gt_steering = [channel.steering_rg(self.ris, gt_xy[k]) for k in range(cfg.num_gts)]
        start = UavState(
            cell=(int(cfg.start_cell[0]), int(cfg.start_cell[1])),
            altitude_level=cfg.init_altitude_level,
            ma_index=(cfg.ma_count + 1) // 2,
            slot_duration=cfg.t_min,
        )
        return WorldState(
            uav_states=tuple(start for _ in range(cfg.num_uavs)),
            gt_positions=gt_xy,
            gt_remaining=np.full(cfg.num_gts, cfg.demand_bits),
            slot_index=1,
        )

    def uav_position(self, state: UavState, with_ma: bool = False) -> np.ndarray:
        """World-frame (x, y, z) of a UAV, optionally offset to its antenna slot."""
        cfg = self.cfg
        x = state.cell[0] * cfg.cell_size
        y = state.cell[1] * cfg.cell_size
        z = state.altitude_level * cfg.level_size
        if with_ma:
            dx, dy = mobility.ma_offset(state.ma_index, cfg.ma_spacing, cfg.ma_grid_side)
            x, y = x + dx, y + dy
        return np.array([x, y, z])

    def positions(self, state: WorldState) -> np.ndarray:
        return np.stack([self.uav_position(s) for s in state.uav_states])

    # -- dynamics ----------------------------------------------------------

    def _validate(self, action: JointAction) -> None:
        cfg = self.cfg
        j = cfg.num_uavs
        if not (
            len(action.heading) == len(action.vertical) == len(action.ma)
            == len(action.gt_vote) == len(action.slot_time) == action.phases.shape[0] == j
        ):
            raise ValueError("joint action does not cover every UAV")
        if action.phases.shape[1] != self.ris.num_elements:
            raise ValueError("phase vector length mismatch")
        if np.any(action.slot_time < cfg.t_min) or np.any(action.slot_time > cfg.t_max):
            raise ValueError("slot duration outside bounds")
        if np.any(action.phases < -math.pi) or np.any(action.phases >= math.pi):
            raise ValueError("phases outside [-pi, pi)")
        if np.any(action.gt_vote < 0) or np.any(action.gt_vote >= cfg.num_gts):
            raise ValueError("vote outside terminal range")
        if np.any(action.ma < 1) or np.any(action.ma > cfg.ma_count):
            raise ValueError("antenna slot outside range")

    def step(self, state: WorldState, action: JointAction) -> StepOutcome:
        cfg = self.cfg
        if state.slot_index > cfg.num_slots:
            raise RuntimeError("episode is already finished")
        self._validate(action)
        j = cfg.num_uavs
        grid = (cfg.grid_x, cfg.grid_y)

        new_states: list[UavState] = []
        energies = np.zeros(j)
        v_h = np.zeros(j)
        v_v = np.zeros(j)
        h_clamped = np.zeros(j, dtype=bool)
        v_clamped = np.zeros(j, dtype=bool)
        infeasible = np.zeros(j, dtype=bool)
        for i, prev in enumerate(state.uav_states):
            t = float(action.slot_time[i])
            cell, hc = mobility.apply_horizontal(prev.cell, HEADINGS[action.heading[i]], grid)
            level, vc = mobility.apply_vertical(
                prev.altitude_level, VERTICALS[action.vertical[i]], cfg.min_level, cfg.max_level
            )
            cand = UavState(cell, level, int(action.ma[i]), t)
            try:
                vh, vv = mobility.speeds(prev, cand, t, self.limits)
            except InfeasibleActionError:
                infeasible[i] = True
                cand = UavState(prev.cell, prev.altitude_level, int(action.ma[i]), t)
                vh, vv = 0.0, 0.0
            h_clamped[i], v_clamped[i] = hc, vc
            energies[i] = mobility.propulsion_energy(vh, vv, t, self.power)
            v_h[i], v_v[i] = vh, vv
            new_states.append(cand)

        phase_diag = aggregate_ris(action.phases)
        scheduled = tdma_vote(action.gt_vote)

        gt_xy = state.gt_positions[scheduled]
        g_rg = self._gt_steering[scheduled]
        block = np.zeros(j)
        direct = np.zeros(j)
        cascaded = np.zeros(j, dtype=complex)
        clamps = 0
        for i, st in enumerate(new_states):
            pos = self.uav_position(st, with_ma=True)
            ur = channel.steering_ur(self.ris, pos)
            clamps += int(ur.clamped) + int(g_rg.clamped)
            cascaded[i] = channel.cascaded_gain(
                g_rg.vector, phase_diag, ur.vector, cfg.reflect_amp
            )
            horiz = math.hypot(pos[0] - gt_xy[0], pos[1] - gt_xy[1])
            d_ug = math.sqrt(horiz**2 + pos[2] ** 2)
            block[i] = channel.blockage_prob(pos[2], horiz, cfg.blockage_a, cfg.blockage_b)
            direct[i] = cfg.pathloss_ref / d_ug**2
        gain = channel.effective_gain(block, direct, cascaded)
        rates = np.zeros(cfg.num_gts)
        rates[scheduled] = channel.achievable_rate(
            1, gain, cfg.tx_power, cfg.bandwidth, cfg.noise_psd
        )

        delivered = float(np.sum(action.slot_time * rates[scheduled]))
        remaining = state.gt_remaining.copy()
        remaining[scheduled] = max(0.0, remaining[scheduled] - delivered)

        rewards = action.slot_time * rates[scheduled] / energies

        next_state = WorldState(
            uav_states=tuple(new_states),
            gt_positions=state.gt_positions,
            gt_remaining=remaining,
            slot_index=state.slot_index + 1,
        )
        return StepOutcome(
            state=next_state,
            rewards=rewards,
            rates=rates,
            scheduled_gt=scheduled,
            energies=energies,
            speeds_h=v_h,
            speeds_v=v_v,
            delivered_bits=delivered,
            phase_diag=phase_diag,
            h_clamped=h_clamped,
            v_clamped=v_clamped,
            infeasible=infeasible,
            steering_clamps=clamps,
        )

    def episode_done(self, state: WorldState) -> tuple[bool, dict]:
        done = state.slot_index > self.cfg.num_slots
        summary = {
            "residual_bits": state.gt_remaining.copy(),
            "demand_met": (state.gt_remaining <= 0.0).tolist(),
            "slots_used": state.slot_index - 1,
        }
        return done, summary


def global_reward(local_rewards: np.ndarray) -> float:
    """Fleet reward: arithmetic mean of the local rewards."""
    return float(np.mean(local_rewards))


@dataclass
class EpisodeLog:
    """Per-slot record of one episode for export and plotting."""

    rewards: list[np.ndarray] = field(default_factory=list)
    rates: list[np.ndarray] = field(default_factory=list)
    energies: list[np.ndarray] = field(default_factory=list)
    votes: list[np.ndarray] = field(default_factory=list)
    scheduled: list[int] = field(default_factory=list)
    phase_angles: list[np.ndarray] = field(default_factory=list)
    ma: list[np.ndarray] = field(default_factory=list)
    slot_times: list[np.ndarray] = field(default_factory=list)
    cells: list[np.ndarray] = field(default_factory=list)
    levels: list[np.ndarray] = field(default_factory=list)
    speeds_h: list[np.ndarray] = field(default_factory=list)
    speeds_v: list[np.ndarray] = field(default_factory=list)
    delivered: list[float] = field(default_factory=list)
    flags: list[dict] = field(default_factory=list)

    def append(self, state: WorldState, action: JointAction, outcome: StepOutcome) -> None:
        self.rewards.append(outcome.rewards.copy())
        self.rates.append(outcome.rates.copy())
        self.energies.append(outcome.energies.copy())
        self.votes.append(np.asarray(action.gt_vote, dtype=int).copy())
        self.scheduled.append(outcome.scheduled_gt)
        self.phase_angles.append(channel.wrap_phase(np.angle(outcome.phase_diag)))
        self.ma.append(np.asarray(action.ma, dtype=int).copy())
        self.slot_times.append(np.asarray(action.slot_time, dtype=float).copy())
        self.cells.append(np.array([s.cell for s in outcome.state.uav_states]))
        self.levels.append(np.array([s.altitude_level for s in outcome.state.uav_states]))
        self.speeds_h.append(outcome.speeds_h.copy())
        self.speeds_v.append(outcome.speeds_v.copy())
        self.delivered.append(outcome.delivered_bits)
        self.flags.append(
            {
                "h_clamped": int(np.sum(outcome.h_clamped)),
                "v_clamped": int(np.sum(outcome.v_clamped)),
                "infeasible": int(np.sum(outcome.infeasible)),
                "steering_clamps": outcome.steering_clamps,
            }
        )

    @property
    def num_slots(self) -> int:
        return len(self.rewards)

    def episode_objective(self) -> float:
        """Total propulsion energy divided by total delivered bits."""
        total_energy = float(np.sum([np.sum(e) for e in self.energies]))
        total_bits = float(np.sum(self.delivered))
        if total_bits == 0.0:
            return math.inf
        return total_energy / total_bits

    def per_uav_throughput(self) -> np.ndarray:
        """Bits delivered per UAV: its own slot time times the served rate."""
        totals = np.zeros_like(self.slot_times[0])
        for t_vec, rates, k in zip(self.slot_times, self.rates, self.scheduled):
            totals = totals + t_vec * rates[k]
        return totals

    def per_uav_energy(self) -> np.ndarray:
        return np.sum(np.stack(self.energies), axis=0)
