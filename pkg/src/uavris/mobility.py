"""Discrete 3D UAV kinematics on the area-of-interest grid, movable-antenna
offset resolution, kinematic limits, and rotary-wing propulsion energy."""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

HEADINGS = ("north", "south", "east", "west", "hover")
VERTICALS = ("ascend", "descend", "stay")


class InfeasibleActionError(ValueError):
    """A requested move violates a speed limit."""


@dataclass(frozen=True)
class UavState:
    cell: tuple[int, int]  # (x index, y index)
    altitude_level: int
    ma_index: int  # 1-based antenna slot on the body grid
    slot_duration: float


@dataclass(frozen=True)
class KinematicLimits:
    max_speed_h: float = 10.0
    max_speed_v: float = 10.0
    t_min: float = 1.0
    t_max: float = 3.0
    cell_size: float = 10.0  # meters per grid cell
    level_size: float = 2.0  # meters per altitude level

    def __post_init__(self):
        if min(self.max_speed_h, self.max_speed_v, self.t_min, self.t_max,
               self.cell_size, self.level_size) <= 0:
            raise ValueError("kinematic limits must be positive")


@dataclass(frozen=True)
class PowerConstants:
    """Rotary-wing power model constants; defaults follow the reference rig."""

    profile_power: float = 12 * 30**3 * 0.4**3 * 1.225 * 0.05 * 0.503 / 8
    induced_power: float = 1.1 * 20**1.5 / math.sqrt(2 * 1.225 * 0.503)
    climb_power: float = 11.46
    tip_speed: float = 120.0
    rotor_induced_speed: float = 4.3
    drag_ratio: float = 0.6
    solidity: float = 0.05
    air_density: float = 1.225
    disc_area: float = 0.503


def apply_horizontal(
    cell: tuple[int, int], action: str, grid: tuple[int, int]
) -> tuple[tuple[int, int], bool]:
    """One-cell horizontal move; off-grid moves are replaced by hover.

    Returns the new cell and whether the boundary clamp fired.
    """
    x, y = cell
    if action == "north":
        nx, ny = x, y + 1
    elif action == "south":
        nx, ny = x, y - 1
    elif action == "east":
        nx, ny = x + 1, y
    elif action == "west":
        nx, ny = x - 1, y
    elif action == "hover":
        return (x, y), False
    else:
        raise ValueError(f"unknown horizontal action {action!r}")
    if 0 <= nx < grid[0] and 0 <= ny < grid[1]:
        return (nx, ny), False
    return (x, y), True


def apply_vertical(level: int, action: str, level_min: int, level_max: int) -> tuple[int, bool]:
    """One-level vertical move; out-of-band moves are replaced by stay."""
    if action == "ascend":
        new = level + 1
    elif action == "descend":
        new = level - 1
    elif action == "stay":
        return level, False
    else:
        raise ValueError(f"unknown vertical action {action!r}")
    if level_min <= new <= level_max:
        return new, False
    return level, True


def ma_offset(ma_index: int, spacing: float, grid_side: int = 3) -> tuple[float, float]:
    """Body-frame (dx, dy) of antenna slot ``ma_index`` on a centered square grid.

    Slots are numbered 1..grid_side**2 in row-major order; the center slot
    has zero offset.
    """
    count = grid_side * grid_side
    if not 1 <= ma_index <= count:
        raise ValueError(f"antenna index {ma_index} outside 1..{count}")
    row, col = divmod(ma_index - 1, grid_side)
    half = (grid_side - 1) / 2.0
    return ((col - half) * spacing, (row - half) * spacing)


def speeds(
    prev: UavState, new: UavState, t: float, limits: KinematicLimits
) -> tuple[float, float]:
    """Horizontal and vertical speed implied by a one-slot transition."""
    if not limits.t_min <= t <= limits.t_max:
        raise ValueError(f"slot duration {t} outside [{limits.t_min}, {limits.t_max}]")
    dx = (new.cell[0] - prev.cell[0]) * limits.cell_size
    dy = (new.cell[1] - prev.cell[1]) * limits.cell_size
    dz = (new.altitude_level - prev.altitude_level) * limits.level_size
    v_h = math.hypot(dx, dy) / t
    v_v = abs(dz) / t
    if v_h > limits.max_speed_h:
        raise InfeasibleActionError(f"horizontal speed {v_h:.3f} exceeds {limits.max_speed_h}")
    if v_v > limits.max_speed_v:
        raise InfeasibleActionError(f"vertical speed {v_v:.3f} exceeds {limits.max_speed_v}")
    return v_h, v_v


def propulsion_energy(v_h: float, v_v: float, t: float, consts: PowerConstants) -> float:
    """Rotary-wing propulsion energy over one slot of duration ``t`` seconds.

    Blade-profile power grows quadratically with forward speed, parasite
    power cubically, induced power falls off with speed, and climb/descent
    adds a term linear in vertical speed.
    """
    if v_h < 0 or v_v < 0 or t <= 0:
        raise ValueError("speeds must be nonnegative and duration positive")
    c = consts
    profile = c.profile_power * (1.0 + 3.0 * v_h**2 / c.tip_speed**2)
    parasite = 0.5 * c.drag_ratio * c.air_density * c.solidity * c.disc_area * v_h**3
    vo4 = c.rotor_induced_speed**4
    induced = c.induced_power * math.sqrt(
        math.sqrt(1.0 + v_h**4 / (4.0 * vo4)) - v_h**2 / (2.0 * c.rotor_induced_speed**2)
    )
    climb = c.climb_power * v_v
    return t * (profile + parasite + induced + climb)
