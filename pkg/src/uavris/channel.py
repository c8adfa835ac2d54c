"""Air-to-ground channel model: planar-array responses, cascaded reflection
gain, line-of-sight blockage, effective gain, and achievable rate.

All functions are pure and operate on plain floats / numpy arrays.  The
reflecting surface is a uniform planar array in the xy-plane whose first
element is the phase reference; the response toward a point source is the
Kronecker product of row-wise and column-wise phase progressions scaled by
the free-space amplitude at the link distance.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

# per-element phase-step convention: the row/column spacing is either divided
# by the direction-cosine product (diverges near grazing, clamped below) or
# multiplied by it (textbook planar-array form); selectable per run
STEERING_CONVENTIONS = ("paper", "conventional")


@dataclass(frozen=True)
class RisConfig:
    """Geometry and scaling of the reflecting surface."""

    rows: int
    cols: int
    spacing_r: float
    spacing_c: float
    position: tuple[float, float]  # (x, y) of the reference element, meters
    height: float  # z of the reference element, meters
    wavelength: float
    reflect_amp: float = 1.0
    pathloss_ref: float = 10.0**0.3  # gain at 1 m reference distance
    cosine_floor: float = 1e-3
    convention: str = "paper"

    def __post_init__(self):
        if self.rows < 1 or self.cols < 1:
            raise ValueError("array needs at least one row and one column")
        if min(self.spacing_r, self.spacing_c, self.wavelength, self.height) <= 0:
            raise ValueError("spacings, wavelength and height must be positive")
        if self.convention not in STEERING_CONVENTIONS:
            raise ValueError(f"unknown steering convention {self.convention!r}")

    @property
    def num_elements(self) -> int:
        return self.rows * self.cols


class SteeringResult(NamedTuple):
    vector: np.ndarray  # complex, rows*cols
    distance: float
    clamped: bool


def wrap_phase(phases: np.ndarray | float) -> np.ndarray | float:
    """Wrap angles into [-pi, pi)."""
    return np.mod(np.asarray(phases) + np.pi, 2.0 * np.pi) - np.pi


def _clamp_cosine(value: float, floor: float) -> tuple[float, bool]:
    if abs(value) >= floor:
        return value, False
    return (floor if value >= 0.0 else -floor), True


def _phase_step(spacing: float, cos_product: float, wavelength: float, convention: str) -> float:
    k = 2.0 * math.pi / wavelength
    if convention == "paper":
        return k * spacing / cos_product
    return k * spacing * cos_product


def _upa_response(
    ris: RisConfig, dist: float, cos_r: float, cos_c: float
) -> SteeringResult:
    pr, clamp_r = _clamp_cosine(cos_r, ris.cosine_floor)
    pc, clamp_c = _clamp_cosine(cos_c, ris.cosine_floor)
    step_r = _phase_step(ris.spacing_r, pr, ris.wavelength, ris.convention)
    step_c = _phase_step(ris.spacing_c, pc, ris.wavelength, ris.convention)
    a_r = np.exp(-1j * step_r * np.arange(ris.rows))
    a_c = np.exp(-1j * step_c * np.arange(ris.cols))
    amp = math.sqrt(ris.pathloss_ref) / dist
    return SteeringResult(amp * np.kron(a_r, a_c), dist, clamp_r or clamp_c)


def steering_ur(ris: RisConfig, uav_pos: np.ndarray) -> SteeringResult:
    """Array response of the surface toward a UAV at 3D position (x, y, z)."""
    x, y, z = (float(v) for v in uav_pos)
    dx = x - ris.position[0]
    dy = y - ris.position[1]
    dz = z - ris.height
    r = math.hypot(dx, dy)
    dist = math.sqrt(dx * dx + dy * dy + dz * dz)
    if dist == 0.0:
        raise ValueError("UAV coincides with the array reference element")
    # azimuth cosine/sine times elevation cosine: the direction cosines of
    # the incident ray along the row (x) and column (y) axes
    if r == 0.0:
        cos_r = 0.0
        cos_c = 0.0
    else:
        psi = r / dist
        cos_r = (dx / r) * psi
        cos_c = (dy / r) * psi
    return _upa_response(ris, dist, cos_r, cos_c)


def steering_rg(ris: RisConfig, gt_pos: np.ndarray) -> SteeringResult:
    """Array response of the surface toward a ground terminal at (x, y)."""
    dx = float(gt_pos[0]) - ris.position[0]
    dy = float(gt_pos[1]) - ris.position[1]
    horiz = math.hypot(dx, dy)
    dist = math.sqrt(ris.height**2 + horiz**2)
    if dist == 0.0:
        raise ValueError("terminal coincides with the array reference element")
    if horiz == 0.0:
        cos_r = 0.0
        cos_c = 0.0
    else:
        psi = horiz / dist  # cosine of the vertical departure angle
        cos_r = (dx / horiz) * psi
        cos_c = (dy / horiz) * psi
    return _upa_response(ris, dist, cos_r, cos_c)


def cascaded_gain(
    g_rg: np.ndarray, phase_diag: np.ndarray, g_ur: np.ndarray, reflect_amp: float = 1.0
) -> complex:
    """amp * g_rg^T diag(phase_diag) g_ur for one UAV-surface-terminal path."""
    if not (len(g_rg) == len(phase_diag) == len(g_ur)):
        raise ValueError("vector lengths do not conform")
    return reflect_amp * complex(np.sum(g_rg * phase_diag * g_ur))


def blockage_prob(altitude: float, horizontal_dist: float, a: float, b: float) -> float:
    """Probability that the direct air-to-ground ray is blocked.

    Uses the urban sigmoid-of-elevation model with the elevation angle in
    degrees; a zero horizontal distance means the terminal is directly
    underneath (90 degrees).
    """
    if altitude < 0:
        raise ValueError("altitude must be nonnegative")
    if horizontal_dist < 0:
        raise ValueError("horizontal distance must be nonnegative")
    if horizontal_dist == 0.0:
        theta_deg = 90.0
    else:
        theta_deg = math.degrees(math.atan(altitude / horizontal_dist))
    return 1.0 - 1.0 / (1.0 + a * math.exp(-b * (theta_deg - a)))


def effective_gain(
    block_probs: np.ndarray, direct_gains: np.ndarray, cascaded_gains: np.ndarray
) -> float:
    """Fleet-summed power gain at one terminal.

    Direct contributions are weighted by the line-of-sight probability; the
    complex cascaded amplitudes enter as squared magnitudes so the result
    stays a nonnegative power-like quantity.
    """
    p = np.asarray(block_probs, dtype=float)
    if np.any(p < 0.0) or np.any(p > 1.0):
        raise ValueError("blockage probabilities must lie in [0, 1]")
    direct = np.asarray(direct_gains, dtype=float)
    casc = np.abs(np.asarray(cascaded_gains, dtype=complex)) ** 2
    gain = float(np.sum((1.0 - p) * direct) + np.sum(p * casc))
    if gain < 0.0:
        raise ValueError("effective gain must be nonnegative")
    return gain


def achievable_rate(
    scheduled: int, gain: float, tx_power: float, bandwidth: float, noise_psd: float
) -> float:
    """Shannon rate in bits/s; zero when the terminal is not scheduled."""
    if bandwidth <= 0 or noise_psd <= 0:
        raise ValueError("bandwidth and noise density must be positive")
    if not scheduled:
        return 0.0
    snr = gain * tx_power / (bandwidth * noise_psd)
    return bandwidth * math.log2(1.0 + snr)
