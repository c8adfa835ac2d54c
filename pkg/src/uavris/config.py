"""Experiment configuration, deterministic seed derivation, and run manifests.

The config is a flat record of every environment and learner parameter with
defaults matching the reference scenario.  Files are YAML mappings; unknown
keys are rejected and values are range-checked on construction.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
import math
from dataclasses import dataclass, field, fields
from datetime import datetime, timezone
from pathlib import Path

import yaml

VARIANTS = ("ours", "ia2c", "consenet", "fprint", "commnet", "dial")


@dataclass
class ExperimentConfig:
    # fleet and area
    num_uavs: int = 10
    num_gts: int = 6
    grid_x: int = 100
    grid_y: int = 100
    cell_size: float = 10.0  # meters per cell
    comm_radius: float = 10.0  # one-hop radius, meters
    start_cell: list[int] = field(default_factory=lambda: [0, 0])
    final_cell: list[int] = field(default_factory=lambda: [100, 100])
    init_altitude_level: int = 30
    level_size: float = 2.0  # meters per altitude level
    min_level: int = 30
    max_level: int = 100
    max_speed_h: float = 10.0
    max_speed_v: float = 10.0
    t_min: float = 1.0
    t_max: float = 3.0
    num_slots: int = 60

    # radio
    bandwidth: float = 2e6
    tx_power: float = 0.5  # watts
    noise_dbm_per_hz: float = -169.0
    blockage_a: float = 9.61
    blockage_b: float = 0.16
    pathloss_ref: float = 10.0**0.3
    demand_bits: float = 512e3

    # reflecting surface and movable antenna
    wavelength: float = 0.1
    ris_rows: int = 16
    ris_cols: int = 16
    ris_spacing: float = 0.05
    ris_cell: list[int] = field(default_factory=lambda: [50, 50])
    ris_level: int = 50
    reflect_amp: float = 1.0
    cosine_floor: float = 1e-3
    steering_convention: str = "paper"
    ma_grid_side: int = 3
    ma_spacing: float = 0.05

    # rotor power model
    profile_power: float = 12 * 30**3 * 0.4**3 * 1.225 * 0.05 * 0.503 / 8
    induced_power: float = 1.1 * 20**1.5 / math.sqrt(2 * 1.225 * 0.503)
    climb_power: float = 11.46
    tip_speed: float = 120.0
    rotor_induced_speed: float = 4.3
    drag_ratio: float = 0.6
    solidity: float = 0.05
    air_density: float = 1.225
    disc_area: float = 0.503

    # learner
    variant: str = "ours"
    gamma: float = 0.99
    beta: float = 0.005
    alpha: float = 0.8
    lr_actor: float = 5e-4
    lr_critic: float = 2.5e-4
    rollout_len: int = 120
    hidden_size: int = 64
    encoder_size: int = 64
    max_degree: int = -1  # -1 means num_uavs - 1
    entropy_sign: str = "paper"
    share_parameters: bool = False
    episodes: int = 300
    reward_scale: float = 1e-5  # applied to learning targets, not logged rewards
    checkpoint_every: int = 100
    continuous_log_std_init: float = -0.5

    # orchestration
    seeds: list[int] = field(default_factory=lambda: [0])
    out_dir: str = "runs"

    def __post_init__(self):
        self.validate()

    def validate(self) -> None:
        c = self
        checks = [
            (c.num_uavs >= 1, "num_uavs must be >= 1"),
            (c.num_gts >= 1, "num_gts must be >= 1"),
            (c.grid_x >= 1 and c.grid_y >= 1, "grid must be at least 1x1"),
            (c.cell_size > 0 and c.level_size > 0, "cell/level sizes must be positive"),
            (0 < c.t_min <= c.t_max, "need 0 < t_min <= t_max"),
            (c.min_level <= c.init_altitude_level <= c.max_level, "initial level outside altitude band"),
            (c.num_slots >= 1, "num_slots must be >= 1"),
            (c.bandwidth > 0 and c.tx_power > 0, "bandwidth and power must be positive"),
            (c.ris_rows >= 1 and c.ris_cols >= 1, "surface needs at least one element"),
            (c.ma_grid_side >= 1, "antenna grid side must be >= 1"),
            (c.variant in VARIANTS, f"variant must be one of {VARIANTS}"),
            (0.0 <= c.alpha <= 1.0, "alpha must lie in [0, 1]"),
            (0.0 < c.gamma <= 1.0, "gamma must lie in (0, 1]"),
            (c.beta >= 0.0, "beta must be nonnegative"),
            (c.lr_actor >= 0.0 and c.lr_critic >= 0.0, "learning rates must be nonnegative"),
            (c.rollout_len >= 1, "rollout_len must be >= 1"),
            (c.hidden_size >= 1 and c.encoder_size >= 1, "hidden sizes must be >= 1"),
            (c.steering_convention in ("paper", "conventional"), "unknown steering_convention"),
            (c.entropy_sign in ("paper", "conventional"), "unknown entropy_sign"),
            (c.episodes >= 1, "episodes must be >= 1"),
            (c.reward_scale > 0.0, "reward_scale must be positive"),
            (len(c.seeds) >= 1, "need at least one seed"),
        ]
        for ok, msg in checks:
            if not ok:
                raise ConfigError(msg)

    @property
    def noise_psd(self) -> float:
        """Noise power spectral density in W/Hz."""
        return 10.0 ** (self.noise_dbm_per_hz / 10.0) * 1e-3

    @property
    def ma_count(self) -> int:
        return self.ma_grid_side**2

    @property
    def effective_max_degree(self) -> int:
        if self.max_degree < 0:
            return max(1, self.num_uavs - 1)
        return self.max_degree

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    def to_yaml(self) -> str:
        return yaml.safe_dump(self.to_dict(), sort_keys=True)

    def config_hash(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()[:16]


class ConfigError(ValueError):
    pass


_FIELD_NAMES = {f.name for f in fields(ExperimentConfig)}


def parse_config(path: str | Path | None = None, overrides: dict | None = None) -> ExperimentConfig:
    """Load a YAML config file and layer inline overrides on top of defaults."""
    data: dict = {}
    if path is not None:
        raw = Path(path).read_text()
        loaded = yaml.safe_load(raw)
        if loaded is None:
            loaded = {}
        if not isinstance(loaded, dict):
            raise ConfigError(f"config file {path} must contain a mapping")
        data.update(loaded)
    if overrides:
        data.update(overrides)
    unknown = set(data) - _FIELD_NAMES
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")
    try:
        return ExperimentConfig(**data)
    except TypeError as exc:
        raise ConfigError(str(exc)) from exc


def parse_override(text: str) -> tuple[str, object]:
    """Parse a ``key=value`` override with YAML value semantics."""
    if "=" not in text:
        raise ConfigError(f"override {text!r} is not of the form key=value")
    key, _, value = text.partition("=")
    return key.strip(), yaml.safe_load(value)


def derive_seed(master: int, label: str) -> int:
    """Counter-style derivation decoupling randomness sources from one master seed."""
    digest = hashlib.sha256(f"{master}:{label}".encode()).digest()
    return int.from_bytes(digest[:8], "little") % (2**63)


@dataclass
class RunManifest:
    config_hash: str
    seed: int
    code_version: str
    started: str
    finished: str | None = None
    files: list[str] = field(default_factory=list)

    @classmethod
    def start(cls, config: ExperimentConfig, seed: int, version: str) -> "RunManifest":
        return cls(
            config_hash=config.config_hash(),
            seed=seed,
            code_version=version,
            started=datetime.now(timezone.utc).isoformat(),
        )

    def write(self, path: Path) -> None:
        path.write_text(json.dumps(dataclasses.asdict(self), indent=2, sort_keys=True) + "\n")

    @classmethod
    def load(cls, path: Path) -> "RunManifest":
        return cls(**json.loads(path.read_text()))

    def finish(self, files: list[str]) -> None:
        self.finished = datetime.now(timezone.utc).isoformat()
        self.files = sorted(files)
