import json

import pytest
import yaml

from uavris.config import (
    ConfigError,
    ExperimentConfig,
    RunManifest,
    derive_seed,
    parse_config,
    parse_override,
)


class TestDefaults:
    def test_reference_scenario_defaults(self):
        cfg = ExperimentConfig()
        assert cfg.num_uavs == 10 and cfg.num_gts == 6
        assert cfg.grid_x == cfg.grid_y == 100
        assert cfg.cell_size == 10.0 and cfg.level_size == 2.0
        assert cfg.comm_radius == 10.0
        assert cfg.init_altitude_level == 30
        assert (cfg.min_level, cfg.max_level) == (30, 100)
        assert cfg.max_speed_h == cfg.max_speed_v == 10.0
        assert (cfg.t_min, cfg.t_max) == (1.0, 3.0)
        assert cfg.num_slots == 60
        assert cfg.bandwidth == 2e6 and cfg.tx_power == 0.5
        assert cfg.noise_dbm_per_hz == -169.0
        assert (cfg.blockage_a, cfg.blockage_b) == (9.61, 0.16)
        assert cfg.pathloss_ref == pytest.approx(10**0.3)
        assert cfg.demand_bits == 512e3
        assert cfg.wavelength == 0.1
        assert cfg.ris_rows == cfg.ris_cols == 16
        assert cfg.ris_spacing == 0.05
        assert cfg.ris_cell == [50, 50] and cfg.ris_level == 50
        assert cfg.ma_count == 9 and cfg.ma_spacing == 0.05
        assert cfg.climb_power == 11.46
        assert cfg.tip_speed == 120.0 and cfg.rotor_induced_speed == 4.3
        assert (cfg.drag_ratio, cfg.solidity) == (0.6, 0.05)
        assert (cfg.air_density, cfg.disc_area) == (1.225, 0.503)
        assert cfg.gamma == 0.99 and cfg.beta == 0.005
        assert cfg.alpha == 0.8
        assert cfg.lr_actor == 5e-4 and cfg.lr_critic == 2.5e-4
        assert cfg.rollout_len == 120
        assert cfg.noise_psd == pytest.approx(10 ** (-16.9) * 1e-3)

    def test_empty_config_file_gives_defaults(self, tmp_path):
        path = tmp_path / "empty.yaml"
        path.write_text("")
        assert parse_config(path) == ExperimentConfig()


class TestValidation:
    def test_alpha_out_of_range(self):
        with pytest.raises(ConfigError):
            ExperimentConfig(alpha=1.5)

    def test_unknown_key_rejected(self, tmp_path):
        path = tmp_path / "bad.yaml"
        path.write_text("definitely_not_a_key: 1\n")
        with pytest.raises(ConfigError):
            parse_config(path)

    def test_bad_variant(self):
        with pytest.raises(ConfigError):
            ExperimentConfig(variant="magic")

    def test_time_bounds(self):
        with pytest.raises(ConfigError):
            ExperimentConfig(t_min=2.0, t_max=1.0)

    def test_altitude_band(self):
        with pytest.raises(ConfigError):
            ExperimentConfig(init_altitude_level=10, min_level=30)

    def test_override_honored(self):
        cfg = parse_config(None, {"num_uavs": 4})
        assert cfg.num_uavs == 4

    def test_parse_override(self):
        assert parse_override("alpha=0.9") == ("alpha", 0.9)
        assert parse_override("variant=ia2c") == ("variant", "ia2c")
        with pytest.raises(ConfigError):
            parse_override("nope")


class TestRoundTrip:
    def test_yaml_round_trip(self, tmp_path):
        cfg = ExperimentConfig(num_uavs=4, alpha=0.9, lr_actor=3.3e-3, seeds=[1, 2])
        path = tmp_path / "cfg.yaml"
        path.write_text(cfg.to_yaml())
        again = parse_config(path)
        assert again == cfg

    def test_hash_stable_under_key_order(self):
        cfg = ExperimentConfig()
        d = cfg.to_dict()
        blob_a = json.dumps(d, sort_keys=True, separators=(",", ":"))
        blob_b = json.dumps(dict(reversed(list(d.items()))), sort_keys=True, separators=(",", ":"))
        assert blob_a == blob_b
        assert cfg.config_hash() == parse_config(None, {}).config_hash()

    def test_hash_changes_with_values(self):
        assert ExperimentConfig().config_hash() != ExperimentConfig(num_uavs=4).config_hash()


class TestSeedDerivation:
    def test_deterministic_and_label_separated(self):
        assert derive_seed(7, "env") == derive_seed(7, "env")
        assert derive_seed(7, "env") != derive_seed(7, "actor:0")
        assert derive_seed(7, "env") != derive_seed(8, "env")

    def test_range(self):
        for label in ("a", "b", "c"):
            s = derive_seed(123, label)
            assert 0 <= s < 2**63


class TestManifest:
    def test_write_and_load(self, tmp_path):
        cfg = ExperimentConfig()
        m = RunManifest.start(cfg, seed=3, version="0.1.0")
        m.finish(["metrics.csv"])
        path = tmp_path / "manifest.json"
        m.write(path)
        again = RunManifest.load(path)
        assert again.config_hash == cfg.config_hash()
        assert again.seed == 3
        assert again.files == ["metrics.csv"]
        assert again.finished is not None
