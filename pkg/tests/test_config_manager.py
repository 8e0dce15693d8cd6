"""Tests for the pipeline configuration."""

import json

import pytest

from src.config.config_manager import ConfigManager, GlobalConfig, config_hash, load_config, parse_config, save_config
from src.config.exceptions import ConfigNotFoundError, ConfigValidationError
from src.sim.tasks import TaskKind


@pytest.fixture
def config_file(tmp_path):
    """A small config file with a few overrides."""
    path = tmp_path / "config.json"
    path.write_text(json.dumps({"seed": 11, "sim": {"raster_height": 8, "raster_width": 8}, "output_dir": str(tmp_path / "out")}))
    return path


class TestParsing:
    """Test config validation."""

    def test_empty_is_complete(self):
        """Test that an empty object is a valid config."""
        cfg = parse_config({})
        assert cfg == GlobalConfig()
        assert cfg.bench.task is TaskKind.ONE_TURN

    def test_unknown_top_level_key(self):
        with pytest.raises(ConfigValidationError):
            parse_config({"simulator": {}})

    def test_unknown_section_key(self):
        with pytest.raises(ConfigValidationError):
            parse_config({"rl": {"learning_rate_typo": 1.0}})

    def test_bad_value(self):
        with pytest.raises(ConfigValidationError):
            parse_config({"bench": {"episodes_per_cell": 0}})


class TestHash:
    """Test the config hash."""

    def test_stable(self):
        first = config_hash(GlobalConfig())
        assert first == config_hash(parse_config({}))
        assert len(first) == 16
        int(first, 16)

    def test_changes_with_content(self):
        assert config_hash(GlobalConfig()) != config_hash(parse_config({"seed": 1}))

    def test_ignores_output_dir(self, tmp_path):
        """Test that moving the output directory keeps the hash."""
        assert config_hash(GlobalConfig()) == config_hash(parse_config({"output_dir": str(tmp_path)}))


class TestSeeding:
    """Test top-level seed propagation."""

    def test_unset_sections_inherit(self):
        cfg = parse_config({"seed": 5}).seeded()
        assert cfg.expert.seed == 5
        assert cfg.policy.seed == 5
        assert cfg.il.seed == 5
        assert cfg.rl.seed == 5
        assert cfg.bench.seed == 5

    def test_explicit_section_seed_kept(self):
        cfg = parse_config({"seed": 5, "rl": {"seed": 9}}).seeded()
        assert cfg.rl.seed == 9
        assert cfg.il.seed == 5


class TestFiles:
    """Test loading and saving config files."""

    def test_missing(self, tmp_path):
        with pytest.raises(ConfigNotFoundError):
            load_config(tmp_path / "absent.json")

    def test_invalid_json(self, tmp_path):
        path = tmp_path / "broken.json"
        path.write_text("{not json")
        with pytest.raises(ConfigValidationError, match="invalid JSON"):
            load_config(path)

    def test_save_then_load(self, tmp_path, config_file):
        cfg = load_config(config_file)
        path = tmp_path / "copy.json"
        save_config(cfg, path)
        assert load_config(path) == cfg


class TestConfigManager:
    """Test the manager wrapping a config file."""

    def test_defaults_without_file(self):
        manager = ConfigManager()
        assert manager.path is None
        assert manager.hash == config_hash(GlobalConfig().seeded())

    def test_from_file(self, config_file, tmp_path):
        manager = ConfigManager(config_file)
        assert manager.cfg.sim.raster_size == 64
        assert manager.cfg.rl.seed == 11
        assert manager.artifact("demos.bin") == tmp_path / "out" / "demos.bin"

    def test_missing_file(self, tmp_path):
        with pytest.raises(ConfigNotFoundError):
            ConfigManager(tmp_path / "absent.json")

    def test_provenance(self, config_file):
        manager = ConfigManager(config_file)
        path = manager.write_provenance("run.json", stage="il")
        record = json.loads(path.read_text())
        assert record == {"config_hash": manager.hash, "seed": 11, "config_path": str(config_file), "stage": "il"}
