"""Configuration defaults, validation, and file parsing."""
import pytest

from quasivoc.config import ConfigError, PipelineConfig, load_config


def test_defaults_validate():
    cfg = PipelineConfig().validate()
    assert cfg.sample_rate == 24000
    assert cfg.frame_shift == 0.005
    assert cfg.orders == (128, 128, 8)
    assert cfg.component_cap is None


def test_component_cap():
    assert PipelineConfig(max_components=12).component_cap == 12


@pytest.mark.parametrize("kwargs", [
    {"sample_rate": 0},
    {"frame_shift": -0.001},
    {"order_p": 10, "order_r": 3},
    {"f0_min": 600.0, "f0_max": 500.0},
    {"window_kind": "kaiser"},
    {"refine_mode": "magic"},
    {"output_format": "flac"},
])
def test_validation_rejects(kwargs):
    with pytest.raises(ConfigError):
        PipelineConfig(**kwargs).validate()


def test_load_config_file(tmp_path):
    path = tmp_path / "cfg.txt"
    path.write_text(
        "# analysis setup\n"
        "frame_shift = 0.01\n"
        "order_p = 16\norder_q = 16\norder_r = 2\n"
        "window_kind = hamming  # inline comment\n"
        "threads = 4\n")
    cfg = load_config(path)
    assert cfg.frame_shift == 0.01
    assert cfg.orders == (16, 16, 2)
    assert cfg.window_kind == "hamming"
    assert cfg.threads == 4
    # untouched keys keep defaults
    assert cfg.sample_rate == 24000


def test_load_config_rejects_unknown_key(tmp_path):
    path = tmp_path / "cfg.txt"
    path.write_text("frame_hop = 0.01\n")
    with pytest.raises(ConfigError):
        load_config(path)


def test_load_config_rejects_bad_line(tmp_path):
    path = tmp_path / "cfg.txt"
    path.write_text("frame_shift 0.01\n")
    with pytest.raises(ConfigError):
        load_config(path)
