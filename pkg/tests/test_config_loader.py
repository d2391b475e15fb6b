import json
import os

import pytest

import echo_beam_toolbox.train
from echo_beam_toolbox.all.config_loader import parse_override
from echo_beam_toolbox.custom_exceptions import ConfigError

CONFIG_DIR = os.path.join(os.path.dirname(__file__), "..", "configs")


def test_defaults():
    """Without a file the full-size defaults are used"""
    cfg = echo_beam_toolbox.train.load_config()
    assert cfg.simulation.n_mics == 8 and cfg.model.n_mics == 8, "default array is not 8 microphones"
    assert cfg.stft.fft_size == 512 and cfg.model.n_bins == 257, "default STFT is not 512 points"
    assert cfg.train.lr == 1e-4 and cfg.train.grad_clip == 10.0, "default optimiser settings changed"


def test_toy_config_file():
    """configs/toy.toml describes a 2-microphone desk-scale run"""
    cfg = echo_beam_toolbox.train.load_config(os.path.join(CONFIG_DIR, "toy.toml"))
    assert cfg.simulation.n_mics == 2 and cfg.model.n_mics == 2, "toy config is not 2 microphones"
    assert cfg.model.encoder_channels == (8, 16, 32), f"encoder channels {cfg.model.encoder_channels}"
    full = echo_beam_toolbox.train.load_config(os.path.join(CONFIG_DIR, "full.toml"))
    assert full == echo_beam_toolbox.train.load_config(), "full.toml differs from the defaults"


def test_overrides_and_seed():
    """section.key=value overrides are typed and --seed sets every seed"""
    cfg = echo_beam_toolbox.train.load_config(
        overrides=["model.encoder_channels=[4, 8]", "train.mse_mode=magnitude", "train.lr=0.01"], seed=3
    )
    assert cfg.model.encoder_channels == (4, 8), f"encoder channels {cfg.model.encoder_channels}"
    assert cfg.train.mse_mode == "magnitude" and cfg.train.lr == 0.01, "overrides were not applied"
    assert cfg.simulation.seed == cfg.model.seed == cfg.train.seed == 3, "seed was not applied everywhere"
    assert parse_override("simulation.n_mics=4") == ("simulation", "n_mics", 4), "override parsing"


def test_json_config(tmp_path):
    """JSON files are read like TOML files"""
    path = os.path.join(tmp_path, "run.json")
    with open(path, "w", encoding="utf-8") as file:
        json.dump({"simulation": {"n_mics": 3}, "train": {"batch": 2}}, file)
    cfg = echo_beam_toolbox.train.load_config(path)
    assert cfg.model.n_mics == 3 and cfg.train.batch == 2, "JSON values were not applied"


@pytest.mark.parametrize(
    "overrides",
    [
        ["optimizer.lr=0.1"],
        ["train.learning_rate=0.1"],
        ["train.lr=fast"],
        ["train.batch=1.5"],
        ["model.use_dtd=1"],
        ["simulation.rt60_range=[0.0, 0.9]"],
        ["model.n_mics=4"],
        ["train.lr"],
    ],
)
def test_invalid_settings_are_config_errors(overrides):
    """Unknown sections or keys, ill-typed and out-of-range values are rejected"""
    with pytest.raises(ConfigError):
        echo_beam_toolbox.train.load_config(overrides=overrides)


def test_missing_file_is_a_config_error():
    """A config path that does not exist is rejected"""
    with pytest.raises(ConfigError):
        echo_beam_toolbox.train.load_config("does/not/exist.toml")
