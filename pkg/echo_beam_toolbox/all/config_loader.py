"""Defines the functions load_config() and parse_override()

Config files are TOML (or JSON, chosen by the .json suffix) with one table per section:
[simulation], [stft], [model], [train], [baseline]. Overrides are 'section.key=value' strings
whose value is read as a TOML literal (e.g. model.encoder_channels=[8,16,32]) and checked
against the type of the field it replaces.
"""

from dataclasses import fields
import json
import logging
import os
import tomllib

from echo_beam_toolbox.all.experiment_config import (
    ExperimentConfig,
    ModelConfig,
    PbfdafConfig,
    SimulationConfig,
    StftConfig,
    TrainConfig,
)
from echo_beam_toolbox.custom_exceptions import ConfigError

logger = logging.getLogger(__name__)

SECTIONS = {
    "simulation": SimulationConfig,
    "stft": StftConfig,
    "model": ModelConfig,
    "train": TrainConfig,
    "baseline": PbfdafConfig,
}


def _field_types(cls) -> dict:
    return {f.name: f.type for f in fields(cls)}


def _coerce(section: str, key: str, value, expected_type):
    """Checks [value] against the dataclass field type, converting lists to tuples"""
    where = f"{section}.{key}"
    if expected_type is bool:
        if not isinstance(value, bool):
            raise ConfigError(f"{where} must be true or false, got {value!r}")
        return value
    if expected_type is int:
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(f"{where} must be an integer, got {value!r}")
        return value
    if expected_type is float:
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(f"{where} must be a number, got {value!r}")
        return float(value)
    if expected_type is str:
        if not isinstance(value, str):
            raise ConfigError(f"{where} must be a string, got {value!r}")
        return value
    if expected_type == int | None:
        return None if value is None else _coerce(section, key, value, int)
    if expected_type is tuple:
        if not isinstance(value, (list, tuple)):
            raise ConfigError(f"{where} must be an array, got {value!r}")
        return tuple(value)
    return value


def parse_override(override: str) -> tuple:
    """'section.key=value' -> (section, key, value)

    Example Usage
    -------------
    >>> parse_override("model.encoder_channels=[8, 16, 32]")
    ('model', 'encoder_channels', [8, 16, 32])
    >>> parse_override("train.mse_mode=magnitude")
    ('train', 'mse_mode', 'magnitude')
    """
    if "=" not in override:
        raise ConfigError(f"override '{override}' is not of the form section.key=value")
    dotted, raw = override.split("=", 1)
    parts = dotted.strip().split(".")
    if len(parts) != 2 or not all(parts):
        raise ConfigError(f"override key '{dotted}' must be section.key")
    try:
        value = tomllib.loads(f"value = {raw.strip()}")["value"]
    except tomllib.TOMLDecodeError:
        value = raw.strip()
    return parts[0], parts[1], value


def _read_file(path: str) -> dict:
    if not os.path.isfile(path):
        raise ConfigError(f"config file '{path}' does not exist")
    try:
        if path.lower().endswith(".json"):
            with open(path, "r", encoding="utf-8") as file:
                return json.load(file)
        with open(path, "rb") as file:
            return tomllib.load(file)
    except (json.JSONDecodeError, tomllib.TOMLDecodeError) as error:
        raise ConfigError(f"config file '{path}' could not be parsed: {error}") from error


def load_config(path: str | None = None, overrides=(), seed: int | None = None) -> ExperimentConfig:
    """Builds an ExperimentConfig from defaults, an optional file, overrides and a seed

    model.n_mics, model.n_bins and stft.sample_rate follow the simulation/stft sections unless
    set explicitly. [seed] (if given) replaces the simulation, model and train seeds.

    Raises
    ------
    ConfigError
        For a missing or unparsable file, unknown sections or keys, ill-typed values or values
        outside their valid range
    """
    raw = {} if path is None else _read_file(path)
    unknown_sections = set(raw) - set(SECTIONS)
    if unknown_sections:
        raise ConfigError(f"unknown config sections: {sorted(unknown_sections)}")
    values = {section: dict(raw.get(section, {})) for section in SECTIONS}
    for override in overrides:
        section, key, value = parse_override(override)
        if section not in SECTIONS:
            raise ConfigError(f"unknown config section '{section}' in override '{override}'")
        values[section][key] = value
    if seed is not None:
        for section in ("simulation", "model", "train"):
            values[section]["seed"] = int(seed)

    for section, cls in SECTIONS.items():
        types = _field_types(cls)
        unknown = set(values[section]) - set(types)
        if unknown:
            raise ConfigError(f"unknown keys in [{section}]: {sorted(unknown)}")
        values[section] = {
            key: _coerce(section, key, value, types[key]) for key, value in values[section].items()
        }

    simulation = SimulationConfig(**values["simulation"])
    values["stft"].setdefault("sample_rate", simulation.sample_rate)
    stft = StftConfig(**values["stft"])
    values["model"].setdefault("n_mics", simulation.n_mics)
    values["model"].setdefault("n_bins", stft.n_bins)
    config = ExperimentConfig(
        simulation=simulation,
        stft=stft,
        model=ModelConfig(**values["model"]),
        train=TrainConfig(**values["train"]),
        baseline=PbfdafConfig(**values["baseline"]),
    )
    logger.debug(f"loaded config from {path or 'defaults'} with {len(overrides)} override(s)")
    return config
