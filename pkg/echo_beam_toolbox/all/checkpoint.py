"""Defines the functions save_checkpoint() and load_checkpoint(), and the class Checkpoint

File layout:
    b"JBF1" | header length (uint32, little endian) | JSON header | float32 LE payload

The header holds the format version, the model and training configs, the step counter and a
tensor manifest (name, shape, byte offset, byte count, crc32) covering the parameters followed
by the Adam moments ("adam.m/<name>", "adam.v/<name>").
"""

from dataclasses import asdict, dataclass, fields
import json
import logging
import os
import struct
import zlib

import numpy as np

from echo_beam_toolbox.all.experiment_config import ModelConfig, TrainConfig
from echo_beam_toolbox.all.optimizers import AdamState
from echo_beam_toolbox.all.param_tree import ParamTree
from echo_beam_toolbox.custom_exceptions import CheckpointError, ConfigMismatchError

logger = logging.getLogger(__name__)

MAGIC = b"JBF1"
FORMAT_VERSION = 1
_PAYLOAD_DTYPE = np.dtype("<f4")


@dataclass
class Checkpoint:
    """Everything needed to resume training or to run inference"""

    model_config: ModelConfig
    params: ParamTree
    step: int = 0
    train_config: TrainConfig | None = None
    adam: AdamState | None = None
    version: int = FORMAT_VERSION


def _config_from_dict(cls, values: dict):
    names = {f.name for f in fields(cls)}
    unknown = set(values) - names
    if unknown:
        raise CheckpointError(f"checkpoint {cls.__name__} has unknown fields {sorted(unknown)}")
    return cls(**{k: tuple(v) if isinstance(v, list) else v for k, v in values.items()})


def config_differences(expected: ModelConfig, found: ModelConfig) -> list:
    """Names of the fields on which two model configs disagree"""
    return [f.name for f in fields(ModelConfig) if getattr(expected, f.name) != getattr(found, f.name)]


def save_checkpoint(path: str, checkpoint: Checkpoint) -> None:
    """Writes [checkpoint] to [path] (via a temporary file, so a crash never leaves a partial file)

    Example Usage
    -------------
    >>> import tempfile
    >>> from echo_beam_toolbox.all.jaecbf_model import init_params
    >>> cfg = ModelConfig(n_mics=2, encoder_channels=(8, 16, 32), width=32, gru_hidden=32)
    >>> path = os.path.join(tempfile.mkdtemp(), "model.jbf")
    >>> save_checkpoint(path, Checkpoint(model_config=cfg, params=init_params(cfg)))
    >>> load_checkpoint(path).model_config == cfg
    True
    """
    tensors = [(name, param.value) for name, param in checkpoint.params.items()]
    if checkpoint.adam is not None:
        names = checkpoint.params.names()
        tensors += [(f"adam.m/{name}", checkpoint.adam.m[name]) for name in names]
        tensors += [(f"adam.v/{name}", checkpoint.adam.v[name]) for name in names]

    manifest, chunks, offset = [], [], 0
    for name, value in tensors:
        data = np.ascontiguousarray(value, dtype=_PAYLOAD_DTYPE).tobytes()
        manifest.append(
            {
                "name": name,
                "shape": list(np.shape(value)),
                "offset": offset,
                "nbytes": len(data),
                "crc32": zlib.crc32(data),
            }
        )
        chunks.append(data)
        offset += len(data)

    header = {
        "version": checkpoint.version,
        "model_config": asdict(checkpoint.model_config),
        "train_config": None if checkpoint.train_config is None else asdict(checkpoint.train_config),
        "step": int(checkpoint.step),
        "has_adam": checkpoint.adam is not None,
        "adam_t": 0 if checkpoint.adam is None else int(checkpoint.adam.t),
        "tensors": manifest,
    }
    header_bytes = json.dumps(header, sort_keys=True, separators=(",", ":")).encode("utf-8")

    directory = os.path.dirname(os.path.abspath(path))
    os.makedirs(directory, exist_ok=True)
    temp_path = f"{path}.tmp"
    with open(temp_path, "wb") as file:
        file.write(MAGIC)
        file.write(struct.pack("<I", len(header_bytes)))
        file.write(header_bytes)
        for data in chunks:
            file.write(data)
    os.replace(temp_path, path)
    logger.info(f"saved checkpoint at step {checkpoint.step:,} to {path}")


def load_checkpoint(path: str, expected_config: ModelConfig | None = None) -> Checkpoint:
    """Reads a checkpoint written by save_checkpoint()

    Parameters
    ----------
    path : str
        Checkpoint file
    expected_config : ModelConfig, optional
        If given, the stored model config must equal it

    Raises
    ------
    CheckpointError
        On a bad magic, unknown version, truncated payload or checksum failure
    ConfigMismatchError
        If the stored model config differs from [expected_config]
    """
    with open(path, "rb") as file:
        blob = file.read()
    if blob[:4] != MAGIC:
        raise CheckpointError(f"{path} is not a checkpoint (bad magic bytes)")
    if len(blob) < 8:
        raise CheckpointError(f"{path} is truncated")
    (header_length,) = struct.unpack("<I", blob[4:8])
    try:
        header = json.loads(blob[8 : 8 + header_length].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as error:
        raise CheckpointError(f"{path} has an unreadable header: {error}") from error
    if header.get("version") != FORMAT_VERSION:
        raise CheckpointError(
            f"{path} has format version {header.get('version')}, expected {FORMAT_VERSION}"
        )

    model_config = _config_from_dict(ModelConfig, header["model_config"])
    if expected_config is not None and model_config != expected_config:
        raise ConfigMismatchError(
            f"checkpoint model config differs on {config_differences(expected_config, model_config)}"
        )
    train_config = (
        None if header["train_config"] is None else _config_from_dict(TrainConfig, header["train_config"])
    )

    payload = blob[8 + header_length :]
    arrays = {}
    for entry in header["tensors"]:
        start, stop = entry["offset"], entry["offset"] + entry["nbytes"]
        if stop > len(payload):
            raise CheckpointError(f"{path} is truncated inside tensor '{entry['name']}'")
        data = payload[start:stop]
        if zlib.crc32(data) != entry["crc32"]:
            raise CheckpointError(f"checksum failure in tensor '{entry['name']}' of {path}")
        arrays[entry["name"]] = (
            np.frombuffer(data, dtype=_PAYLOAD_DTYPE).astype(np.float32).reshape(entry["shape"])
        )

    params = ParamTree(dtype=np.float32)
    for name, value in arrays.items():
        if not name.startswith("adam."):
            params.add(name, value)
    adam = None
    if header["has_adam"]:
        adam = AdamState(
            m={name: arrays[f"adam.m/{name}"].copy() for name in params.names()},
            v={name: arrays[f"adam.v/{name}"].copy() for name in params.names()},
            t=int(header["adam_t"]),
        )
    return Checkpoint(
        model_config=model_config,
        params=params,
        step=int(header["step"]),
        train_config=train_config,
        adam=adam,
        version=header["version"],
    )
