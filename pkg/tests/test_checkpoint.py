import dataclasses
import filecmp
import os

import numpy as np
import pytest

import echo_beam_toolbox.train
from echo_beam_toolbox.all.gradcheck_suite import SMALL_MODEL
from echo_beam_toolbox.all.jaecbf_model import init_params
from echo_beam_toolbox.all.optimizers import AdamState
from echo_beam_toolbox.custom_exceptions import CheckpointError, ConfigMismatchError


def make_checkpoint() -> echo_beam_toolbox.train.Checkpoint:
    params = init_params(SMALL_MODEL)
    adam = AdamState.for_params(params)
    rng = np.random.default_rng(0)
    for name in params.names():
        adam.m[name] += rng.standard_normal(adam.m[name].shape).astype(np.float32)
        adam.v[name] += rng.uniform(size=adam.v[name].shape).astype(np.float32)
    adam.t = 17
    return echo_beam_toolbox.train.Checkpoint(
        model_config=SMALL_MODEL,
        params=params,
        step=17,
        train_config=echo_beam_toolbox.train.TrainConfig(batch=2),
        adam=adam,
    )


def test_save_load_save_is_byte_identical(tmp_path):
    """A loaded checkpoint saves back to exactly the same bytes"""
    first, second = os.path.join(tmp_path, "a.jbf"), os.path.join(tmp_path, "b.jbf")
    checkpoint = make_checkpoint()
    echo_beam_toolbox.train.save_checkpoint(first, checkpoint)
    loaded = echo_beam_toolbox.train.load_checkpoint(first)
    echo_beam_toolbox.train.save_checkpoint(second, loaded)
    assert filecmp.cmp(first, second, shallow=False), "re-saved checkpoint differs"
    assert loaded.model_config == SMALL_MODEL, "model config changed"
    assert loaded.step == 17 and loaded.adam.t == 17, "step counters changed"
    assert loaded.train_config == checkpoint.train_config, "train config changed"
    for name in checkpoint.params.names():
        assert np.array_equal(loaded.params[name].value, checkpoint.params[name].value), f"{name} changed"
        assert np.array_equal(loaded.adam.v[name], checkpoint.adam.v[name]), f"Adam moment of {name} changed"
    assert not os.path.exists(f"{first}.tmp"), "temporary file left behind"


def test_mismatched_config_is_rejected(tmp_path):
    """Loading against a model with a different microphone count fails"""
    path = os.path.join(tmp_path, "model.jbf")
    echo_beam_toolbox.train.save_checkpoint(path, make_checkpoint())
    with pytest.raises(ConfigMismatchError):
        echo_beam_toolbox.train.load_checkpoint(path, expected_config=dataclasses.replace(SMALL_MODEL, n_mics=3))
    loaded = echo_beam_toolbox.train.load_checkpoint(path, expected_config=SMALL_MODEL)
    assert loaded.params.n_params == init_params(SMALL_MODEL).n_params, "parameter count changed"


def test_corrupt_files_are_rejected(tmp_path):
    """Bad magic bytes, flipped payload bytes and truncation are checkpoint errors"""
    path = os.path.join(tmp_path, "model.jbf")
    echo_beam_toolbox.train.save_checkpoint(path, make_checkpoint())
    with open(path, "rb") as file:
        blob = bytearray(file.read())

    def write(data: bytes) -> str:
        broken = os.path.join(tmp_path, "broken.jbf")
        with open(broken, "wb") as file:
            file.write(data)
        return broken

    flipped = blob.copy()
    flipped[-5] ^= 0xFF
    for data in (b"NOPE" + bytes(blob[4:]), bytes(flipped), bytes(blob[: len(blob) - 100])):
        with pytest.raises(CheckpointError):
            echo_beam_toolbox.train.load_checkpoint(write(data))
