import numpy as np
import pytest

import echo_beam_toolbox.scene_sim
from echo_beam_toolbox.all.audio_clip import AudioClip
from echo_beam_toolbox.custom_exceptions import DomainError


def test_none_is_identity():
    """kind='none' returns the input unchanged"""
    x = np.random.default_rng(1).standard_normal(100)
    y = echo_beam_toolbox.scene_sim.apply_nonlinearity(x, "none")
    assert np.array_equal(x, y), "kind='none' changed the signal"


def test_clip_at_eighty_percent_of_peak():
    """[0.5, 1, -1] clips to [0.5, 0.8, -0.8]"""
    y = echo_beam_toolbox.scene_sim.apply_nonlinearity(np.array([0.5, 1.0, -1.0]), "clip")
    assert np.allclose(y, [0.5, 0.8, -0.8], atol=1e-12), f"clip produced {y}, expected [0.5, 0.8, -0.8]"


def test_sigmoid_fixed_point_at_zero():
    """An all-zero input stays all-zero under the sigmoidal distortion"""
    y = echo_beam_toolbox.scene_sim.apply_nonlinearity(np.zeros(64), "sigmoid")
    assert np.all(y == 0.0), f"sigmoid of silence is not silent: max {np.max(np.abs(y))}"


def test_sigmoid_keeps_rms():
    """The sigmoidal distortion is rescaled to the input's RMS and keeps the clip type"""
    x = AudioClip(0.5 * np.sin(np.linspace(0, 40 * np.pi, 1600))[None, :], 16000)
    y = echo_beam_toolbox.scene_sim.apply_nonlinearity(x, "sigmoid")
    rms_in = np.sqrt(np.mean(x.samples**2))
    rms_out = np.sqrt(np.mean(y.samples**2))
    assert isinstance(y, AudioClip), f"expected an AudioClip back, got {type(y)}"
    assert abs(rms_in - rms_out) < 1e-9, f"RMS changed from {rms_in} to {rms_out}"
    assert not np.allclose(x.samples, y.samples), "sigmoid left the signal undistorted"


def test_empty_clip_is_rejected():
    """Empty input and unknown kinds are domain errors"""
    with pytest.raises(DomainError):
        echo_beam_toolbox.scene_sim.apply_nonlinearity(np.zeros(0), "clip")
    with pytest.raises(DomainError):
        echo_beam_toolbox.scene_sim.apply_nonlinearity(np.ones(4), "tube")
