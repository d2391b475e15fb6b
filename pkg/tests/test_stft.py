import numpy as np
import pytest

import echo_beam_toolbox.stft
from echo_beam_toolbox.all.audio_clip import AudioClip
from echo_beam_toolbox.all.experiment_config import StftConfig
from echo_beam_toolbox.all.stft_transform import analysis_window
from echo_beam_toolbox.custom_exceptions import DomainError, StftConfigMismatchError

CFG = StftConfig()


def test_frame_and_bin_counts():
    """4 s at 16 kHz gives 249 frames of 257 bins"""
    spec = echo_beam_toolbox.stft.stft(AudioClip(np.zeros((1, 64000)), 16000), CFG)
    assert spec.data.shape == (1, 249, 257), f"got {spec.data.shape}, expected (1, 249, 257)"


def test_dc_input_lands_in_bin_zero():
    """A constant c gives |Y(n, 0)| = c * sum(window) and nothing above the window's main lobe"""
    c = 0.3
    spec = echo_beam_toolbox.stft.stft(np.full(4096, c), CFG)
    expected = c * analysis_window(CFG).sum()
    assert np.allclose(np.abs(spec.data[0, :, 0]), expected, rtol=1e-9), "bin 0 magnitude is wrong"
    assert np.max(np.abs(spec.data[0, :, 2:])) < 1e-9, "energy leaked beyond bin 1"


def test_parseval():
    """One-sided spectra carry the energy of the windowed frames"""
    rng = np.random.default_rng(0)
    x = rng.standard_normal(8000)
    spec = echo_beam_toolbox.stft.stft(x, CFG).data[0]
    window = analysis_window(CFG)
    n_frames = spec.shape[0]
    frame_energy = sum(
        np.sum((x[n * CFG.hop : n * CFG.hop + CFG.fft_size] * window) ** 2) for n in range(n_frames)
    )
    weights = np.full(CFG.n_bins, 2.0)
    weights[0] = weights[-1] = 1.0
    spectral_energy = np.sum(weights * np.abs(spec) ** 2) / CFG.fft_size
    assert (
        abs(frame_energy - spectral_energy) / frame_energy < 1e-6
    ), f"frame energy {frame_energy} vs spectral energy {spectral_energy}"


def test_round_trip_reconstructs_interior():
    """istft(stft(x)) == x away from the edges, to 1e-6"""
    rng = np.random.default_rng(1)
    x = AudioClip(rng.standard_normal((2, 16000)), 16000)
    y = echo_beam_toolbox.stft.istft(echo_beam_toolbox.stft.stft(x, CFG), CFG, 16000)
    covered = (echo_beam_toolbox.stft.n_frames_for(16000, CFG) - 1) * CFG.hop + CFG.fft_size
    interior = slice(CFG.fft_size, covered - CFG.fft_size)
    error = np.max(np.abs(y.samples[:, interior] - x.samples[:, interior]))
    assert error < 1e-6, f"round-trip error {error}"
    assert y.samples.shape == x.samples.shape, f"output shape {y.samples.shape}"


def test_zero_spectrogram_gives_silence():
    """An all-zero spectrogram inverts to an all-zero clip"""
    spec = echo_beam_toolbox.stft.Spectrogram(np.zeros((1, 10, CFG.n_bins), dtype=complex), CFG)
    y = echo_beam_toolbox.stft.istft(spec, CFG, 3000)
    assert np.all(y.samples == 0.0), "silence did not invert to silence"


def test_impulse_round_trip():
    """A unit impulse at sample 8000 comes back with sidelobes below 1e-6"""
    x = np.zeros(16000)
    x[8000] = 1.0
    y = echo_beam_toolbox.stft.istft(echo_beam_toolbox.stft.stft(x, CFG), CFG, 16000).samples[0]
    assert abs(y[8000] - 1.0) < 1e-6, f"impulse height {y[8000]}"
    assert np.max(np.abs(np.delete(y, 8000))) < 1e-6, "sidelobes above 1e-6"


def test_linearity():
    """stft(a x + b y) == a stft(x) + b stft(y)"""
    rng = np.random.default_rng(2)
    x, y = rng.standard_normal(4000), rng.standard_normal(4000)
    left = echo_beam_toolbox.stft.stft(2.5 * x - 0.7 * y, CFG).data
    right = 2.5 * echo_beam_toolbox.stft.stft(x, CFG).data - 0.7 * echo_beam_toolbox.stft.stft(y, CFG).data
    assert np.max(np.abs(left - right)) < 1e-6 * np.max(np.abs(right)), "STFT is not linear"


def test_stft_op_matches_stft():
    """The tape operation returns the same spectra stacked as (real, imaginary)"""
    rng = np.random.default_rng(3)
    x = rng.standard_normal((2, 2048))
    stacked = echo_beam_toolbox.stft.stft_op(x, CFG).value
    reference = echo_beam_toolbox.stft.stft(x, CFG).data
    assert stacked.shape == (2,) + reference.shape, f"stft_op shape {stacked.shape}"
    assert np.allclose(stacked[0] + 1j * stacked[1], reference), "stft_op differs from stft"


def test_errors():
    """Short clips and mismatched configs are domain errors"""
    with pytest.raises(DomainError):
        echo_beam_toolbox.stft.stft(np.zeros(100), CFG)
    spec = echo_beam_toolbox.stft.stft(np.zeros(2048), CFG)
    with pytest.raises(StftConfigMismatchError):
        echo_beam_toolbox.stft.istft(spec, StftConfig(fft_size=256, win_length=256, hop=128), 2048)
