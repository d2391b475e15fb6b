import numpy as np
import pytest

import echo_beam_toolbox.metrics
import echo_beam_toolbox.train
from echo_beam_toolbox.all.autodiff_tape import Tape, Tensor
from echo_beam_toolbox.all.losses import (
    dtd_bce_loss,
    near_activity_per_frame,
    si_snr_tensor,
    spectral_mse_tensor,
)
from echo_beam_toolbox.all.complex_tensor import ComplexTensor
from echo_beam_toolbox.all.param_tree import ParamTree
from echo_beam_toolbox.custom_exceptions import DomainError, ShapeMismatchError


def test_si_snr_example():
    """est [0, 1, 1, -1] against ref [0, 1, 0, -1] scores 4.26 dB"""
    value = echo_beam_toolbox.metrics.si_snr([0, 1, 1, -1], [0, 1, 0, -1])
    assert round(value, 2) == 4.26, f"Si-SNR {value}"


def test_si_snr_is_scale_invariant_and_capped():
    """Rescaling the estimate does not change Si-SNR; a perfect estimate hits the 60 dB cap"""
    rng = np.random.default_rng(0)
    ref = rng.standard_normal(1000)
    est = ref + 0.3 * rng.standard_normal(1000)
    assert np.isclose(
        echo_beam_toolbox.metrics.si_snr(est, ref), echo_beam_toolbox.metrics.si_snr(7.5 * est, ref)
    ), "Si-SNR depends on the estimate scale"
    assert echo_beam_toolbox.metrics.si_snr(2.0 * ref, ref) == 60.0, "perfect estimate is not capped"
    with pytest.raises(DomainError):
        echo_beam_toolbox.metrics.si_snr(est, np.zeros(1000))
    with pytest.raises(ShapeMismatchError):
        echo_beam_toolbox.metrics.si_snr(est[:10], ref)


def test_si_snr_of_a_silent_estimate_is_the_floor():
    """An all-zero (or constant) estimate has no target component and scores -60 dB"""
    ref = np.random.default_rng(1).standard_normal(16000)
    value = echo_beam_toolbox.metrics.si_snr(np.zeros(16000), ref)
    assert value == -60.0, f"silent estimate scored {value}"
    value = echo_beam_toolbox.metrics.si_snr(np.full(16000, 0.5), ref)
    assert value == -60.0, f"constant estimate scored {value}"
    value = float(si_snr_tensor(Tensor(np.zeros((1, 16000))), ref).value)
    assert value == -60.0, f"differentiable Si-SNR of a silent estimate is {value}"


def test_sdr():
    """SDR is a plain energy ratio, so it penalises scale errors"""
    ref = np.array([1.0, -1.0, 2.0])
    assert echo_beam_toolbox.metrics.sdr(np.zeros(3), ref) == 0.0, "silence should score 0 dB"
    assert np.isclose(echo_beam_toolbox.metrics.sdr(0.5 * ref, ref), 10 * np.log10(4.0)), "half scale is 6.02 dB"
    assert echo_beam_toolbox.metrics.sdr(ref, ref) == 60.0, "perfect estimate is not capped"


def test_erle():
    """ERLE uses far-end-only blocks only and is absent without them"""
    rng = np.random.default_rng(1)
    hop = 4
    mic = rng.standard_normal(16)
    est = mic.copy()
    est[4:8] *= 0.1
    labels = ["N", "F", "D", "S"]
    assert np.isclose(echo_beam_toolbox.metrics.erle(mic, est, labels, hop=hop), 20.0), "ERLE should be 20 dB"
    assert echo_beam_toolbox.metrics.erle(mic, np.zeros(16), labels, hop=hop) == 80.0, "silence is not capped"
    assert echo_beam_toolbox.metrics.erle(mic, est, ["N", "D", "S", "N"], hop=hop) is None, "ERLE without far-only blocks"
    with pytest.raises(DomainError):
        echo_beam_toolbox.metrics.erle(mic, est, [], hop=hop)


def test_spectral_mse_loss():
    """Mean of |S^ - S|^2, or of the magnitude difference"""
    zeros, ones = np.zeros((1, 3, 4)), np.ones((1, 3, 4)) * 1j
    assert echo_beam_toolbox.train.spectral_mse_loss(zeros, ones) == 1.0, "complex MSE of 0 vs j"
    assert echo_beam_toolbox.train.spectral_mse_loss(-ones, ones, mode="magnitude") == 0.0, "magnitude MSE ignores phase"
    with pytest.raises(ShapeMismatchError):
        echo_beam_toolbox.train.spectral_mse_loss(zeros, ones[:, :2])


def test_differentiable_losses_match_their_references():
    """Tensor Si-SNR and spectral MSE agree with the numpy versions"""
    rng = np.random.default_rng(2)
    ref = rng.standard_normal((1, 500))
    est = ref + 0.5 * rng.standard_normal((1, 500))
    assert np.isclose(
        float(si_snr_tensor(Tensor(est), ref).value), echo_beam_toolbox.metrics.si_snr(est, ref), atol=1e-6
    ), "Tensor Si-SNR differs"
    assert np.isclose(
        float(si_snr_tensor(Tensor(3.0 * est), ref).value), float(si_snr_tensor(Tensor(est), ref).value)
    ), "Tensor Si-SNR depends on scale"
    estimate = rng.standard_normal((1, 3, 4)) + 1j * rng.standard_normal((1, 3, 4))
    target = rng.standard_normal((1, 3, 4)) + 1j * rng.standard_normal((1, 3, 4))
    assert np.isclose(
        float(spectral_mse_tensor(ComplexTensor.from_numpy(estimate), target).value),
        echo_beam_toolbox.train.spectral_mse_loss(estimate, target),
    ), "Tensor spectral MSE differs"
    assert echo_beam_toolbox.train.si_snr_loss(est, ref) == -echo_beam_toolbox.metrics.si_snr(est, ref), "loss sign"


def test_si_snr_tensor_gradient_is_finite_for_a_perfect_estimate():
    """The floored error energy keeps the gradient finite at est == ref"""
    params = ParamTree(dtype=np.float64)
    ref = np.random.default_rng(3).standard_normal((1, 200))
    params.add("est", ref)
    with Tape() as tape:
        loss = -si_snr_tensor(params.tensor("est"), ref)
    tape.backward(loss)
    assert np.all(np.isfinite(params["est"].grad)), "non-finite gradient at the optimum"


def test_dtd_targets_and_loss():
    """Frames are labelled by the activity block under their centre; BCE is small for correct gates"""
    labels = near_activity_per_frame("NFDS", n_frames=4, hop=4, front_padding=0, fft_size=4)
    assert np.array_equal(labels, [1.0, 0.0, 1.0, 0.0]), f"labels {labels}"
    good = float(dtd_bce_loss(Tensor(np.array([0.99, 0.01, 0.99, 0.01])), labels).value)
    bad = float(dtd_bce_loss(Tensor(np.array([0.01, 0.99, 0.01, 0.99])), labels).value)
    assert good < 0.02 < bad, f"BCE good {good}, bad {bad}"
