import numpy as np
import pytest

import echo_beam_toolbox.jaecbf
from echo_beam_toolbox.all.audio_clip import AudioClip
from echo_beam_toolbox.all.autodiff_tape import Tensor
from echo_beam_toolbox.all.complex_tensor import ComplexTensor
from echo_beam_toolbox.all.experiment_config import StftConfig
from echo_beam_toolbox.all.gradcheck_suite import SMALL_MODEL, SMALL_STFT
from echo_beam_toolbox.all.jaecbf_module import covariance_matrices, init_jaecbf
from echo_beam_toolbox.all.param_tree import ParamTree
from echo_beam_toolbox.custom_exceptions import ShapeMismatchError

C = SMALL_MODEL.n_beam_channels


def random_spectra(rng, shape) -> np.ndarray:
    return rng.standard_normal(shape) + 1j * rng.standard_normal(shape)


def beamformer_params(seed: int = 0) -> ParamTree:
    params = ParamTree(dtype=np.float64)
    init_jaecbf(params, SMALL_MODEL, np.random.default_rng(seed))
    return params


def make_clips(n_samples: int = 1200, seed: int = 0) -> tuple:
    rng = np.random.default_rng(seed)
    mixture = AudioClip(0.1 * rng.standard_normal((SMALL_MODEL.n_mics, n_samples)), 16000)
    far_end = AudioClip(0.1 * rng.standard_normal((1, n_samples)), 16000)
    return mixture, far_end


def test_covariance_matrices_are_rank_one_hermitian():
    """Phi = S S^H is Hermitian with the single non-zero eigenvalue |S|^2"""
    spectra = random_spectra(np.random.default_rng(1), (4, 3, 2))
    phi = covariance_matrices(spectra)
    assert np.allclose(phi, np.conj(np.swapaxes(phi, -1, -2))), "covariance is not Hermitian"
    eigenvalues = np.linalg.eigvalsh(phi[1, 0])
    assert np.isclose(eigenvalues[-1], np.sum(np.abs(spectra[:, 1, 0]) ** 2)), f"eigenvalues {eigenvalues}"
    assert np.allclose(eigenvalues[:-1], 0.0, atol=1e-9), f"eigenvalues {eigenvalues}"


def test_covariance_of_unit_vector():
    """S = e_1 puts the only non-zero covariance entry first, then layer norm standardises"""
    spectra = np.zeros((C, 1, 1), dtype=complex)
    spectra[0] = 1.0
    features = echo_beam_toolbox.jaecbf.covariance(beamformer_params(), "bf/cov_speech", spectra).value[0, 0]
    assert features.shape == (2 * C * C,), f"feature shape {features.shape}"
    assert np.argmax(features) == 0, "Phi[0, 0] is not the largest feature"
    assert np.isclose(features.mean(), 0.0, atol=1e-9), f"mean {features.mean()}"
    assert np.isclose(features.std(), 1.0, atol=1e-3), f"std {features.std()}"


def test_predict_weights_is_causal():
    """Changing frames from n0 on leaves the weights of earlier frames untouched"""
    rng = np.random.default_rng(2)
    params = beamformer_params()
    phi_speech = rng.standard_normal((6, SMALL_MODEL.n_bins, 2 * C * C))
    phi_noise = rng.standard_normal((6, SMALL_MODEL.n_bins, 2 * C * C))
    before = echo_beam_toolbox.jaecbf.predict_weights(params, SMALL_MODEL, Tensor(phi_speech), Tensor(phi_noise))
    changed = phi_speech.copy()
    changed[3:] += 5.0
    after = echo_beam_toolbox.jaecbf.predict_weights(params, SMALL_MODEL, Tensor(changed), Tensor(phi_noise))
    assert before.shape == (6, SMALL_MODEL.n_bins, C), f"weights shape {before.shape}"
    assert np.allclose(before.numpy()[:3], after.numpy()[:3], rtol=0, atol=1e-12), "past weights changed"
    assert not np.allclose(before.numpy()[3:], after.numpy()[3:]), "future frames had no effect"


def test_dtd_gate_follows_its_bias():
    """A large negative gate bias drives p(n) to 0; without the gate p(n) = 1"""
    params = beamformer_params()
    weights = ComplexTensor.from_numpy(random_spectra(np.random.default_rng(3), (5, SMALL_MODEL.n_bins, C)))
    _, probability, _ = echo_beam_toolbox.jaecbf.dtd_scale(params, SMALL_MODEL, weights)
    assert np.all((probability.value >= 0) & (probability.value <= 1)), "p(n) left [0, 1]"
    params["bf/dtd/gate/b"].value[...] = -50.0
    scaled, probability, _ = echo_beam_toolbox.jaecbf.dtd_scale(params, SMALL_MODEL, weights)
    assert np.all(probability.value < 1e-6), f"p(n) = {probability.value}"
    assert np.max(np.abs(scaled.numpy())) < 1e-3, "gated weights were not suppressed"
    scaled, probability, refined = echo_beam_toolbox.jaecbf.dtd_scale(params, SMALL_MODEL, weights, use_dtd=False)
    assert np.all(probability.value == 1.0), "disabled gate is not 1"
    assert np.allclose(scaled.numpy(), refined.numpy()), "disabled gate changed the weights"


def test_beamformer_selects_a_channel():
    """w = e_c returns channel c of the input"""
    stacked = random_spectra(np.random.default_rng(4), (C, 3, 4))
    selector = np.zeros((3, 4, C), dtype=complex)
    selector[..., 2] = 1.0
    out = echo_beam_toolbox.jaecbf.apply_beamformer(selector, stacked).numpy()
    assert np.allclose(out[0], stacked[2]), "selector weights did not pick channel 2"


def test_beamformer_matches_a_direct_loop():
    """S(n, f) = sum_c conj(w_c(n, f)) Y_c(n, f)"""
    rng = np.random.default_rng(5)
    stacked = random_spectra(rng, (C, 3, 4))
    weights = random_spectra(rng, (3, 4, C))
    expected = np.zeros((3, 4), dtype=complex)
    for n in range(3):
        for f in range(4):
            expected[n, f] = np.vdot(weights[n, f], stacked[:, n, f])
    out = echo_beam_toolbox.jaecbf.apply_beamformer(weights, stacked).numpy()
    assert np.allclose(out[0], expected), "apply_beamformer differs from w^H y"
    with pytest.raises(ShapeMismatchError):
        echo_beam_toolbox.jaecbf.apply_beamformer(weights[:, :3], stacked)


def test_speech_noise_estimates_have_the_input_shape():
    """S~ and N~ are [C, N, F] like Y~"""
    stacked = random_spectra(np.random.default_rng(6), (C, 4, SMALL_MODEL.n_bins))
    speech, noise = echo_beam_toolbox.jaecbf.estimate_speech_noise(beamformer_params(), SMALL_MODEL, stacked)
    assert speech.shape == noise.shape == stacked.shape, f"shapes {speech.shape} / {noise.shape}"
    with pytest.raises(ShapeMismatchError):
        echo_beam_toolbox.jaecbf.estimate_speech_noise(beamformer_params(), SMALL_MODEL, stacked[:3])


def test_enhance_keeps_the_input_length():
    """A fresh model returns a finite single-channel clip of the input's length, also in chunks"""
    model = echo_beam_toolbox.jaecbf.JaecbfModel(SMALL_MODEL, SMALL_STFT)
    mixture, far_end = make_clips()
    estimate, details = echo_beam_toolbox.jaecbf.enhance(mixture, far_end, model, return_details=True)
    assert estimate.samples.shape == (1, mixture.n_samples), f"estimate shape {estimate.samples.shape}"
    assert np.all(np.isfinite(estimate.samples)), "non-finite estimate"
    gate = details["dtd_probability"]
    assert np.all((gate >= 0) & (gate <= 1)), "gate outside [0, 1]"
    chunked, details = echo_beam_toolbox.jaecbf.enhance(
        mixture, far_end, model, chunk_seconds=0.03, return_details=True
    )
    assert chunked.n_samples == mixture.n_samples, f"chunked length {chunked.n_samples}"
    assert len(details["frames_per_chunk"]) == 3, f"chunks {details['frames_per_chunk']}"


def test_zero_emission_model_outputs_silence():
    """With the weight head zeroed every output sample is 0"""
    model = echo_beam_toolbox.jaecbf.JaecbfModel(SMALL_MODEL, SMALL_STFT)
    model.params.zero_("bf/weights/out")
    estimate = echo_beam_toolbox.jaecbf.enhance(*make_clips(), model)
    assert np.all(estimate.samples == 0.0), "zero-emission model produced sound"


def test_init_params_is_deterministic_and_checks_shapes():
    """Same config gives the same parameters; a mismatched STFT or microphone count is rejected"""
    first = echo_beam_toolbox.jaecbf.init_params(SMALL_MODEL)
    second = echo_beam_toolbox.jaecbf.init_params(SMALL_MODEL)
    assert all(np.array_equal(first[name].value, second[name].value) for name in first.names()), "init differs"
    with pytest.raises(ShapeMismatchError):
        echo_beam_toolbox.jaecbf.JaecbfModel(SMALL_MODEL, StftConfig())
    model = echo_beam_toolbox.jaecbf.JaecbfModel(SMALL_MODEL, SMALL_STFT)
    mixture, far_end = make_clips()
    with pytest.raises(ShapeMismatchError):
        echo_beam_toolbox.jaecbf.enhance(AudioClip(mixture.samples[:1], 16000), far_end, model)


def test_dtd_refinement_is_residual():
    """With the expansion back to [F, 2C] zeroed the refined weights equal the input weights"""
    params = beamformer_params()
    params.zero_("bf/dtd/refine")
    weights = ComplexTensor.from_numpy(random_spectra(np.random.default_rng(7), (5, SMALL_MODEL.n_bins, C)))
    _, _, refined = echo_beam_toolbox.jaecbf.dtd_scale(params, SMALL_MODEL, weights)
    assert np.allclose(refined.numpy(), weights.numpy()), "zeroed refinement changed the weights"


def test_dtd_gate_reads_the_whole_frame_causally():
    """The gate of frame n changes with any bin of frame n but not with later frames"""
    params = beamformer_params()
    weights = random_spectra(np.random.default_rng(8), (5, SMALL_MODEL.n_bins, C))
    _, before, _ = echo_beam_toolbox.jaecbf.dtd_scale(params, SMALL_MODEL, ComplexTensor.from_numpy(weights))
    last_bin = weights.copy()
    last_bin[2, -1] += 5.0
    _, after, _ = echo_beam_toolbox.jaecbf.dtd_scale(params, SMALL_MODEL, ComplexTensor.from_numpy(last_bin))
    assert np.allclose(before.value[:2], after.value[:2], rtol=0, atol=1e-12), "earlier gates changed"
    assert not np.isclose(before.value[2], after.value[2], rtol=0, atol=1e-9), "last bin did not reach the gate"
