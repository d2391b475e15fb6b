"""Defines the joint echo-cancelling beamformer stages: estimate_speech_noise(), covariance(),
predict_weights(), dtd_scale() and apply_beamformer()

Beam weights are complex [N, F, C]; the beamformer output is sum over c of conj(w_c) * Y~_c.
"""

import numpy as np

from echo_beam_toolbox.all.autodiff_tape import Tensor, concat, elu, sigmoid
from echo_beam_toolbox.all.complex_tensor import ComplexTensor
from echo_beam_toolbox.all.experiment_config import ModelConfig
from echo_beam_toolbox.all.neural_aec_module import (
    _as_complex,
    apply_crf,
    cross_corr_features,
    expand_frames,
    feature_attention,
    init_feature_attention,
    init_frame_expansion,
    init_frame_projection,
    project_frames,
)
from echo_beam_toolbox.all.neural_layers import (
    apply_dense,
    apply_gru,
    apply_layer_norm,
    conv2d,
    init_conv,
    init_dense,
    init_gru,
    init_layer_norm,
    init_mhsa,
    mhsa,
)
from echo_beam_toolbox.all.param_tree import ParamTree
from echo_beam_toolbox.custom_exceptions import ShapeMismatchError


def init_jaecbf(params: ParamTree, cfg: ModelConfig, rng: np.random.Generator) -> None:
    c = cfg.n_beam_channels
    d = cfg.width
    init_feature_attention(params, "bf/features", rng, cfg.n_bins, c * c, d, cfg.freq_basis)
    init_dense(params, "bf/filters/local", rng, c * c, d)
    init_gru(params, "bf/filters/gru", rng, d, cfg.gru_hidden)
    init_dense(params, "bf/filters/dense", rng, cfg.gru_hidden, d)
    init_conv(params, "bf/filters/freq_conv", rng, d, d, (1, 3))
    init_dense(params, "bf/filters/speech_head", rng, d, 2 * c * cfg.n_taps)
    init_dense(params, "bf/filters/noise_head", rng, d, 2 * c * cfg.n_taps)
    init_layer_norm(params, "bf/cov_speech/norm", 2 * c * c)
    init_layer_norm(params, "bf/cov_noise/norm", 2 * c * c)
    init_gru(params, "bf/weights/gru", rng, 4 * c * c, cfg.gru_hidden)
    init_dense(params, "bf/weights/hidden", rng, cfg.gru_hidden, d)
    init_dense(params, "bf/weights/out", rng, d, 2 * c)
    init_frame_projection(params, "bf/dtd/proj", rng, cfg.n_bins, 2 * c, d, cfg.freq_basis)
    init_mhsa(params, "bf/dtd/mhsa", rng, d)
    init_frame_expansion(params, "bf/dtd/refine", rng, d, 2 * c, cfg.freq_basis, cfg.n_bins)
    init_gru(params, "bf/dtd/gate_gru", rng, d, cfg.gru_hidden)
    init_dense(params, "bf/dtd/gate", rng, cfg.gru_hidden, 1)


def _head_to_crf(head: Tensor, n_channels: int, n_taps: int) -> ComplexTensor:
    """[N, F, 2*C*taps] -> complex filters [C, N, F, taps]"""
    n_frames, n_bins, _ = head.shape
    grouped = head.reshape((n_frames, n_bins, 2, n_channels, n_taps)).transpose((2, 3, 0, 1, 4))
    return ComplexTensor(grouped[0], grouped[1])


def estimate_speech_noise(params: ParamTree, cfg: ModelConfig, stacked) -> tuple:
    """Returns (S~, N~), each [C, N, F], by applying the speech and noise ratio filters to Y~

    The flattened correlation features of Y~ are projected per frame and attended over time;
    that frame context is added to a bin-shared embedding of each bin's own features. A GRU over
    time (bins as batch), a dense layer and a convolution along frequency follow before the two
    filter heads.
    """
    stacked = _as_complex(stacked)
    c = cfg.n_beam_channels
    if stacked.shape[0] != c:
        raise ShapeMismatchError(f"beamformer expects {c} channels, got {stacked.shape[0]}")
    n_frames, n_bins = stacked.shape[1:]
    context, per_bin = feature_attention(params, "bf/features", cross_corr_features(stacked), n_bins, cfg.heads)
    joint = apply_dense(params, "bf/filters/local", per_bin) + context.reshape((n_frames, 1, cfg.width))
    hidden = elu(apply_dense(params, "bf/filters/dense", apply_gru(params, "bf/filters/gru", joint)))
    planes = hidden.transpose((2, 0, 1)).reshape((1, cfg.width, n_frames, n_bins))
    planes = elu(
        conv2d(
            planes,
            params.tensor("bf/filters/freq_conv/kernel"),
            params.tensor("bf/filters/freq_conv/bias"),
            stride=(1, 1),
            padding=(0, 1),
        )
    )
    hidden = planes.reshape((cfg.width, n_frames, n_bins)).transpose((1, 2, 0))
    crf_speech = _head_to_crf(apply_dense(params, "bf/filters/speech_head", hidden), c, cfg.n_taps)
    crf_noise = _head_to_crf(apply_dense(params, "bf/filters/noise_head", hidden), c, cfg.n_taps)
    speech = apply_crf(stacked, crf_speech, cfg.crf_k, cfg.crf_l)
    noise = apply_crf(stacked, crf_noise, cfg.crf_k, cfg.crf_l)
    return speech, noise


def covariance_matrices(spectra: np.ndarray) -> np.ndarray:
    """Frame-wise rank-1 covariances Phi(n, f) = S(n, f) S(n, f)^H: [C, N, F] -> [N, F, C, C]"""
    spectra = np.asarray(spectra)
    return np.einsum("anf,bnf->nfab", spectra, np.conj(spectra))


def covariance(params: ParamTree, name: str, spectra) -> Tensor:
    """Layer-normalised real view of Phi(n, f) = S(n, f) S(n, f)^H

    All C^2 real parts are followed by all C^2 imaginary parts (row-major over (a, b)),
    normalised over that 2C^2 axis with the learnable affine [name]/norm.

    Returns
    -------
    Tensor
        [N, F, 2C^2]
    """
    spectra = _as_complex(spectra)
    n_channels, n_frames, n_bins = spectra.shape
    column = spectra.reshape((n_channels, 1, n_frames, n_bins))
    row = spectra.reshape((1, n_channels, n_frames, n_bins)).conj()
    phi = column * row
    flat = concat(
        [
            phi.re.reshape((n_channels * n_channels, n_frames, n_bins)),
            phi.im.reshape((n_channels * n_channels, n_frames, n_bins)),
        ],
        axis=0,
    )
    return apply_layer_norm(params, f"{name}/norm", flat.transpose((1, 2, 0)))


def predict_weights(params: ParamTree, cfg: ModelConfig, phi_speech: Tensor, phi_noise: Tensor) -> ComplexTensor:
    """Bin-shared GRU over time on [Phi_S || Phi_N] followed by dense layers: complex w [N, F, C]

    The weight of frame n depends on frames 0..n only.
    """
    if phi_speech.shape != phi_noise.shape:
        raise ShapeMismatchError(
            f"speech {phi_speech.shape} and noise {phi_noise.shape} covariance features differ"
        )
    c = cfg.n_beam_channels
    joint = concat([phi_speech, phi_noise], axis=-1)
    hidden = apply_gru(params, "bf/weights/gru", joint)
    hidden = elu(apply_dense(params, "bf/weights/hidden", hidden))
    weights = apply_dense(params, "bf/weights/out", hidden)
    return ComplexTensor(weights[:, :, :c], weights[:, :, c:])


def dtd_scale(params: ParamTree, cfg: ModelConfig, weights: ComplexTensor, use_dtd: bool = True) -> tuple:
    """Refines the weight sequence with self-attention over time and gates every frame with a
    double-talk probability p(n)

    The flattened frame vector [Re w || Im w] over all bins is projected to the model width and
    attended over time; the attended sequence is expanded back to [F, 2C] and added to the
    weights. The gate is a GRU over the projected sequence with a sigmoid head. With
    use_dtd=False the gate is forced to 1.

    Returns
    -------
    (ComplexTensor, Tensor, ComplexTensor)
        scaled weights [N, F, C], p(n) [N], refined (ungated) weights [N, F, C]
    """
    c = cfg.n_beam_channels
    n_frames = weights.shape[0]
    features = concat([weights.re, weights.im], axis=-1)
    projected = project_frames(params, "bf/dtd/proj", features)
    attended = mhsa(projected, projected, projected, cfg.heads, params, "bf/dtd/mhsa")
    refined_flat = features + expand_frames(params, "bf/dtd/refine", attended, 2 * c)
    refined = ComplexTensor(refined_flat[:, :, :c], refined_flat[:, :, c:])

    if not use_dtd:
        return refined, Tensor(np.ones(n_frames, dtype=params.dtype)), refined
    gate_state = apply_gru(params, "bf/dtd/gate_gru", projected.reshape((n_frames, 1, cfg.width)))
    probability = sigmoid(apply_dense(params, "bf/dtd/gate", gate_state)).reshape((n_frames,))
    gate = probability.reshape((n_frames, 1, 1))
    return refined * gate, probability, refined


def apply_beamformer(weights, stacked) -> ComplexTensor:
    """S^(n, f) = w(n, f)^H Y~(n, f): weights [N, F, C], Y~ [C, N, F] -> [1, N, F]

    Example Usage
    -------------
    >>> y = np.random.default_rng(0).standard_normal((3, 2, 4)) + 0j
    >>> selector = np.zeros((2, 4, 3)); selector[..., 1] = 1.0
    >>> np.array_equal(apply_beamformer(selector + 0j, y).numpy()[0], y[1])
    True
    """
    weights, stacked = _as_complex(weights), _as_complex(stacked)
    n_frames, n_bins, n_channels = weights.shape
    if stacked.shape != (n_channels, n_frames, n_bins):
        raise ShapeMismatchError(
            f"weights {weights.shape} do not match beamformer input {stacked.shape}"
        )
    return (weights.transpose((2, 0, 1)).conj() * stacked).sum(axis=0, keepdims=True)
