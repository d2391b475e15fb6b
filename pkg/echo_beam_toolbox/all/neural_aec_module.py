"""Defines the multichannel neural echo canceller: correlation features, the two convolutional
encoders, the frequency-then-time GRU (ft_gru), the two decoders emitting complex ratio
filters, apply_crf() and the channel stacking of its outputs

Spectra are complex arrays [channels, frames N, bins F]. Filters are complex
[channels, N, F, taps] with taps ordered time offset outer, frequency offset inner.
"""

import numpy as np

from echo_beam_toolbox.all.autodiff_tape import Tensor, concat, elu, tanh
from echo_beam_toolbox.all.complex_tensor import ComplexTensor, complex_concat
from echo_beam_toolbox.all.experiment_config import ModelConfig
from echo_beam_toolbox.all.neural_layers import (
    apply_dense,
    apply_gru,
    apply_layer_norm,
    conv2d,
    conv_transpose2d,
    init_conv,
    init_dense,
    init_gru,
    init_layer_norm,
    init_mhsa,
    mhsa,
)
from echo_beam_toolbox.all.param_tree import ParamTree
from echo_beam_toolbox.custom_exceptions import DomainError, ShapeMismatchError

KERNEL = (3, 3)
STRIDE = (1, 2)
PADDING = (1, 1)


def _as_complex(spectra) -> ComplexTensor:
    if isinstance(spectra, ComplexTensor):
        return spectra
    return ComplexTensor.from_numpy(np.asarray(spectra))


def correlation_matrix(spectra: np.ndarray) -> np.ndarray:
    """R(n, f) = Y(n, f) Y(n, f)^H for every TF bin: [C, N, F] -> [N, F, C, C]

    Example Usage
    -------------
    >>> correlation_matrix(np.array([1 + 1j, 2.0]).reshape(2, 1, 1))[0, 0]
    array([[2.+0.j, 2.+2.j],
           [2.-2.j, 4.+0.j]])
    """
    spectra = np.asarray(spectra)
    return np.einsum("anf,bnf->nfab", spectra, np.conj(spectra))


def _pair_indices(n_channels: int) -> tuple:
    upper_a, upper_b = np.triu_indices(n_channels)
    strict_a, strict_b = np.triu_indices(n_channels, k=1)
    return upper_a, upper_b, strict_a, strict_b


def cross_corr_features(spectra) -> Tensor:
    """Per-frame real feature vector of R(n, f): for every bin, the real parts of the upper
    triangle (diagonal included) followed by the imaginary parts of the strict upper triangle,
    bins concatenated in order

    Parameters
    ----------
    spectra : ComplexTensor or numpy.ndarray
        Complex spectra [C, N, F] with C >= 2 (mixture channels, far-end last)

    Returns
    -------
    Tensor
        Features [N, F * C^2]; entries f * C^2 ... (f + 1) * C^2 - 1 belong to bin f
    """
    spectra = _as_complex(spectra)
    n_channels, n_frames, n_bins = spectra.shape
    if n_channels < 2:
        raise DomainError("correlation features need the mixture and the far-end channel")
    upper_a, upper_b, strict_a, strict_b = _pair_indices(n_channels)
    upper = spectra[upper_a] * spectra[upper_b].conj()
    strict = spectra[strict_a] * spectra[strict_b].conj()
    features = concat([upper.re, strict.im], axis=0)
    return features.transpose((1, 2, 0)).reshape((n_frames, n_bins * n_channels * n_channels))


def init_frame_projection(
    params: ParamTree, name: str, rng: np.random.Generator, n_bins: int, n_entries: int, width: int, basis: int
) -> None:
    init_dense(params, f"{name}/freq", rng, n_bins, basis)
    init_dense(params, f"{name}/proj", rng, n_entries * basis, width)


def project_frames(params: ParamTree, name: str, per_bin: Tensor) -> Tensor:
    """Linear map of every frame's flattened [F, K] block to the model width: [N, F, K] -> [N, width]

    The map is separable: a learned compression of the frequency axis to a few basis
    weightings ([name]/freq, F -> B) followed by a dense layer over the K * B values.
    """
    n_frames, _, n_entries = per_bin.shape
    compressed = apply_dense(params, f"{name}/freq", per_bin.transpose((0, 2, 1)))
    return apply_dense(params, f"{name}/proj", compressed.reshape((n_frames, n_entries * compressed.shape[-1])))


def init_frame_expansion(
    params: ParamTree, name: str, rng: np.random.Generator, width: int, n_entries: int, basis: int, n_bins: int
) -> None:
    init_dense(params, f"{name}/proj", rng, width, n_entries * basis)
    init_dense(params, f"{name}/freq", rng, basis, n_bins)


def expand_frames(params: ParamTree, name: str, frames: Tensor, n_entries: int) -> Tensor:
    """Inverse direction of project_frames(): [N, width] -> [N, F, K]"""
    n_frames = frames.shape[0]
    planes = apply_dense(params, f"{name}/proj", frames)
    planes = planes.reshape((n_frames, n_entries, planes.shape[-1] // n_entries))
    return apply_dense(params, f"{name}/freq", planes).transpose((0, 2, 1))


def init_feature_attention(
    params: ParamTree,
    name: str,
    rng: np.random.Generator,
    n_bins: int,
    n_entries: int,
    width: int,
    basis: int,
) -> None:
    init_layer_norm(params, f"{name}/norm", n_entries)
    init_frame_projection(params, f"{name}/frame", rng, n_bins, n_entries, width, basis)
    init_mhsa(params, f"{name}/mhsa", rng, width)


def feature_attention(params: ParamTree, name: str, features: Tensor, n_bins: int, heads: int) -> tuple:
    """Bin-wise layer norm, projection of the whole frame to the model width, then
    self-attention over time

    Parameters
    ----------
    features : Tensor
        Flattened correlation features [N, F * K]
    n_bins : int
        F

    Returns
    -------
    (Tensor, Tensor)
        Attended frame features [N, width] and the normalised per-bin features [N, F, K]
    """
    n_frames, n_values = features.shape
    if n_values % n_bins != 0:
        raise ShapeMismatchError(f"{n_values} feature values do not split into {n_bins} bins")
    per_bin = apply_layer_norm(
        params, f"{name}/norm", features.reshape((n_frames, n_bins, n_values // n_bins))
    )
    frames = project_frames(params, f"{name}/frame", per_bin)
    return mhsa(frames, frames, frames, heads, params, f"{name}/mhsa"), per_bin


def init_ft_gru(params: ParamTree, name: str, rng: np.random.Generator, channels: int, hidden: int) -> None:
    for axis in ("freq", "time"):
        init_gru(params, f"{name}/{axis}_gru", rng, channels, hidden)
        init_dense(params, f"{name}/{axis}_dense", rng, hidden, channels)


def ft_gru(params: ParamTree, name: str, encoded: Tensor) -> Tensor:
    """Frequency-then-time recurrence with residual connections

    Z = dense(GRU over bins (frames as batch)) + U_enc, then
    U_out = dense(GRU over frames (bins as batch)) + Z, preserving the [1, C, N, F'] shape.
    """
    if encoded.ndim != 4 or encoded.shape[0] != 1:
        raise ShapeMismatchError(f"ft_gru expects [1, C, N, F'], got {encoded.shape}")
    by_freq = encoded[0].transpose((2, 1, 0))
    z = apply_dense(params, f"{name}/freq_dense", apply_gru(params, f"{name}/freq_gru", by_freq)) + by_freq
    by_time = z.transpose((1, 0, 2))
    out = apply_dense(params, f"{name}/time_dense", apply_gru(params, f"{name}/time_gru", by_time)) + by_time
    channels, n_frames, n_bins = encoded.shape[1:]
    return out.transpose((2, 0, 1)).reshape((1, channels, n_frames, n_bins))


def init_encoder(params: ParamTree, name: str, rng: np.random.Generator, c_in: int, channels: tuple) -> None:
    for layer, c_out in enumerate(channels):
        init_conv(params, f"{name}/conv{layer}", rng, c_in, c_out, KERNEL)
        c_in = c_out


def run_encoder(params: ParamTree, name: str, x: Tensor, n_layers: int) -> tuple:
    """Strided conv + ELU stack; returns (output, the frequency size seen by every layer)"""
    sizes = []
    for layer in range(n_layers):
        sizes.append(x.shape[-1])
        x = elu(
            conv2d(
                x,
                params.tensor(f"{name}/conv{layer}/kernel"),
                params.tensor(f"{name}/conv{layer}/bias"),
                STRIDE,
                PADDING,
            )
        )
    return x, sizes


def init_decoder(params: ParamTree, name: str, rng: np.random.Generator, channels: tuple, c_out: int) -> None:
    widths = list(reversed(channels)) + [c_out]
    for layer in range(len(channels)):
        init_conv(params, f"{name}/deconv{layer}", rng, widths[layer], widths[layer + 1], KERNEL, transposed=True)


def run_decoder(params: ParamTree, name: str, x: Tensor, sizes: list, bounded: bool) -> Tensor:
    """Transposed conv stack mirroring run_encoder(); the last layer has no ELU"""
    n_layers = len(sizes)
    for layer, target in enumerate(reversed(sizes)):
        natural = (x.shape[-1] - 1) * STRIDE[1] - 2 * PADDING[1] + KERNEL[1]
        x = conv_transpose2d(
            x,
            params.tensor(f"{name}/deconv{layer}/kernel"),
            params.tensor(f"{name}/deconv{layer}/bias"),
            STRIDE,
            PADDING,
            output_padding=(0, target - natural),
        )
        if layer < n_layers - 1:
            x = elu(x)
    return tanh(x) if bounded else x


def planes_to_crf(planes: Tensor, n_channels: int, n_taps: int) -> ComplexTensor:
    """[1, 2*channels*taps, N, F] decoder planes -> complex filters [channels, N, F, taps]"""
    _, _, n_frames, n_bins = planes.shape
    grouped = planes.reshape((2, n_channels, n_taps, n_frames, n_bins)).transpose((0, 1, 3, 4, 2))
    return ComplexTensor(grouped[0], grouped[1])


def spectra_to_planes(spectra: ComplexTensor) -> Tensor:
    """Complex [C, N, F] -> real conv input [1, 2C, N, F] (all real parts, then imaginary)"""
    n_channels, n_frames, n_bins = spectra.shape
    return concat([spectra.re, spectra.im], axis=0).reshape((1, 2 * n_channels, n_frames, n_bins))


def apply_crf(spectra, crf, k: int = 1, l: int = 0) -> ComplexTensor:
    """out(n, f) = sum over (t1, t2) of crf(n, f, t1, t2) * in(n + t1, f + t2), zero outside the grid

    Parameters
    ----------
    spectra : ComplexTensor or numpy.ndarray
        Complex input [C, N, F]
    crf : ComplexTensor or numpy.ndarray
        Complex filters [C, N, F, (2k+1)(2l+1)]
    k, l : int
        Half-widths of the time and frequency support

    Example Usage
    -------------
    >>> x = np.arange(6.0).reshape(1, 3, 2) + 0j
    >>> identity = np.zeros((1, 3, 2, 3), dtype=complex); identity[..., 1] = 1.0
    >>> np.allclose(apply_crf(x, identity).numpy(), x)
    True
    """
    spectra, crf = _as_complex(spectra), _as_complex(crf)
    n_channels, n_frames, n_bins = spectra.shape
    n_taps = (2 * k + 1) * (2 * l + 1)
    if crf.shape != (n_channels, n_frames, n_bins, n_taps):
        raise ShapeMismatchError(
            f"filters {crf.shape} do not fit spectra {spectra.shape} with {n_taps} taps"
        )
    padded = spectra.pad(((0, 0), (k, k), (l, l)))
    out = None
    for t1 in range(-k, k + 1):
        for t2 in range(-l, l + 1):
            tap = (t1 + k) * (2 * l + 1) + (t2 + l)
            shifted = padded[:, k + t1 : k + t1 + n_frames, l + t2 : l + t2 + n_bins]
            term = crf[:, :, :, tap] * shifted
            out = term if out is None else out + term
    return out


def stack_outputs(spectra, aec_mixture, aec_far) -> ComplexTensor:
    """Channel order [Y (M+1), D_aec (M), X_aec (1)]"""
    spectra, aec_mixture, aec_far = (_as_complex(s) for s in (spectra, aec_mixture, aec_far))
    grids = {s.shape[1:] for s in (spectra, aec_mixture, aec_far)}
    if len(grids) != 1:
        raise ShapeMismatchError(f"cannot stack spectra with frame/bin grids {sorted(grids)}")
    if aec_mixture.shape[0] != spectra.shape[0] - 1 or aec_far.shape[0] != 1:
        raise ShapeMismatchError("D_aec must have M channels and X_aec one channel")
    return complex_concat([spectra, aec_mixture, aec_far], axis=0)


def unstack_outputs(stacked: ComplexTensor, n_mics: int) -> tuple:
    """Inverse of stack_outputs(): returns (Y, D_aec, X_aec)"""
    return (
        stacked[: n_mics + 1],
        stacked[n_mics + 1 : 2 * n_mics + 1],
        stacked[2 * n_mics + 1 :],
    )


def init_neural_aec(params: ParamTree, cfg: ModelConfig, rng: np.random.Generator) -> None:
    n_in = cfg.n_mics + 1
    init_feature_attention(params, "aec/features", rng, cfg.n_bins, n_in**2, cfg.width, cfg.freq_basis)
    init_encoder(params, "aec/enc_mix", rng, 2 * cfg.n_mics, cfg.encoder_channels)
    init_encoder(params, "aec/enc_far", rng, 2 + cfg.width, cfg.encoder_channels)
    init_ft_gru(params, "aec/ft_gru", rng, cfg.encoder_channels[-1], cfg.gru_hidden)
    init_decoder(params, "aec/dec_mix", rng, cfg.encoder_channels, 2 * cfg.n_mics * cfg.n_taps)
    init_decoder(params, "aec/dec_echo", rng, cfg.encoder_channels, 2 * cfg.n_taps)


def estimate_crfs(params: ParamTree, cfg: ModelConfig, features: Tensor, spectra) -> tuple:
    """Emits (cRF_mix [M, N, F, taps], cRF_echo [1, N, F, taps])

    Encoder A reads the mixture channels; encoder B reads the far-end channel together with
    the attended correlation features [N, width], broadcast over frequency as extra planes.
    """
    spectra = _as_complex(spectra)
    n_frames, n_bins = spectra.shape[1:]
    if spectra.shape[0] != cfg.n_mics + 1:
        raise ShapeMismatchError(
            f"model expects {cfg.n_mics} mixture channels + far-end, got {spectra.shape[0]} channels"
        )
    if features.shape != (n_frames, cfg.width):
        raise ShapeMismatchError(f"features {features.shape} do not match spectra {spectra.shape}")
    mixture_planes = spectra_to_planes(spectra[: cfg.n_mics])
    far_planes = spectra_to_planes(spectra[cfg.n_mics :])
    feature_planes = features.transpose((1, 0)).reshape((1, cfg.width, n_frames, 1)) * np.ones(
        (1, 1, 1, n_bins), dtype=features.value.dtype
    )
    n_layers = len(cfg.encoder_channels)
    encoded_mix, sizes = run_encoder(params, "aec/enc_mix", mixture_planes, n_layers)
    encoded_far, _ = run_encoder(
        params, "aec/enc_far", concat([far_planes, feature_planes], axis=1), n_layers
    )
    state = ft_gru(params, "aec/ft_gru", encoded_mix + encoded_far)
    crf_mix = planes_to_crf(
        run_decoder(params, "aec/dec_mix", state, sizes, cfg.bounded_taps), cfg.n_mics, cfg.n_taps
    )
    crf_echo = planes_to_crf(
        run_decoder(params, "aec/dec_echo", state, sizes, cfg.bounded_taps), 1, cfg.n_taps
    )
    return crf_mix, crf_echo


def neural_aec_forward(params: ParamTree, cfg: ModelConfig, spectra) -> ComplexTensor:
    """Full echo-cancellation stage: Y [M+1, N, F] -> stacked Y~ [2M+2, N, F]"""
    spectra = _as_complex(spectra)
    features, _ = feature_attention(
        params, "aec/features", cross_corr_features(spectra), spectra.shape[2], cfg.heads
    )
    crf_mix, crf_echo = estimate_crfs(params, cfg, features, spectra)
    aec_mixture = apply_crf(spectra[: cfg.n_mics], crf_mix, cfg.crf_k, cfg.crf_l)
    aec_far = apply_crf(spectra[cfg.n_mics :], crf_echo, cfg.crf_k, cfg.crf_l)
    return stack_outputs(spectra, aec_mixture, aec_far)
