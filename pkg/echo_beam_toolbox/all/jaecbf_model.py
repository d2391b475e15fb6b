"""Defines class JaecbfModel (parameters + the full spectral chain) and the function enhance()

The chain is: STFT of mixture and far-end -> optional input scaling -> neural echo canceller
(stacking Y, D_aec, X_aec) -> speech/noise filters -> normalised covariances -> weight
prediction -> double-talk gating -> beamforming -> inverse STFT.
"""

from dataclasses import dataclass
import logging

import numpy as np

from echo_beam_toolbox.all.audio_clip import AudioClip, check_compatible
from echo_beam_toolbox.all.autodiff_tape import Tensor
from echo_beam_toolbox.all.complex_tensor import ComplexTensor
from echo_beam_toolbox.all.experiment_config import ModelConfig, StftConfig
from echo_beam_toolbox.all.jaecbf_module import (
    apply_beamformer,
    covariance,
    dtd_scale,
    estimate_speech_noise,
    init_jaecbf,
    predict_weights,
)
from echo_beam_toolbox.all.neural_aec_module import init_neural_aec, neural_aec_forward
from echo_beam_toolbox.all.param_tree import ParamTree
from echo_beam_toolbox.all.stft_transform import istft_op, stft
from echo_beam_toolbox.custom_exceptions import DomainError, ShapeMismatchError

logger = logging.getLogger(__name__)


@dataclass
class ModelOutput:
    """Intermediate and final values of one forward pass"""

    estimate: ComplexTensor
    probability: Tensor
    weights: ComplexTensor
    stacked: ComplexTensor
    speech: ComplexTensor
    noise: ComplexTensor


@dataclass
class WaveformOutput:
    """Time-domain estimate [1, T] plus the spectral output it was synthesised from"""

    waveform: Tensor
    spectral: ModelOutput
    padding: tuple


def init_params(cfg: ModelConfig) -> ParamTree:
    """Deterministically initialised parameters for [cfg] (seeded by cfg.seed)"""
    rng = np.random.default_rng(cfg.seed)
    params = ParamTree(dtype=np.float32)
    if cfg.use_neural_aec:
        init_neural_aec(params, cfg, rng)
    init_jaecbf(params, cfg, rng)
    return params


def _rms_scale(spectra: np.ndarray) -> float:
    power = float(np.mean(np.abs(spectra) ** 2))
    return float(np.sqrt(power)) if power > 1e-16 else 1.0


class JaecbfModel:
    """Joint neural echo canceller and beamformer with double-talk gating

    Parameters
    ----------
    cfg : ModelConfig
        Network sizes and switches
    stft_cfg : StftConfig
        Framing used for analysis and synthesis
    params : ParamTree, optional
        Existing parameters (fresh seeded ones are created if omitted)

    Example Usage
    -------------
    >>> from echo_beam_toolbox.all.experiment_config import ModelConfig, StftConfig
    >>> model = JaecbfModel(ModelConfig(n_mics=2, encoder_channels=(8, 16, 32), width=32, gru_hidden=32), StftConfig())
    >>> model.n_params < 100_000
    True
    """

    def __init__(self, cfg: ModelConfig, stft_cfg: StftConfig, params: ParamTree | None = None) -> None:
        if cfg.n_bins != stft_cfg.n_bins:
            raise ShapeMismatchError(
                f"model has {cfg.n_bins} bins, the STFT produces {stft_cfg.n_bins}"
            )
        self.cfg = cfg
        self.stft_cfg = stft_cfg
        self.params = init_params(cfg) if params is None else params

    @property
    def n_params(self) -> int:
        return self.params.n_params

    def forward(self, spectra: np.ndarray, use_dtd: bool | None = None) -> ModelOutput:
        """Spectral chain on complex spectra [M+1, N, F] (mixture channels, far-end last)"""
        cfg = self.cfg
        if spectra.shape[0] != cfg.n_mics + 1:
            raise ShapeMismatchError(
                f"model was built for {cfg.n_mics} microphones, got {spectra.shape[0] - 1}"
            )
        use_dtd = cfg.use_dtd if use_dtd is None else use_dtd
        dtype = self.params.dtype
        mixture_scale = 1.0
        if cfg.normalize_inputs:
            mixture_scale = _rms_scale(spectra[: cfg.n_mics])
            far_scale = _rms_scale(spectra[cfg.n_mics :])
            spectra = np.concatenate(
                [spectra[: cfg.n_mics] / mixture_scale, spectra[cfg.n_mics :] / far_scale]
            )
        inputs = ComplexTensor.from_numpy(spectra, dtype=dtype)
        stacked = neural_aec_forward(self.params, cfg, inputs) if cfg.use_neural_aec else inputs
        speech, noise = estimate_speech_noise(self.params, cfg, stacked)
        weights = predict_weights(
            self.params,
            cfg,
            covariance(self.params, "bf/cov_speech", speech),
            covariance(self.params, "bf/cov_noise", noise),
        )
        scaled, probability, _ = dtd_scale(self.params, cfg, weights, use_dtd=use_dtd)
        estimate = apply_beamformer(scaled, stacked) * float(mixture_scale)
        return ModelOutput(
            estimate=estimate,
            probability=probability,
            weights=scaled,
            stacked=stacked,
            speech=speech,
            noise=noise,
        )

    def padding_for(self, n_samples: int) -> tuple:
        """(front, back) zero padding so every sample of a clip is covered by a full frame"""
        front = self.stft_cfg.fft_size - self.stft_cfg.hop
        total = n_samples + 2 * front
        extra = (-(total - self.stft_cfg.fft_size)) % self.stft_cfg.hop
        return front, front + extra

    def analyse(self, samples: np.ndarray) -> np.ndarray:
        """Complex spectra of zero-padded samples [C, T] (the framing used by the model)"""
        front, back = self.padding_for(samples.shape[-1])
        return stft(np.pad(samples, ((0, 0), (front, back))), self.stft_cfg).data

    def forward_waveform(
        self, mixture: np.ndarray, far_end: np.ndarray, use_dtd: bool | None = None
    ) -> WaveformOutput:
        """Mixture [M, T] and far-end [1, T] samples -> estimate Tensor [1, T]"""
        n_samples = mixture.shape[-1]
        spectra = self.analyse(np.concatenate([mixture, far_end], axis=0))
        spectral = self.forward(spectra, use_dtd=use_dtd)
        front, back = self.padding_for(n_samples)
        padded = istft_op(spectral.estimate.to_stacked(), self.stft_cfg, n_samples + front + back)
        return WaveformOutput(
            waveform=padded[:, front : front + n_samples],
            spectral=spectral,
            padding=(front, back),
        )


def enhance(
    mixture: AudioClip,
    far_end: AudioClip,
    model: JaecbfModel,
    use_dtd: bool | None = None,
    chunk_seconds: float | None = None,
    return_details: bool = False,
):
    """Estimates the reverberant near-end speech at the reference microphone

    Parameters
    ----------
    mixture : AudioClip
        Microphone signals [M, T]
    far_end : AudioClip
        Loudspeaker feed [1, T]
    model : JaecbfModel
        Trained (or freshly initialised) model
    use_dtd : bool, optional
        Override of the double-talk gate (False forces p(n) = 1)
    chunk_seconds : float, optional
        Process the input in consecutive chunks of this length
    return_details : bool
        Also return {'dtd_probability': p(n) per frame, 'frames_per_chunk': [...]}

    Returns
    -------
    AudioClip or (AudioClip, dict)
        Single-channel estimate with the input's length

    Raises
    ------
    DomainError
        On sample-rate mismatches
    ShapeMismatchError
        On length or channel-count mismatches
    """
    check_compatible(mixture, far_end)
    if mixture.sample_rate != model.stft_cfg.sample_rate:
        raise DomainError(
            f"input rate {mixture.sample_rate} Hz differs from the model rate {model.stft_cfg.sample_rate} Hz"
        )
    if far_end.n_channels != 1:
        raise ShapeMismatchError("far_end must be a single-channel clip")
    if mixture.n_channels != model.cfg.n_mics:
        raise ShapeMismatchError(
            f"model expects {model.cfg.n_mics} microphones, the mixture has {mixture.n_channels}"
        )
    n_samples = mixture.n_samples
    chunk = n_samples if chunk_seconds is None else max(int(round(chunk_seconds * mixture.sample_rate)), 1)
    pieces, probabilities, frames = [], [], []
    for start in range(0, n_samples, chunk):
        stop = min(start + chunk, n_samples)
        output = model.forward_waveform(
            mixture.samples[:, start:stop].astype(np.float64),
            far_end.samples[:, start:stop].astype(np.float64),
            use_dtd=use_dtd,
        )
        pieces.append(np.asarray(output.waveform.value, dtype=np.float64))
        probabilities.append(np.asarray(output.spectral.probability.value, dtype=np.float64))
        frames.append(len(probabilities[-1]))
    estimate = AudioClip(np.concatenate(pieces, axis=-1), mixture.sample_rate)
    logger.debug(f"enhanced {n_samples:,} samples in {len(pieces)} chunk(s)")
    if return_details:
        return estimate, {
            "dtd_probability": np.concatenate(probabilities),
            "frames_per_chunk": frames,
        }
    return estimate
