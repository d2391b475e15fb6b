"""Defines the functions stft() and istft(), their differentiable counterparts stft_op() and
istft_op(), and the class Spectrogram

Frames start at multiples of the hop, so a clip of T samples has
N = 1 + floor((T - win_length) / hop) frames. Inversion overlap-adds the windowed frames and
divides by the summed squared window, which reconstructs every sample covered by a frame
where that sum is non-negligible.
"""

from dataclasses import dataclass
import functools

import numpy as np
import scipy.signal
from numpy.lib.stride_tricks import sliding_window_view

from echo_beam_toolbox.all.audio_clip import AudioClip
from echo_beam_toolbox.all.autodiff_tape import Tensor, as_tensor, make_node, register_op
from echo_beam_toolbox.all.experiment_config import StftConfig
from echo_beam_toolbox.custom_exceptions import (
    DomainError,
    ShapeMismatchError,
    StftConfigMismatchError,
)

_STFT = register_op("stft")
_ISTFT = register_op("istft")

# window-sum values below this fraction of the peak are treated as uncovered samples
_WINDOW_SUM_FLOOR = 1e-8


@dataclass
class Spectrogram:
    """Complex spectra [channels, frames, bins] together with the config that produced them"""

    data: np.ndarray
    config: StftConfig

    def __post_init__(self):
        if self.data.ndim != 3 or self.data.shape[-1] != self.config.n_bins:
            raise ShapeMismatchError(
                f"spectrogram data must be [C, N, {self.config.n_bins}], got {self.data.shape}"
            )

    @property
    def n_channels(self) -> int:
        return self.data.shape[0]

    @property
    def n_frames(self) -> int:
        return self.data.shape[1]


@functools.lru_cache(maxsize=8)
def analysis_window(cfg: StftConfig) -> np.ndarray:
    """Periodic window of length fft_size (the win_length window centred, zeros around it)"""
    window = scipy.signal.get_window(cfg.window, cfg.win_length, fftbins=True)
    offset = (cfg.fft_size - cfg.win_length) // 2
    padded = np.zeros(cfg.fft_size)
    padded[offset : offset + cfg.win_length] = window
    padded.setflags(write=False)
    return padded


def n_frames_for(n_samples: int, cfg: StftConfig) -> int:
    if n_samples < cfg.fft_size:
        raise DomainError(
            f"clip of {n_samples} samples is shorter than one {cfg.fft_size}-sample frame"
        )
    return 1 + (n_samples - cfg.fft_size) // cfg.hop


@functools.lru_cache(maxsize=32)
def _window_sum(cfg: StftConfig, n_frames: int) -> np.ndarray:
    """Inverse of the summed squared window per output sample (0 where uncovered)"""
    window = analysis_window(cfg)
    total = np.zeros((n_frames - 1) * cfg.hop + cfg.fft_size)
    for n in range(n_frames):
        total[n * cfg.hop : n * cfg.hop + cfg.fft_size] += window**2
    inverse = np.zeros_like(total)
    covered = total > _WINDOW_SUM_FLOOR * total.max()
    inverse[covered] = 1.0 / total[covered]
    inverse.setflags(write=False)
    return inverse


def _frame(samples: np.ndarray, cfg: StftConfig) -> np.ndarray:
    n_frames = n_frames_for(samples.shape[-1], cfg)
    frames = sliding_window_view(samples, cfg.fft_size, axis=-1)[..., :: cfg.hop, :]
    return frames[..., :n_frames, :] * analysis_window(cfg)


def _overlap_add(frames: np.ndarray, cfg: StftConfig, out_len: int) -> np.ndarray:
    """Overlap-adds [..., N, fft_size] frames into [..., out_len] samples"""
    n_frames = frames.shape[-2]
    out = np.zeros(frames.shape[:-2] + (max(out_len, (n_frames - 1) * cfg.hop + cfg.fft_size),), dtype=frames.dtype)
    for n in range(n_frames):
        out[..., n * cfg.hop : n * cfg.hop + cfg.fft_size] += frames[..., n, :]
    return out[..., :out_len]


def _edge_weights(cfg: StftConfig) -> np.ndarray:
    """1 for the DC and Nyquist bins, 2 for the bins counted twice by a one-sided spectrum"""
    weights = np.full(cfg.n_bins, 2.0)
    weights[0] = 1.0
    if cfg.fft_size % 2 == 0:
        weights[-1] = 1.0
    return weights


def stft(clip: AudioClip | np.ndarray, cfg: StftConfig) -> Spectrogram:
    """Short-time Fourier transform of every channel of [clip]

    Parameters
    ----------
    clip : AudioClip or numpy.ndarray
        Samples [channels, n_samples] (or [n_samples])
    cfg : StftConfig
        Framing configuration

    Returns
    -------
    Spectrogram
        Complex data [channels, N, fft_size/2 + 1]

    Raises
    ------
    DomainError
        If the clip is shorter than one frame, or its rate differs from cfg.sample_rate

    Example Usage
    -------------
    >>> import numpy as np
    >>> cfg = StftConfig()
    >>> stft(np.ones(16000 * 4), cfg).data.shape
    (1, 249, 257)
    """
    if isinstance(clip, AudioClip):
        if clip.sample_rate != cfg.sample_rate:
            raise DomainError(
                f"clip rate {clip.sample_rate} Hz differs from the STFT rate {cfg.sample_rate} Hz"
            )
        samples = clip.samples
    else:
        samples = np.atleast_2d(np.asarray(clip))
    return Spectrogram(np.fft.rfft(_frame(samples, cfg), axis=-1), cfg)


def istft(spec: Spectrogram, cfg: StftConfig, out_len: int) -> AudioClip:
    """Inverse STFT by weighted overlap-add

    Raises
    ------
    StftConfigMismatchError
        If [spec] was produced with a different configuration
    """
    if spec.config != cfg:
        raise StftConfigMismatchError(
            f"spectrogram was computed with {spec.config}, cannot invert with {cfg}"
        )
    return AudioClip(_istft_values(spec.data, cfg, out_len), cfg.sample_rate)


def _istft_values(data: np.ndarray, cfg: StftConfig, out_len: int) -> np.ndarray:
    n_frames = data.shape[-2]
    frames = np.fft.irfft(data, n=cfg.fft_size, axis=-1) * analysis_window(cfg)
    inverse_sum = _window_sum(cfg, n_frames)
    full = _overlap_add(frames, cfg, len(inverse_sum)) * inverse_sum
    out = np.zeros(data.shape[:-2] + (out_len,), dtype=full.dtype)
    keep = min(out_len, full.shape[-1])
    out[..., :keep] = full[..., :keep]
    return out


def stft_op(x: Tensor, cfg: StftConfig) -> Tensor:
    """Differentiable STFT of x [channels, n_samples]

    Returns a real Tensor [2, channels, N, bins] holding (real part, imaginary part).
    The backward rule is the exact adjoint of the linear analysis map.
    """
    x = as_tensor(x)
    spectra = np.fft.rfft(_frame(x.value, cfg), axis=-1)
    out_value = np.stack([spectra.real, spectra.imag]).astype(x.dtype, copy=False)
    edge = _edge_weights(cfg)

    def backward(g):
        grad_spectra = (g[0] + 1j * g[1]) / edge
        grad_frames = cfg.fft_size * np.fft.irfft(grad_spectra, n=cfg.fft_size, axis=-1)
        grad_frames *= analysis_window(cfg)
        x.accumulate(_overlap_add(grad_frames, cfg, x.shape[-1]).astype(x.dtype, copy=False))

    return make_node(out_value, (x,), backward, _STFT)


def istft_op(spec: Tensor, cfg: StftConfig, out_len: int) -> Tensor:
    """Differentiable inverse STFT of spec [2, channels, N, bins] -> [channels, out_len]"""
    spec = as_tensor(spec)
    if spec.shape[0] != 2 or spec.shape[-1] != cfg.n_bins:
        raise ShapeMismatchError(
            f"istft_op expects [2, C, N, {cfg.n_bins}], got {spec.shape}"
        )
    data = spec.value[0] + 1j * spec.value[1]
    out_value = _istft_values(data, cfg, out_len).astype(spec.dtype, copy=False)
    n_frames = data.shape[-2]
    inverse_sum = _window_sum(cfg, n_frames)
    edge = _edge_weights(cfg)

    def backward(g):
        padded = np.zeros(g.shape[:-1] + (len(inverse_sum),), dtype=g.dtype)
        keep = min(out_len, len(inverse_sum))
        padded[..., :keep] = g[..., :keep]
        weighted = padded * inverse_sum
        frames = np.stack(
            [weighted[..., n * cfg.hop : n * cfg.hop + cfg.fft_size] for n in range(n_frames)],
            axis=-2,
        )
        frames = frames * analysis_window(cfg)
        grad_spectra = np.fft.rfft(frames, axis=-1) * (edge / cfg.fft_size)
        grad_spectra[..., 0] = grad_spectra[..., 0].real
        if cfg.fft_size % 2 == 0:
            grad_spectra[..., -1] = grad_spectra[..., -1].real
        spec.accumulate(
            np.stack([grad_spectra.real, grad_spectra.imag]).astype(spec.dtype, copy=False)
        )

    return make_node(out_value, (spec,), backward, _ISTFT)
