"""Defines the function pbfdaf_cancel() (partitioned-block frequency-domain NLMS echo canceller)"""

import logging

import numpy as np

from echo_beam_toolbox.all.audio_clip import AudioClip, check_compatible
from echo_beam_toolbox.all.experiment_config import PbfdafConfig
from echo_beam_toolbox.custom_exceptions import ShapeMismatchError

logger = logging.getLogger(__name__)


def pbfdaf_cancel(
    mic: AudioClip,
    far_end: AudioClip,
    cfg: PbfdafConfig | None = None,
    return_filter: bool = False,
) -> tuple:
    """Cancels the linear echo of [far_end] in a single microphone channel

    Overlap-save with FFT length 2*block. The filter is split into [cfg.partitions] blocks of
    [cfg.block] taps each, W[p] held in the frequency domain. For every block of input:

        y = last block of irfft(sum_p W[p] X[i-p])
        e = d - y
        W[p] += mu * constrain(conj(X[i-p]) E / (sum_p |X[i-p]|^2 + delta))

    where constrain() zeroes the second half of the time-domain gradient. Adaptation is frozen
    when the far-end buffer is silent, or (with cfg.freeze_on_divergence) when the block's error
    power exceeds its microphone power.

    Parameters
    ----------
    mic : AudioClip
        Single-channel microphone signal d(t)
    far_end : AudioClip
        Single-channel loudspeaker feed x(t)
    cfg : PbfdafConfig, optional
        Block length, partitions, step size mu and relative regularisation
    return_filter : bool
        Also return the final time-domain filter, shape [partitions, block]

    Returns
    -------
    (AudioClip, AudioClip) or (AudioClip, AudioClip, numpy.ndarray)
        echo estimate y(t), error signal e(t) = d(t) - y(t) [, filter taps]

    Example Usage
    -------------
    >>> rng = np.random.default_rng(0)
    >>> x = rng.standard_normal(160000)
    >>> echo, error = pbfdaf_cancel(AudioClip(0.5 * x, 16000), AudioClip(x, 16000))
    >>> float(np.mean(error.samples[:, -40000:] ** 2)) < 1e-4
    True
    """
    cfg = PbfdafConfig() if cfg is None else cfg
    check_compatible(mic, far_end)
    if mic.n_channels != 1 or far_end.n_channels != 1:
        raise ShapeMismatchError(
            f"pbfdaf_cancel works on single channels, got {mic.n_channels} mic and {far_end.n_channels} far-end channels"
        )
    block, n_parts = cfg.block, cfg.partitions
    n_samples = mic.n_samples
    n_blocks = int(np.ceil(n_samples / block))
    d = np.zeros(n_blocks * block)
    x = np.zeros((n_blocks + 1) * block)
    d[:n_samples] = mic.samples[0]
    x[block : block + n_samples] = far_end.samples[0]

    far_power = float(np.mean(far_end.samples[0] ** 2))
    delta = max(cfg.regularization * far_power * 2 * block, 1e-12)
    weights = np.zeros((n_parts, block + 1), dtype=np.complex128)
    history = np.zeros((n_parts, block + 1), dtype=np.complex128)
    echo = np.zeros(n_blocks * block)
    error = np.zeros(n_blocks * block)
    n_frozen = 0

    for i in range(n_blocks):
        buffer = x[i * block : (i + 2) * block]
        history = np.roll(history, 1, axis=0)
        history[0] = np.fft.rfft(buffer)
        y = np.fft.irfft(np.sum(weights * history, axis=0), n=2 * block)[block:]
        target = d[i * block : (i + 1) * block]
        e = target - y
        echo[i * block : (i + 1) * block] = y
        error[i * block : (i + 1) * block] = e

        if cfg.step_size == 0.0 or not np.any(buffer):
            n_frozen += 1
            continue
        if cfg.freeze_on_divergence and np.sum(e**2) > np.sum(target**2):
            n_frozen += 1
            continue
        spectrum_e = np.fft.rfft(np.concatenate([np.zeros(block), e]))
        power = np.sum(np.abs(history) ** 2, axis=0) + delta
        gradient = np.fft.irfft(np.conj(history) * spectrum_e / power, n=2 * block, axis=-1)
        gradient[:, block:] = 0.0
        weights += cfg.step_size * np.fft.rfft(gradient, axis=-1)

    logger.debug(f"pbfdaf: {n_blocks:,} blocks, adaptation frozen on {n_frozen:,}")
    echo_clip = AudioClip(echo[None, :n_samples], mic.sample_rate)
    error_clip = AudioClip(error[None, :n_samples], mic.sample_rate)
    if return_filter:
        taps = np.fft.irfft(weights, n=2 * block, axis=-1)[:, :block]
        return echo_clip, error_clip, taps
    return echo_clip, error_clip


def pbfdaf_cancel_channels(mixture: AudioClip, far_end: AudioClip, cfg: PbfdafConfig | None = None) -> AudioClip:
    """Runs an independent pbfdaf_cancel() on every microphone and returns the [M, T] error signals"""
    errors = [pbfdaf_cancel(mixture.channel(m), far_end, cfg)[1].samples[0] for m in range(mixture.n_channels)]
    return AudioClip(np.stack(errors), mixture.sample_rate)
