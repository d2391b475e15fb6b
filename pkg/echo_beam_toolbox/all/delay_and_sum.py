"""Defines the function das_beamform() (fractional-delay-and-sum reference beamformer)"""

import numpy as np

from echo_beam_toolbox.all.audio_clip import AudioClip
from echo_beam_toolbox.all.generate_rir import HALF_TAPS, fractional_delay_taps
from echo_beam_toolbox.custom_exceptions import DomainError, ShapeMismatchError


def _shift(signal: np.ndarray, lag: int) -> np.ndarray:
    """out[t] = signal[t - lag], zero outside the clip"""
    out = np.zeros_like(signal)
    if lag >= 0:
        out[lag:] = signal[: len(signal) - lag]
    else:
        out[:lag] = signal[-lag:]
    return out


def advance(signal: np.ndarray, delay: float) -> np.ndarray:
    """signal(t + delay) with the 81-tap windowed-sinc interpolator (exact for integer delays)"""
    if abs(delay - round(delay)) < 1e-9:
        return _shift(signal, -int(round(delay)))
    indices, weights = fractional_delay_taps(np.array([-delay]))
    out = np.zeros_like(signal, dtype=np.float64)
    for lag, weight in zip(indices[0], weights[0]):
        out += weight * _shift(signal, int(lag))
    return out


def das_beamform(mixture: AudioClip, steering_delays) -> AudioClip:
    """Aligns every microphone on the target and averages

    Parameters
    ----------
    mixture : AudioClip
        Microphone signals [M, T]
    steering_delays : array-like
        Arrival delay of the target at each microphone, in samples (usually relative to mic 0)

    Returns
    -------
    AudioClip
        Single-channel output (1/M) * sum_m x_m(t + delay_m)

    Raises
    ------
    DomainError
        If any |delay| exceeds the interpolator half-width (40 samples)

    Example Usage
    -------------
    >>> x = np.random.default_rng(1).standard_normal(1000)
    >>> out = das_beamform(AudioClip(np.stack([x, x]), 16000), [0.0, 0.0])
    >>> bool(np.allclose(out.samples[0], x))
    True
    """
    delays = np.asarray(steering_delays, dtype=np.float64).reshape(-1)
    if len(delays) != mixture.n_channels:
        raise ShapeMismatchError(
            f"{len(delays)} steering delays given for {mixture.n_channels} channels"
        )
    if np.any(np.abs(delays) > HALF_TAPS):
        raise DomainError(
            f"steering delays must lie within +/-{HALF_TAPS} samples, got max {np.abs(delays).max():.2f}"
        )
    if mixture.n_channels == 1:
        return AudioClip(advance(mixture.samples[0], float(delays[0]))[None, :], mixture.sample_rate)
    aligned = np.stack(
        [advance(mixture.samples[m].astype(np.float64), float(delay)) for m, delay in enumerate(delays)]
    )
    return AudioClip(aligned.mean(axis=0, keepdims=True), mixture.sample_rate)
