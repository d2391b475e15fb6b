"""Defines the source generators speech_like_signal() and coloured_noise(), and
build_utterance_pool() which supplies talkers and noise to the scene simulator
"""

import glob
import logging
import os

import numpy as np
import scipy.signal

from echo_beam_toolbox.all.audio_clip import AudioClip, read_wav
from echo_beam_toolbox.custom_exceptions import DomainError

logger = logging.getLogger(__name__)

_FORMANT_RANGES = ((300.0, 850.0), (900.0, 2300.0), (2300.0, 3300.0))


def _resonator(frequency: float, bandwidth: float, sample_rate: int) -> tuple:
    """Two-pole resonator coefficients (b, a) with unit gain at DC removed"""
    radius = np.exp(-np.pi * bandwidth / sample_rate)
    theta = 2.0 * np.pi * frequency / sample_rate
    a = np.array([1.0, -2.0 * radius * np.cos(theta), radius**2])
    return np.array([1.0 - radius]), a


def speech_like_signal(
    duration: float,
    sample_rate: int,
    rng: np.random.Generator,
    amplitude: float = 0.9,
) -> np.ndarray:
    """Voiced syllables with gliding pitch and formant colouring, separated by pauses

    Each syllable is a glottal-like harmonic pulse train whose pitch glides across the
    syllable, shaped by three random formant resonators and a smooth onset/offset envelope.
    Pauses between syllables (and the occasional longer gap) give the signal the on/off
    structure of conversational speech.

    Example Usage
    -------------
    >>> rng = np.random.default_rng(0)
    >>> speech_like_signal(1.0, 16000, rng).shape
    (16000,)
    """
    n_samples = int(round(duration * sample_rate))
    out = np.zeros(n_samples)
    base_pitch = rng.uniform(90.0, 240.0)
    position = int(rng.uniform(0.0, 0.2) * sample_rate)
    while position < n_samples:
        length = int(rng.uniform(0.12, 0.35) * sample_rate)
        stop = min(position + length, n_samples)
        n = stop - position
        if n > 16:
            pitch = np.linspace(
                base_pitch * rng.uniform(0.85, 1.15), base_pitch * rng.uniform(0.8, 1.2), n
            )
            phase = 2.0 * np.pi * np.cumsum(pitch) / sample_rate
            n_harmonics = int(min(4000.0 / pitch.max(), 30))
            source = sum(np.sin(k * phase) / k for k in range(1, n_harmonics + 1))
            source = source + 0.05 * rng.standard_normal(n)
            voiced = np.zeros(n)
            for low, high in _FORMANT_RANGES:
                b, a = _resonator(rng.uniform(low, high), rng.uniform(60.0, 160.0), sample_rate)
                voiced += scipy.signal.lfilter(b, a, source)
            envelope = np.sin(np.pi * np.arange(n) / n) ** 0.5
            out[position:stop] += voiced * envelope * rng.uniform(0.4, 1.0)
        pause = rng.uniform(0.05, 0.3) if rng.uniform() > 0.15 else rng.uniform(0.4, 0.8)
        position = stop + int(pause * sample_rate)
    peak = np.max(np.abs(out))
    if peak > 0:
        out *= amplitude / peak
    return out


def coloured_noise(
    n_samples: int, rng: np.random.Generator, exponent: float = 1.0
) -> np.ndarray:
    """Gaussian noise with a 1/f**exponent power spectrum (0 white, 1 pink, 2 brown), unit RMS"""
    spectrum = np.fft.rfft(rng.standard_normal(n_samples))
    frequencies = np.arange(len(spectrum), dtype=np.float64)
    frequencies[0] = 1.0
    shaped = np.fft.irfft(spectrum / frequencies ** (exponent / 2.0), n=n_samples)
    return shaped / max(np.sqrt(np.mean(shaped**2)), 1e-12)


def build_utterance_pool(
    pool_size: int,
    duration: float,
    sample_rate: int,
    seed: int,
    pool_dir: str = "",
) -> dict:
    """Returns {'speech': [AudioClip, ...], 'noise': [AudioClip, ...]} for scene synthesis

    With [pool_dir] set, every WAV under it is used as speech (first channel only) and noise
    is still generated. Otherwise [pool_size] speech-like utterances are synthesised.

    Raises
    ------
    DomainError
        If the pool would be empty, or a WAV file has a different sample rate
    """
    rng = np.random.default_rng(seed)
    n_samples = int(round(duration * sample_rate))
    if pool_dir:
        paths = sorted(glob.glob(os.path.join(pool_dir, "**", "*.wav"), recursive=True))
        speech = []
        for path in paths:
            clip = read_wav(path)
            if clip.sample_rate != sample_rate:
                raise DomainError(
                    f"{path} is sampled at {clip.sample_rate} Hz, expected {sample_rate} Hz"
                )
            speech.append(clip.channel(0))
        logger.info(f"loaded {len(speech)} utterances from {pool_dir}")
    else:
        speech = [
            AudioClip(speech_like_signal(duration, sample_rate, rng)[None, :], sample_rate)
            for _ in range(pool_size)
        ]
    if len(speech) == 0:
        raise DomainError("the utterance pool is empty")
    noise = [
        AudioClip(
            coloured_noise(n_samples, rng, exponent=rng.uniform(0.0, 2.0))[None, :],
            sample_rate,
        )
        for _ in range(max(pool_size // 2, 1))
    ]
    return {"speech": speech, "noise": noise}
