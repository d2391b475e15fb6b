"""Defines class AudioClip and the WAV helpers read_wav() and write_wav()"""

from dataclasses import dataclass

import numpy as np
import soundfile

from echo_beam_toolbox.custom_exceptions import DomainError, ShapeMismatchError


@dataclass
class AudioClip:
    """Multichannel time-domain samples at a fixed rate

    Attributes
    ----------
    samples : numpy.ndarray
        Real array of shape [channels, n_samples]
    sample_rate : int
        Samples per second
    """

    samples: np.ndarray
    sample_rate: int

    def __post_init__(self):
        samples = np.asarray(self.samples)
        if samples.ndim == 1:
            samples = samples[None, :]
        if samples.ndim != 2:
            raise ShapeMismatchError(
                f"AudioClip samples must be [channels, n_samples], got shape {samples.shape}"
            )
        self.samples = samples

    @property
    def n_channels(self) -> int:
        return self.samples.shape[0]

    @property
    def n_samples(self) -> int:
        return self.samples.shape[1]

    @property
    def duration(self) -> float:
        return self.n_samples / self.sample_rate

    def channel(self, index: int) -> "AudioClip":
        return AudioClip(self.samples[index : index + 1], self.sample_rate)

    def segment(self, start: int, stop: int) -> "AudioClip":
        return AudioClip(self.samples[:, start:stop], self.sample_rate)


def check_compatible(*clips: AudioClip) -> None:
    """Raises DomainError unless all clips share a sample rate and a length"""
    rates = {clip.sample_rate for clip in clips}
    if len(rates) > 1:
        raise DomainError(f"sample rates differ: {sorted(rates)}")
    lengths = {clip.n_samples for clip in clips}
    if len(lengths) > 1:
        raise ShapeMismatchError(f"clip lengths differ: {sorted(lengths)}")


def read_wav(path: str) -> AudioClip:
    """Reads a (possibly interleaved multichannel) WAV file as float64 [channels, n_samples]"""
    data, sample_rate = soundfile.read(path, dtype="float64", always_2d=True)
    return AudioClip(samples=data.T.copy(), sample_rate=int(sample_rate))


def write_wav(path: str, clip: AudioClip, subtype: str = "FLOAT") -> None:
    """Writes [clip] as an interleaved WAV file (subtype FLOAT or PCM_16)"""
    soundfile.write(
        path,
        np.ascontiguousarray(clip.samples.T, dtype=np.float32),
        clip.sample_rate,
        subtype=subtype,
        format="WAV",
    )
