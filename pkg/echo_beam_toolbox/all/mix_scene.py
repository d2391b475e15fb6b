"""Defines SceneSpec, SceneAudio and the function mix_scene(), plus the per-frame activity
helpers (activity_labels(), encode_activity(), decode_activity(), active_rms())

Activity labels are computed on hop-sized blocks of the clean reverberant components at the
reference microphone: N near-end only, F far-end only, D double-talk, S silence.
"""

from dataclasses import dataclass
import re

import numpy as np
import scipy.signal

from echo_beam_toolbox.all.apply_nonlinearity import NONLINEARITY_KINDS, apply_nonlinearity
from echo_beam_toolbox.all.audio_clip import AudioClip
from echo_beam_toolbox.all.generate_rir import RirSet, RoomSpec, check_rir_set
from echo_beam_toolbox.custom_exceptions import DomainError

ACTIVITY_THRESHOLD_DB = -40.0
PEAK_LEVEL = 0.9
REFERENCE_MIC = 0


@dataclass(frozen=True)
class SceneSpec:
    """Everything needed to render one scene"""

    room: RoomSpec
    ser_db: float
    snr_db: float
    nonlinearity: str
    near_utterance: AudioClip
    far_utterance: AudioClip
    noise: AudioClip
    chunk_seconds: float = 4.0
    hop: int = 256

    def __post_init__(self):
        if not -10.0 <= self.ser_db <= 10.0:
            raise DomainError(f"ser_db must lie in [-10, 10], got {self.ser_db}")
        if not 0.0 <= self.snr_db <= 40.0:
            raise DomainError(f"snr_db must lie in [0, 40], got {self.snr_db}")
        if self.chunk_seconds <= 0:
            raise DomainError("chunk_seconds must be positive")
        if self.nonlinearity not in NONLINEARITY_KINDS:
            raise DomainError(f"unknown nonlinearity '{self.nonlinearity}'")


@dataclass
class SceneAudio:
    """A rendered scene

    Attributes
    ----------
    mixture : AudioClip
        Microphone signals d(t) [M, T]
    far_end : AudioClip
        Loudspeaker feed x(t) [1, T]
    target : AudioClip
        Reverberant near-end speech at the reference microphone s_r(t) [1, T]
    echo_ref : AudioClip
        Echo at every microphone [M, T]
    activity : numpy.ndarray
        One label per hop block (ceil(T / hop) of them), drawn from 'N', 'F', 'D', 'S'
    near_image, noise_image : AudioClip or None
        Reverberant near-end speech and noise at every microphone (kept by mix_scene)
    """

    mixture: AudioClip
    far_end: AudioClip
    target: AudioClip
    echo_ref: AudioClip
    activity: np.ndarray
    near_image: AudioClip | None = None
    noise_image: AudioClip | None = None


def block_energies(signal: np.ndarray, hop: int) -> np.ndarray:
    """Energy of each hop-sized block (the last block may be partial)"""
    n_blocks = int(np.ceil(len(signal) / hop))
    padded = np.zeros(n_blocks * hop)
    padded[: len(signal)] = signal
    return (padded.reshape(n_blocks, hop) ** 2).sum(axis=1)


def active_blocks(signal: np.ndarray, hop: int) -> np.ndarray:
    """Blocks whose energy is within 40 dB of the loudest block (all False for silence)"""
    energies = block_energies(signal, hop)
    peak = energies.max()
    if peak <= 0:
        return np.zeros(len(energies), dtype=bool)
    return energies > peak * 10.0 ** (ACTIVITY_THRESHOLD_DB / 10.0)


def active_rms(signal: np.ndarray, hop: int) -> float:
    """RMS over the active blocks of [signal] (0.0 when it is silent)"""
    mask = active_blocks(signal, hop)
    if not mask.any():
        return 0.0
    samples = np.repeat(mask, hop)[: len(signal)]
    return float(np.sqrt(np.mean(signal[samples] ** 2)))


def activity_labels(near: np.ndarray, far: np.ndarray, hop: int) -> np.ndarray:
    """Per-block labels from the clean near-end and echo components"""
    near_active = active_blocks(near, hop)
    far_active = active_blocks(far, hop)
    labels = np.full(len(near_active), "S", dtype="<U1")
    labels[near_active & ~far_active] = "N"
    labels[~near_active & far_active] = "F"
    labels[near_active & far_active] = "D"
    return labels


def encode_activity(labels) -> str:
    """Run-length encodes labels as '<count><label>' runs

    Example Usage
    -------------
    >>> encode_activity(["S", "S", "N", "N", "N", "D"])
    '2S3N1D'
    """
    runs = []
    labels = list(labels)
    start = 0
    for position in range(1, len(labels) + 1):
        if position == len(labels) or labels[position] != labels[start]:
            runs.append(f"{position - start}{labels[start]}")
            start = position
    return "".join(runs)


def decode_activity(encoded: str) -> np.ndarray:
    """Inverse of encode_activity()"""
    runs = re.findall(r"(\d+)([NFDS])", encoded)
    if "".join(count + label for count, label in runs) != encoded:
        raise DomainError(f"malformed activity string '{encoded[:40]}'")
    return np.array(
        [label for count, label in runs for _ in range(int(count))], dtype="<U1"
    )


def _convolve(rirs: np.ndarray, signal: np.ndarray, n_samples: int) -> np.ndarray:
    return scipy.signal.fftconvolve(rirs, signal[None, :], axes=1)[:, :n_samples]


def _trim(clip: AudioClip, n_samples: int, label: str) -> np.ndarray:
    if clip.n_samples < n_samples:
        raise DomainError(
            f"{label} has {clip.n_samples} samples, the scene needs {n_samples}"
        )
    return np.asarray(clip.samples[0, :n_samples], dtype=np.float64)


def mix_scene(spec: SceneSpec, rirs: RirSet) -> SceneAudio:
    """Renders the microphone mixture d = s_r + echo + noise with the requested SER and SNR

    The echo is scaled so that the active-block RMS ratio of s_r over the echo at the
    reference microphone equals ser_db; the noise so that the ratio of s_r (active blocks)
    over the noise (whole clip) equals snr_db. All components are then scaled together so the
    mixture peaks at 0.9, and the mixture is summed from the stored components.

    Raises
    ------
    DomainError
        On sample-rate mismatches, too-short utterances, or a silent near-end talker
    """
    rate = spec.room.sample_rate
    for label, clip in [
        ("near_utterance", spec.near_utterance),
        ("far_utterance", spec.far_utterance),
        ("noise", spec.noise),
    ]:
        if clip.sample_rate != rate:
            raise DomainError(f"{label} is sampled at {clip.sample_rate} Hz, the room at {rate} Hz")
    if rirs.sample_rate != rate:
        raise DomainError("RIR sample rate differs from the room sample rate")
    check_rir_set(rirs, spec.room.n_mics)

    n_samples = int(round(spec.chunk_seconds * rate))
    near = _trim(spec.near_utterance, n_samples, "near_utterance")
    far = _trim(spec.far_utterance, n_samples, "far_utterance")
    noise = _trim(spec.noise, n_samples, "noise")

    near_image = _convolve(rirs.h_near, near, n_samples)
    echo = _convolve(rirs.h_loud, apply_nonlinearity(far, spec.nonlinearity), n_samples)
    noise_image = _convolve(rirs.h_noise, noise, n_samples)

    near_level = active_rms(near_image[REFERENCE_MIC], spec.hop)
    if near_level == 0.0:
        raise DomainError("the near-end utterance is silent at the reference microphone")
    echo_level = active_rms(echo[REFERENCE_MIC], spec.hop)
    if echo_level > 0:
        echo *= near_level / (echo_level * 10.0 ** (spec.ser_db / 20.0))
    noise_level = float(np.sqrt(np.mean(noise_image[REFERENCE_MIC] ** 2)))
    if noise_level > 0:
        noise_image *= near_level / (noise_level * 10.0 ** (spec.snr_db / 20.0))

    peak = np.max(np.abs(near_image + echo + noise_image))
    scale = PEAK_LEVEL / peak
    near_image *= scale
    echo *= scale
    noise_image *= scale
    mixture = near_image + echo + noise_image

    far_peak = np.max(np.abs(far))
    far_end = far * (PEAK_LEVEL / far_peak) if far_peak > 0 else far.copy()

    return SceneAudio(
        mixture=AudioClip(mixture, rate),
        far_end=AudioClip(far_end[None, :], rate),
        target=AudioClip(near_image[REFERENCE_MIC : REFERENCE_MIC + 1].copy(), rate),
        echo_ref=AudioClip(echo, rate),
        activity=activity_labels(near_image[REFERENCE_MIC], echo[REFERENCE_MIC], spec.hop),
        near_image=AudioClip(near_image, rate),
        noise_image=AudioClip(noise_image, rate),
    )
