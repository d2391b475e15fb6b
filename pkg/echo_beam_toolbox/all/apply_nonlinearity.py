"""Defines the function apply_nonlinearity() (memoryless loudspeaker distortion)"""

import numpy as np
from scipy.special import expit

from echo_beam_toolbox.all.audio_clip import AudioClip
from echo_beam_toolbox.custom_exceptions import DomainError, ShapeMismatchError

NONLINEARITY_KINDS = ("none", "clip", "sigmoid")
CLIP_FRACTION = 0.8
# constants of the memoryless sigmoidal loudspeaker model, stored in every manifest record
SIGMOID_PARAMS = {"b_linear": 1.5, "b_quadratic": -0.3, "a_positive": 4.0, "a_negative": 0.5}


def apply_nonlinearity(x: AudioClip | np.ndarray, kind: str) -> AudioClip | np.ndarray:
    """Distorts a single-channel far-end signal the way an overdriven loudspeaker would

    Parameters
    ----------
    x : AudioClip or numpy.ndarray
        Single-channel signal
    kind : str
        One of 'none', 'clip' (hard clip at +-0.8 max|x|) or 'sigmoid'
        (y = gamma * (2 / (1 + exp(-a b)) - 1), b = 1.5 x - 0.3 x^2, a = 4 if b > 0 else 0.5,
        gamma = 2 max|x|, then rescaled to the RMS of x)

    Returns
    -------
    Same type as [x]

    Example Usage
    -------------
    >>> apply_nonlinearity(np.array([0.5, 1.0, -1.0]), "clip")
    array([ 0.5,  0.8, -0.8])
    """
    if kind not in NONLINEARITY_KINDS:
        raise DomainError(f"unknown nonlinearity '{kind}', expected one of {NONLINEARITY_KINDS}")
    if isinstance(x, AudioClip):
        if x.n_channels != 1:
            raise ShapeMismatchError("apply_nonlinearity expects a single-channel clip")
        return AudioClip(apply_nonlinearity(x.samples[0], kind)[None, :], x.sample_rate)

    samples = np.asarray(x, dtype=np.float64)
    if samples.size == 0:
        raise DomainError("cannot distort an empty clip")
    if kind == "none":
        return samples.copy()
    peak = np.max(np.abs(samples))
    if kind == "clip":
        threshold = CLIP_FRACTION * peak
        return np.clip(samples, -threshold, threshold)

    b = SIGMOID_PARAMS["b_linear"] * samples + SIGMOID_PARAMS["b_quadratic"] * samples**2
    a = np.where(b > 0, SIGMOID_PARAMS["a_positive"], SIGMOID_PARAMS["a_negative"])
    gamma = 2.0 * peak
    distorted = gamma * (2.0 * expit(a * b) - 1.0)
    rms_in = np.sqrt(np.mean(samples**2))
    rms_out = np.sqrt(np.mean(distorted**2))
    if rms_out > 0:
        distorted *= rms_in / rms_out
    return distorted
