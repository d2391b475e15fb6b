"""Defines the objective metrics si_snr(), sdr() and erle()"""

import numpy as np

from echo_beam_toolbox.all.audio_clip import AudioClip
from echo_beam_toolbox.custom_exceptions import DomainError, ShapeMismatchError

SISNR_CAP_DB = 60.0
SDR_CAP_DB = 60.0
ERLE_CAP_DB = 80.0


def _as_samples(x) -> np.ndarray:
    if isinstance(x, AudioClip):
        return x.samples.astype(np.float64).reshape(-1)
    return np.asarray(x, dtype=np.float64).reshape(-1)


def _paired(est, ref) -> tuple:
    est, ref = _as_samples(est), _as_samples(ref)
    if est.shape != ref.shape:
        raise ShapeMismatchError(f"estimate has {est.size} samples, reference {ref.size}")
    return est, ref


def si_snr(est, ref) -> float:
    """Scale-invariant signal-to-noise ratio in dB, capped at +/-60

    Both signals are zero-meaned; s_t = (<est, ref> / ||ref||^2) ref and
    Si-SNR = 10 log10(||s_t||^2 / ||est - s_t||^2).

    Parameters
    ----------
    est, ref : AudioClip or array-like
        Single-channel estimate and reference of equal length

    Raises
    ------
    DomainError
        If [ref] is all zero (after removing its mean)

    Example Usage
    -------------
    >>> round(si_snr([0, 1, 1, -1], [0, 1, 0, -1]), 2)
    4.26
    >>> si_snr([0, 2, 0, -2], [0, 1, 0, -1])
    60.0
    """
    est, ref = _paired(est, ref)
    ref = ref - ref.mean()
    if not np.any(ref):
        raise DomainError("Si-SNR is undefined for an all-zero reference")
    est = est - est.mean()
    target = (np.dot(est, ref) / np.dot(ref, ref)) * ref
    target_energy = float(np.dot(target, target))
    error = est - target
    error_energy = float(np.dot(error, error))
    if target_energy == 0.0:
        return -SISNR_CAP_DB
    if error_energy <= 1e-12 * target_energy:
        return SISNR_CAP_DB
    return float(np.clip(10.0 * np.log10(target_energy / error_energy), -SISNR_CAP_DB, SISNR_CAP_DB))


def sdr(est, ref) -> float:
    """Signal-to-distortion ratio 10 log10(||ref||^2 / ||ref - est||^2) in dB, capped at +/-60

    Plain energy ratio (no allowed distortion filter), so it is sensitive to the scale of [est].

    Example Usage
    -------------
    >>> sdr([0.0, 0.0], [1.0, -1.0])
    0.0
    """
    est, ref = _paired(est, ref)
    ref_energy = float(np.dot(ref, ref))
    if ref_energy == 0.0:
        raise DomainError("SDR is undefined for an all-zero reference")
    error_energy = float(np.sum((ref - est) ** 2))
    if error_energy <= 1e-12 * ref_energy:
        return SDR_CAP_DB
    return float(np.clip(10.0 * np.log10(ref_energy / error_energy), -SDR_CAP_DB, SDR_CAP_DB))


def erle(mic_ref, est, activity, hop: int = 256):
    """Echo return loss enhancement over the far-end-only blocks, in dB (capped at 80)

    ERLE = 10 log10(sum d^2 / sum s^2) where both sums run over the samples of the blocks
    labelled 'F'.

    Parameters
    ----------
    mic_ref : AudioClip or array-like
        Reference-microphone signal d(t)
    est : AudioClip or array-like
        Enhanced signal
    activity : sequence of str
        Per-block labels N/F/D/S (block length [hop])
    hop : int
        Block length of the labels in samples

    Returns
    -------
    float or None
        None when no block is labelled far-end only

    Raises
    ------
    DomainError
        If [activity] is empty
    """
    mic, est = _paired(mic_ref, est)
    labels = np.asarray(list(activity))
    if len(labels) == 0:
        raise DomainError("ERLE needs activity labels")
    far_blocks = np.flatnonzero(labels == "F")
    if len(far_blocks) == 0:
        return None
    mask = np.zeros(len(mic), dtype=bool)
    for block in far_blocks:
        mask[block * hop : (block + 1) * hop] = True
    mic_energy = float(np.sum(mic[mask] ** 2))
    est_energy = float(np.sum(est[mask] ** 2))
    if est_energy <= mic_energy * 10 ** (-ERLE_CAP_DB / 10):
        return ERLE_CAP_DB
    return float(np.clip(10.0 * np.log10(mic_energy / est_energy), -ERLE_CAP_DB, ERLE_CAP_DB))
