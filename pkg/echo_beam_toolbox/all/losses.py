"""Defines the training losses si_snr_loss(), spectral_mse_loss(), dtd_bce_loss() and their
differentiable Tensor counterparts
"""

import numpy as np

from echo_beam_toolbox.all.autodiff_tape import Tensor, clip, log, sqrt
from echo_beam_toolbox.all.complex_tensor import ComplexTensor
from echo_beam_toolbox.all.objective_metrics import SISNR_CAP_DB, si_snr
from echo_beam_toolbox.custom_exceptions import DomainError, ShapeMismatchError

# relative floor of the error energy in the differentiable Si-SNR (keeps est = ref finite)
_SISNR_FLOOR = 1e-9
_DB_PER_NEPER = 10.0 / np.log(10.0)


def si_snr_loss(est, ref) -> float:
    """Negated Si-SNR (dB)"""
    return -si_snr(est, ref)


def spectral_mse_loss(estimate: np.ndarray, target: np.ndarray, mode: str = "complex") -> float:
    """Mean over all time-frequency bins of |S^ - S|^2 (or of (|S^| - |S|)^2 with mode='magnitude')

    Example Usage
    -------------
    >>> spectral_mse_loss(np.zeros((1, 3, 4)), np.ones((1, 3, 4)) * 1j)
    1.0
    """
    estimate, target = np.asarray(estimate), np.asarray(target)
    if estimate.shape != target.shape:
        raise ShapeMismatchError(f"spectra differ in shape: {estimate.shape} vs {target.shape}")
    if mode == "magnitude":
        return float(np.mean((np.abs(estimate) - np.abs(target)) ** 2))
    return float(np.mean(np.abs(estimate - target) ** 2))


def si_snr_tensor(est: Tensor, ref: np.ndarray) -> Tensor:
    """Differentiable Si-SNR (dB) of est [.., T] against a constant reference

    The error energy is floored at 1e-9 of the estimate energy, which makes the result
    invariant to rescaling [est] and caps a perfect estimate at +60 dB.
    A constant (or silent) estimate scores -60 dB, like si_snr().
    """
    ref = np.asarray(ref, dtype=est.dtype).reshape(est.shape)
    ref = ref - ref.mean()
    ref_energy = float(np.sum(ref.astype(np.float64) ** 2))
    if ref_energy == 0.0:
        raise DomainError("Si-SNR is undefined for an all-zero reference")
    centred = est - est.mean()
    if not np.any(centred.value):
        return Tensor(np.asarray(-SISNR_CAP_DB, dtype=est.dtype))
    target = (centred * ref).sum() * (ref / ref_energy).astype(est.dtype)
    error = centred - target
    target_energy = (target * target).sum()
    error_energy = (error * error).sum()
    floor = (centred * centred).sum() * _SISNR_FLOOR + 1e-30
    ratio = (target_energy + floor) / (error_energy + floor)
    return clip(log(ratio) * _DB_PER_NEPER, -SISNR_CAP_DB, SISNR_CAP_DB)


def spectral_mse_tensor(estimate: ComplexTensor, target: np.ndarray, mode: str = "complex") -> Tensor:
    """Differentiable spectral MSE of a complex estimate [1, N, F] against constant spectra"""
    target = np.asarray(target)
    if estimate.shape != target.shape:
        raise ShapeMismatchError(f"spectra differ in shape: {estimate.shape} vs {target.shape}")
    dtype = estimate.re.dtype
    if mode == "magnitude":
        magnitude = sqrt(estimate.abs_squared() + 1e-12)
        difference = magnitude - np.abs(target).astype(dtype)
        return (difference * difference).mean()
    error = estimate - ComplexTensor.from_numpy(target, dtype=dtype)
    return error.abs_squared().mean()


def dtd_bce_loss(probability: Tensor, labels: np.ndarray, eps: float = 1e-6) -> Tensor:
    """Binary cross-entropy of the double-talk gate p(n) against 0/1 near-end activity labels"""
    labels = np.asarray(labels, dtype=probability.dtype)
    if labels.shape != probability.shape:
        raise ShapeMismatchError(f"{labels.shape} labels for a gate of shape {probability.shape}")
    positive = log(probability + eps) * labels
    negative = log(1.0 - probability + eps) * (1.0 - labels)
    return -(positive + negative).mean()


def near_activity_per_frame(activity, n_frames: int, hop: int, front_padding: int, fft_size: int) -> np.ndarray:
    """0/1 near-end activity for each STFT frame of a clip padded by [front_padding] samples

    A frame counts as near-active when the activity block under its centre is near-only ('N')
    or double-talk ('D').
    """
    if len(activity) == 0:
        raise DomainError("no activity labels")
    centres = np.arange(n_frames) * hop - front_padding + fft_size // 2
    blocks = np.clip(centres // hop, 0, len(activity) - 1)
    return np.array([1.0 if activity[b] in "ND" else 0.0 for b in blocks])
