"""Defines the function measure_rt60()"""

import numpy as np

from echo_beam_toolbox.custom_exceptions import DomainError


def measure_rt60(
    rir: np.ndarray,
    sample_rate: int,
    fit_range_db: tuple = (-5.0, -35.0),
) -> float:
    """Estimates the reverberation time of an impulse response by Schroeder backward integration

    A straight line is fitted to the energy-decay curve between the two levels of
    [fit_range_db] and extrapolated to -60 dB.

    Parameters
    ----------
    rir : numpy.ndarray
        A single impulse response [L]
    sample_rate : int
        Samples per second
    fit_range_db : (float, float)
        Start and end levels (dB re total energy) of the line fit

    Returns
    -------
    float
        Estimated RT60 in seconds

    Raises
    ------
    DomainError
        If the response is silent or never decays to the end of the fit range

    Example Usage
    -------------
    >>> fs = 16000
    >>> t = np.arange(fs) / fs
    >>> decay = np.exp(-6.9 * t / 0.4) * np.random.default_rng(0).standard_normal(fs)
    >>> round(measure_rt60(decay, fs), 1)
    0.4
    """
    energy = np.asarray(rir, dtype=np.float64) ** 2
    total = energy.sum()
    if total <= 0:
        raise DomainError("cannot measure the decay of a silent impulse response")
    schroeder = np.cumsum(energy[::-1])[::-1]
    decay_db = 10.0 * np.log10(np.maximum(schroeder / total, 1e-300))
    start_db, end_db = fit_range_db
    in_range = np.flatnonzero((decay_db <= start_db) & (decay_db >= end_db))
    if len(in_range) < 2 or decay_db.min() > end_db:
        raise DomainError(f"energy decay never reaches {end_db} dB")
    times = in_range / sample_rate
    slope, _ = np.polyfit(times, decay_db[in_range], deg=1)
    if slope >= 0:
        raise DomainError("energy decay curve is not decreasing")
    return float(-60.0 / slope)
