"""Defines the room description RoomSpec, the RIR container RirSet, and the shoebox
image-source simulator generate_rir()

Every image source is rendered with a Hann-windowed sinc (81 taps), so arrival times keep
their sub-sample part and inter-microphone phase is preserved.
"""

from dataclasses import dataclass, field
import logging

import numpy as np

from echo_beam_toolbox.all.measure_rt60 import measure_rt60
from echo_beam_toolbox.custom_exceptions import DomainError, ShapeMismatchError

logger = logging.getLogger(__name__)

FRACTIONAL_DELAY_TAPS = 81
HALF_TAPS = FRACTIONAL_DELAY_TAPS // 2
# images whose accumulated wall gain falls below this are not rendered (-60 dB)
REFLECTION_GAIN_FLOOR = 1e-3
TAIL_SECONDS = 0.05
CALIBRATION_STEPS = 12
CALIBRATION_TOLERANCE = 0.01
# beta <= 0.999
MIN_ATTENUATION = -np.log(0.999)
RENDER_CHUNK = 32768


def linear_array(
    center: tuple, n_mics: int = 8, aperture: float = 0.26, axis: int = 0
) -> tuple:
    """Positions of a uniform linear array of [n_mics] spanning [aperture] metres along [axis]

    Example Usage
    -------------
    >>> mics = linear_array((2.0, 2.0, 1.2), n_mics=8, aperture=0.26)
    >>> round(mics[-1][0] - mics[0][0], 9)
    0.26
    """
    center = np.asarray(center, dtype=np.float64)
    offsets = (
        np.zeros(1) if n_mics == 1 else np.linspace(-aperture / 2, aperture / 2, n_mics)
    )
    positions = []
    for offset in offsets:
        position = center.copy()
        position[axis] += offset
        positions.append(tuple(float(v) for v in position))
    return tuple(positions)


@dataclass(frozen=True)
class RoomSpec:
    """Shoebox room, source positions and microphone array (all in metres)"""

    dimensions: tuple
    rt60: float
    source_pos: tuple
    loudspeaker_pos: tuple
    noise_pos: tuple
    mic_positions: tuple = field(
        default_factory=lambda: linear_array((2.5, 2.0, 1.2))
    )
    sample_rate: int = 16000
    sound_speed: float = 343.0

    def __post_init__(self):
        if len(self.dimensions) != 3 or min(self.dimensions) <= 0:
            raise DomainError(f"room dimensions must be 3 positive lengths, got {self.dimensions}")
        if not 0.0 <= self.rt60 <= 0.6:
            raise DomainError(f"rt60 must lie in [0, 0.6] s, got {self.rt60}")
        if len(self.mic_positions) < 1:
            raise DomainError("a room needs at least one microphone")
        for label, position in [
            ("source_pos", self.source_pos),
            ("loudspeaker_pos", self.loudspeaker_pos),
            ("noise_pos", self.noise_pos),
        ] + [(f"mic_positions[{m}]", p) for m, p in enumerate(self.mic_positions)]:
            self.check_inside(position, label)

    def check_inside(self, position: tuple, label: str = "position") -> None:
        position = np.asarray(position, dtype=np.float64)
        if position.shape != (3,) or np.any(position <= 0) or np.any(
            position >= np.asarray(self.dimensions)
        ):
            raise DomainError(
                f"{label}={tuple(position)} is not strictly inside the room {self.dimensions}"
            )

    @property
    def n_mics(self) -> int:
        return len(self.mic_positions)

    @property
    def volume(self) -> float:
        return float(np.prod(self.dimensions))

    @property
    def surface_area(self) -> float:
        lx, ly, lz = self.dimensions
        return 2.0 * (lx * ly + lx * lz + ly * lz)

    @property
    def rir_length(self) -> int:
        return int(np.ceil((self.rt60 + TAIL_SECONDS) * self.sample_rate))


@dataclass
class RirSet:
    """Impulse responses [M, L_rir] from the near-end talker, the loudspeaker and the noise source"""

    h_near: np.ndarray
    h_loud: np.ndarray
    h_noise: np.ndarray
    sample_rate: int


def eyring_reflection_coefficient(room: RoomSpec) -> float:
    """Uniform wall reflection coefficient beta = sqrt(1 - alpha) from Eyring's formula

    RT60 = 0.161 V / (-S ln(1 - alpha))  =>  1 - alpha = exp(-0.161 V / (S RT60))
    """
    if room.rt60 == 0:
        return 0.0
    return float(
        np.sqrt(np.exp(-0.161 * room.volume / (room.surface_area * room.rt60)))
    )


def effective_order(beta: float, max_order: int | None = None) -> int:
    """Reflections until the accumulated wall gain beta^k falls below the -60 dB floor"""
    if beta == 0.0:
        return 0
    order = max(int(np.ceil(np.log(REFLECTION_GAIN_FLOOR) / np.log(beta))), 0)
    return order if max_order is None else min(max_order, order)


def _image_positions(source: np.ndarray, dims: np.ndarray, lattice: np.ndarray) -> np.ndarray:
    """Even index i mirrors to i*L + x, odd index to (i+1)*L - x, per axis"""
    even = lattice % 2 == 0
    return np.where(even, lattice * dims + source, (lattice + 1) * dims - source)


def image_sources(
    room: RoomSpec, source_pos: tuple, length: int, max_order: int | None = None
) -> tuple:
    """Image sources that can arrive at any microphone within [length] samples

    Returns
    -------
    (numpy.ndarray, numpy.ndarray)
        Image positions [K, 3] and their reflection counts |ix| + |iy| + |iz| [K]
    """
    source = np.asarray(source_pos, dtype=np.float64)
    dims = np.asarray(room.dimensions, dtype=np.float64)
    mics = np.asarray(room.mic_positions, dtype=np.float64)
    reach = (length + HALF_TAPS) * room.sound_speed / room.sample_rate
    bounds = np.ceil(reach / dims).astype(np.int64) + 1
    if max_order is not None:
        bounds = np.minimum(bounds, max_order)
    axes = [np.arange(-b, b + 1, dtype=np.int16) for b in bounds]
    lattice = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, 3)
    reflections = np.abs(lattice.astype(np.int64)).sum(axis=1)
    if max_order is not None:
        lattice, reflections = lattice[reflections <= max_order], reflections[reflections <= max_order]
    images = _image_positions(source, dims, lattice.astype(np.float64))
    centre = mics.mean(axis=0)
    spread = np.linalg.norm(mics - centre, axis=1).max()
    keep = np.linalg.norm(images - centre, axis=1) < reach + spread
    return images[keep], reflections[keep]


def _energy_decay_rt60(
    room: RoomSpec, delays: np.ndarray, energies: np.ndarray, reflections: np.ndarray, beta: float, length: int, max_order
) -> float:
    """RT60 of the energy histogram of one source-microphone path for a given beta"""
    audible = reflections <= effective_order(beta, max_order)
    histogram = np.bincount(
        delays[audible],
        weights=energies[audible] * beta ** (2 * reflections[audible]),
        minlength=length,
    )
    return measure_rt60(np.sqrt(histogram[:length]), room.sample_rate)


def calibrated_reflection_coefficient(
    room: RoomSpec, source_pos: tuple, max_order: int | None = None, images: tuple | None = None
) -> float:
    """Wall reflection coefficient whose image-source response measures as room.rt60

    Image-source decays in a shoebox are not a single exponential (reflection rates differ per
    direction), so Eyring's value over- or undershoots the requested decay, depending on the room
    shape. Starting from it, -ln(beta) is rescaled by measured / requested RT60 until the
    Schroeder decay of the energy histogram (source to the first microphone) is within 1 %.

    Eyring's value is kept when [max_order] cuts the response off before the gain floor.

    Parameters
    ----------
    images : (numpy.ndarray, numpy.ndarray), optional
        Precomputed image_sources() of [source_pos]
    """
    beta = eyring_reflection_coefficient(room)
    if beta == 0.0:
        return 0.0
    length = room.rir_length
    if max_order is not None and max_order < effective_order(beta):
        return beta
    positions, reflections = images if images is not None else image_sources(room, source_pos, length, max_order)
    distances = np.linalg.norm(positions - np.asarray(room.mic_positions[0]), axis=1)
    delays = np.rint(distances * room.sample_rate / room.sound_speed).astype(np.int64)
    inside = delays < length
    delays, reflections = delays[inside], reflections[inside]
    energies = 1.0 / distances[inside] ** 2

    attenuation = -np.log(beta)
    for _ in range(CALIBRATION_STEPS):
        beta = float(np.exp(-attenuation))
        try:
            measured = _energy_decay_rt60(room, delays, energies, reflections, beta, length, max_order)
        except DomainError:
            break
        ratio = measured / room.rt60
        if abs(ratio - 1.0) <= CALIBRATION_TOLERANCE:
            break
        attenuation = max(attenuation * float(np.clip(ratio, 0.5, 2.0)), MIN_ATTENUATION)
    else:
        beta = float(np.exp(-attenuation))
    logger.debug(
        f"calibrated beta={beta:.4f} (Eyring {eyring_reflection_coefficient(room):.4f}) for rt60={room.rt60}"
    )
    return beta


def fractional_delay_taps(delays: np.ndarray) -> tuple:
    """Returns (tap indices, tap weights), each [n_delays, 81], of a Hann-windowed sinc"""
    base = np.floor(delays).astype(np.int64)
    offsets = np.arange(-HALF_TAPS, HALF_TAPS + 1)
    indices = base[:, None] + offsets[None, :]
    t = indices - delays[:, None]
    window = 0.5 * (1.0 + np.cos(2.0 * np.pi * t / FRACTIONAL_DELAY_TAPS))
    return indices, window * np.sinc(t)


def generate_rir(room: RoomSpec, source_pos: tuple, max_order: int | None = None) -> np.ndarray:
    """Shoebox image-source room impulse responses from [source_pos] to every microphone

    Images are kept while they arrive within the response and their wall gain stays above
    -60 dB. Odd reflection counts flip the sign (negative reflection coefficient), so the late
    tail does not pile up at DC. The coefficient itself comes from
    calibrated_reflection_coefficient().

    Parameters
    ----------
    room : RoomSpec
        Room geometry, rt60 and microphones
    source_pos : tuple
        Source position in metres
    max_order : int, optional
        Largest total reflection count |ix| + |iy| + |iz| considered (default: no cap)

    Returns
    -------
    numpy.ndarray
        RIRs [M, L_rir] with L_rir = (rt60 + 0.05 s) * sample_rate, lengthened if needed so
        that the direct path and its interpolator taps fit

    Example Usage
    -------------
    >>> room = RoomSpec((5, 4, 3), 0.0, (4.43, 2, 1.5), (1, 1, 1), (1, 3, 1), mic_positions=((1.0, 2.0, 1.5),))
    >>> h = generate_rir(room, room.source_pos)
    >>> int(np.argmax(h[0])), round(float(h[0].max()), 4)
    (160, 0.2915)
    """
    if max_order is not None and max_order < 0:
        raise DomainError(f"max_order must be >= 0, got {max_order}")
    room.check_inside(source_pos, "source_pos")
    source = np.asarray(source_pos, dtype=np.float64)
    mics = np.asarray(room.mic_positions, dtype=np.float64)

    samples_per_metre = room.sample_rate / room.sound_speed
    direct_delays = np.linalg.norm(mics - source, axis=1) * samples_per_metre
    length = max(room.rir_length, int(np.ceil(direct_delays.max())) + HALF_TAPS + 2)

    if room.rt60 == 0:
        images, reflections, beta = source[None, :], np.zeros(1, dtype=np.int64), 0.0
    else:
        images, reflections = image_sources(room, source_pos, length, max_order)
        beta = calibrated_reflection_coefficient(room, source_pos, max_order, images=(images, reflections))
    audible = reflections <= effective_order(beta, max_order)
    images, reflections = images[audible], reflections[audible]
    gains = np.where(reflections % 2 == 0, 1.0, -1.0) * beta ** reflections

    rirs = np.zeros((len(mics), length))
    for m, mic in enumerate(mics):
        distances = np.linalg.norm(images - mic, axis=1)
        delays = distances * samples_per_metre
        arriving = np.flatnonzero(delays < length + HALF_TAPS)
        for start in range(0, len(arriving), RENDER_CHUNK):
            chunk = arriving[start : start + RENDER_CHUNK]
            indices, weights = fractional_delay_taps(delays[chunk])
            weights = weights * (gains[chunk] / distances[chunk])[:, None]
            valid = (indices >= 0) & (indices < length)
            rirs[m] += np.bincount(indices[valid], weights=weights[valid], minlength=length)[:length]
    logger.debug(
        f"generate_rir: {len(images):,} images, beta={beta:.4f}, length={length} samples"
    )
    return rirs


def generate_rir_set(room: RoomSpec, max_order: int | None = None) -> RirSet:
    """RIRs of the near-end talker, loudspeaker and noise source, padded to a common length"""
    responses = [
        generate_rir(room, position, max_order)
        for position in (room.source_pos, room.loudspeaker_pos, room.noise_pos)
    ]
    length = max(h.shape[1] for h in responses)
    padded = [np.pad(h, ((0, 0), (0, length - h.shape[1]))) for h in responses]
    return RirSet(
        h_near=padded[0], h_loud=padded[1], h_noise=padded[2], sample_rate=room.sample_rate
    )


def direct_path_delays(room: RoomSpec, source_pos: tuple) -> np.ndarray:
    """Direct-path delays (in samples, fractional) from [source_pos] to every microphone"""
    mics = np.asarray(room.mic_positions, dtype=np.float64)
    distances = np.linalg.norm(mics - np.asarray(source_pos, dtype=np.float64), axis=1)
    return distances * room.sample_rate / room.sound_speed


def check_rir_set(rirs: RirSet, n_mics: int) -> None:
    for name in ("h_near", "h_loud", "h_noise"):
        h = getattr(rirs, name)
        if h.ndim != 2 or h.shape[0] != n_mics:
            raise ShapeMismatchError(f"{name} has shape {h.shape}, expected {n_mics} rows")
        if not np.all(np.isfinite(h)):
            raise DomainError(f"{name} contains non-finite taps")
