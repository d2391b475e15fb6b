"""Defines the configuration dataclasses: SimulationConfig, StftConfig, ModelConfig,
TrainConfig, PbfdafConfig and their aggregate ExperimentConfig

Defaults follow the published recipe (8-mic array, 512-point STFT, Adam at 1e-4, batch 12,
30 epochs, 4 s chunks). The desk-scale values live in configs/toy.toml.
"""

from dataclasses import asdict, dataclass, field

from echo_beam_toolbox.custom_exceptions import ConfigError


def _check(condition: bool, message: str) -> None:
    if not condition:
        raise ConfigError(message)


@dataclass(frozen=True)
class SimulationConfig:
    """Scene-synthesis settings (ranges are sampled uniformly per scene)"""

    sample_rate: int = 16000
    n_mics: int = 8
    array_aperture: float = 0.26
    room_min: tuple = (3.0, 3.0, 2.5)
    room_max: tuple = (8.0, 6.0, 3.5)
    min_wall_distance: float = 0.5
    rt60_range: tuple = (0.0, 0.6)
    ser_range: tuple = (-10.0, 10.0)
    snr_range: tuple = (0.0, 40.0)
    nonlinearities: tuple = ("none", "clip", "sigmoid")
    chunk_seconds: float = 4.0
    max_order: int | None = None
    sound_speed: float = 343.0
    n_train: int = 20
    n_dev: int = 4
    n_test: int = 4
    pool_dir: str = ""
    pool_size: int = 16
    wav_subtype: str = "FLOAT"
    seed: int = 7

    def __post_init__(self):
        _check(self.sample_rate > 0, "simulation.sample_rate must be positive")
        _check(self.n_mics >= 1, "simulation.n_mics must be >= 1")
        _check(
            0.0 <= self.rt60_range[0] <= self.rt60_range[1] <= 0.6,
            "simulation.rt60_range must lie within [0, 0.6] s",
        )
        _check(
            -10.0 <= self.ser_range[0] <= self.ser_range[1] <= 10.0,
            "simulation.ser_range must lie within [-10, 10] dB",
        )
        _check(
            0.0 <= self.snr_range[0] <= self.snr_range[1] <= 40.0,
            "simulation.snr_range must lie within [0, 40] dB",
        )
        _check(self.chunk_seconds > 0, "simulation.chunk_seconds must be positive")
        _check(self.max_order is None or self.max_order >= 0, "simulation.max_order must be >= 0")
        _check(
            set(self.nonlinearities) <= {"none", "clip", "sigmoid"},
            "simulation.nonlinearities must be drawn from none/clip/sigmoid",
        )
        _check(
            min(self.n_train, self.n_dev, self.n_test) >= 0,
            "simulation scene counts must be >= 0",
        )
        _check(self.wav_subtype in ("FLOAT", "PCM_16"), "simulation.wav_subtype must be FLOAT or PCM_16")

    @property
    def counts(self) -> dict:
        return {"train": self.n_train, "dev": self.n_dev, "test": self.n_test}


@dataclass(frozen=True)
class StftConfig:
    """Short-time Fourier framing: periodic Hann analysis window, one-sided spectra"""

    fft_size: int = 512
    win_length: int = 512
    hop: int = 256
    window: str = "hann"
    sample_rate: int = 16000

    def __post_init__(self):
        _check(self.fft_size > 0 and self.hop > 0, "stft sizes must be positive")
        _check(self.win_length <= self.fft_size, "stft.win_length must be <= stft.fft_size")
        _check(self.win_length % self.hop == 0, "stft.hop must divide stft.win_length")

    @property
    def n_bins(self) -> int:
        return self.fft_size // 2 + 1


@dataclass(frozen=True)
class ModelConfig:
    """Network sizes for the neural AEC and the JAECBF beamformer"""

    n_mics: int = 8
    n_bins: int = 257
    encoder_channels: tuple = (16, 32, 64)
    width: int = 128
    heads: int = 4
    gru_hidden: int = 128
    freq_basis: int = 4
    crf_k: int = 1
    crf_l: int = 0
    bounded_taps: bool = False
    use_neural_aec: bool = True
    use_dtd: bool = True
    normalize_inputs: bool = True
    seed: int = 0

    def __post_init__(self):
        _check(self.n_mics >= 1, "model.n_mics must be >= 1")
        _check(self.width % self.heads == 0, "model.width must be divisible by model.heads")
        _check(self.crf_k >= 0 and self.crf_l >= 0, "model.crf_k / model.crf_l must be >= 0")
        _check(len(self.encoder_channels) >= 1, "model.encoder_channels must not be empty")
        _check(self.freq_basis >= 1, "model.freq_basis must be >= 1")

    @property
    def n_taps(self) -> int:
        return (2 * self.crf_k + 1) * (2 * self.crf_l + 1)

    @property
    def n_beam_channels(self) -> int:
        """C: channels entering the beamformer (2M + 2 with the AEC stage, M + 1 without)"""
        return 2 * self.n_mics + 2 if self.use_neural_aec else self.n_mics + 1


@dataclass(frozen=True)
class TrainConfig:
    """Optimisation schedule and loss weighting"""

    lr: float = 1e-4
    batch: int = 12
    epochs: int = 30
    max_steps: int = 0
    chunk_seconds: float = 4.0
    grad_clip: float = 10.0
    alpha_sisnr: float = 1.0
    alpha_mse: float = 1.0
    mse_mode: str = "complex"
    dtd_loss_weight: float = 0.0
    checkpoint_every: int = 50
    seed: int = 0

    def __post_init__(self):
        _check(self.lr > 0, "train.lr must be positive")
        _check(self.batch >= 1 and self.epochs >= 1, "train.batch / train.epochs must be >= 1")
        _check(self.max_steps >= 0, "train.max_steps must be >= 0 (0 means no limit)")
        _check(self.chunk_seconds > 0 and self.grad_clip > 0, "train.chunk_seconds / train.grad_clip must be positive")
        _check(
            min(self.alpha_sisnr, self.alpha_mse, self.dtd_loss_weight) >= 0,
            "loss weights must be >= 0",
        )
        _check(self.mse_mode in ("complex", "magnitude"), "train.mse_mode must be complex or magnitude")


@dataclass(frozen=True)
class PbfdafConfig:
    """Partitioned-block frequency-domain adaptive filter settings

    regularization is relative: the per-bin normaliser gets regularization * mean(x^2) * 2*block
    """

    block: int = 256
    partitions: int = 16
    step_size: float = 0.5
    regularization: float = 1e-6
    freeze_on_divergence: bool = True

    def __post_init__(self):
        _check(0.0 <= self.step_size < 2.0, "baseline.step_size must lie in [0, 2)")
        _check(self.partitions >= 1, "baseline.partitions must be >= 1")
        _check(self.block >= 1, "baseline.block must be >= 1")
        _check(self.regularization >= 0, "baseline.regularization must be >= 0")


@dataclass(frozen=True)
class ExperimentConfig:
    """Every configurable setting of a run, one field per config-file section"""

    simulation: SimulationConfig = field(default_factory=SimulationConfig)
    stft: StftConfig = field(default_factory=StftConfig)
    model: ModelConfig = field(default_factory=ModelConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    baseline: PbfdafConfig = field(default_factory=PbfdafConfig)

    def __post_init__(self):
        _check(
            self.model.n_mics == self.simulation.n_mics,
            f"model.n_mics ({self.model.n_mics}) must equal simulation.n_mics ({self.simulation.n_mics})",
        )
        _check(
            self.model.n_bins == self.stft.n_bins,
            f"model.n_bins ({self.model.n_bins}) must equal fft_size/2+1 ({self.stft.n_bins})",
        )
        _check(
            self.stft.sample_rate == self.simulation.sample_rate,
            "stft.sample_rate must equal simulation.sample_rate",
        )

    def to_dict(self) -> dict:
        return asdict(self)
