"""Model training, checkpoints and configuration

Available modules:
    - load_checkpoint
    - load_config
    - save_checkpoint
    - si_snr_loss
    - spectral_mse_loss
    - train_loop
    - train_step
"""

# pylint: disable=unused-import

from echo_beam_toolbox.all.checkpoint import Checkpoint, load_checkpoint, save_checkpoint

from echo_beam_toolbox.all.config_loader import load_config

from echo_beam_toolbox.all.experiment_config import (
    ExperimentConfig,
    ModelConfig,
    PbfdafConfig,
    SimulationConfig,
    StftConfig,
    TrainConfig,
)

from echo_beam_toolbox.all.losses import si_snr_loss, spectral_mse_loss

from echo_beam_toolbox.all.training_loop import train_from_manifest, train_loop, train_step

# pylint: enable=unused-import
