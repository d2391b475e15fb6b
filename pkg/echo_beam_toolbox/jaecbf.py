"""Joint echo cancellation and beamforming

Available modules:
    - apply_beamformer
    - covariance
    - dtd_scale
    - enhance
    - estimate_speech_noise
    - JaecbfModel
    - predict_weights
"""

# pylint: disable=unused-import

from echo_beam_toolbox.all.jaecbf_model import JaecbfModel, enhance, init_params

from echo_beam_toolbox.all.jaecbf_module import (
    apply_beamformer,
    covariance,
    dtd_scale,
    estimate_speech_noise,
    predict_weights,
)

# pylint: enable=unused-import
