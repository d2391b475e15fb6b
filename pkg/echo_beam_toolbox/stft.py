"""Short-time Fourier analysis and synthesis, as plain numpy functions and as tape operations

Available modules:
    - istft
    - istft_op
    - Spectrogram
    - stft
    - stft_op
"""

# pylint: disable=unused-import

from echo_beam_toolbox.all.stft_transform import (
    Spectrogram,
    istft,
    istft_op,
    n_frames_for,
    stft,
    stft_op,
)

# pylint: enable=unused-import
