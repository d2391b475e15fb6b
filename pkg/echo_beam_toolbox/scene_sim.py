"""Tools for simulating multichannel echo-cancellation scenes

Available modules:
    - apply_nonlinearity
    - build_dataset
    - build_utterance_pool
    - calibrated_reflection_coefficient
    - direct_path_delays
    - generate_rir
    - generate_rir_set
    - linear_array
    - load_manifest
    - load_scene
    - measure_rt60
    - mix_scene
    - RoomSpec
    - SceneAudio
    - SceneSpec
"""

# pylint: disable=unused-import

from echo_beam_toolbox.all.apply_nonlinearity import apply_nonlinearity

from echo_beam_toolbox.all.build_dataset import (
    build_dataset,
    chunk_scene,
    load_manifest,
    load_scene,
    steering_delays,
)

from echo_beam_toolbox.all.generate_rir import (
    RirSet,
    RoomSpec,
    calibrated_reflection_coefficient,
    direct_path_delays,
    generate_rir,
    generate_rir_set,
    linear_array,
)

from echo_beam_toolbox.all.measure_rt60 import measure_rt60

from echo_beam_toolbox.all.mix_scene import SceneAudio, SceneSpec, activity_labels, mix_scene

from echo_beam_toolbox.all.synthetic_sources import build_utterance_pool, speech_like_signal

# pylint: enable=unused-import
