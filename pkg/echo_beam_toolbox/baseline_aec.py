"""Classical baselines: adaptive echo cancellation and delay-and-sum beamforming

Available modules:
    - das_beamform
    - pbfdaf_cancel
"""

# pylint: disable=unused-import

from echo_beam_toolbox.all.delay_and_sum import das_beamform

from echo_beam_toolbox.all.pbfdaf import pbfdaf_cancel, pbfdaf_cancel_channels

# pylint: enable=unused-import
