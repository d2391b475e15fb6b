"""Neural acoustic echo cancellation with complex ratio filters

Available modules:
    - apply_crf
    - cross_corr_features
    - estimate_crfs
    - ft_gru
    - neural_aec_forward
    - stack_outputs
"""

# pylint: disable=unused-import

from echo_beam_toolbox.all.neural_aec_module import (
    apply_crf,
    cross_corr_features,
    estimate_crfs,
    ft_gru,
    init_neural_aec,
    neural_aec_forward,
    stack_outputs,
    unstack_outputs,
)

# pylint: enable=unused-import
