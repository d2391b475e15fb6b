"""Objective speech-enhancement metrics and corpus evaluation

Available modules:
    - compare_systems
    - erle
    - evaluate_corpus
    - sdr
    - si_snr
"""

# pylint: disable=unused-import

from echo_beam_toolbox.all.evaluate_corpus import (
    compare_systems,
    evaluate_corpus,
    run_system,
    write_report,
)

from echo_beam_toolbox.all.objective_metrics import erle, sdr, si_snr

# pylint: enable=unused-import
