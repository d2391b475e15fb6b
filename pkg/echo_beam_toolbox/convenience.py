"""Convenience functions for fast work in python

Available modules:
    - print_progress_bar
    - run_python_function_in_parallel
    - SceneBatcher
"""

# pylint: disable=unused-import
from echo_beam_toolbox.all.print_progress_bar import print_progress_bar
from echo_beam_toolbox.all.run_python_function_in_parallel import (
    run_python_function_in_parallel,
)
from echo_beam_toolbox.all.scene_batcher import SceneBatcher

# pylint: enable=unused-import
