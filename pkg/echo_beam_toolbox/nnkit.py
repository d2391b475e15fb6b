"""A small reverse-mode automatic differentiation kit and the network layers built on it

Available modules:
    - adam_step
    - clip_grad_norm
    - ComplexTensor
    - conv2d
    - dense
    - grad_check
    - gru_forward
    - layer_norm
    - mhsa
    - ParamTree
    - Tape
    - Tensor
"""

# pylint: disable=unused-import

from echo_beam_toolbox.all.autodiff_tape import DIFFERENTIABLE_OPS, Tape, Tensor

from echo_beam_toolbox.all.complex_tensor import ComplexTensor

from echo_beam_toolbox.all.grad_check import GradCheckReport, grad_check

from echo_beam_toolbox.all.gradcheck_suite import run_gradcheck_suite

from echo_beam_toolbox.all.neural_layers import (
    conv2d,
    conv_transpose2d,
    dense,
    gru_forward,
    layer_norm,
    mhsa,
)

from echo_beam_toolbox.all.optimizers import AdamState, adam_step, clip_grad_norm

from echo_beam_toolbox.all.param_tree import ParamTree

# pylint: enable=unused-import
