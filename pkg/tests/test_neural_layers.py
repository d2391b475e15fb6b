import numpy as np
import pytest

import echo_beam_toolbox.nnkit
from echo_beam_toolbox.all.neural_layers import init_mhsa
from echo_beam_toolbox.custom_exceptions import DomainError, NumericalFailureError, ShapeMismatchError

Tensor = echo_beam_toolbox.nnkit.Tensor


def test_dense():
    """[1, 2] @ I + [3, -1] = [4, 1]"""
    out = echo_beam_toolbox.nnkit.dense(
        Tensor(np.array([1.0, 2.0])), Tensor(np.eye(2)), Tensor(np.array([3.0, -1.0]))
    )
    assert np.allclose(out.value, [4.0, 1.0]), f"dense gave {out.value}"
    with pytest.raises(ShapeMismatchError):
        echo_beam_toolbox.nnkit.dense(Tensor(np.ones(3)), Tensor(np.eye(2)), Tensor(np.zeros(2)))


def test_layer_norm():
    """[1, 2, 3] normalises to [-1.2247, 0, 1.2247]"""
    out = echo_beam_toolbox.nnkit.layer_norm(
        Tensor(np.array([1.0, 2.0, 3.0])), Tensor(np.ones(3)), Tensor(np.zeros(3))
    )
    assert np.allclose(out.value, [-1.2247, 0.0, 1.2247], atol=1e-4), f"layer_norm gave {out.value}"
    with pytest.raises(DomainError):
        echo_beam_toolbox.nnkit.layer_norm(Tensor(np.ones((3, 1))), Tensor(np.ones(1)), Tensor(np.zeros(1)))


def test_gru_with_zero_weights_stays_at_zero():
    """With zero weights and a zero initial state every hidden state is 0"""
    steps, batch, d_in, hidden = 5, 2, 3, 4
    out = echo_beam_toolbox.nnkit.gru_forward(
        Tensor(np.random.default_rng(0).standard_normal((steps, batch, d_in))),
        Tensor(np.zeros((batch, hidden))),
        Tensor(np.zeros((d_in, 3 * hidden))),
        Tensor(np.zeros((hidden, 3 * hidden))),
        Tensor(np.zeros(3 * hidden)),
        Tensor(np.zeros(3 * hidden)),
    )
    assert out.shape == (steps, batch, hidden), f"GRU output shape {out.shape}"
    assert np.all(out.value == 0.0), "zero-weight GRU moved away from zero"


def test_gru_states_are_bounded():
    """Hidden states of a randomly initialised GRU stay inside (-1, 1)"""
    rng = np.random.default_rng(1)
    hidden = 6
    out = echo_beam_toolbox.nnkit.gru_forward(
        Tensor(10.0 * rng.standard_normal((20, 3, 4))),
        Tensor(np.zeros((3, hidden))),
        Tensor(rng.standard_normal((4, 3 * hidden))),
        Tensor(rng.standard_normal((hidden, 3 * hidden))),
        Tensor(rng.standard_normal(3 * hidden)),
        Tensor(rng.standard_normal(3 * hidden)),
    )
    assert np.max(np.abs(out.value)) < 1.0, "GRU state left (-1, 1)"


def test_gru_rejects_non_finite_input():
    """NaN in the input sequence is a numerical failure"""
    x = np.zeros((2, 1, 1))
    x[1, 0, 0] = np.nan
    with pytest.raises(NumericalFailureError):
        echo_beam_toolbox.nnkit.gru_forward(
            Tensor(x),
            Tensor(np.zeros((1, 2))),
            Tensor(np.zeros((1, 6))),
            Tensor(np.zeros((2, 6))),
            Tensor(np.zeros(6)),
            Tensor(np.zeros(6)),
        )


def test_conv2d_identity_kernel():
    """A centred one-hot 3x3 kernel with padding 1 reproduces its input"""
    rng = np.random.default_rng(2)
    x = rng.standard_normal((2, 1, 5, 7))
    kernel = np.zeros((1, 1, 3, 3))
    kernel[0, 0, 1, 1] = 1.0
    out = echo_beam_toolbox.nnkit.conv2d(Tensor(x), Tensor(kernel), Tensor(np.zeros(1)), padding=(1, 1))
    assert np.allclose(out.value, x), "identity kernel changed the input"


def test_conv2d_all_ones_kernel_on_constant_input():
    """A 3x3 all-ones kernel over a constant c gives 9c away from the borders"""
    c = 0.7
    out = echo_beam_toolbox.nnkit.conv2d(
        Tensor(np.full((1, 1, 6, 6), c)), Tensor(np.ones((1, 1, 3, 3))), Tensor(np.zeros(1)), padding=(1, 1)
    )
    assert np.allclose(out.value[0, 0, 1:-1, 1:-1], 9 * c), "interior is not 9c"
    assert np.isclose(out.value[0, 0, 0, 0], 4 * c), "corner should see 4 inputs"


def test_conv_output_sizes():
    """Strided convolution halves the frequency axis and the transposed one restores it"""
    rng = np.random.default_rng(3)
    x = Tensor(rng.standard_normal((1, 2, 4, 9)))
    down = echo_beam_toolbox.nnkit.conv2d(
        x, Tensor(rng.standard_normal((3, 2, 3, 3))), Tensor(np.zeros(3)), stride=(1, 2), padding=(1, 1)
    )
    assert down.shape == (1, 3, 4, 5), f"conv2d output {down.shape}"
    up = echo_beam_toolbox.nnkit.conv_transpose2d(
        down, Tensor(rng.standard_normal((3, 2, 3, 3))), Tensor(np.zeros(2)), stride=(1, 2), padding=(1, 1)
    )
    assert up.shape == (1, 2, 4, 9), f"conv_transpose2d output {up.shape}"


def test_conv_transpose_is_the_adjoint_of_conv():
    """<conv(x), y> == <x, conv_transpose(y)> for shared kernels and zero bias"""
    rng = np.random.default_rng(4)
    kernel = rng.standard_normal((3, 2, 3, 3))
    x = rng.standard_normal((1, 2, 4, 9))
    y = rng.standard_normal((1, 3, 4, 5))
    forward = echo_beam_toolbox.nnkit.conv2d(
        Tensor(x), Tensor(kernel), Tensor(np.zeros(3)), stride=(1, 2), padding=(1, 1)
    ).value
    adjoint = echo_beam_toolbox.nnkit.conv_transpose2d(
        Tensor(y), Tensor(kernel), Tensor(np.zeros(2)), stride=(1, 2), padding=(1, 1)
    ).value
    assert np.isclose(np.sum(forward * y), np.sum(x * adjoint)), "conv_transpose2d is not the adjoint"


def test_attention_over_identical_keys_averages_values():
    """When all keys are equal every query receives the mean of the values"""
    rng = np.random.default_rng(5)
    d, steps = 4, 6
    params = echo_beam_toolbox.nnkit.ParamTree(dtype=np.float64)
    init_mhsa(params, "att", rng, d)
    for projection in ("q", "k", "v", "out"):
        params[f"att/{projection}/W"].value[...] = np.eye(d)
    q = Tensor(rng.standard_normal((steps, d)))
    k = Tensor(np.ones((steps, d)))
    v = rng.standard_normal((steps, d))
    out = echo_beam_toolbox.nnkit.mhsa(q, k, Tensor(v), heads=2, params=params, name="att")
    assert np.allclose(out.value, np.broadcast_to(v.mean(axis=0), (steps, d))), "attention is not uniform"
    with pytest.raises(DomainError):
        echo_beam_toolbox.nnkit.mhsa(q, k, Tensor(v), heads=3, params=params, name="att")
