"""Defines the fused differentiable layers (dense, layer_norm, gru_forward, conv2d,
conv_transpose2d), multi-head self-attention, and the helpers that register their
parameters in a ParamTree

The fused layers compute their own backward rule in one closure rather than composing
primitive operations, which keeps the tape short for the recurrent and convolutional layers.
"""

import numpy as np
from scipy.special import expit

from echo_beam_toolbox.all.autodiff_tape import (
    Tensor,
    as_tensor,
    make_node,
    matmul,
    register_op,
    softmax,
)
from echo_beam_toolbox.all.param_tree import ParamTree, glorot_uniform, recurrent_uniform
from echo_beam_toolbox.custom_exceptions import (
    DomainError,
    NumericalFailureError,
    ShapeMismatchError,
)

_DENSE = register_op("dense")
_LAYER_NORM = register_op("layer_norm")
_GRU = register_op("gru_forward")
_CONV2D = register_op("conv2d")
_CONV_TRANSPOSE2D = register_op("conv_transpose2d")


def dense(x: Tensor, W: Tensor, b: Tensor) -> Tensor:
    """Affine map x @ W + b over the last axis of [x]

    Parameters
    ----------
    x : Tensor
        Input of shape [..., d_in]
    W : Tensor
        Weights of shape [d_in, d_out]
    b : Tensor
        Bias of shape [d_out]

    Returns
    -------
    Tensor
        Output of shape [..., d_out]

    Example Usage
    -------------
    >>> import numpy as np
    >>> dense(Tensor(np.array([1.0, 2.0])), Tensor(np.eye(2)), Tensor(np.array([3.0, -1.0]))).value
    array([4., 1.])
    """
    x, W, b = as_tensor(x), as_tensor(W), as_tensor(b)
    if W.ndim != 2 or x.shape[-1] != W.shape[0] or b.shape != (W.shape[1],):
        raise ShapeMismatchError(
            f"dense: x {x.shape}, W {W.shape} and b {b.shape} do not agree"
        )
    x2d = x.value.reshape(-1, W.shape[0])
    out_value = (x2d @ W.value + b.value).reshape(x.shape[:-1] + (W.shape[1],))

    def backward(g):
        g2d = g.reshape(-1, W.shape[1])
        x.accumulate((g2d @ W.value.T).reshape(x.shape))
        W.accumulate(x2d.T @ g2d)
        b.accumulate(g2d.sum(axis=0))

    return make_node(out_value, (x, W, b), backward, _DENSE)


def layer_norm(
    x: Tensor, gamma: Tensor, beta: Tensor, eps: float = 1e-5
) -> Tensor:
    """Normalises the last axis to zero mean and unit (population) variance, then applies
    the learnable affine transform gamma * x_hat + beta

    Example Usage
    -------------
    >>> import numpy as np
    >>> out = layer_norm(Tensor(np.array([1.0, 2.0, 3.0])), Tensor(np.ones(3)), Tensor(np.zeros(3)))
    >>> np.round(out.value, 4)
    array([-1.2247,  0.    ,  1.2247])
    """
    x, gamma, beta = as_tensor(x), as_tensor(gamma), as_tensor(beta)
    d = x.shape[-1]
    if d < 2:
        raise DomainError("layer_norm needs at least 2 features on the last axis")
    if gamma.shape != (d,) or beta.shape != (d,):
        raise ShapeMismatchError(
            f"layer_norm: gamma {gamma.shape} / beta {beta.shape} must have shape ({d},)"
        )
    centred = x.value - x.value.mean(axis=-1, keepdims=True)
    inv_std = 1.0 / np.sqrt((centred**2).mean(axis=-1, keepdims=True) + eps)
    x_hat = centred * inv_std
    out_value = gamma.value * x_hat + beta.value

    def backward(g):
        g_hat = g * gamma.value
        x.accumulate(
            inv_std
            * (
                g_hat
                - g_hat.mean(axis=-1, keepdims=True)
                - x_hat * (g_hat * x_hat).mean(axis=-1, keepdims=True)
            )
        )
        lead = tuple(range(g.ndim - 1))
        gamma.accumulate((g * x_hat).sum(axis=lead))
        beta.accumulate(g.sum(axis=lead))

    return make_node(out_value, (x, gamma, beta), backward, _LAYER_NORM)


def gru_forward(
    x: Tensor, h0: Tensor, W_x: Tensor, W_h: Tensor, b_x: Tensor, b_h: Tensor
) -> Tensor:
    """Runs a GRU over the leading (time) axis of [x] and returns every hidden state

    Gates are stacked in the order (reset r, update z, candidate n):
        r = sigmoid(x W_xr + b_xr + h W_hr + b_hr)
        z = sigmoid(x W_xz + b_xz + h W_hz + b_hz)
        n = tanh(x W_xn + b_xn + r * (h W_hn + b_hn))
        h' = (1 - z) * n + z * h

    Parameters
    ----------
    x : Tensor
        Input sequence [steps, batch, d_in]
    h0 : Tensor
        Initial state [batch, hidden]
    W_x, W_h : Tensor
        Input weights [d_in, 3*hidden] and recurrent weights [hidden, 3*hidden]
    b_x, b_h : Tensor
        Biases [3*hidden]

    Returns
    -------
    Tensor
        Hidden states [steps, batch, hidden] (the final state is the last step)

    Raises
    ------
    NumericalFailureError
        If the input sequence or the initial state contains NaN or inf
    """
    x, h0 = as_tensor(x), as_tensor(h0)
    if not (np.all(np.isfinite(x.value)) and np.all(np.isfinite(h0.value))):
        raise NumericalFailureError("gru_forward received a non-finite input")
    steps, batch, d_in = x.shape
    hidden = W_h.shape[0]
    if W_x.shape != (d_in, 3 * hidden) or W_h.shape != (hidden, 3 * hidden):
        raise ShapeMismatchError(
            f"gru_forward: W_x {W_x.shape} / W_h {W_h.shape} do not fit d_in={d_in}, hidden={hidden}"
        )
    if h0.shape != (batch, hidden):
        raise ShapeMismatchError(f"gru_forward: h0 must have shape {(batch, hidden)}")

    gates_x = x.value @ W_x.value + b_x.value
    outputs = np.empty((steps, batch, hidden), dtype=gates_x.dtype)
    cache = []
    h_prev = h0.value
    for t in range(steps):
        gates_h = h_prev @ W_h.value + b_h.value
        r = expit(gates_x[t, :, :hidden] + gates_h[:, :hidden])
        z = expit(gates_x[t, :, hidden : 2 * hidden] + gates_h[:, hidden : 2 * hidden])
        gh_n = gates_h[:, 2 * hidden :]
        n = np.tanh(gates_x[t, :, 2 * hidden :] + r * gh_n)
        h = (1.0 - z) * n + z * h_prev
        cache.append((h_prev, r, z, n, gh_n))
        outputs[t] = h
        h_prev = h

    def backward(g):
        d_gates_x = np.empty_like(gates_x)
        dW_h = np.zeros_like(W_h.value)
        db_h = np.zeros_like(b_h.value)
        dh_next = np.zeros((batch, hidden), dtype=g.dtype)
        for t in reversed(range(steps)):
            h_prev_t, r, z, n, gh_n = cache[t]
            dh = g[t] + dh_next
            dn_pre = dh * (1.0 - z) * (1.0 - n * n)
            dz_pre = dh * (h_prev_t - n) * z * (1.0 - z)
            dr_pre = dn_pre * gh_n * r * (1.0 - r)
            d_gates_x[t] = np.concatenate([dr_pre, dz_pre, dn_pre], axis=-1)
            d_gates_h = np.concatenate([dr_pre, dz_pre, dn_pre * r], axis=-1)
            dW_h += h_prev_t.T @ d_gates_h
            db_h += d_gates_h.sum(axis=0)
            dh_next = dh * z + d_gates_h @ W_h.value.T
        x.accumulate(d_gates_x @ W_x.value.T)
        W_x.accumulate(np.einsum("tbi,tbg->ig", x.value, d_gates_x))
        b_x.accumulate(d_gates_x.sum(axis=(0, 1)))
        W_h.accumulate(dW_h)
        b_h.accumulate(db_h)
        h0.accumulate(dh_next)

    return make_node(outputs, (x, h0, W_x, W_h, b_x, b_h), backward, _GRU)


def _pair(value) -> tuple:
    if np.isscalar(value):
        return (int(value), int(value))
    return tuple(int(v) for v in value)


def conv2d(
    x: Tensor, kernel: Tensor, bias: Tensor, stride=(1, 1), padding=(0, 0)
) -> Tensor:
    """2-D cross-correlation over the last two axes

    Parameters
    ----------
    x : Tensor
        Input [batch, C_in, H, W]
    kernel : Tensor
        Kernels [C_out, C_in, kh, kw]
    bias : Tensor
        Bias [C_out]
    stride, padding : int or (int, int)
        Output size per axis is floor((in + 2*pad - k) / stride) + 1

    Returns
    -------
    Tensor
        Output [batch, C_out, H', W']
    """
    x, kernel, bias = as_tensor(x), as_tensor(kernel), as_tensor(bias)
    (sh, sw), (ph, pw) = _pair(stride), _pair(padding)
    batch, c_in, height, width = x.shape
    c_out, k_c_in, kh, kw = kernel.shape
    if k_c_in != c_in:
        raise ShapeMismatchError(f"conv2d: kernel expects {k_c_in} channels, got {c_in}")
    if kh > height + 2 * ph or kw > width + 2 * pw:
        raise ShapeMismatchError(
            f"conv2d: kernel {(kh, kw)} is larger than the padded input {(height + 2 * ph, width + 2 * pw)}"
        )
    out_h = (height + 2 * ph - kh) // sh + 1
    out_w = (width + 2 * pw - kw) // sw + 1
    x_pad = np.pad(x.value, ((0, 0), (0, 0), (ph, ph), (pw, pw)))

    def window(i, j):
        return (
            slice(None),
            slice(None),
            slice(i, i + sh * (out_h - 1) + 1, sh),
            slice(j, j + sw * (out_w - 1) + 1, sw),
        )

    out_value = np.zeros((batch, c_out, out_h, out_w), dtype=x_pad.dtype)
    for i in range(kh):
        for j in range(kw):
            out_value += np.einsum("bchw,oc->bohw", x_pad[window(i, j)], kernel.value[:, :, i, j])
    out_value += bias.value[None, :, None, None]

    def backward(g):
        g_pad = np.zeros_like(x_pad)
        g_kernel = np.zeros_like(kernel.value)
        for i in range(kh):
            for j in range(kw):
                g_pad[window(i, j)] += np.einsum("bohw,oc->bchw", g, kernel.value[:, :, i, j])
                g_kernel[:, :, i, j] = np.einsum("bohw,bchw->oc", g, x_pad[window(i, j)])
        x.accumulate(g_pad[:, :, ph : ph + height, pw : pw + width])
        kernel.accumulate(g_kernel)
        bias.accumulate(g.sum(axis=(0, 2, 3)))

    return make_node(out_value, (x, kernel, bias), backward, _CONV2D)


def conv_transpose2d(
    x: Tensor,
    kernel: Tensor,
    bias: Tensor,
    stride=(1, 1),
    padding=(0, 0),
    output_padding=(0, 0),
) -> Tensor:
    """Transposed 2-D convolution (the adjoint of conv2d with the same geometry)

    Parameters
    ----------
    x : Tensor
        Input [batch, C_in, H, W]
    kernel : Tensor
        Kernels [C_in, C_out, kh, kw]
    bias : Tensor
        Bias [C_out]
    stride, padding, output_padding : int or (int, int)
        Output size per axis is (in - 1) * stride - 2 * pad + k + output_padding
    """
    x, kernel, bias = as_tensor(x), as_tensor(kernel), as_tensor(bias)
    (sh, sw), (ph, pw) = _pair(stride), _pair(padding)
    (oph, opw) = _pair(output_padding)
    batch, c_in, height, width = x.shape
    k_c_in, c_out, kh, kw = kernel.shape
    if k_c_in != c_in:
        raise ShapeMismatchError(
            f"conv_transpose2d: kernel expects {k_c_in} channels, got {c_in}"
        )
    out_h = (height - 1) * sh - 2 * ph + kh + oph
    out_w = (width - 1) * sw - 2 * pw + kw + opw
    full_h = (height - 1) * sh + kh + oph
    full_w = (width - 1) * sw + kw + opw

    def window(i, j):
        return (
            slice(None),
            slice(None),
            slice(i, i + sh * (height - 1) + 1, sh),
            slice(j, j + sw * (width - 1) + 1, sw),
        )

    crop = (slice(None), slice(None), slice(ph, ph + out_h), slice(pw, pw + out_w))
    full = np.zeros((batch, c_out, full_h, full_w), dtype=x.value.dtype)
    for i in range(kh):
        for j in range(kw):
            full[window(i, j)] += np.einsum("bchw,co->bohw", x.value, kernel.value[:, :, i, j])
    out_value = full[crop] + bias.value[None, :, None, None]

    def backward(g):
        g_full = np.zeros_like(full)
        g_full[crop] = g
        g_x = np.zeros_like(x.value)
        g_kernel = np.zeros_like(kernel.value)
        for i in range(kh):
            for j in range(kw):
                piece = g_full[window(i, j)]
                g_x += np.einsum("bohw,co->bchw", piece, kernel.value[:, :, i, j])
                g_kernel[:, :, i, j] = np.einsum("bchw,bohw->co", x.value, piece)
        x.accumulate(g_x)
        kernel.accumulate(g_kernel)
        bias.accumulate(g.sum(axis=(0, 2, 3)))

    return make_node(out_value, (x, kernel, bias), backward, _CONV_TRANSPOSE2D)


def mhsa(q: Tensor, k: Tensor, v: Tensor, heads: int, params: ParamTree, name: str) -> Tensor:
    """Multi-head scaled dot-product attention over the second-to-last (time) axis

    Inputs are [..., steps, d]; leading axes are treated as independent batches. Each head
    attends with scale 1/sqrt(d/heads) and no causal mask; heads are concatenated and passed
    through the output projection. Parameters are the dense layers [name]/q, /k, /v and /out.
    """
    q, k, v = as_tensor(q), as_tensor(k), as_tensor(v)
    d = q.shape[-1]
    if d % heads != 0:
        raise DomainError(f"mhsa: width {d} is not divisible by heads={heads}")
    if k.shape != v.shape or k.shape[-1] != d:
        raise ShapeMismatchError(f"mhsa: q {q.shape}, k {k.shape}, v {v.shape} disagree")
    d_head = d // heads
    lead = q.shape[:-2]

    def split_heads(t: Tensor) -> Tensor:
        steps = t.shape[-2]
        t = t.reshape((-1, steps, heads, d_head))
        return t.transpose((0, 2, 1, 3))

    Q = split_heads(apply_dense(params, f"{name}/q", q))
    K = split_heads(apply_dense(params, f"{name}/k", k))
    V = split_heads(apply_dense(params, f"{name}/v", v))
    scores = matmul(Q, K.transpose((0, 1, 3, 2))) * (1.0 / np.sqrt(d_head))
    attended = matmul(softmax(scores, axis=-1), V)
    steps = q.shape[-2]
    merged = attended.transpose((0, 2, 1, 3)).reshape(lead + (steps, d))
    return apply_dense(params, f"{name}/out", merged)


# parameter registration helpers ----------------------------------------------------------- #
def init_dense(params: ParamTree, name: str, rng: np.random.Generator, d_in: int, d_out: int) -> None:
    params.add(f"{name}/W", glorot_uniform(rng, (d_in, d_out), d_in, d_out))
    params.add(f"{name}/b", np.zeros(d_out))


def apply_dense(params: ParamTree, name: str, x: Tensor) -> Tensor:
    return dense(x, params.tensor(f"{name}/W"), params.tensor(f"{name}/b"))


def init_layer_norm(params: ParamTree, name: str, d: int) -> None:
    params.add(f"{name}/gamma", np.ones(d))
    params.add(f"{name}/beta", np.zeros(d))


def apply_layer_norm(params: ParamTree, name: str, x: Tensor) -> Tensor:
    return layer_norm(x, params.tensor(f"{name}/gamma"), params.tensor(f"{name}/beta"))


def init_gru(params: ParamTree, name: str, rng: np.random.Generator, d_in: int, hidden: int) -> None:
    params.add(f"{name}/W_x", recurrent_uniform(rng, (d_in, 3 * hidden), hidden))
    params.add(f"{name}/W_h", recurrent_uniform(rng, (hidden, 3 * hidden), hidden))
    params.add(f"{name}/b_x", np.zeros(3 * hidden))
    params.add(f"{name}/b_h", np.zeros(3 * hidden))


def apply_gru(params: ParamTree, name: str, x: Tensor) -> Tensor:
    """Runs the GRU [name] over x [steps, batch, d_in] from a zero initial state"""
    hidden = params[f"{name}/W_h"].value.shape[0]
    h0 = Tensor(np.zeros((x.shape[1], hidden), dtype=params.dtype))
    return gru_forward(
        x,
        h0,
        params.tensor(f"{name}/W_x"),
        params.tensor(f"{name}/W_h"),
        params.tensor(f"{name}/b_x"),
        params.tensor(f"{name}/b_h"),
    )


def init_conv(
    params: ParamTree,
    name: str,
    rng: np.random.Generator,
    c_in: int,
    c_out: int,
    kernel_size: tuple,
    transposed: bool = False,
) -> None:
    kh, kw = kernel_size
    shape = (c_in, c_out, kh, kw) if transposed else (c_out, c_in, kh, kw)
    params.add(
        f"{name}/kernel",
        glorot_uniform(rng, shape, fan_in=c_in * kh * kw, fan_out=c_out * kh * kw),
    )
    params.add(f"{name}/bias", np.zeros(c_out))


def init_mhsa(params: ParamTree, name: str, rng: np.random.Generator, d: int) -> None:
    for projection in ("q", "k", "v", "out"):
        init_dense(params, f"{name}/{projection}", rng, d, d)
