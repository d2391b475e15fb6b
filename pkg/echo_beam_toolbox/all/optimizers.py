"""Defines the functions adam_step() and clip_grad_norm(), and the class AdamState"""

from dataclasses import dataclass, field

import numpy as np

from echo_beam_toolbox.all.param_tree import ParamTree
from echo_beam_toolbox.custom_exceptions import DomainError, NumericalFailureError


@dataclass
class AdamState:
    """First and second moment estimates, keyed by parameter name, plus the step counter"""

    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)
    t: int = 0

    @classmethod
    def for_params(cls, params: ParamTree) -> "AdamState":
        return cls(
            m={name: np.zeros_like(p.value) for name, p in params.items()},
            v={name: np.zeros_like(p.value) for name, p in params.items()},
            t=0,
        )


def adam_step(
    params: ParamTree,
    state: AdamState,
    lr: float = 1e-4,
    betas: tuple = (0.9, 0.999),
    eps: float = 1e-8,
    t: int | None = None,
) -> None:
    """Applies one bias-corrected Adam update to every parameter, in place

    Parameters
    ----------
    params : ParamTree
        Parameters with populated gradients
    state : AdamState
        Moment estimates (updated in place)
    lr : float
        Learning rate
    betas : (float, float)
        Exponential decay rates of the first and second moments
    eps : float
        Denominator guard
    t : int, optional
        1-based step number. Defaults to state.t + 1; state.t is set to the value used

    Raises
    ------
    DomainError
        If t < 1
    NumericalFailureError
        If any gradient is non-finite

    Example Usage
    -------------
    >>> import numpy as np
    >>> params = ParamTree(dtype=np.float64)
    >>> params.add("w", np.array([1.0]))
    >>> state = AdamState.for_params(params)
    >>> params["w"].grad[...] = 2.0
    >>> adam_step(params, state, lr=0.1)
    >>> params["w"].value
    array([0.9])
    """
    step = state.t + 1 if t is None else int(t)
    if step < 1:
        raise DomainError(f"Adam step counter must be >= 1 (got t={step})")
    beta1, beta2 = betas
    correction1 = 1.0 - beta1**step
    correction2 = 1.0 - beta2**step
    for name, param in params.items():
        grad = param.grad
        if not np.all(np.isfinite(grad)):
            raise NumericalFailureError(f"non-finite gradient in parameter '{name}'")
        m = state.m.setdefault(name, np.zeros_like(param.value))
        v = state.v.setdefault(name, np.zeros_like(param.value))
        m *= beta1
        m += (1.0 - beta1) * grad
        v *= beta2
        v += (1.0 - beta2) * grad * grad
        m_hat = m / correction1
        v_hat = v / correction2
        param.value -= (lr * m_hat / (np.sqrt(v_hat) + eps)).astype(param.value.dtype)
    state.t = step


def clip_grad_norm(params: ParamTree, max_norm: float = 10.0) -> float:
    """Rescales all gradients so their global L2 norm is at most [max_norm]

    Returns
    -------
    float
        The scale applied (1.0 when the norm was already within bounds)

    Example Usage
    -------------
    >>> import numpy as np
    >>> params = ParamTree(dtype=np.float64)
    >>> params.add("w", np.zeros(2))
    >>> params["w"].grad[...] = [12.0, 16.0]
    >>> clip_grad_norm(params, max_norm=10.0)
    0.5
    """
    norm = params.grad_norm()
    if not np.isfinite(norm):
        raise NumericalFailureError("global gradient norm is not finite")
    if norm <= max_norm:
        return 1.0
    scale = max_norm / norm
    for _, param in params.items():
        param.grad *= scale
    return scale
