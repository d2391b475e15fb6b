"""Defines class ParamTree (named trainable parameters with gradient storage) and the initialisers"""

from dataclasses import dataclass

import numpy as np

from echo_beam_toolbox.all.autodiff_tape import Tensor, leaf
from echo_beam_toolbox.custom_exceptions import ShapeMismatchError


@dataclass
class Param:
    """One trainable array and its accumulated gradient (same shape)"""

    value: np.ndarray
    grad: np.ndarray


class ParamTree:
    """An ordered collection of named real-valued parameters

    Names are unique and iteration follows insertion order, so flattening a tree (for the
    optimizer, the checkpoint file or the gradient checker) is deterministic.

    Example Usage
    -------------
    >>> import numpy as np
    >>> params = ParamTree()
    >>> params.add("dense/W", np.eye(2))
    >>> params.add("dense/b", np.zeros(2))
    >>> params.n_params
    6
    >>> list(params.names())
    ['dense/W', 'dense/b']
    """

    def __init__(self, dtype=np.float32) -> None:
        self.dtype = np.dtype(dtype)
        self._params: dict[str, Param] = {}

    def add(self, name: str, value: np.ndarray) -> None:
        if name in self._params:
            raise ValueError(f"parameter name '{name}' is already in use")
        value = np.array(value, dtype=self.dtype)
        self._params[name] = Param(value=value, grad=np.zeros_like(value))

    def __contains__(self, name: str) -> bool:
        return name in self._params

    def __getitem__(self, name: str) -> Param:
        return self._params[name]

    def __len__(self) -> int:
        return len(self._params)

    def names(self) -> list:
        return list(self._params.keys())

    def items(self):
        return self._params.items()

    @property
    def n_params(self) -> int:
        """Total number of scalar parameters"""
        return int(sum(param.value.size for param in self._params.values()))

    def tensor(self, name: str) -> Tensor:
        """Returns parameter [name] as a graph leaf whose gradient accumulates into the tree"""
        param = self._params[name]

        def sink(grad: np.ndarray) -> None:
            param.grad += grad.astype(param.grad.dtype, copy=False)

        return leaf(param.value, sink)

    def zero_grad(self) -> None:
        for param in self._params.values():
            param.grad[...] = 0.0

    def zero_(self, prefix: str) -> None:
        """Sets every parameter whose name starts with [prefix] to zero"""
        for name, param in self._params.items():
            if name.startswith(prefix):
                param.value[...] = 0.0

    def grad_norm(self) -> float:
        """Global L2 norm of all gradients"""
        return float(
            np.sqrt(
                sum(
                    float(np.sum(param.grad.astype(np.float64) ** 2))
                    for param in self._params.values()
                )
            )
        )

    def values(self) -> dict:
        """Returns a {name: copy of value} dictionary"""
        return {name: param.value.copy() for name, param in self._params.items()}

    def load_values(self, values: dict) -> None:
        """Overwrites parameter values in place, checking names and shapes"""
        if set(values.keys()) != set(self._params.keys()):
            missing = sorted(set(self._params.keys()) ^ set(values.keys()))
            raise ShapeMismatchError(f"parameter names differ: {missing[:5]}")
        for name, param in self._params.items():
            new_value = np.asarray(values[name])
            if new_value.shape != param.value.shape:
                raise ShapeMismatchError(
                    f"parameter '{name}' has shape {param.value.shape}, got {new_value.shape}"
                )
            param.value[...] = new_value

    def astype(self, dtype) -> "ParamTree":
        """Returns a copy of the tree with values cast to [dtype] and zeroed gradients"""
        copied = ParamTree(dtype=dtype)
        for name, param in self._params.items():
            copied.add(name, param.value)
        return copied

    def copy(self) -> "ParamTree":
        return self.astype(self.dtype)


def glorot_uniform(
    rng: np.random.Generator, shape: tuple, fan_in: int, fan_out: int
) -> np.ndarray:
    """Glorot (Xavier) uniform initialisation, limit sqrt(6 / (fan_in + fan_out))"""
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=shape)


def recurrent_uniform(
    rng: np.random.Generator, shape: tuple, hidden_size: int
) -> np.ndarray:
    """Uniform initialisation in [-1/sqrt(hidden_size), 1/sqrt(hidden_size)]"""
    limit = 1.0 / np.sqrt(hidden_size)
    return rng.uniform(-limit, limit, size=shape)
