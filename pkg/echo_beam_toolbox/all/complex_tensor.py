"""Defines class ComplexTensor: a complex array held as a (real, imaginary) pair of Tensors

Complex arithmetic is spelled out on the real pair so that differentiation stays real-valued.
"""

import numpy as np

from echo_beam_toolbox.all.autodiff_tape import Tensor, as_tensor, concat, pad, stack


class ComplexTensor:
    """A complex-valued graph value built from two real Tensors of equal shape

    Example Usage
    -------------
    >>> import numpy as np
    >>> a = ComplexTensor.from_numpy(np.array([1 + 1j, 2.0]))
    >>> (a * a.conj()).numpy()
    array([2.+0.j, 4.+0.j])
    """

    __slots__ = ("re", "im")

    def __init__(self, re: Tensor, im: Tensor) -> None:
        self.re = as_tensor(re)
        self.im = as_tensor(im)
        if self.re.shape != self.im.shape:
            raise ValueError(
                f"real part {self.re.shape} and imaginary part {self.im.shape} differ in shape"
            )

    @classmethod
    def from_numpy(cls, values: np.ndarray, dtype=None) -> "ComplexTensor":
        values = np.asarray(values)
        dtype = dtype or (np.float32 if values.dtype == np.complex64 else np.float64)
        return cls(Tensor(values.real.astype(dtype)), Tensor(values.imag.astype(dtype)))

    @classmethod
    def from_stacked(cls, stacked: Tensor) -> "ComplexTensor":
        """From a Tensor [2, ...] holding (real, imaginary) on the first axis"""
        return cls(stacked[0], stacked[1])

    def to_stacked(self) -> Tensor:
        return stack([self.re, self.im], axis=0)

    def numpy(self) -> np.ndarray:
        return self.re.value + 1j * self.im.value

    @property
    def shape(self) -> tuple:
        return self.re.shape

    def __add__(self, other: "ComplexTensor") -> "ComplexTensor":
        return ComplexTensor(self.re + other.re, self.im + other.im)

    def __sub__(self, other: "ComplexTensor") -> "ComplexTensor":
        return ComplexTensor(self.re - other.re, self.im - other.im)

    def __mul__(self, other) -> "ComplexTensor":
        if isinstance(other, ComplexTensor):
            return ComplexTensor(
                self.re * other.re - self.im * other.im,
                self.re * other.im + self.im * other.re,
            )
        return ComplexTensor(self.re * other, self.im * other)

    def conj(self) -> "ComplexTensor":
        return ComplexTensor(self.re, -self.im)

    def abs_squared(self) -> Tensor:
        return self.re * self.re + self.im * self.im

    def sum(self, axis=None, keepdims: bool = False) -> "ComplexTensor":
        return ComplexTensor(
            self.re.sum(axis=axis, keepdims=keepdims),
            self.im.sum(axis=axis, keepdims=keepdims),
        )

    def __getitem__(self, index) -> "ComplexTensor":
        return ComplexTensor(self.re[index], self.im[index])

    def reshape(self, *shape) -> "ComplexTensor":
        return ComplexTensor(self.re.reshape(*shape), self.im.reshape(*shape))

    def transpose(self, *axes) -> "ComplexTensor":
        return ComplexTensor(self.re.transpose(*axes), self.im.transpose(*axes))

    def pad(self, pad_width) -> "ComplexTensor":
        return ComplexTensor(pad(self.re, pad_width), pad(self.im, pad_width))


def complex_concat(parts: list, axis: int = 0) -> ComplexTensor:
    return ComplexTensor(
        concat([part.re for part in parts], axis=axis),
        concat([part.im for part in parts], axis=axis),
    )
