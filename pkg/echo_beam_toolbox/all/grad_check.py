"""Defines the function grad_check() and its result class GradCheckReport"""

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from echo_beam_toolbox.all.autodiff_tape import Tape, Tensor, leaf
from echo_beam_toolbox.all.param_tree import ParamTree


@dataclass
class GradCheckReport:
    """Outcome of comparing analytic gradients against central finite differences

    max_rel_err is the largest, over all checked tensors, of
    max|analytic - numeric| / max(max|analytic|, max|numeric|, 1e-10) for that tensor
    """

    name: str
    max_rel_err: float
    tol: float
    n_checked: int
    finite: bool
    ops: set = field(default_factory=set)
    per_tensor: dict = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return self.finite and self.max_rel_err < self.tol


def grad_check(
    fragment: Callable[[ParamTree, dict], Tensor],
    params: ParamTree,
    inputs: dict | None = None,
    tol: float = 1e-6,
    h: float = 1e-5,
    max_entries_per_tensor: int | None = None,
    seed: int = 0,
    name: str = "fragment",
    corrupt_gradient: bool = False,
) -> GradCheckReport:
    """Checks the analytic gradient of [fragment] against central differences in float64

    The scalar under test is sum(fragment(params, inputs) * R) for a fixed random R, so every
    output element contributes with a distinct weight.

    Parameters
    ----------
    fragment : Callable
        fragment(params, inputs) -> Tensor, where inputs maps names to Tensors
    params : ParamTree
        Parameters of the fragment (a float64 copy is used, the original is untouched)
    inputs : dict, optional
        Named real input arrays; their gradients are checked too
    tol : float
        Relative error threshold for `report.passed`
    h : float
        Finite-difference step
    max_entries_per_tensor : int, optional
        If set, only this many randomly chosen entries of each tensor are perturbed
    seed : int
        Seeds R and the entry sampling
    name : str
        Label carried on the report
    corrupt_gradient : bool
        Test hook: perturbs the analytic gradients so that the check must fail

    Returns
    -------
    GradCheckReport
    """
    rng = np.random.default_rng(seed)
    params64 = params.astype(np.float64)
    inputs64 = {
        key: np.array(value, dtype=np.float64) for key, value in (inputs or {}).items()
    }

    input_grads = {key: np.zeros_like(value) for key, value in inputs64.items()}

    def make_sink(key):
        def sink(grad):
            input_grads[key] += grad

        return sink

    with Tape() as tape:
        input_leaves = {
            key: leaf(value, make_sink(key)) for key, value in inputs64.items()
        }
        output = fragment(params64, input_leaves)
        weights = rng.standard_normal(output.shape)
        loss = (output * weights).sum()
    tape.backward(loss)

    def evaluate() -> float:
        out = fragment(params64, {key: Tensor(value) for key, value in inputs64.items()})
        return float(np.sum(out.value * weights))

    targets = [(f"param:{n}", p.value, p.grad) for n, p in params64.items()]
    targets += [(f"input:{k}", inputs64[k], input_grads[k]) for k in inputs64]

    finite = True
    max_rel_err = 0.0
    n_checked = 0
    per_tensor = {}
    for target_name, value, analytic in targets:
        analytic = analytic * 1.1 + 1e-3 if corrupt_gradient else analytic
        if not np.all(np.isfinite(analytic)):
            finite = False
            per_tensor[target_name] = float("inf")
            continue
        flat_indices = np.arange(value.size)
        if max_entries_per_tensor is not None and value.size > max_entries_per_tensor:
            flat_indices = rng.choice(value.size, size=max_entries_per_tensor, replace=False)
        numeric = np.empty(len(flat_indices))
        analytic_selected = analytic.reshape(-1)[flat_indices]
        for position, flat_index in enumerate(flat_indices):
            index = np.unravel_index(flat_index, value.shape)
            original = value[index]
            value[index] = original + h
            loss_plus = evaluate()
            value[index] = original - h
            loss_minus = evaluate()
            value[index] = original
            numeric[position] = (loss_plus - loss_minus) / (2.0 * h)
        if not np.all(np.isfinite(numeric)):
            finite = False
        scale = max(np.max(np.abs(analytic_selected)), np.max(np.abs(numeric)), 1e-10)
        rel_err = float(np.max(np.abs(analytic_selected - numeric)) / scale)
        per_tensor[target_name] = rel_err
        max_rel_err = max(max_rel_err, rel_err)
        n_checked += len(flat_indices)

    return GradCheckReport(
        name=name,
        max_rel_err=max_rel_err,
        tol=tol,
        n_checked=n_checked,
        finite=finite,
        ops=tape.op_names,
        per_tensor=per_tensor,
    )
