"""Defines the function run_gradcheck_suite() and the registry of gradient-check cases

Every case builds a small fragment (a function of a ParamTree and named inputs), a parameter
tree and inputs, and is checked by grad_check() in float64 at its own tolerance. Cases are
grouped by component: stft, nnkit, aec, bf. Running component 'all' also asserts that the
recorded tapes covered every registered differentiable operation.
"""

from dataclasses import dataclass, field
import logging
import time
from typing import Callable

import numpy as np
import pandas as pd

from echo_beam_toolbox.all import autodiff_tape as ad
from echo_beam_toolbox.all.complex_tensor import ComplexTensor
from echo_beam_toolbox.all.experiment_config import ModelConfig, StftConfig
from echo_beam_toolbox.all.grad_check import GradCheckReport, grad_check
from echo_beam_toolbox.all.jaecbf_model import JaecbfModel, init_params
from echo_beam_toolbox.all.jaecbf_module import (
    apply_beamformer,
    covariance,
    dtd_scale,
    estimate_speech_noise,
    init_jaecbf,
    predict_weights,
)
from echo_beam_toolbox.all.neural_aec_module import (
    apply_crf,
    cross_corr_features,
    feature_attention,
    ft_gru,
    init_feature_attention,
    init_ft_gru,
    init_neural_aec,
    neural_aec_forward,
)
from echo_beam_toolbox.all.neural_layers import (
    apply_dense,
    apply_layer_norm,
    conv2d,
    conv_transpose2d,
    gru_forward,
    init_conv,
    init_dense,
    init_gru,
    init_mhsa,
    mhsa,
)
from echo_beam_toolbox.all.param_tree import ParamTree
from echo_beam_toolbox.all.stft_transform import istft_op, stft_op
from echo_beam_toolbox.custom_exceptions import DomainError

logger = logging.getLogger(__name__)

COMPONENTS = ("stft", "nnkit", "aec", "bf")
SMALL_STFT = StftConfig(fft_size=16, win_length=16, hop=8)
SMALL_MODEL = ModelConfig(
    n_mics=2,
    n_bins=SMALL_STFT.n_bins,
    encoder_channels=(4, 4, 4),
    width=8,
    heads=2,
    gru_hidden=4,
)
TOY_MODEL = ModelConfig(
    n_mics=2, encoder_channels=(8, 16, 32), width=32, heads=4, gru_hidden=32, freq_basis=1
)


@dataclass
class GradCase:
    """One fragment to check: build(rng) -> (fragment, params, inputs)"""

    name: str
    component: str
    tol: float
    build: Callable
    max_entries: int | None = None


@dataclass
class SuiteResult:
    """Reports of every case that ran, plus the operations no case exercised"""

    reports: list
    uncovered_ops: set = field(default_factory=set)

    @property
    def passed(self) -> bool:
        return all(report.passed for report in self.reports) and not self.uncovered_ops

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame(
            [
                {
                    "case": report.name,
                    "max_rel_err": report.max_rel_err,
                    "tol": report.tol,
                    "checked": report.n_checked,
                    "passed": report.passed,
                }
                for report in self.reports
            ]
        )


def _complex_inputs(rng, prefix: str, shape: tuple) -> dict:
    return {f"{prefix}_re": rng.standard_normal(shape), f"{prefix}_im": rng.standard_normal(shape)}


def _complex(inputs: dict, prefix: str) -> ComplexTensor:
    return ComplexTensor(inputs[f"{prefix}_re"], inputs[f"{prefix}_im"])


# nnkit ------------------------------------------------------------------------------------ #
def _dense_case(rng):
    params = ParamTree(dtype=np.float64)
    init_dense(params, "dense", rng, 3, 4)
    params["dense/b"].value[...] = rng.standard_normal(4)
    return (lambda p, x: apply_dense(p, "dense", x["x"])), params, {"x": rng.standard_normal((2, 3))}


def _layer_norm_case(rng):
    params = ParamTree(dtype=np.float64)
    params.add("norm/gamma", rng.uniform(0.5, 1.5, 5))
    params.add("norm/beta", rng.standard_normal(5))
    return (lambda p, x: apply_layer_norm(p, "norm", x["x"])), params, {"x": rng.standard_normal((3, 5))}


def _gru_case(rng):
    params = ParamTree(dtype=np.float64)
    init_gru(params, "gru", rng, 3, 4)
    params["gru/b_x"].value[...] = 0.1 * rng.standard_normal(12)

    def fragment(p, x):
        return gru_forward(
            x["x"], x["h0"], p.tensor("gru/W_x"), p.tensor("gru/W_h"), p.tensor("gru/b_x"), p.tensor("gru/b_h")
        )

    return fragment, params, {"x": rng.standard_normal((5, 2, 3)), "h0": 0.5 * rng.standard_normal((2, 4))}


def _conv2d_case(rng):
    params = ParamTree(dtype=np.float64)
    init_conv(params, "conv", rng, 2, 3, (3, 3))
    params["conv/bias"].value[...] = rng.standard_normal(3)

    def fragment(p, x):
        return conv2d(x["x"], p.tensor("conv/kernel"), p.tensor("conv/bias"), stride=(1, 2), padding=(1, 1))

    return fragment, params, {"x": rng.standard_normal((1, 2, 8, 8))}


def _conv_transpose2d_case(rng):
    params = ParamTree(dtype=np.float64)
    init_conv(params, "deconv", rng, 3, 2, (3, 3), transposed=True)
    params["deconv/bias"].value[...] = rng.standard_normal(2)

    def fragment(p, x):
        return conv_transpose2d(
            x["x"],
            p.tensor("deconv/kernel"),
            p.tensor("deconv/bias"),
            stride=(1, 2),
            padding=(1, 1),
            output_padding=(0, 1),
        )

    return fragment, params, {"x": rng.standard_normal((1, 3, 4, 4))}


def _mhsa_case(rng):
    params = ParamTree(dtype=np.float64)
    init_mhsa(params, "attn", rng, 8)
    return (lambda p, x: mhsa(x["x"], x["x"], x["x"], 2, p, "attn")), params, {"x": rng.standard_normal((4, 8))}


def _elementwise_case(rng):
    def fragment(p, x):
        a, b = x["a"], x["b"]
        terms = [
            ad.add(a, b),
            ad.sub(a, b),
            ad.mul(a, b),
            ad.div(a, b),
            ad.neg(a),
            ad.exp(a * 0.5),
            ad.log(b),
            ad.sqrt(a),
            ad.square(b),
            ad.tanh(a),
            ad.sigmoid(b),
            ad.elu(a - 1.0),
            ad.clip(a, 0.75, 1.25),
        ]
        return ad.stack(terms, axis=0)

    inputs = {"a": rng.uniform(0.5, 1.5, (3, 4)), "b": rng.uniform(0.5, 1.5, (3, 4))}
    return fragment, ParamTree(dtype=np.float64), inputs


def _shape_case(rng):
    def fragment(p, x):
        a, b = x["a"], x["b"]
        product = ad.matmul(a, b)
        parts = [
            product.reshape((2, 9)),
            ad.softmax(product, axis=-1).transpose((0, 2, 1)).reshape((2, 9)),
            a[:, 1:, ::2].reshape((2, 4)),
            a[[0, 0, 1]].sum(axis=1).reshape((2, 6))[:, :4],
            ad.pad(a[:, :, :2], ((0, 0), (1, 0), (0, 0))).reshape((2, 8))[:, :4],
            ad.concat([a.mean(axis=1), a.sum(axis=1, keepdims=True).reshape((2, 4))], axis=1)[:, :4],
        ]
        return ad.concat(parts, axis=1)

    inputs = {"a": rng.standard_normal((2, 3, 4)), "b": rng.standard_normal((4, 3))}
    return fragment, ParamTree(dtype=np.float64), inputs


# stft ------------------------------------------------------------------------------------- #
def _stft_case(rng):
    return (lambda p, x: stft_op(x["x"], SMALL_STFT)), ParamTree(dtype=np.float64), {"x": rng.standard_normal((2, 64))}


def _istft_case(rng):
    n_frames = 7
    out_len = SMALL_STFT.fft_size + SMALL_STFT.hop * (n_frames - 1)
    inputs = {"spec": rng.standard_normal((2, 2, n_frames, SMALL_STFT.n_bins))}
    return (lambda p, x: istft_op(x["spec"], SMALL_STFT, out_len)), ParamTree(dtype=np.float64), inputs


# aec -------------------------------------------------------------------------------------- #
def _cross_corr_attention_case(rng):
    params = ParamTree(dtype=np.float64)
    init_feature_attention(params, "features", rng, 4, 9, 8, 2)

    def fragment(p, x):
        return feature_attention(p, "features", cross_corr_features(_complex(x, "y")), 4, heads=2)[0]

    return fragment, params, _complex_inputs(rng, "y", (3, 5, 4))


def _ft_gru_case(rng):
    params = ParamTree(dtype=np.float64)
    init_ft_gru(params, "ft", rng, 4, 3)
    return (lambda p, x: ft_gru(p, "ft", x["u"])), params, {"u": rng.standard_normal((1, 4, 5, 3))}


def _apply_crf_case(rng):
    inputs = {**_complex_inputs(rng, "y", (2, 5, 8)), **_complex_inputs(rng, "crf", (2, 5, 8, 3))}

    def fragment(p, x):
        return apply_crf(_complex(x, "y"), _complex(x, "crf"), 1, 0).to_stacked()

    return fragment, ParamTree(dtype=np.float64), inputs


def _neural_aec_case(rng):
    cfg = SMALL_MODEL
    params = ParamTree(dtype=np.float64)
    init_neural_aec(params, cfg, rng)
    _randomise_biases(params, rng)

    def fragment(p, x):
        return neural_aec_forward(p, cfg, _complex(x, "y")).to_stacked()

    return fragment, params, _complex_inputs(rng, "y", (cfg.n_mics + 1, 4, cfg.n_bins))


# bf --------------------------------------------------------------------------------------- #
def _bf_params(rng) -> ParamTree:
    params = ParamTree(dtype=np.float64)
    init_jaecbf(params, SMALL_MODEL, rng)
    _randomise_biases(params, rng)
    return params


def _speech_noise_case(rng):
    cfg = SMALL_MODEL

    def fragment(p, x):
        speech, noise = estimate_speech_noise(p, cfg, _complex(x, "y"))
        return ad.concat([speech.to_stacked(), noise.to_stacked()], axis=0)

    return fragment, _bf_params(rng), _complex_inputs(rng, "y", (cfg.n_beam_channels, 4, cfg.n_bins))


def _covariance_case(rng):
    c = SMALL_MODEL.n_beam_channels
    params = ParamTree(dtype=np.float64)
    params.add("cov/norm/gamma", rng.uniform(0.5, 1.5, 2 * c * c))
    params.add("cov/norm/beta", rng.standard_normal(2 * c * c))
    return (lambda p, x: covariance(p, "cov", _complex(x, "s"))), params, _complex_inputs(rng, "s", (c, 3, 4))


def _predict_weights_case(rng):
    cfg = SMALL_MODEL
    c = cfg.n_beam_channels
    inputs = {"phi_s": rng.standard_normal((4, 3, 2 * c * c)), "phi_n": rng.standard_normal((4, 3, 2 * c * c))}

    def fragment(p, x):
        return predict_weights(p, cfg, x["phi_s"], x["phi_n"]).to_stacked()

    return fragment, _bf_params(rng), inputs


def _dtd_scale_case(rng):
    cfg = SMALL_MODEL

    def fragment(p, x):
        scaled, probability, _ = dtd_scale(p, cfg, _complex(x, "w"), use_dtd=True)
        return ad.concat([scaled.to_stacked().reshape((-1,)), probability], axis=0)

    return fragment, _bf_params(rng), _complex_inputs(rng, "w", (4, cfg.n_bins, cfg.n_beam_channels))


def _beamformer_case(rng):
    inputs = {**_complex_inputs(rng, "w", (4, 3, 5)), **_complex_inputs(rng, "y", (5, 4, 3))}

    def fragment(p, x):
        return apply_beamformer(_complex(x, "w"), _complex(x, "y")).to_stacked()

    return fragment, ParamTree(dtype=np.float64), inputs


def _full_model_case(rng, cfg: ModelConfig = SMALL_MODEL, stft_cfg: StftConfig = SMALL_STFT, n_samples: int = 64):
    params = init_params(cfg).astype(np.float64)
    _randomise_biases(params, rng)
    mixture = rng.standard_normal((cfg.n_mics, n_samples))
    far_end = rng.standard_normal((1, n_samples))

    def fragment(p, x):
        model = JaecbfModel(cfg, stft_cfg, params=p)
        return model.forward_waveform(mixture, far_end).waveform

    return fragment, params, {}


def _randomise_biases(params: ParamTree, rng) -> None:
    """Zero-initialised biases hide gradient errors that only show with nonzero offsets"""
    for name, param in params.items():
        if name.endswith("/b") or name.endswith("/bias") or name.endswith("/beta"):
            param.value[...] = 0.1 * rng.standard_normal(param.value.shape)


CASES = [
    GradCase("stft", "stft", 1e-6, _stft_case),
    GradCase("istft", "stft", 1e-6, _istft_case),
    GradCase("dense", "nnkit", 1e-6, _dense_case),
    GradCase("layer_norm", "nnkit", 1e-6, _layer_norm_case),
    GradCase("gru_forward", "nnkit", 1e-5, _gru_case),
    GradCase("conv2d", "nnkit", 1e-5, _conv2d_case),
    GradCase("conv_transpose2d", "nnkit", 1e-5, _conv_transpose2d_case),
    GradCase("mhsa", "nnkit", 1e-5, _mhsa_case),
    GradCase("elementwise", "nnkit", 1e-6, _elementwise_case),
    GradCase("shape_ops", "nnkit", 1e-6, _shape_case),
    GradCase("cross_corr_attention", "aec", 1e-5, _cross_corr_attention_case),
    GradCase("ft_gru", "aec", 1e-4, _ft_gru_case),
    GradCase("apply_crf", "aec", 1e-6, _apply_crf_case),
    GradCase("neural_aec", "aec", 1e-3, _neural_aec_case, max_entries=6),
    GradCase("estimate_speech_noise", "bf", 1e-3, _speech_noise_case, max_entries=6),
    GradCase("covariance", "bf", 1e-5, _covariance_case),
    GradCase("predict_weights", "bf", 1e-3, _predict_weights_case, max_entries=6),
    GradCase("dtd_scale", "bf", 1e-3, _dtd_scale_case, max_entries=6),
    GradCase("apply_beamformer", "bf", 1e-6, _beamformer_case),
    GradCase("jaecbf_model", "bf", 1e-3, _full_model_case, max_entries=3),
]


def run_gradcheck_suite(
    component: str = "all",
    seed: int = 0,
    corrupt_gradient: bool = False,
    toy_scale: bool = False,
) -> SuiteResult:
    """Runs the gradient checks of one component (or of all of them)

    Parameters
    ----------
    component : str
        'all' or one of stft, nnkit, aec, bf
    seed : int
        Seeds inputs, parameters and the probing directions
    corrupt_gradient : bool
        Test hook forwarded to grad_check(): every case must then fail
    toy_scale : bool
        Also check the full toy model (M=2, widths 32, 512-point STFT, 0.5 s input); this
        takes minutes

    Returns
    -------
    SuiteResult
        With component 'all', uncovered_ops lists registered operations no case recorded
    """
    if component != "all" and component not in COMPONENTS:
        raise DomainError(f"unknown component '{component}', expected 'all' or one of {COMPONENTS}")
    start_time = time.time()
    cases = [case for case in CASES if component == "all" or case.component == component]
    if toy_scale:
        cases.append(
            GradCase(
                "jaecbf_model_toy",
                "bf",
                1e-3,
                lambda rng: _full_model_case(rng, TOY_MODEL, StftConfig(), 8000),
                max_entries=2,
            )
        )
    logger.info(f"STARTED gradient checks: {len(cases)} cases ({component})")
    reports: list[GradCheckReport] = []
    for index, case in enumerate(cases):
        rng = np.random.default_rng([seed, index])
        fragment, params, inputs = case.build(rng)
        report = grad_check(
            fragment,
            params,
            inputs,
            tol=case.tol,
            max_entries_per_tensor=case.max_entries,
            seed=seed,
            name=case.name,
            corrupt_gradient=corrupt_gradient,
        )
        logger.info(f"{case.name}: max rel err {report.max_rel_err:.3e} (tol {case.tol:.0e})")
        reports.append(report)
    uncovered = set()
    if component == "all":
        covered = set().union(*(report.ops for report in reports))
        uncovered = set(ad.DIFFERENTIABLE_OPS) - covered
    logger.info(
        f"COMPLETED gradient checks\n"
        f"Number of minutes taken: {(time.time()-start_time)/60:,.5f}"
    )
    return SuiteResult(reports=reports, uncovered_ops=uncovered)
