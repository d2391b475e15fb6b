"""Defines the functions scene_loss(), train_step(), train_loop() and train_from_manifest()"""

from dataclasses import dataclass
import logging
import os
import time

import numpy as np
import pandas as pd

from echo_beam_toolbox.all.autodiff_tape import Tape
from echo_beam_toolbox.all.build_dataset import chunk_scene, load_manifest, load_scene
from echo_beam_toolbox.all.checkpoint import Checkpoint, load_checkpoint, save_checkpoint
from echo_beam_toolbox.all.experiment_config import ExperimentConfig, TrainConfig
from echo_beam_toolbox.all.jaecbf_model import JaecbfModel
from echo_beam_toolbox.all.losses import (
    dtd_bce_loss,
    near_activity_per_frame,
    si_snr_tensor,
    spectral_mse_tensor,
)
from echo_beam_toolbox.all.mix_scene import SceneAudio
from echo_beam_toolbox.all.optimizers import AdamState, adam_step, clip_grad_norm
from echo_beam_toolbox.all.print_progress_bar import print_progress_bar
from echo_beam_toolbox.all.scene_batcher import SceneBatcher
from echo_beam_toolbox.custom_exceptions import DomainError, NumericalFailureError

logger = logging.getLogger(__name__)

LOSS_LOG_NAME = "loss_log.csv"
CHECKPOINT_NAME = "model.jbf"
LOSS_LOG_COLUMNS = ["step", "loss", "sisnr_term", "mse_term", "grad_norm"]


@dataclass
class StepResult:
    """Batch-mean loss terms of one optimisation step and the pre-clip gradient norm"""

    loss: float
    sisnr_term: float
    mse_term: float
    dtd_term: float
    grad_norm: float


def scene_loss(model: JaecbfModel, scene: SceneAudio, train_cfg: TrainConfig) -> tuple:
    """Loss of one training chunk: alpha_sisnr * (-Si-SNR) + alpha_mse * spectral MSE
    (+ dtd_loss_weight * gate cross-entropy)

    The target is the reverberant near-end speech at microphone 0.

    Returns
    -------
    (Tensor, dict)
        The scalar loss and its terms as floats {'sisnr_term', 'mse_term', 'dtd_term'}
    """
    output = model.forward_waveform(
        scene.mixture.samples.astype(np.float64), scene.far_end.samples.astype(np.float64)
    )
    target = scene.target.samples.astype(np.float64)
    sisnr_term = -si_snr_tensor(output.waveform, target)
    mse_term = spectral_mse_tensor(
        output.spectral.estimate, model.analyse(target), mode=train_cfg.mse_mode
    )
    loss = sisnr_term * train_cfg.alpha_sisnr + mse_term * train_cfg.alpha_mse
    dtd_value = 0.0
    if train_cfg.dtd_loss_weight > 0:
        probability = output.spectral.probability
        labels = near_activity_per_frame(
            scene.activity,
            n_frames=probability.shape[0],
            hop=model.stft_cfg.hop,
            front_padding=output.padding[0],
            fft_size=model.stft_cfg.fft_size,
        )
        dtd_term = dtd_bce_loss(probability, labels)
        loss = loss + dtd_term * train_cfg.dtd_loss_weight
        dtd_value = float(dtd_term.value)
    terms = {
        "sisnr_term": float(sisnr_term.value),
        "mse_term": float(mse_term.value),
        "dtd_term": dtd_value,
    }
    return loss, terms


def train_step(model: JaecbfModel, batch, state: AdamState, train_cfg: TrainConfig) -> StepResult:
    """One optimisation step on the batch mean of scene_loss()

    Every item gets its own tape; gradients are accumulated with weight 1/B, clipped to a
    global norm of train_cfg.grad_clip and applied with Adam.

    Raises
    ------
    NumericalFailureError
        If a loss is not finite (parameters are left untouched)
    """
    if len(batch) == 0:
        raise DomainError("train_step needs at least one scene")
    params = model.params
    params.zero_grad()
    weight = 1.0 / len(batch)
    totals = {"loss": 0.0, "sisnr_term": 0.0, "mse_term": 0.0, "dtd_term": 0.0}
    for scene in batch:
        with Tape() as tape:
            loss, terms = scene_loss(model, scene, train_cfg)
        value = float(loss.value)
        if not np.isfinite(value):
            params.zero_grad()
            raise NumericalFailureError(
                f"non-finite loss {value} (Si-SNR term {terms['sisnr_term']}, MSE term {terms['mse_term']})"
            )
        tape.backward(loss, seed_grad=np.asarray(weight))
        totals["loss"] += weight * value
        for key, term in terms.items():
            totals[key] += weight * term
    grad_norm = params.grad_norm()
    clip_grad_norm(params, train_cfg.grad_clip)
    adam_step(params, state, lr=train_cfg.lr)
    return StepResult(
        loss=totals["loss"],
        sisnr_term=totals["sisnr_term"],
        mse_term=totals["mse_term"],
        dtd_term=totals["dtd_term"],
        grad_norm=grad_norm,
    )


def train_loop(
    model: JaecbfModel,
    chunks: list,
    train_cfg: TrainConfig,
    out_dir: str | None = None,
    start_step: int = 0,
    adam: AdamState | None = None,
    verbose: bool = False,
) -> pd.DataFrame:
    """Trains [model] in place on pre-chunked scenes

    Batches are drawn by a SceneBatcher whose order depends only on (train_cfg.seed, epoch),
    so a run resumed from step k continues exactly where an uninterrupted run would be.

    Parameters
    ----------
    model : JaecbfModel
        Model to train (parameters are updated in place)
    chunks : list
        SceneAudio chunks of train_cfg.chunk_seconds
    train_cfg : TrainConfig
        Schedule, loss weights and checkpoint interval
    out_dir : str, optional
        Where model.jbf and loss_log.csv are written (nothing is written if omitted)
    start_step : int
        Number of steps already taken (when resuming)
    adam : AdamState, optional
        Optimizer state to resume from
    verbose : bool
        Print a progress bar

    Returns
    -------
    pandas.DataFrame
        One row per step: step, loss, sisnr_term, mse_term, grad_norm
    """
    start_time = time.time()
    if len(chunks) == 0:
        raise DomainError("no training chunks")
    batcher = SceneBatcher(chunks, batch_size=train_cfg.batch, seed=train_cfg.seed)
    steps_per_epoch = len(batcher)
    total_steps = train_cfg.epochs * steps_per_epoch
    if train_cfg.max_steps > 0:
        total_steps = min(total_steps, train_cfg.max_steps)
    state = AdamState.for_params(model.params) if adam is None else adam
    logger.info(
        f"STARTED training {model.n_params:,} parameters on {len(chunks):,} chunks "
        f"(steps {start_step:,} -> {total_steps:,})"
    )
    progress = print_progress_bar("training", total=max(total_steps, 1)) if verbose else None

    rows = []
    if out_dir is not None:
        os.makedirs(out_dir, exist_ok=True)
        log_path = os.path.join(out_dir, LOSS_LOG_NAME)
        if start_step > 0 and os.path.exists(log_path):
            previous = pd.read_csv(log_path)
            rows = previous[previous["step"] <= start_step].to_dict("records")

    def save(step: int) -> None:
        if out_dir is None:
            return
        save_checkpoint(
            os.path.join(out_dir, CHECKPOINT_NAME),
            Checkpoint(
                model_config=model.cfg,
                params=model.params,
                step=step,
                train_config=train_cfg,
                adam=state,
            ),
        )

    def write_log() -> pd.DataFrame:
        history = pd.DataFrame(rows, columns=LOSS_LOG_COLUMNS)
        if out_dir is not None:
            history.to_csv(os.path.join(out_dir, LOSS_LOG_NAME), index=False)
        return history

    step = start_step
    try:
        while step < total_steps:
            epoch, position = divmod(step, steps_per_epoch)
            for batch in batcher.epoch(epoch)[position:]:
                if step >= total_steps:
                    break
                result = train_step(model, batch, state, train_cfg)
                step += 1
                rows.append(
                    {
                        "step": step,
                        "loss": result.loss,
                        "sisnr_term": result.sisnr_term,
                        "mse_term": result.mse_term,
                        "grad_norm": result.grad_norm,
                    }
                )
                logger.debug(f"step {step}: loss {result.loss:.4f}, grad norm {result.grad_norm:.3f}")
                if progress is not None:
                    progress.update(step, suffix=f"loss {result.loss:.3f}")
                if train_cfg.checkpoint_every > 0 and step % train_cfg.checkpoint_every == 0:
                    save(step)
    except NumericalFailureError:
        write_log()
        logger.error(f"training stopped at step {step + 1:,}: non-finite loss")
        raise

    save(step)
    history = write_log()
    logger.info(
        f"COMPLETED training at step {step:,}\n"
        f"Number of minutes taken: {(time.time()-start_time)/60:,.5f}"
    )
    return history


def load_training_chunks(manifest_path: str, cfg: ExperimentConfig, split: str = "train") -> list:
    """Loads the scenes of one manifest split and cuts them into train.chunk_seconds chunks"""
    root = manifest_path if os.path.isdir(manifest_path) else os.path.dirname(manifest_path)
    records = [record for record in load_manifest(manifest_path) if record["split"] == split]
    if len(records) == 0:
        raise DomainError(f"the manifest has no '{split}' scenes")
    n_samples = int(round(cfg.train.chunk_seconds * cfg.stft.sample_rate))
    chunks = []
    for record in records:
        scene = load_scene(record, root)
        if scene.mixture.n_channels != cfg.model.n_mics:
            raise DomainError(
                f"scene {record['scene_id']} has {scene.mixture.n_channels} microphones, the model expects {cfg.model.n_mics}"
            )
        chunks.extend(chunk_scene(scene, min(n_samples, scene.mixture.n_samples), record["hop"]))
    return chunks


def train_from_manifest(
    manifest_path: str,
    cfg: ExperimentConfig,
    out_dir: str,
    resume: str | None = None,
    verbose: bool = False,
) -> tuple:
    """Builds (or resumes) a model and trains it on the manifest's train split

    Returns
    -------
    (JaecbfModel, pandas.DataFrame)
    """
    chunks = load_training_chunks(manifest_path, cfg)
    start_step, adam = 0, None
    if resume is not None:
        checkpoint = load_checkpoint(resume, expected_config=cfg.model)
        model = JaecbfModel(cfg.model, cfg.stft, params=checkpoint.params)
        start_step, adam = checkpoint.step, checkpoint.adam
    else:
        model = JaecbfModel(cfg.model, cfg.stft)
    history = train_loop(
        model,
        chunks,
        cfg.train,
        out_dir=out_dir,
        start_step=start_step,
        adam=adam,
        verbose=verbose,
    )
    return model, history
