"""Defines the functions run_system(), evaluate_corpus(), write_report() and compare_systems()"""

from dataclasses import dataclass, field
import json
import logging
import os
import time

import numpy as np
import pandas as pd

from echo_beam_toolbox.all.audio_clip import AudioClip, check_compatible
from echo_beam_toolbox.all.build_dataset import load_manifest, load_scene, steering_delays
from echo_beam_toolbox.all.delay_and_sum import das_beamform
from echo_beam_toolbox.all.experiment_config import PbfdafConfig
from echo_beam_toolbox.all.jaecbf_model import JaecbfModel, enhance
from echo_beam_toolbox.all.mix_scene import REFERENCE_MIC
from echo_beam_toolbox.all.objective_metrics import (
    ERLE_CAP_DB,
    SDR_CAP_DB,
    SISNR_CAP_DB,
    erle,
    sdr,
    si_snr,
)
from echo_beam_toolbox.all.pbfdaf import pbfdaf_cancel, pbfdaf_cancel_channels
from echo_beam_toolbox.all.run_python_function_in_parallel import (
    run_python_function_in_parallel,
)
from echo_beam_toolbox.custom_exceptions import DomainError, ShapeMismatchError

logger = logging.getLogger(__name__)

SYSTEMS = ("none", "pbfdaf", "das", "jaecbf", "jaecbf_dtd", "pbfdaf+jaecbf")
NEURAL_SYSTEMS = ("jaecbf", "jaecbf_dtd", "pbfdaf+jaecbf")
REPORT_COLUMNS = ["scene_id", "sisnr_db", "sdr_db", "erle_db"]


@dataclass
class EvalReport:
    """Per-scene and corpus-mean metrics of one system over one manifest"""

    system: str
    per_scene: pd.DataFrame
    means: dict
    counts: dict
    capped: dict = field(default_factory=dict)
    config: dict = field(default_factory=dict)


def run_system(
    system: str,
    mixture: AudioClip,
    far_end: AudioClip,
    model: JaecbfModel | None = None,
    delays=None,
    baseline_cfg: PbfdafConfig | None = None,
    chunk_seconds: float | None = None,
) -> AudioClip:
    """Runs one processing chain and returns its single-channel output

    Parameters
    ----------
    system : str
        none (reference microphone), pbfdaf (adaptive filter on the reference microphone),
        das (delay-and-sum toward [delays]), jaecbf (DTD gate forced to 1), jaecbf_dtd,
        pbfdaf+jaecbf (adaptive filter per microphone, then the gated model)
    mixture, far_end : AudioClip
        Microphone signals [M, T] and loudspeaker feed [1, T]
    model : JaecbfModel, optional
        Required by the neural systems
    delays : array-like, optional
        Steering delays in samples for das (zeros if omitted)
    baseline_cfg : PbfdafConfig, optional
        Adaptive-filter settings
    chunk_seconds : float, optional
        Chunk length for the neural systems
    """
    if system not in SYSTEMS:
        raise DomainError(f"unknown system '{system}', expected one of {SYSTEMS}")
    check_compatible(mixture, far_end)
    if system in NEURAL_SYSTEMS and model is None:
        raise DomainError(f"system '{system}' needs a trained model")
    if system == "none":
        return mixture.channel(REFERENCE_MIC)
    if system == "pbfdaf":
        return pbfdaf_cancel(mixture.channel(REFERENCE_MIC), far_end, baseline_cfg)[1]
    if system == "das":
        delays = np.zeros(mixture.n_channels) if delays is None else delays
        return das_beamform(mixture, delays)
    if system == "pbfdaf+jaecbf":
        mixture = pbfdaf_cancel_channels(mixture, far_end, baseline_cfg)
    return enhance(
        mixture,
        far_end,
        model,
        use_dtd=(system != "jaecbf"),
        chunk_seconds=chunk_seconds,
    )


def _evaluate_scene(job: dict) -> dict:
    record = job["record"]
    scene = load_scene(record, job["root"])
    if job["model"] is not None and scene.mixture.n_channels != job["model"].cfg.n_mics:
        raise ShapeMismatchError(
            f"scene {record['scene_id']} has {scene.mixture.n_channels} microphones, the model expects {job['model'].cfg.n_mics}"
        )
    estimate = run_system(
        job["system"],
        scene.mixture,
        scene.far_end,
        model=job["model"],
        delays=steering_delays(record),
        baseline_cfg=job["baseline_cfg"],
        chunk_seconds=job["chunk_seconds"],
    )
    return {
        "scene_id": record["scene_id"],
        "sisnr_db": si_snr(estimate, scene.target),
        "sdr_db": sdr(estimate, scene.target),
        "erle_db": erle(scene.mixture.channel(REFERENCE_MIC), estimate, scene.activity, record["hop"]),
    }


def evaluate_corpus(
    manifest_path: str,
    system: str,
    model: JaecbfModel | None = None,
    split: str | None = "test",
    baseline_cfg: PbfdafConfig | None = None,
    chunk_seconds: float | None = None,
    n_workers: int = 1,
) -> EvalReport:
    """Evaluates one system on the scenes of a manifest

    Parameters
    ----------
    manifest_path : str
        manifest.json (or the directory holding it)
    system : str
        One of SYSTEMS
    model : JaecbfModel, optional
        Required by jaecbf, jaecbf_dtd and pbfdaf+jaecbf
    split : str, optional
        Only scenes of this split (all scenes if None)
    baseline_cfg : PbfdafConfig, optional
        Adaptive-filter settings
    chunk_seconds : float, optional
        Chunk length for the neural systems
    n_workers : int
        Scenes evaluated concurrently (1 = sequential and deterministic)

    Returns
    -------
    EvalReport
        Scenes keep manifest order; means are over finite values only (ERLE is absent for
        scenes without far-end-only blocks)
    """
    start_time = time.time()
    if system not in SYSTEMS:
        raise DomainError(f"unknown system '{system}', expected one of {SYSTEMS}")
    if system in NEURAL_SYSTEMS and model is None:
        raise DomainError(f"system '{system}' needs a trained model")
    root = manifest_path if os.path.isdir(manifest_path) else os.path.dirname(manifest_path)
    records = [r for r in load_manifest(manifest_path) if split is None or r["split"] == split]
    if len(records) == 0:
        raise DomainError(f"the manifest has no scenes in split '{split}'")
    logger.info(f"STARTED evaluating system '{system}' on {len(records):,} scenes")
    jobs = tuple(
        {
            "record": record,
            "root": root,
            "system": system,
            "model": model,
            "baseline_cfg": baseline_cfg,
            "chunk_seconds": chunk_seconds,
        }
        for record in records
    )
    rows = run_python_function_in_parallel(
        func=_evaluate_scene, input_tuple=jobs, parallel_method="multi_thread", n_workers=n_workers
    )
    per_scene = pd.DataFrame(rows, columns=REPORT_COLUMNS)
    per_scene["erle_db"] = per_scene["erle_db"].astype(float)
    means = {
        column: (float(per_scene[column].mean()) if per_scene[column].notna().any() else None)
        for column in REPORT_COLUMNS[1:]
    }
    capped = {
        "sisnr_db": int((per_scene["sisnr_db"].abs() >= SISNR_CAP_DB).sum()),
        "sdr_db": int((per_scene["sdr_db"].abs() >= SDR_CAP_DB).sum()),
        "erle_db": int((per_scene["erle_db"].abs() >= ERLE_CAP_DB).sum()),
    }
    counts = {"scenes": len(per_scene), "with_erle": int(per_scene["erle_db"].notna().sum())}
    logger.info(
        f"COMPLETED evaluating system '{system}'\n"
        f"Number of minutes taken: {(time.time()-start_time)/60:,.5f}"
    )
    return EvalReport(
        system=system,
        per_scene=per_scene,
        means=means,
        counts=counts,
        capped=capped,
        config={
            "manifest": os.path.abspath(manifest_path),
            "split": split,
            "baseline": None if baseline_cfg is None else vars(baseline_cfg),
            "model": None if model is None else vars(model.cfg),
        },
    )


def write_report(report: EvalReport, out_path: str) -> tuple:
    """Writes [out_path] as CSV (one row per scene plus a 'mean' row) and a JSON twin next to it

    Returns
    -------
    (str, str)
        The CSV and JSON paths
    """
    stem, _ = os.path.splitext(out_path)
    csv_path, json_path = f"{stem}.csv", f"{stem}.json"
    directory = os.path.dirname(os.path.abspath(csv_path))
    os.makedirs(directory, exist_ok=True)
    mean_row = pd.DataFrame([{"scene_id": "mean", **report.means}], columns=REPORT_COLUMNS)
    table = pd.concat([report.per_scene, mean_row], ignore_index=True)
    table.to_csv(csv_path, index=False, float_format="%.6f")

    def finite_or_none(value):
        return None if value is None or not np.isfinite(value) else float(value)

    payload = {
        "system": report.system,
        "counts": report.counts,
        "capped": report.capped,
        "means": {key: finite_or_none(value) for key, value in report.means.items()},
        "scenes": [
            {
                "scene_id": row["scene_id"],
                **{column: finite_or_none(row[column]) for column in REPORT_COLUMNS[1:]},
                "capped": {
                    column: bool(
                        finite_or_none(row[column]) is not None
                        and abs(row[column])
                        >= {"sisnr_db": SISNR_CAP_DB, "sdr_db": SDR_CAP_DB, "erle_db": ERLE_CAP_DB}[column]
                    )
                    for column in REPORT_COLUMNS[1:]
                },
            }
            for row in report.per_scene.to_dict("records")
        ],
        "config": report.config,
    }
    with open(json_path, "w", encoding="utf-8") as file:
        file.write(json.dumps(payload, indent=2, sort_keys=True, default=list))
        file.write("\n")
    return csv_path, json_path


def compare_systems(
    manifest_path: str,
    systems=SYSTEMS,
    model: JaecbfModel | None = None,
    split: str | None = "test",
    baseline_cfg: PbfdafConfig | None = None,
    n_workers: int = 1,
) -> pd.DataFrame:
    """Mean Si-SNR / SDR / ERLE per system, one row per system (neural systems are skipped
    when no model is given)
    """
    rows = []
    for system in systems:
        if system in NEURAL_SYSTEMS and model is None:
            logger.warning(f"skipping '{system}': no model given")
            continue
        report = evaluate_corpus(
            manifest_path,
            system,
            model=model,
            split=split,
            baseline_cfg=baseline_cfg,
            n_workers=n_workers,
        )
        rows.append({"system": system, **report.means})
    return pd.DataFrame(rows, columns=["system", "sisnr_db", "sdr_db", "erle_db"]).set_index("system")
