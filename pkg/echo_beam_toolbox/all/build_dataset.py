"""Defines the function build_dataset() (simulated corpus + JSON manifest) and the manifest
readers load_manifest() and load_scene()
"""

import json
import logging
import os
import time

import numpy as np

from echo_beam_toolbox.all.apply_nonlinearity import CLIP_FRACTION, SIGMOID_PARAMS
from echo_beam_toolbox.all.audio_clip import read_wav, write_wav
from echo_beam_toolbox.all.experiment_config import SimulationConfig
from echo_beam_toolbox.all.generate_rir import RoomSpec, generate_rir_set, linear_array
from echo_beam_toolbox.all.mix_scene import (
    SceneAudio,
    SceneSpec,
    decode_activity,
    encode_activity,
    mix_scene,
)
from echo_beam_toolbox.all.print_progress_bar import print_progress_bar
from echo_beam_toolbox.all.run_python_function_in_parallel import (
    run_python_function_in_parallel,
)
from echo_beam_toolbox.all.synthetic_sources import build_utterance_pool
from echo_beam_toolbox.custom_exceptions import DomainError

logger = logging.getLogger(__name__)

MANIFEST_NAME = "manifest.json"
WAV_ROLES = ("mixture", "farend", "target", "echo")
_MIN_SOURCE_TO_ARRAY = 0.5


def _random_position(
    rng: np.random.Generator, dims: np.ndarray, margin: float, avoid: np.ndarray
) -> np.ndarray:
    for _ in range(100):
        position = rng.uniform(margin, dims - margin)
        if np.linalg.norm(position - avoid) >= _MIN_SOURCE_TO_ARRAY:
            return position
    return position


def sample_scene_parameters(
    cfg: SimulationConfig, rng: np.random.Generator, n_speech: int, n_noise: int
) -> dict:
    """Draws one scene's room, positions, SER, SNR, rt60, nonlinearity and pool indices

    Every quantity is uniform over its configured range.
    """
    dims = rng.uniform(cfg.room_min, cfg.room_max)
    margin = cfg.min_wall_distance
    array_center = rng.uniform(margin, dims - margin)
    source = _random_position(rng, dims, margin, array_center)
    loudspeaker = _random_position(rng, dims, margin, array_center)
    noise = _random_position(rng, dims, margin, array_center)
    near_index = int(rng.integers(n_speech))
    far_index = int(rng.integers(n_speech - 1)) if n_speech > 1 else 0
    if n_speech > 1 and far_index >= near_index:
        far_index += 1
    return {
        "dimensions": [float(v) for v in dims],
        "rt60": float(rng.uniform(*cfg.rt60_range)),
        "ser_db": float(rng.uniform(*cfg.ser_range)),
        "snr_db": float(rng.uniform(*cfg.snr_range)),
        "nonlinearity": str(cfg.nonlinearities[int(rng.integers(len(cfg.nonlinearities)))]),
        "array_center": [float(v) for v in array_center],
        "source": [float(v) for v in source],
        "loudspeaker": [float(v) for v in loudspeaker],
        "noise": [float(v) for v in noise],
        "near_index": near_index,
        "far_index": far_index,
        "noise_index": int(rng.integers(n_noise)),
    }


def _synthesise_scene(job: dict) -> dict:
    """Renders one scene, writes its WAV files and returns its manifest record"""
    cfg: SimulationConfig = job["cfg"]
    pool = job["pool"]
    rng = np.random.default_rng(job["seed_sequence"])
    params = sample_scene_parameters(cfg, rng, len(pool["speech"]), len(pool["noise"]))
    mics = linear_array(tuple(params["array_center"]), cfg.n_mics, cfg.array_aperture)
    room = RoomSpec(
        dimensions=tuple(params["dimensions"]),
        rt60=params["rt60"],
        source_pos=tuple(params["source"]),
        loudspeaker_pos=tuple(params["loudspeaker"]),
        noise_pos=tuple(params["noise"]),
        mic_positions=mics,
        sample_rate=cfg.sample_rate,
        sound_speed=cfg.sound_speed,
    )
    spec = SceneSpec(
        room=room,
        ser_db=params["ser_db"],
        snr_db=params["snr_db"],
        nonlinearity=params["nonlinearity"],
        near_utterance=pool["speech"][params["near_index"]],
        far_utterance=pool["speech"][params["far_index"]],
        noise=pool["noise"][params["noise_index"]],
        chunk_seconds=cfg.chunk_seconds,
        hop=job["hop"],
    )
    scene = mix_scene(spec, generate_rir_set(room, cfg.max_order))

    scene_id = job["scene_id"]
    paths = {role: os.path.join(job["split"], f"{scene_id}_{role}.wav") for role in WAV_ROLES}
    clips = {
        "mixture": scene.mixture,
        "farend": scene.far_end,
        "target": scene.target,
        "echo": scene.echo_ref,
    }
    for role, clip in clips.items():
        write_wav(os.path.join(job["out_dir"], paths[role]), clip, subtype=cfg.wav_subtype)

    return {
        "scene_id": scene_id,
        "split": job["split"],
        "paths": paths,
        "sample_rate": cfg.sample_rate,
        "n_samples": scene.mixture.n_samples,
        "n_mics": cfg.n_mics,
        "hop": job["hop"],
        "ser_db": params["ser_db"],
        "snr_db": params["snr_db"],
        "rt60": params["rt60"],
        "nonlinearity": params["nonlinearity"],
        "nonlinearity_params": {"clip_fraction": CLIP_FRACTION, **SIGMOID_PARAMS},
        "activity": encode_activity(scene.activity),
        "geometry": {
            "room": params["dimensions"],
            "source": params["source"],
            "loudspeaker": params["loudspeaker"],
            "noise": params["noise"],
            "mics": [list(position) for position in mics],
            "sound_speed": cfg.sound_speed,
        },
        "sources": {
            "near_index": params["near_index"],
            "far_index": params["far_index"],
            "noise_index": params["noise_index"],
        },
    }


def build_dataset(
    cfg: SimulationConfig,
    out_dir: str,
    counts: dict | None = None,
    hop: int = 256,
    n_workers: int = 1,
    verbose: bool = False,
) -> list:
    """Simulates train/dev/test scenes, writes 4 WAV files per scene and a JSON manifest

    Parameters
    ----------
    cfg : SimulationConfig
        Sampling ranges, array geometry, seed and (default) per-split counts
    out_dir : str
        Output directory (created if missing)
    counts : dict, optional
        {'train': n, 'dev': n, 'test': n}; defaults to the counts in [cfg]
    hop : int
        Block length (samples) of the activity labels
    n_workers : int
        Scenes rendered concurrently (1 = sequential)
    verbose : bool
        Print a progress bar

    Returns
    -------
    list
        The manifest records (also written to [out_dir]/manifest.json)

    Raises
    ------
    DomainError
        If the utterance pool is empty
    OSError
        If [out_dir] cannot be written
    """
    start_time = time.time()
    counts = cfg.counts if counts is None else counts
    total = int(sum(counts.values()))
    logger.info(f"STARTED simulating {total:,} scenes into {out_dir}")

    pool = build_utterance_pool(
        pool_size=cfg.pool_size,
        duration=cfg.chunk_seconds + 0.5,
        sample_rate=cfg.sample_rate,
        seed=cfg.seed,
        pool_dir=cfg.pool_dir,
    )
    if len(pool["speech"]) == 0:
        raise DomainError("the utterance pool is empty")

    children = np.random.SeedSequence(cfg.seed).spawn(total)
    jobs = []
    for split in ("train", "dev", "test"):
        n_split = int(counts.get(split, 0))
        if n_split > 0:
            os.makedirs(os.path.join(out_dir, split), exist_ok=True)
        for index in range(n_split):
            jobs.append(
                {
                    "cfg": cfg,
                    "pool": pool,
                    "out_dir": out_dir,
                    "split": split,
                    "scene_id": f"{split}_{index:04d}",
                    "seed_sequence": children[len(jobs)],
                    "hop": hop,
                }
            )

    if verbose and n_workers == 1:
        progress = print_progress_bar("simulating scenes", total=max(total, 1))
        records = []
        for job in jobs:
            records.append(_synthesise_scene(job))
            progress.update(len(records), suffix=f"{len(records)}/{total}")
    else:
        records = run_python_function_in_parallel(
            func=_synthesise_scene,
            input_tuple=tuple(jobs),
            parallel_method="multi_thread",
            n_workers=n_workers,
        )

    os.makedirs(out_dir, exist_ok=True)
    with open(os.path.join(out_dir, MANIFEST_NAME), "w", encoding="utf-8") as file:
        file.write(json.dumps(records, indent=2, sort_keys=True))
        file.write("\n")
    logger.info(
        f"COMPLETED simulating {total:,} scenes\n"
        f"Number of minutes taken: {(time.time()-start_time)/60:,.5f}"
    )
    return records


def load_manifest(path: str) -> list:
    """Reads a manifest (a path to manifest.json or to the directory holding it)"""
    if os.path.isdir(path):
        path = os.path.join(path, MANIFEST_NAME)
    with open(path, "r", encoding="utf-8") as file:
        return json.load(file)


def load_scene(record: dict, root: str) -> SceneAudio:
    """Reads the WAV files of one manifest record back into a SceneAudio"""
    clips = {role: read_wav(os.path.join(root, record["paths"][role])) for role in WAV_ROLES}
    return SceneAudio(
        mixture=clips["mixture"],
        far_end=clips["farend"],
        target=clips["target"],
        echo_ref=clips["echo"],
        activity=decode_activity(record["activity"]),
    )


def steering_delays(record: dict) -> np.ndarray:
    """Arrival delay (samples) of the near-end talker at each microphone relative to mic 0"""
    geometry = record["geometry"]
    mics = np.asarray(geometry["mics"], dtype=np.float64)
    distances = np.linalg.norm(mics - np.asarray(geometry["source"]), axis=1)
    return (distances - distances[0]) * record["sample_rate"] / geometry["sound_speed"]


def chunk_scene(scene: SceneAudio, n_samples: int, hop: int) -> list:
    """Splits a scene into consecutive [n_samples] chunks (a shorter tail is dropped)"""
    chunks = []
    for start in range(0, scene.mixture.n_samples - n_samples + 1, n_samples):
        stop = start + n_samples
        chunks.append(
            SceneAudio(
                mixture=scene.mixture.segment(start, stop),
                far_end=scene.far_end.segment(start, stop),
                target=scene.target.segment(start, stop),
                echo_ref=scene.echo_ref.segment(start, stop),
                activity=scene.activity[start // hop : int(np.ceil(stop / hop))],
            )
        )
    return chunks
