import filecmp
import os

import numpy as np

import echo_beam_toolbox.scene_sim
from echo_beam_toolbox.all.build_dataset import MANIFEST_NAME, WAV_ROLES, sample_scene_parameters
from echo_beam_toolbox.all.experiment_config import SimulationConfig

SMALL_SIMULATION = SimulationConfig(
    n_mics=2,
    chunk_seconds=0.5,
    rt60_range=(0.0, 0.2),
    max_order=6,
    pool_size=4,
    n_train=2,
    n_dev=1,
    n_test=1,
    seed=7,
)


def test_same_seed_gives_identical_manifests(tmp_path):
    """Two runs with seed 7 write byte-identical manifests"""
    first, second = tmp_path / "first", tmp_path / "second"
    echo_beam_toolbox.scene_sim.build_dataset(SMALL_SIMULATION, str(first))
    echo_beam_toolbox.scene_sim.build_dataset(SMALL_SIMULATION, str(second))
    assert filecmp.cmp(
        first / MANIFEST_NAME, second / MANIFEST_NAME, shallow=False
    ), "manifests of two identical runs differ"


def test_scene_counts_and_wav_paths(tmp_path):
    """20/4/4 scenes give 28 records, each with 4 existing WAV files"""
    counts = {"train": 20, "dev": 4, "test": 4}
    records = echo_beam_toolbox.scene_sim.build_dataset(
        SMALL_SIMULATION, str(tmp_path), counts=counts, n_workers=4
    )
    assert len(records) == 28, f"expected 28 scenes, got {len(records)}"
    for split, count in counts.items():
        n_split = sum(record["split"] == split for record in records)
        assert n_split == count, f"split {split} has {n_split} scenes, expected {count}"
    for record in records:
        assert set(record["paths"]) == set(WAV_ROLES), f"{record['scene_id']} paths {record['paths']}"
        for path in record["paths"].values():
            assert os.path.isfile(tmp_path / path), f"missing WAV {path}"


def test_loaded_scene_matches_record(tmp_path):
    """A scene read back from disk has the recorded shape and activity labels"""
    records = echo_beam_toolbox.scene_sim.build_dataset(SMALL_SIMULATION, str(tmp_path))
    record = records[0]
    scene = echo_beam_toolbox.scene_sim.load_scene(record, str(tmp_path))
    assert scene.mixture.samples.shape == (2, record["n_samples"]), f"mixture shape {scene.mixture.samples.shape}"
    assert scene.far_end.n_channels == 1 and scene.target.n_channels == 1, "far-end/target must be mono"
    assert len(scene.activity) == int(np.ceil(record["n_samples"] / record["hop"])), "activity length mismatch"
    delays = echo_beam_toolbox.scene_sim.steering_delays(record)
    assert delays.shape == (2,) and delays[0] == 0.0, f"steering delays {delays}"


def test_sampled_parameters_stay_in_range():
    """1000 sampled scenes keep SER in [-10, 10] dB, SNR in [0, 40] dB and rt60 in [0, 0.6] s"""
    rng = np.random.default_rng(0)
    cfg = SimulationConfig()
    draws = [sample_scene_parameters(cfg, rng, n_speech=8, n_noise=4) for _ in range(1000)]
    ser = np.array([d["ser_db"] for d in draws])
    snr = np.array([d["snr_db"] for d in draws])
    rt60 = np.array([d["rt60"] for d in draws])
    assert ser.min() >= -10 and ser.max() <= 10, f"SER range [{ser.min()}, {ser.max()}]"
    assert snr.min() >= 0 and snr.max() <= 40, f"SNR range [{snr.min()}, {snr.max()}]"
    assert rt60.min() >= 0 and rt60.max() <= 0.6, f"rt60 range [{rt60.min()}, {rt60.max()}]"
    assert all(d["near_index"] != d["far_index"] for d in draws), "near and far talker coincide"
