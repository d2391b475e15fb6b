import filecmp
import os

import numpy as np
import pytest

import echo_beam_toolbox.jaecbf
import echo_beam_toolbox.metrics
import echo_beam_toolbox.scene_sim
from echo_beam_toolbox.all.experiment_config import SimulationConfig
from echo_beam_toolbox.all.gradcheck_suite import SMALL_MODEL, SMALL_STFT
from echo_beam_toolbox.custom_exceptions import DomainError

SMALL_SIMULATION = SimulationConfig(
    n_mics=2,
    chunk_seconds=0.5,
    rt60_range=(0.0, 0.2),
    max_order=6,
    pool_size=4,
    n_train=1,
    n_dev=0,
    n_test=2,
    seed=11,
)


def make_corpus(root) -> str:
    echo_beam_toolbox.scene_sim.build_dataset(SMALL_SIMULATION, str(root))
    return str(root)


def test_reference_mic_system_scores_the_mixture(tmp_path):
    """System 'none' reports the Si-SNR of the reference microphone against the target"""
    root = make_corpus(tmp_path / "corpus")
    report = echo_beam_toolbox.metrics.evaluate_corpus(root, "none", split="test")
    assert report.counts["scenes"] == 2, f"counts {report.counts}"
    records = [r for r in echo_beam_toolbox.scene_sim.load_manifest(root) if r["split"] == "test"]
    for record, row in zip(records, report.per_scene.to_dict("records")):
        scene = echo_beam_toolbox.scene_sim.load_scene(record, root)
        expected = echo_beam_toolbox.metrics.si_snr(scene.mixture.channel(0), scene.target)
        assert row["scene_id"] == record["scene_id"], "scenes are out of manifest order"
        assert np.isclose(row["sisnr_db"], expected), f"{row['scene_id']}: {row['sisnr_db']} vs {expected}"
    assert np.isclose(report.means["sisnr_db"], report.per_scene["sisnr_db"].mean()), "mean Si-SNR is wrong"


def test_reports_are_reproducible(tmp_path):
    """Evaluating twice writes byte-identical CSV reports plus a JSON twin"""
    root = make_corpus(tmp_path / "corpus")
    paths = []
    for name in ("first", "second"):
        report = echo_beam_toolbox.metrics.evaluate_corpus(root, "pbfdaf", split="test")
        paths.append(echo_beam_toolbox.metrics.write_report(report, os.path.join(tmp_path, name, "report.csv")))
    assert filecmp.cmp(paths[0][0], paths[1][0], shallow=False), "CSV reports differ"
    assert os.path.exists(paths[0][1]), "JSON report missing"
    with open(paths[0][0], "r", encoding="utf-8") as file:
        lines = file.read().splitlines()
    assert lines[0] == "scene_id,sisnr_db,sdr_db,erle_db", f"header {lines[0]}"
    assert lines[-1].startswith("mean,"), "no mean row"


def test_compare_systems_skips_neural_systems_without_a_model(tmp_path):
    """The classical systems get one row each"""
    root = make_corpus(tmp_path / "corpus")
    table = echo_beam_toolbox.metrics.compare_systems(root, split="test")
    assert list(table.index) == ["none", "pbfdaf", "das"], f"rows {list(table.index)}"


def test_neural_system_runs_with_a_model(tmp_path):
    """A fresh model can be evaluated in chunks; a missing model is an error"""
    root = make_corpus(tmp_path / "corpus")
    model = echo_beam_toolbox.jaecbf.JaecbfModel(SMALL_MODEL, SMALL_STFT)
    report = echo_beam_toolbox.metrics.evaluate_corpus(root, "jaecbf_dtd", model=model, chunk_seconds=0.05)
    assert np.isfinite(report.per_scene["sisnr_db"]).all(), "non-finite Si-SNR"
    with pytest.raises(DomainError):
        echo_beam_toolbox.metrics.evaluate_corpus(root, "jaecbf", split="test")
    with pytest.raises(DomainError):
        echo_beam_toolbox.metrics.evaluate_corpus(root, "none", split="dev")
