import numpy as np
import pytest

import echo_beam_toolbox.scene_sim
from echo_beam_toolbox.all.audio_clip import AudioClip
from echo_beam_toolbox.all.mix_scene import (
    REFERENCE_MIC,
    active_rms,
    decode_activity,
    encode_activity,
)
from echo_beam_toolbox.all.synthetic_sources import coloured_noise, speech_like_signal
from echo_beam_toolbox.custom_exceptions import DomainError

FS = 16000
HOP = 256


def make_scene_spec(ser_db=0.0, snr_db=20.0, far_scale=1.0, noise_scale=1.0, nonlinearity="none"):
    rng = np.random.default_rng(3)
    mics = echo_beam_toolbox.scene_sim.linear_array((2.5, 2.0, 1.2), n_mics=2)
    room = echo_beam_toolbox.scene_sim.RoomSpec(
        dimensions=(5.0, 4.0, 3.0),
        rt60=0.15,
        source_pos=(3.5, 3.0, 1.5),
        loudspeaker_pos=(1.5, 1.0, 1.0),
        noise_pos=(4.0, 0.8, 2.0),
        mic_positions=mics,
    )
    near = AudioClip(speech_like_signal(1.2, FS, rng)[None, :], FS)
    far = AudioClip(far_scale * speech_like_signal(1.2, FS, rng)[None, :], FS)
    noise = AudioClip(noise_scale * coloured_noise(int(1.2 * FS), rng)[None, :], FS)
    spec = echo_beam_toolbox.scene_sim.SceneSpec(
        room=room,
        ser_db=ser_db,
        snr_db=snr_db,
        nonlinearity=nonlinearity,
        near_utterance=near,
        far_utterance=far,
        noise=noise,
        chunk_seconds=1.0,
        hop=HOP,
    )
    return spec, echo_beam_toolbox.scene_sim.generate_rir_set(room, max_order=8)


def test_silent_far_end_and_noise_leave_only_near_end():
    """With the far-end and noise silent the mixture equals the reverberant near-end speech"""
    spec, rirs = make_scene_spec(far_scale=0.0, noise_scale=0.0)
    scene = echo_beam_toolbox.scene_sim.mix_scene(spec, rirs)
    assert np.array_equal(
        scene.mixture.samples[REFERENCE_MIC], scene.target.samples[0]
    ), "mixture differs from s_r at the reference microphone"
    assert np.array_equal(scene.mixture.samples, scene.near_image.samples), "mixture differs from s_r"


def test_zero_ser_gives_equal_active_levels():
    """ser_db = 0 makes the active RMS of s_r and of the echo equal at the reference mic"""
    spec, rirs = make_scene_spec(ser_db=0.0)
    scene = echo_beam_toolbox.scene_sim.mix_scene(spec, rirs)
    ratio = active_rms(scene.target.samples[0], HOP) / active_rms(
        scene.echo_ref.samples[REFERENCE_MIC], HOP
    )
    assert abs(ratio - 1.0) < 1e-6, f"active RMS ratio {ratio}, expected 1"


def test_requested_ser_and_snr_are_realised():
    """Measured SER and SNR match the request within 0.1 dB"""
    spec, rirs = make_scene_spec(ser_db=-5.0, snr_db=10.0, nonlinearity="clip")
    scene = echo_beam_toolbox.scene_sim.mix_scene(spec, rirs)
    near = scene.target.samples[0]
    ser = 20 * np.log10(active_rms(near, HOP) / active_rms(scene.echo_ref.samples[REFERENCE_MIC], HOP))
    snr = 20 * np.log10(
        active_rms(near, HOP) / np.sqrt(np.mean(scene.noise_image.samples[REFERENCE_MIC] ** 2))
    )
    assert abs(ser + 5.0) < 0.1, f"realised SER {ser:.3f} dB, requested -5"
    assert abs(snr - 10.0) < 0.1, f"realised SNR {snr:.3f} dB, requested 10"


def test_components_sum_to_mixture():
    """mixture = near + echo + noise at every microphone"""
    spec, rirs = make_scene_spec(ser_db=-5.0, snr_db=10.0, nonlinearity="sigmoid")
    scene = echo_beam_toolbox.scene_sim.mix_scene(spec, rirs)
    rebuilt = scene.near_image.samples + scene.echo_ref.samples + scene.noise_image.samples
    error = np.max(np.abs(rebuilt - scene.mixture.samples))
    assert error < 1e-9, f"component sum differs from the mixture by {error}"
    assert np.max(np.abs(scene.mixture.samples)) <= 0.9 + 1e-12, "mixture exceeds the 0.9 peak level"


def test_activity_labels_cover_every_block():
    """One label per hop block, drawn from N/F/D/S"""
    spec, rirs = make_scene_spec(ser_db=3.0)
    scene = echo_beam_toolbox.scene_sim.mix_scene(spec, rirs)
    n_samples = scene.mixture.n_samples
    assert len(scene.activity) == int(np.ceil(n_samples / HOP)), (
        f"{len(scene.activity)} labels for {n_samples} samples at hop {HOP}"
    )
    assert set(scene.activity) <= {"N", "F", "D", "S"}, f"unexpected labels {set(scene.activity)}"
    decoded = decode_activity(encode_activity(scene.activity))
    assert np.array_equal(decoded, scene.activity), "run-length codec did not reproduce the labels"


def test_mismatched_rates_and_silent_near_end_are_rejected():
    """A near-end utterance at another rate, or a silent one, is a domain error"""
    spec, rirs = make_scene_spec()
    resampled = echo_beam_toolbox.scene_sim.SceneSpec(
        room=spec.room,
        ser_db=0.0,
        snr_db=20.0,
        nonlinearity="none",
        near_utterance=AudioClip(spec.near_utterance.samples, 8000),
        far_utterance=spec.far_utterance,
        noise=spec.noise,
        chunk_seconds=1.0,
    )
    with pytest.raises(DomainError):
        echo_beam_toolbox.scene_sim.mix_scene(resampled, rirs)
    silent = echo_beam_toolbox.scene_sim.SceneSpec(
        room=spec.room,
        ser_db=0.0,
        snr_db=20.0,
        nonlinearity="none",
        near_utterance=AudioClip(np.zeros((1, 2 * FS)), FS),
        far_utterance=spec.far_utterance,
        noise=spec.noise,
        chunk_seconds=1.0,
    )
    with pytest.raises(DomainError):
        echo_beam_toolbox.scene_sim.mix_scene(silent, rirs)


def test_out_of_range_ser_is_rejected():
    """ser_db outside [-10, 10] cannot be specified"""
    spec, _ = make_scene_spec()
    with pytest.raises(DomainError):
        echo_beam_toolbox.scene_sim.SceneSpec(
            room=spec.room,
            ser_db=12.0,
            snr_db=20.0,
            nonlinearity="none",
            near_utterance=spec.near_utterance,
            far_utterance=spec.far_utterance,
            noise=spec.noise,
        )
