"""Tests for the synthetic scene renderer."""

import numpy as np
import pytest

import helpers
from arraydiar.doa import build_grid, localize
from arraydiar.io import FramePlan, MicArrayGeometry
from arraydiar.synth import SceneSpec, SourceSpec, fractional_delay, load_scene, render


def test_render_deterministic_bit_identical():
    spec = helpers.single_source_scene(azimuth=45.0, sample_rate=16000, seed=5)
    clip_a, ref_a, vad_a = render(spec)
    clip_b, ref_b, vad_b = render(spec)
    assert np.array_equal(clip_a.samples, clip_b.samples)
    assert ref_a == ref_b
    assert vad_a == vad_b


def test_render_seed_changes_samples():
    a, _, _ = render(helpers.single_source_scene(45.0, 16000, seed=1))
    b, _, _ = render(helpers.single_source_scene(45.0, 16000, seed=2))
    assert not np.array_equal(a.samples, b.samples)


def test_fractional_delay_shifts_argmax():
    rng = np.random.default_rng(0)
    x = rng.standard_normal(4096)
    for delay in (3.0, 7.25, -4.5):
        y = fractional_delay(x, delay)
        corr = np.correlate(y, x, mode="full")
        measured = np.argmax(corr) - (len(x) - 1)
        assert abs(measured - delay) <= 0.5


def test_channel_delay_matches_baseline_over_c():
    # 2-mic array on the x axis, source at 0 degrees: channel 1 lags channel 0
    # by baseline / c
    fs = 96000
    geom = MicArrayGeometry(
        mics=[[0.1, 0.0, 0.0], [-0.1, 0.0, 0.0]], sample_rate=fs
    )
    spec = SceneSpec(
        geometry=geom,
        sources=(SourceSpec(azimuth=0.0, schedule=((0.0, 1.0),)),),
        duration=1.0,
        snr_db=np.inf,
        seed=3,
    )
    clip, _, _ = render(spec)
    corr = np.correlate(
        clip.samples[1].astype(np.float64), clip.samples[0].astype(np.float64), mode="full"
    )
    measured = np.argmax(corr) - (clip.n_samples - 1)
    expected = 0.2 / 343.0 * fs
    assert abs(measured - expected) <= 0.5


def test_unit_rms_energy():
    spec = helpers.single_source_scene(azimuth=10.0, sample_rate=16000, snr_db=np.inf, seed=4)
    clip, _, _ = render(spec)
    for ch in range(clip.channel_count):
        rms = np.sqrt(np.mean(clip.samples[ch].astype(np.float64) ** 2))
        db_error = abs(20 * np.log10(rms))
        assert db_error < 1.0


def test_joint_rotation_invariance():
    fs = 16000
    phi = 37.0
    geom = helpers.square_array(fs)
    rad = np.deg2rad(phi)
    rot = np.array([[np.cos(rad), -np.sin(rad), 0], [np.sin(rad), np.cos(rad), 0], [0, 0, 1]])
    spec_a = SceneSpec(
        geometry=geom,
        sources=(SourceSpec(azimuth=50.0, schedule=((0.0, 1.0),)),),
        duration=1.0,
        snr_db=np.inf,
        seed=6,
    )
    spec_b = SceneSpec(
        geometry=MicArrayGeometry(mics=geom.mics @ rot.T, sample_rate=fs),
        sources=(SourceSpec(azimuth=(50.0 + phi) % 360.0, schedule=((0.0, 1.0),)),),
        duration=1.0,
        snr_db=np.inf,
        seed=6,
    )
    a, _, _ = render(spec_a)
    b, _, _ = render(spec_b)
    rms = np.sqrt(np.mean((a.samples - b.samples) ** 2, dtype=np.float64))
    assert rms < 1e-4


def test_overlapping_sources_reference_and_vad():
    spec = SceneSpec(
        geometry=helpers.square_array(16000),
        sources=(
            SourceSpec(azimuth=0.0, schedule=((0.0, 4.0),)),
            SourceSpec(azimuth=180.0, schedule=((2.0, 6.0),)),
        ),
        duration=6.0,
        seed=7,
    )
    _, ref, vad = render(spec)
    assert len(ref) == 2  # the overlap survives in the reference
    assert ref[0].speaker == "spk0" and ref[1].speaker == "spk1"
    assert len(vad) == 1  # union covers both
    assert vad[0].start == 0.0 and vad[0].duration == 6.0
    assert vad[0].speaker == "speech"


def test_noiseless_single_source_every_frame_on_target():
    spec = helpers.single_source_scene(
        azimuth=222.0, sample_rate=96000, duration=2.0, snr_db=np.inf, seed=8
    )
    clip, _, vad = render(spec)
    grid = build_grid(spec.geometry, 256)
    track = localize(clip, FramePlan(0.5, 0.5), grid, vad)
    assert len(track) == 4
    step = 360.0 / 256.0
    for frame in track.frames:
        err = abs(frame.argmax_azimuth - 222.0) % 360.0
        assert min(err, 360.0 - err) <= step + 1e-9


def test_tone_complex_signal_kind():
    spec = SceneSpec(
        geometry=helpers.square_array(16000),
        sources=(SourceSpec(azimuth=90.0, schedule=((0.0, 0.5),), signal="tone-complex"),),
        duration=0.5,
        snr_db=np.inf,
        seed=9,
    )
    clip, _, _ = render(spec)
    assert np.abs(clip.samples).max() > 0


def test_scene_validation():
    geom = helpers.square_array(16000)
    with pytest.raises(ValueError):
        SourceSpec(azimuth=400.0, schedule=((0.0, 1.0),))
    with pytest.raises(ValueError):
        SourceSpec(azimuth=0.0, schedule=((1.0, 0.5),))
    with pytest.raises(ValueError):
        SceneSpec(geometry=geom, sources=(SourceSpec(0.0, ((0.0, 5.0),)),), duration=2.0)


def test_load_scene_config(tmp_path):
    path = tmp_path / "scene.cfg"
    path.write_text(
        "duration = 2.0\n"
        "snr_db = 20.0\n"
        "seed = 11\n"
        "sample_rate = 48000\n"
        "recording_id = 'demo'\n"
        "mics = [[0.1, 0.0, 0.0], [0.0, 0.1, 0.0], [-0.1, 0.0, 0.0], [0.0, -0.1, 0.0]]\n"
        "sources = [\n"
        "    {'azimuth': 30.0, 'signal': 'speech-noise', 'schedule': [[0.0, 1.0]]},\n"
        "    {'azimuth': 150.0, 'schedule': [[1.0, 2.0]]},\n"
        "]\n"
    )
    spec = load_scene(path)
    assert spec.duration == 2.0
    assert spec.seed == 11
    assert spec.recording_id == "demo"
    assert len(spec.sources) == 2
    assert spec.sources[1].signal == "speech-noise"
    clip, ref, vad = render(spec)
    assert clip.channel_count == 4
    assert len(ref) == 2
