"""Shared fixtures for the test suite: canonical arrays, scene builders and
synthetic embedding sets with known ground truth."""

from __future__ import annotations

import numpy as np

from arraydiar.io import EmbeddingSet, MicArrayGeometry
from arraydiar.synth import SceneSpec, SourceSpec


def square_array(sample_rate: float, radius: float = 0.10) -> MicArrayGeometry:
    """4-mic circular array: mics on the axes at the given radius."""
    return MicArrayGeometry(
        mics=[
            [radius, 0.0, 0.0],
            [0.0, radius, 0.0],
            [-radius, 0.0, 0.0],
            [0.0, -radius, 0.0],
        ],
        sample_rate=sample_rate,
    )


def single_source_scene(
    azimuth: float,
    sample_rate: float,
    duration: float = 0.5,
    snr_db: float = 20.0,
    seed: int = 0,
) -> SceneSpec:
    return SceneSpec(
        geometry=square_array(sample_rate),
        sources=(SourceSpec(azimuth=azimuth, schedule=((0.0, duration),)),),
        duration=duration,
        snr_db=snr_db,
        seed=seed,
    )


def turn_taking_scene(
    azimuths,
    turn_runs,
    sample_rate: float,
    snr_db: float = 20.0,
    seed: int = 0,
    gap: float = 0.0,
) -> SceneSpec:
    """Non-overlapping round-based schedule; turn_runs[i] lists the turn
    lengths of speaker i, interleaved in round-robin order."""
    cursor = 0.0
    schedules = [[] for _ in azimuths]
    max_turns = max(len(runs) for runs in turn_runs)
    for round_idx in range(max_turns):
        for spk, runs in enumerate(turn_runs):
            if round_idx < len(runs):
                length = runs[round_idx]
                schedules[spk].append((cursor, cursor + length))
                cursor += length + gap
    duration = cursor + 0.01
    sources = tuple(
        SourceSpec(azimuth=az, schedule=tuple(sched))
        for az, sched in zip(azimuths, schedules)
    )
    return SceneSpec(
        geometry=square_array(sample_rate),
        sources=sources,
        duration=duration,
        snr_db=snr_db,
        seed=seed,
    )


def blob_embeddings(
    k: int,
    points_per_cluster,
    dim: int = 64,
    max_angle_deg: float = 15.0,
    seed: int = 0,
    window: float = 1.44,
    shift: float = 0.6,
) -> tuple[EmbeddingSet, np.ndarray]:
    """Embeddings drawn around k orthonormal centers.

    Each point sits within max_angle_deg of its center, so intra-cluster
    cosines stay above cos(2*max_angle) and inter-cluster cosines below
    sin(max_angle)^2. Returns the set plus true labels.
    """
    rng = np.random.default_rng(seed)
    basis, _ = np.linalg.qr(rng.standard_normal((dim, k)))
    centers = basis.T
    if np.isscalar(points_per_cluster):
        counts = [int(points_per_cluster)] * k
    else:
        counts = list(points_per_cluster)
    vectors = []
    labels = []
    for c, count in enumerate(counts):
        for _ in range(count):
            w = rng.standard_normal(dim)
            w -= (w @ centers[c]) * centers[c]
            w /= np.linalg.norm(w)
            angle = np.deg2rad(rng.uniform(0.0, max_angle_deg))
            vectors.append(np.cos(angle) * centers[c] + np.sin(angle) * w)
            labels.append(c)
    order = rng.permutation(len(vectors))
    vectors = np.array(vectors)[order]
    labels = np.array(labels)[order]
    n = len(labels)
    starts = np.arange(n) * shift
    ends = starts + window
    return EmbeddingSet(starts, ends, vectors), labels


def embeddings_for_reference(
    reference,
    n_speakers: int,
    dim: int = 32,
    window: float = 1.44,
    shift: float = 0.6,
    noise_angle_deg: float = 12.0,
    seed: int = 0,
) -> EmbeddingSet:
    """Synthetic speaker embeddings for a reference segmentation.

    Slices each reference turn into sliding windows and draws each window's
    vector near its speaker's (orthonormal) centroid, mimicking an external
    extractor run on oracle-VAD speech.
    """
    rng = np.random.default_rng(seed)
    speakers = sorted({s.speaker for s in reference})
    basis, _ = np.linalg.qr(rng.standard_normal((dim, max(n_speakers, len(speakers)))))
    centers = {spk: basis.T[i] for i, spk in enumerate(speakers)}
    starts, ends, vectors = [], [], []
    for seg in reference:
        t = seg.start
        while True:
            end = min(t + window, seg.end)
            if end - t >= 0.2:
                center = centers[seg.speaker]
                w = rng.standard_normal(dim)
                w -= (w @ center) * center
                w /= np.linalg.norm(w)
                angle = np.deg2rad(rng.uniform(0.0, noise_angle_deg))
                vectors.append(np.cos(angle) * center + np.sin(angle) * w)
                starts.append(round(t, 3))
                ends.append(round(end, 3))
            if t + window >= seg.end - 1e-9:
                break
            t += shift
    return EmbeddingSet(np.array(starts), np.array(ends), np.array(vectors))


def label_accuracy(pred: np.ndarray, truth: np.ndarray) -> float:
    """Best-permutation agreement between two labelings."""
    from scipy.optimize import linear_sum_assignment

    pred = np.asarray(pred)
    truth = np.asarray(truth)
    np_pred = pred.max() + 1
    np_true = truth.max() + 1
    confusion = np.zeros((np_true, np_pred))
    for t, p in zip(truth, pred):
        confusion[t, p] += 1
    rows, cols = linear_sum_assignment(-confusion)
    return confusion[rows, cols].sum() / len(truth)
