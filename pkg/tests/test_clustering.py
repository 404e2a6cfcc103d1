"""Tests for affinity construction, AHC, NME spectral clustering and RTTM output.

The AHC oracle recomputes average linkage from scratch at every step; the
spectral oracles are constructions with known cluster structure.
"""

import numpy as np
import pytest

import helpers
from arraydiar.clustering import (
    ahc,
    assignment_to_rttm,
    average_linkage_merges,
    cosine_affinity,
    nme_sc,
    sc_fixed_k,
)
from arraydiar.io import EmbeddingSet, Segment, write_rttm, read_rttm


def embedding_set(vectors):
    vectors = np.asarray(vectors, dtype=np.float64)
    n = len(vectors)
    starts = np.arange(n) * 0.6
    return EmbeddingSet(starts, starts + 1.44, vectors)


def random_affinity(rng, n):
    x = rng.standard_normal((n, 8))
    return cosine_affinity(embedding_set(x))


# ---------------------------------------------------------------------------
# affinity


def test_affinity_identical_vectors():
    es = embedding_set(np.tile([1.0, 2.0, 3.0], (4, 1)))
    aff = cosine_affinity(es)
    assert np.allclose(aff, 1.0)


def test_affinity_orthogonal_pair():
    es = embedding_set([[1.0, 0.0], [0.0, 2.0]])
    aff = cosine_affinity(es)
    assert aff[0, 1] == pytest.approx(0.0, abs=1e-15)
    assert aff[0, 0] == 1.0


def test_affinity_matches_double_loop_oracle():
    rng = np.random.default_rng(0)
    vectors = rng.standard_normal((10, 64))
    aff = cosine_affinity(embedding_set(vectors))
    for i in range(10):
        for j in range(10):
            expected = vectors[i] @ vectors[j] / (
                np.linalg.norm(vectors[i]) * np.linalg.norm(vectors[j])
            )
            if i == j:
                expected = 1.0
            assert abs(aff[i, j] - expected) < 1e-12
    assert np.array_equal(aff, aff.T)


def test_affinity_zero_vector_names_segment():
    vectors = np.ones((3, 4))
    vectors[1] = 0.0
    with pytest.raises(ValueError, match="segment 1"):
        cosine_affinity(embedding_set(vectors))


# ---------------------------------------------------------------------------
# AHC


def oracle_average_linkage(aff):
    """From-scratch average-linkage: recompute every cluster-pair mean
    similarity at each step; ties break on the lowest (min-member, min-member)
    pair. Returns the same merge structure as average_linkage_merges."""
    n = aff.shape[0]
    clusters = [frozenset([i]) for i in range(n)]
    merges = []
    while len(clusters) > 1:
        best = None
        for ai in range(len(clusters)):
            for bi in range(ai + 1, len(clusters)):
                a, b = clusters[ai], clusters[bi]
                sim = np.mean([aff[i, j] for i in a for j in b])
                key = (min(a), min(b)) if min(a) < min(b) else (min(b), min(a))
                if best is None or sim > best[0] + 1e-15 or (
                    abs(sim - best[0]) <= 1e-15 and key < best[1]
                ):
                    best = (sim, key, ai, bi)
        sim, _, ai, bi = best
        a, b = clusters[ai], clusters[bi]
        first, second = (a, b) if min(a) < min(b) else (b, a)
        merges.append((tuple(sorted(first)), tuple(sorted(second)), sim))
        clusters = [c for k, c in enumerate(clusters) if k not in (ai, bi)]
        clusters.append(a | b)
    return merges


def test_ahc_two_tight_groups():
    # intra similarity 0.9, inter -0.5: threshold -0.015 keeps two clusters
    aff = np.full((6, 6), -0.5)
    aff[:3, :3] = 0.9
    aff[3:, 3:] = 0.9
    np.fill_diagonal(aff, 1.0)
    result = ahc(aff, threshold=-0.015)
    assert result.k == 2
    assert len(set(result.labels[:3])) == 1
    assert len(set(result.labels[3:])) == 1


def test_ahc_threshold_above_everything_no_merges():
    rng = np.random.default_rng(1)
    aff = random_affinity(rng, 7)
    result = ahc(aff, threshold=2.0)
    assert result.k == 7


def test_ahc_threshold_boundary_merges_at_equality():
    aff = np.array([[1.0, -0.015], [-0.015, 1.0]])
    assert ahc(aff, threshold=-0.015).k == 1  # merge at exactly the threshold
    aff2 = np.array([[1.0, -0.0150001], [-0.0150001, 1.0]])
    assert ahc(aff2, threshold=-0.015).k == 2


def test_ahc_dendrogram_matches_bruteforce():
    rng = np.random.default_rng(2)
    for trial in range(50):
        n = int(rng.integers(2, 9))
        aff = random_affinity(rng, n)
        got = average_linkage_merges(aff)
        want = oracle_average_linkage(aff)
        assert len(got) == len(want)
        for (ga, gb, gs), (wa, wb, ws) in zip(got, want):
            assert {frozenset(ga), frozenset(gb)} == {frozenset(wa), frozenset(wb)}
            assert gs == pytest.approx(ws, abs=1e-10)


def test_ahc_permutation_equivariance():
    rng = np.random.default_rng(3)
    for _ in range(10):
        n = int(rng.integers(4, 31))
        vectors = rng.standard_normal((n, 8))
        base = ahc(cosine_affinity(embedding_set(vectors)), threshold=0.3)
        perm = rng.permutation(n)
        permuted = ahc(
            cosine_affinity(embedding_set(vectors[perm])), threshold=0.3
        )
        # same partition: co-membership must be preserved under the permutation
        for i in range(n):
            for j in range(n):
                same_base = base.labels[perm[i]] == base.labels[perm[j]]
                same_perm = permuted.labels[i] == permuted.labels[j]
                assert same_base == same_perm


# ---------------------------------------------------------------------------
# spectral clustering


def test_nme_sc_three_blobs():
    es, truth = helpers.blob_embeddings(k=3, points_per_cluster=20, seed=4)
    aff = cosine_affinity(es)
    assert aff[np.eye(len(es), dtype=bool) == False].max() < 1.0  # sanity
    result = nme_sc(aff, max_speakers=10)
    assert result.k == 3
    assert helpers.label_accuracy(result.labels, truth) == 1.0


def test_nme_sc_block_constant_two_blocks():
    n = 12
    aff = np.zeros((n, n))
    aff[:6, :6] = 1.0
    aff[6:, 6:] = 1.0
    result = nme_sc(aff, max_speakers=10)
    assert result.k == 2


def test_nme_sc_single_blob():
    es, _ = helpers.blob_embeddings(k=1, points_per_cluster=25, seed=5)
    result = nme_sc(cosine_affinity(es), max_speakers=10)
    assert result.k == 1


def test_nme_sc_respects_max_speakers():
    es, truth = helpers.blob_embeddings(k=4, points_per_cluster=10, seed=6)
    result = nme_sc(cosine_affinity(es), max_speakers=2)
    assert result.k <= 2


def test_sc_fixed_k_extremes():
    rng = np.random.default_rng(7)
    aff = random_affinity(rng, 6)
    assert sc_fixed_k(aff, 1).k == 1
    assert np.all(sc_fixed_k(aff, 1).labels == 0)
    result = sc_fixed_k(aff, 6)
    assert result.k == 6
    assert sorted(result.labels) == list(range(6))
    with pytest.raises(ValueError):
        sc_fixed_k(aff, 7)
    with pytest.raises(ValueError):
        sc_fixed_k(aff, 0)


def near_merged_blobs(seed=8, center_sep_deg=10.0, wide_angle_deg=20.0):
    """Four blobs; the last two sit 10 degrees apart with wider spread and
    fewer points, so the eigengap folds them into one cluster."""
    rng = np.random.default_rng(seed)
    dim = 64
    basis, _ = np.linalg.qr(rng.standard_normal((dim, 4)))
    centers = basis.T.copy()
    mixed = centers[2] * np.cos(np.deg2rad(center_sep_deg)) + centers[3] * np.sin(
        np.deg2rad(center_sep_deg)
    )
    centers[3] = mixed / np.linalg.norm(mixed)
    vectors, labels = [], []
    counts = [15, 15, 8, 8]
    for c in range(4):
        spread = wide_angle_deg if c >= 2 else 15.0
        for _ in range(counts[c]):
            w = rng.standard_normal(dim)
            w -= (w @ centers[c]) * centers[c]
            w /= np.linalg.norm(w)
            a = np.deg2rad(rng.uniform(0, spread))
            vectors.append(np.cos(a) * centers[c] + np.sin(a) * w)
            labels.append(c)
    order = rng.permutation(len(vectors))
    return np.array(vectors)[order], np.array(labels)[order]


def test_sc_fixed_k_recovers_near_merged_blobs():
    # blobs 3 and 4 nearly merge; the eigengap alone prefers 3 clusters but
    # fixing k = 4 still separates them
    vectors, truth = near_merged_blobs()
    aff = cosine_affinity(embedding_set(vectors))
    auto = nme_sc(aff, max_speakers=10)
    assert auto.k == 3
    fixed = sc_fixed_k(aff, 4)
    assert fixed.k == 4
    assert helpers.label_accuracy(fixed.labels, truth) >= 0.95


def test_scaling_invariance_of_clusterers():
    es, _ = helpers.blob_embeddings(k=3, points_per_cluster=12, seed=9)
    scaled = EmbeddingSet(es.starts, es.ends, 3.7 * es.vectors)
    aff_a = cosine_affinity(es)
    aff_b = cosine_affinity(scaled)
    assert np.allclose(aff_a, aff_b, atol=1e-12)
    assert np.array_equal(nme_sc(aff_a).labels, nme_sc(aff_b).labels)
    assert np.array_equal(ahc(aff_a, 0.5).labels, ahc(aff_b, 0.5).labels)


def test_nme_and_fixed_k_agree_on_same_p():
    es, _ = helpers.blob_embeddings(k=3, points_per_cluster=18, seed=10)
    aff = cosine_affinity(es)
    auto = nme_sc(aff, max_speakers=10, seed=3)
    fixed = sc_fixed_k(aff, auto.k, seed=3, p=auto.p_value)
    assert np.array_equal(auto.labels, fixed.labels)


def test_kmeans_determinism():
    es, _ = helpers.blob_embeddings(k=3, points_per_cluster=15, seed=11)
    aff = cosine_affinity(es)
    a = nme_sc(aff, seed=42)
    b = nme_sc(aff, seed=42)
    assert np.array_equal(a.labels, b.labels)
    assert a.p_value == b.p_value


# ---------------------------------------------------------------------------
# RTTM conversion


def test_assignment_rttm_same_label_merge():
    es = EmbeddingSet([0.0, 0.72], [1.44, 2.16], np.ones((2, 3)))
    assign = ahc(np.array([[1.0, 0.99], [0.99, 1.0]]), threshold=0.5)
    segments = assignment_to_rttm(assign, es, "m")
    assert segments == [Segment("m", 0.0, 2.16, "spk0")]


def test_assignment_rttm_conflict_splits_at_midpoint():
    es = EmbeddingSet([0.0, 0.72], [1.44, 2.16], np.array([[1.0, 0.0], [0.0, 1.0]]))
    assign = ahc(np.array([[1.0, -0.9], [-0.9, 1.0]]), threshold=0.5)
    segments = assignment_to_rttm(assign, es, "m")
    # overlap [0.72, 1.44] splits at 1.08
    assert segments[0] == Segment("m", 0.0, 1.08, "spk0")
    assert segments[1].start == pytest.approx(1.08)
    assert segments[1].end == pytest.approx(2.16)


def test_assignment_rttm_random_is_nonoverlapping_and_roundtrips(tmp_path):
    rng = np.random.default_rng(12)
    n = 40
    starts = np.round(np.arange(n) * 0.6, 3)
    es = EmbeddingSet(starts, np.round(starts + 1.44, 3), rng.standard_normal((n, 8)))
    labels = rng.integers(0, 3, n)
    from arraydiar.clustering import ClusterAssignment

    assign = ClusterAssignment(*_relabel(labels), method="AHC")
    segments = assignment_to_rttm(assign, es, "m")
    for a, b in zip(segments, segments[1:]):
        assert b.start >= a.end - 1e-9  # non-overlapping, sorted
        assert a.duration > 0
    path = tmp_path / "h.rttm"
    write_rttm(segments, path)
    again = read_rttm(path)
    assert len(again) == len(segments)


def _relabel(raw):
    mapping = {}
    out = []
    for v in raw:
        mapping.setdefault(int(v), len(mapping))
        out.append(mapping[int(v)])
    return np.array(out), len(mapping)
