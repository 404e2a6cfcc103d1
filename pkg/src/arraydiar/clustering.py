"""Clustering of externally extracted speaker embeddings.

Two initial clusterers are provided: average-linkage agglomeration with a
similarity stopping threshold, and spectral clustering auto-tuned by the
normalized maximum eigengap over a sweep of row-binarization sparsities.
A fixed-count spectral variant re-clusters once the speaker census has
pinned the number of speakers.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from sklearn.cluster import KMeans

from .io import EmbeddingSet, Segment

DEFAULT_AHC_THRESHOLD = -0.015
DEFAULT_MAX_SPEAKERS = 10
_EIG_EPS = 1e-10
_KMEANS_RESTARTS = 10


@dataclass(frozen=True)
class ClusterAssignment:
    """Per-segment cluster labels in [0, k), every cluster nonempty."""

    labels: np.ndarray
    k: int
    method: str
    p_value: int | None = None

    def __post_init__(self):
        labels = np.asarray(self.labels, dtype=np.int64)
        if labels.ndim != 1:
            raise ValueError("labels must be a 1-D index array")
        if self.k < 1:
            raise ValueError("k must be at least 1")
        present = set(labels.tolist())
        if present != set(range(self.k)):
            raise ValueError(f"labels must cover 0..{self.k - 1} with no gaps")
        object.__setattr__(self, "labels", labels)


def cosine_affinity(es: EmbeddingSet) -> np.ndarray:
    """Pairwise cosine similarities; exact unit diagonal, symmetric."""
    if len(es) < 2:
        raise ValueError("need at least 2 segments to build an affinity matrix")
    norms = np.linalg.norm(es.vectors, axis=1)
    zero = np.nonzero(norms == 0.0)[0]
    if zero.size:
        raise ValueError(f"segment {zero[0]} has a zero-norm embedding")
    unit = es.vectors / norms[:, None]
    aff = unit @ unit.T
    aff = (aff + aff.T) / 2.0
    np.clip(aff, -1.0, 1.0, out=aff)
    np.fill_diagonal(aff, 1.0)
    return aff


def _check_affinity(aff: np.ndarray) -> np.ndarray:
    aff = np.asarray(aff, dtype=np.float64)
    if aff.ndim != 2 or aff.shape[0] != aff.shape[1]:
        raise ValueError("affinity must be a square matrix")
    if aff.shape[0] < 2:
        raise ValueError("affinity must cover at least 2 segments")
    if np.abs(aff - aff.T).max() > 1e-9:
        raise ValueError("affinity must be symmetric")
    return aff


def _canonical_labels(raw: np.ndarray) -> tuple[np.ndarray, int]:
    """Renumber labels by first occurrence so output is order-deterministic."""
    mapping: dict[int, int] = {}
    out = np.empty(len(raw), dtype=np.int64)
    for i, value in enumerate(raw):
        key = int(value)
        if key not in mapping:
            mapping[key] = len(mapping)
        out[i] = mapping[key]
    return out, len(mapping)


# ---------------------------------------------------------------------------
# agglomerative clustering


def average_linkage_merges(aff: np.ndarray) -> list[tuple[tuple, tuple, float]]:
    """Full average-linkage merge sequence down to a single cluster.

    Each step greedily merges the cluster pair with the highest average
    inter-cluster similarity; exact ties resolve to the lowest active index
    pair. Returns (members_a, members_b, similarity) per merge, members as
    sorted segment-index tuples.
    """
    aff = _check_affinity(aff)
    n = aff.shape[0]
    # symmetric similarity matrix; dead rows/cols and the diagonal sit at -inf,
    # so a row-major argmax lands on the lowest (i, j) pair among exact ties
    sim = aff.astype(np.float64, copy=True)
    np.fill_diagonal(sim, -np.inf)
    sizes = np.ones(n, dtype=np.int64)
    members: list[tuple | None] = [(i,) for i in range(n)]
    active = np.ones(n, dtype=bool)
    merges = []
    for _ in range(n - 1):
        flat = int(np.argmax(sim))
        a, b = divmod(flat, n)
        if a > b:
            a, b = b, a
        merges.append((members[a], members[b], float(sim[a, b])))
        # Lance-Williams update for average linkage
        active[a] = active[b] = False
        idx = np.nonzero(active)[0]
        active[a] = True
        if idx.size:
            merged_sim = (sizes[a] * sim[a, idx] + sizes[b] * sim[b, idx]) / (
                sizes[a] + sizes[b]
            )
            sim[a, idx] = merged_sim
            sim[idx, a] = merged_sim
        sizes[a] += sizes[b]
        members[a] = tuple(sorted(members[a] + members[b]))
        members[b] = None
        sim[b, :] = -np.inf
        sim[:, b] = -np.inf
    return merges


def ahc(aff: np.ndarray, threshold: float = DEFAULT_AHC_THRESHOLD) -> ClusterAssignment:
    """Average-linkage agglomeration, stopping when the best merge similarity
    falls below the threshold (a merge exactly at the threshold still runs)."""
    aff = _check_affinity(aff)
    n = aff.shape[0]
    parent = np.arange(n)

    def find(x: int) -> int:
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    for members_a, members_b, similarity in average_linkage_merges(aff):
        if similarity < threshold:
            break
        ra, rb = find(members_a[0]), find(members_b[0])
        parent[rb] = ra
    roots = np.array([find(i) for i in range(n)])
    labels, k = _canonical_labels(roots)
    return ClusterAssignment(labels, k, "AHC")


# ---------------------------------------------------------------------------
# spectral clustering


def _binarized_laplacian(aff: np.ndarray, p: int) -> np.ndarray:
    """Keep the p largest entries of each row (self included) as binary
    connections, average with the transpose, and form the unnormalized
    graph Laplacian. Entries tied with the p-th largest value are all kept,
    which keeps the graph well defined on degenerate tied rows."""
    n = aff.shape[0]
    binary = np.zeros_like(aff)
    for i in range(n):
        cutoff = np.partition(aff[i], n - p)[n - p]
        binary[i, aff[i] >= cutoff] = 1.0
    sym = (binary + binary.T) / 2.0
    np.fill_diagonal(sym, 0.0)
    degree = sym.sum(axis=1)
    return np.diag(degree) - sym


def _eigengap_profile(laplacian: np.ndarray, max_speakers: int):
    eigvals, eigvecs = np.linalg.eigh(laplacian)
    limit = min(max_speakers, len(eigvals) - 1)
    gaps = np.diff(eigvals)[:limit]
    k = int(np.argmax(gaps)) + 1
    lam_max = float(eigvals[-1])
    return eigvals, eigvecs, gaps, k, lam_max


def _nme_score(gap: float, lam_max: float, p: int) -> float:
    # NME ratio: eigengap normalized by the spectrum scale, per neighbor count
    return (gap / (lam_max + _EIG_EPS)) / p


def _p_sweep(n: int) -> range:
    # p counts the kept entries per row including the self-connection, so the
    # sweep starts at 2: p = 1 builds a self-loop-only graph whose eigengap
    # carries no cluster information
    return range(2, max(2, n // 2) + 1)


def _spectral_kmeans(laplacian: np.ndarray, k: int, seed: int) -> np.ndarray:
    eigvals, eigvecs = np.linalg.eigh(laplacian)
    embedding = eigvecs[:, :k]
    km = KMeans(n_clusters=k, n_init=_KMEANS_RESTARTS, random_state=seed)
    return km.fit_predict(embedding)


def nme_sc(
    aff: np.ndarray,
    max_speakers: int = DEFAULT_MAX_SPEAKERS,
    seed: int = 0,
) -> ClusterAssignment:
    """Spectral clustering auto-tuned by the normalized maximum eigengap.

    Sweeps the row-binarization parameter p from 2 to n/2; for each p the
    cluster count candidate is the argmax eigengap among the smallest
    max_speakers eigenvalues of the binarized-graph Laplacian, scored by the
    NME ratio (normalized maximum eigengap divided by p). The best-scoring p
    wins (ties to the smaller p), then k eigenvectors feed seeded k-means.
    """
    aff = _check_affinity(aff)
    n = aff.shape[0]
    best = None  # (score, p, k, laplacian)
    for p in _p_sweep(n):
        laplacian = _binarized_laplacian(aff, p)
        _, _, gaps, k, lam_max = _eigengap_profile(laplacian, max_speakers)
        score = _nme_score(float(gaps[k - 1]), lam_max, p)
        if best is None or score > best[0]:
            best = (score, p, k, laplacian)
    _, p, k, laplacian = best
    if k == 1:
        labels = np.zeros(n, dtype=np.int64)
    else:
        labels, k = _canonical_labels(_spectral_kmeans(laplacian, k, seed))
    return ClusterAssignment(labels, k, "NME-SC", p_value=p)


def sc_fixed_k(
    aff: np.ndarray,
    k: int,
    seed: int = 0,
    p: int | None = None,
) -> ClusterAssignment:
    """Spectral clustering with the cluster count fixed (census-supplied).

    The eigengap search is bypassed; unless p is pinned by the caller it is
    re-tuned by the NME score of the eigengap at k.
    """
    aff = _check_affinity(aff)
    n = aff.shape[0]
    if not 1 <= k <= n:
        raise ValueError(f"k must be in [1, {n}], got {k}")
    if k == 1:
        return ClusterAssignment(np.zeros(n, dtype=np.int64), 1, "SC-fixed-k", p_value=p)
    if k == n:
        return ClusterAssignment(np.arange(n, dtype=np.int64), n, "SC-fixed-k", p_value=p)
    if p is None:
        best = None
        for candidate in _p_sweep(n):
            laplacian = _binarized_laplacian(aff, candidate)
            eigvals = np.linalg.eigvalsh(laplacian)
            gap = float(eigvals[k] - eigvals[k - 1])
            score = _nme_score(gap, float(eigvals[-1]), candidate)
            if best is None or score > best[0]:
                best = (score, candidate, laplacian)
        _, p, laplacian = best
    else:
        laplacian = _binarized_laplacian(aff, p)
    labels, k_out = _canonical_labels(_spectral_kmeans(laplacian, k, seed))
    if k_out != k:
        # k-means left a cluster empty; extremely degenerate input
        raise ValueError(f"spectral k-means produced {k_out} clusters instead of {k}")
    return ClusterAssignment(labels, k, "SC-fixed-k", p_value=p)


# ---------------------------------------------------------------------------
# RTTM conversion


def assignment_to_rttm(
    assign: ClusterAssignment,
    es: EmbeddingSet,
    recording_id: str,
) -> list[Segment]:
    """Turn per-segment cluster labels into a non-overlapping segment list.

    Overlapping same-label windows merge; an overlap between different labels
    splits at the midpoint of the overlapping region.
    """
    if len(assign.labels) != len(es):
        raise ValueError("assignment does not match the embedding set")
    order = np.lexsort((es.ends, es.starts))
    spans = [
        [float(es.starts[i]), float(es.ends[i]), f"spk{int(assign.labels[i])}"]
        for i in order
    ]
    merged: list[list] = []
    for start, end, label in spans:
        if merged and merged[-1][2] == label and start <= merged[-1][1]:
            merged[-1][1] = max(merged[-1][1], end)
            continue
        if merged and start < merged[-1][1]:
            mid = (start + merged[-1][1]) / 2.0
            mid = min(max(mid, merged[-1][0]), end)
            merged[-1][1] = mid
            start = mid
        if end > start:
            merged.append([start, end, label])
    return [
        Segment(recording_id, start, end - start, label)
        for start, end, label in merged
        if end - start > 0
    ]
