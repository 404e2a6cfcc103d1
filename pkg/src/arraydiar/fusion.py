"""Fusion of multiple diarization hypotheses by alignment and weighted voting.

Speaker labels are first mapped onto a shared space (anchored at the
hypothesis with the most speech, overlap-maximal assignment per system),
then the timeline is cut at every hypothesis boundary and each elementary
region keeps the labels that gather more than half of the asserted weight.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
from scipy.optimize import linear_sum_assignment

from .io import Segment

log = logging.getLogger(__name__)

# regions shorter than this are merged into their longer neighbor
MIN_REGION_MS = 10
_WEIGHT_EPS = 1e-12


@dataclass(frozen=True)
class WeightedHypothesis:
    """One diarization output with its voting weight."""

    segments: list
    weight: float

    def __post_init__(self):
        if not self.weight > 0:
            raise ValueError("hypothesis weight must be positive")


def _single_recording_id(hyps) -> str:
    ids = {seg.recording_id for hyp in hyps for seg in hyp}
    if len(ids) != 1:
        raise ValueError(f"hypotheses must cover exactly one recording, got {sorted(ids)}")
    return ids.pop()


def _label_intervals(segments) -> dict[str, list[tuple[int, int]]]:
    """Label -> merged (start_ms, end_ms) intervals."""
    by_label: dict[str, list[tuple[int, int]]] = {}
    for seg in segments:
        s = int(round(seg.start * 1000))
        e = int(round(seg.end * 1000))
        if e > s:
            by_label.setdefault(seg.speaker, []).append((s, e))
    merged = {}
    for label, ivs in by_label.items():
        ivs.sort()
        out = [list(ivs[0])]
        for s, e in ivs[1:]:
            if s <= out[-1][1]:
                out[-1][1] = max(out[-1][1], e)
            else:
                out.append([s, e])
        merged[label] = [(s, e) for s, e in out]
    return merged


def _overlap_ms(a: list[tuple[int, int]], b: list[tuple[int, int]]) -> int:
    total = 0
    i = j = 0
    while i < len(a) and j < len(b):
        lo = max(a[i][0], b[j][0])
        hi = min(a[i][1], b[j][1])
        if hi > lo:
            total += hi - lo
        if a[i][1] <= b[j][1]:
            i += 1
        else:
            j += 1
    return total


def _total_speech_ms(segments) -> int:
    spans = sorted(
        (int(round(s.start * 1000)), int(round(s.end * 1000))) for s in segments
    )
    total = 0
    end = -1
    for s, e in spans:
        if s > end:
            total += e - s
            end = e
        elif e > end:
            total += e - end
            end = e
    return total


def align_labels(hyps: list) -> list:
    """Map every hypothesis's labels onto a shared global label space.

    The hypothesis with the most total speech anchors the space (ties to the
    earliest); each other hypothesis maps its labels to anchor labels by
    maximizing total overlap duration (exact assignment), and labels left
    unmatched or matched with zero overlap get fresh global names. Empty
    hypotheses are excluded with a warning. Output order follows the input.
    """
    kept = []
    for idx, hyp in enumerate(hyps):
        if hyp:
            kept.append((idx, hyp))
        else:
            log.warning("excluding empty hypothesis %d from alignment", idx)
    if len(kept) < 2:
        raise ValueError("alignment needs at least 2 non-empty hypotheses")
    _single_recording_id([hyp for _, hyp in kept])
    anchor_pos = max(range(len(kept)), key=lambda i: (_total_speech_ms(kept[i][1]), -i))
    anchor_intervals = _label_intervals(kept[anchor_pos][1])
    anchor_labels = sorted(anchor_intervals)
    used = set(anchor_labels)

    def fresh_name(base: str) -> str:
        name = base
        suffix = 1
        while name in used:
            name = f"{base}#{suffix}"
            suffix += 1
        used.add(name)
        return name

    relabeled = []
    for pos, (_, hyp) in enumerate(kept):
        if pos == anchor_pos:
            relabeled.append(list(hyp))
            continue
        intervals = _label_intervals(hyp)
        labels = sorted(intervals)
        overlap = np.zeros((len(labels), len(anchor_labels)))
        for i, lab in enumerate(labels):
            for j, anc in enumerate(anchor_labels):
                overlap[i, j] = _overlap_ms(intervals[lab], anchor_intervals[anc])
        rows, cols = linear_sum_assignment(-overlap)
        mapping = {}
        for i, j in zip(rows, cols):
            if overlap[i, j] > 0:
                mapping[labels[i]] = anchor_labels[j]
        for lab in labels:
            if lab not in mapping:
                mapping[lab] = fresh_name(lab)
        relabeled.append(
            [
                Segment(s.recording_id, s.start, s.duration, mapping[s.speaker])
                for s in hyp
            ]
        )
    return relabeled


def _region_votes(hyps: list, t0: int):
    """Cumulative label weights and asserted mass at timeline point t0."""
    votes: dict[str, float] = {}
    system_max: dict[str, float] = {}
    asserted = 0.0
    for weight, intervals in hyps:
        speaking = False
        for label, ivs in intervals.items():
            for s, e in ivs:
                if s <= t0 < e:
                    votes[label] = votes.get(label, 0.0) + weight
                    system_max[label] = max(system_max.get(label, 0.0), weight)
                    speaking = True
                    break
        if speaking:
            asserted += weight
    return votes, system_max, asserted


def vote(hyps: list, single_label: bool = False) -> list:
    """Weighted voting over aligned hypotheses.

    The timeline is cut at every boundary from any hypothesis. In each
    elementary region every hypothesis adds its weight to each label it
    asserts there; labels whose cumulative weight exceeds half of the
    asserted weight mass survive (at least the top-voted label survives
    whenever any speech is asserted). Ties prefer the label backed by the
    highest-weight system, then the lexicographically smallest label.
    Weights are normalized first, so uniform scaling changes nothing.
    """
    if not hyps:
        raise ValueError("nothing to vote on")
    for hyp in hyps:
        if not isinstance(hyp, WeightedHypothesis):
            raise ValueError("vote expects WeightedHypothesis inputs")
    rec_id = _single_recording_id([h.segments for h in hyps])
    total_weight = sum(h.weight for h in hyps)
    weighted = [
        (h.weight / total_weight, _label_intervals(h.segments)) for h in hyps
    ]

    bounds = sorted(
        {t for _, intervals in weighted for ivs in intervals.values() for se in ivs for t in se}
    )
    regions = []
    for t0, t1 in zip(bounds, bounds[1:]):
        votes, system_max, asserted = _region_votes(weighted, t0)
        if not votes:
            continue
        ranked = sorted(
            votes,
            key=lambda lab: (-votes[lab], -system_max[lab], lab),
        )
        winners = [lab for lab in ranked if votes[lab] > asserted / 2.0 + _WEIGHT_EPS]
        if not winners:
            winners = [ranked[0]]
        if single_label:
            winners = [ranked[0]]
        regions.append([t0, t1, frozenset(winners)])

    regions = _merge_slivers(regions)

    # expand per label, merging touching or overlapping runs
    spans: dict[str, list[list[int]]] = {}
    for t0, t1, winners in regions:
        for label in winners:
            runs = spans.setdefault(label, [])
            if runs and t0 <= runs[-1][1]:
                runs[-1][1] = max(runs[-1][1], t1)
            else:
                runs.append([t0, t1])
    out = [
        Segment(rec_id, s / 1000.0, (e - s) / 1000.0, label)
        for label, runs in spans.items()
        for s, e in runs
    ]
    return sorted(out, key=lambda seg: (seg.start, seg.speaker))


def _merge_slivers(regions: list) -> list:
    """Fold regions shorter than MIN_REGION_MS into their longer neighbor."""
    regions = [list(r) for r in regions]
    while len(regions) > 1:
        idx = next(
            (i for i, r in enumerate(regions) if r[1] - r[0] < MIN_REGION_MS), None
        )
        if idx is None:
            break
        left = regions[idx - 1] if idx > 0 else None
        right = regions[idx + 1] if idx + 1 < len(regions) else None
        if left is not None and (
            right is None or (left[1] - left[0]) >= (right[1] - right[0])
        ):
            left[1] = regions[idx][1]
        else:
            right[0] = regions[idx][0]
        del regions[idx]
    return regions


def fuse(weighted_hyps: list, single_label: bool = False) -> list:
    """Align labels and vote; hypotheses are (segments, weight) pairs.

    Handles multi-recording inputs by fusing each recording independently.
    """
    if len(weighted_hyps) < 2:
        raise ValueError("fusion needs at least 2 hypotheses")
    weights = [w for _, w in weighted_hyps]
    rec_ids = sorted(
        {seg.recording_id for segments, _ in weighted_hyps for seg in segments}
    )
    fused = []
    for rec in rec_ids:
        per_rec = [
            [seg for seg in segments if seg.recording_id == rec]
            for segments, _ in weighted_hyps
        ]
        present = [i for i, segs in enumerate(per_rec) if segs]
        if len(present) < 2:
            log.warning("recording %s present in fewer than 2 hypotheses; passing through", rec)
            fused.extend(per_rec[present[0]] if present else [])
            continue
        aligned = align_labels([per_rec[i] for i in present])
        voted = vote(
            [
                WeightedHypothesis(aligned[pos], weights[i])
                for pos, i in enumerate(present)
            ],
            single_label=single_label,
        )
        fused.extend(voted)
    return sorted(fused, key=lambda seg: (seg.recording_id, seg.start, seg.speaker))
