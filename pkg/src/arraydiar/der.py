"""Diarization error rate: missed speech + false alarm + speaker error.

Scoring follows the NIST md-eval conventions: a collar around every
*reference* boundary is excluded (hypothesis boundaries get none), reference
overlap regions may be excluded, and the reference/hypothesis speaker mapping
maximizes correctly attributed time on the scored timeline. Time arithmetic
runs on a millisecond-quantized event timeline.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np
from scipy.optimize import linear_sum_assignment

DEFAULT_COLLAR = 0.25


@dataclass(frozen=True)
class DerReport:
    """Error components in seconds plus their share of scored reference time."""

    missed_speech: float
    false_alarm: float
    speaker_error: float
    scored_time: float

    @property
    def missed_speech_pct(self) -> float:
        return 100.0 * self.missed_speech / self.scored_time

    @property
    def false_alarm_pct(self) -> float:
        return 100.0 * self.false_alarm / self.scored_time

    @property
    def speaker_error_pct(self) -> float:
        return 100.0 * self.speaker_error / self.scored_time

    @property
    def der(self) -> float:
        return self.missed_speech_pct + self.false_alarm_pct + self.speaker_error_pct

    def as_dict(self) -> dict:
        return {
            "missed_speech_s": self.missed_speech,
            "false_alarm_s": self.false_alarm,
            "speaker_error_s": self.speaker_error,
            "scored_time_s": self.scored_time,
            "missed_speech_pct": self.missed_speech_pct,
            "false_alarm_pct": self.false_alarm_pct,
            "speaker_error_pct": self.speaker_error_pct,
            "der_pct": self.der,
        }


def _ms(t: float) -> int:
    return int(round(t * 1000))


def _by_speaker_ms(segments) -> dict[str, list[tuple[int, int]]]:
    by_spk: dict[str, list[tuple[int, int]]] = {}
    for seg in segments:
        s, e = _ms(seg.start), _ms(seg.end)
        if e > s:
            by_spk.setdefault(seg.speaker, []).append((s, e))
    merged = {}
    for spk, ivs in by_spk.items():
        ivs.sort()
        out = [list(ivs[0])]
        for s, e in ivs[1:]:
            if s <= out[-1][1]:
                out[-1][1] = max(out[-1][1], e)
            else:
                out.append([s, e])
        merged[spk] = [(s, e) for s, e in out]
    return merged


def _merge_intervals(ivs: list[tuple[int, int]]) -> list[tuple[int, int]]:
    ivs = sorted(ivs)
    out: list[list[int]] = []
    for s, e in ivs:
        if e <= s:
            continue
        if out and s <= out[-1][1]:
            out[-1][1] = max(out[-1][1], e)
        else:
            out.append([s, e])
    return [(s, e) for s, e in out]


def _overlap_regions(by_spk: dict) -> list[tuple[int, int]]:
    """Regions where at least two reference speakers are active."""
    events = []
    for ivs in by_spk.values():
        for s, e in ivs:
            events.append((s, 1))
            events.append((e, -1))
    events.sort()
    regions = []
    depth = 0
    start = None
    for t, delta in events:
        before = depth
        depth += delta
        if before < 2 <= depth:
            start = t
        elif before >= 2 > depth:
            regions.append((start, t))
            start = None
    return _merge_intervals(regions)


class _Timeline:
    """Helper answering 'which speakers are active at t' via merged intervals."""

    def __init__(self, by_spk: dict):
        self.by_spk = by_spk

    def active_at(self, t: int) -> list[str]:
        out = []
        for spk, ivs in self.by_spk.items():
            for s, e in ivs:
                if s <= t < e:
                    out.append(spk)
                    break
                if s > t:
                    break
        return out


def _score_recording(ref_segments, hyp_segments, collar_ms: int, ignore_overlap: bool):
    ref_by_spk = _by_speaker_ms(ref_segments)
    hyp_by_spk = _by_speaker_ms(hyp_segments)

    # collars surround every boundary as annotated, including seams between
    # touching same-speaker segments
    exclusions = []
    for seg in ref_segments:
        s, e = _ms(seg.start), _ms(seg.end)
        exclusions.append((s - collar_ms, s + collar_ms))
        exclusions.append((e - collar_ms, e + collar_ms))
    if ignore_overlap:
        exclusions.extend(_overlap_regions(ref_by_spk))
    excluded = _merge_intervals(exclusions)

    bounds = set()
    for by_spk in (ref_by_spk, hyp_by_spk):
        for ivs in by_spk.values():
            for s, e in ivs:
                bounds.add(s)
                bounds.add(e)
    for s, e in excluded:
        bounds.add(s)
        bounds.add(e)
    bounds = sorted(bounds)

    ref_tl = _Timeline(ref_by_spk)
    hyp_tl = _Timeline(hyp_by_spk)
    ref_speakers = sorted(ref_by_spk)
    hyp_speakers = sorted(hyp_by_spk)
    ref_index = {spk: i for i, spk in enumerate(ref_speakers)}
    hyp_index = {spk: i for i, spk in enumerate(hyp_speakers)}

    def is_excluded(t: int) -> bool:
        for s, e in excluded:
            if s <= t < e:
                return True
            if s > t:
                return False
        return False

    regions = []
    overlap = np.zeros((max(len(ref_speakers), 1), max(len(hyp_speakers), 1)))
    for t0, t1 in zip(bounds, bounds[1:]):
        if t1 <= t0 or is_excluded(t0):
            continue
        ref_active = ref_tl.active_at(t0)
        hyp_active = hyp_tl.active_at(t0)
        if not ref_active and not hyp_active:
            continue
        dur = t1 - t0
        regions.append((dur, ref_active, hyp_active))
        for r in ref_active:
            for h in hyp_active:
                overlap[ref_index[r], hyp_index[h]] += dur

    mapping = {}
    if ref_speakers and hyp_speakers:
        rows, cols = linear_sum_assignment(-overlap[: len(ref_speakers), : len(hyp_speakers)])
        for i, j in zip(rows, cols):
            if overlap[i, j] > 0:
                mapping[ref_speakers[i]] = hyp_speakers[j]

    missed = false_alarm = confusion = denom = 0
    for dur, ref_active, hyp_active in regions:
        nr, nh = len(ref_active), len(hyp_active)
        denom += nr * dur
        missed += max(0, nr - nh) * dur
        false_alarm += max(0, nh - nr) * dur
        correct = sum(1 for r in ref_active if mapping.get(r) in hyp_active)
        confusion += (min(nr, nh) - correct) * dur
    return missed, false_alarm, confusion, denom


def score(
    ref,
    hyp,
    collar: float = DEFAULT_COLLAR,
    ignore_overlap: bool = False,
) -> DerReport:
    """Score hypothesis segments against reference segments.

    Multi-recording lists are scored per recording and pooled by summing
    error seconds (a scored-time-weighted combination). Raises when no
    reference time survives the exclusion mask.
    """
    if collar < 0:
        raise ValueError("collar must be non-negative")
    collar_ms = _ms(collar)
    rec_ids = sorted({seg.recording_id for seg in ref})
    if not rec_ids:
        raise ValueError("no scored time: empty reference")
    hyp_ids = {seg.recording_id for seg in hyp}
    unknown = hyp_ids - set(rec_ids)
    if unknown:
        raise ValueError(f"hypothesis names recordings absent from the reference: {sorted(unknown)}")
    missed = false_alarm = confusion = denom = 0
    for rec in rec_ids:
        m, f, c, d = _score_recording(
            [s for s in ref if s.recording_id == rec],
            [s for s in hyp if s.recording_id == rec],
            collar_ms,
            ignore_overlap,
        )
        missed += m
        false_alarm += f
        confusion += c
        denom += d
    if denom == 0:
        raise ValueError("no scored time: the collar/overlap mask excluded everything")
    return DerReport(
        missed_speech=missed / 1000.0,
        false_alarm=false_alarm / 1000.0,
        speaker_error=confusion / 1000.0,
        scored_time=denom / 1000.0,
    )


def format_report(report: DerReport) -> str:
    """Fixed-width table with the MS/FA/SER/DER decomposition."""
    rows = [
        ("missed speech", report.missed_speech, report.missed_speech_pct),
        ("false alarm", report.false_alarm, report.false_alarm_pct),
        ("speaker error", report.speaker_error, report.speaker_error_pct),
    ]
    lines = [f"{'component':<16}{'seconds':>12}{'% scored':>12}"]
    for name, seconds, pct in rows:
        lines.append(f"{name:<16}{seconds:>12.3f}{pct:>12.2f}")
    lines.append(f"{'DER':<16}{'':>12}{report.der:>12.2f}")
    lines.append(f"scored reference time: {report.scored_time:.3f} s")
    return "\n".join(lines)


def save_report(report: DerReport, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(report.as_dict(), fh, indent=2, sort_keys=True)
        fh.write("\n")
