"""Speaker counting from the angular spread of frame-level DOA estimates.

Frame azimuths fall into 36 ten-degree bins; circular local maxima of the
histogram are candidate speakers. The two largest peaks are always accepted,
and the 3rd/4th only when they exceed a quarter of the 2nd peak's count, so
a dominant talker cannot spawn phantom speakers. At most 4 speakers.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .doa import DoaTrack

N_BINS = 36
BIN_WIDTH = 360.0 / N_BINS
MAX_SPEAKERS = 4
# a 3rd/4th peak must strictly exceed this fraction of the 2nd peak's count
SECONDARY_PEAK_RATIO = 0.25


@dataclass(frozen=True)
class AngularHistogram:
    """36-bin circular count of frame DOAs; bin k covers [10k, 10k+10) degrees."""

    bins: np.ndarray

    def __post_init__(self):
        bins = np.asarray(self.bins, dtype=np.int64)
        if bins.shape != (N_BINS,):
            raise ValueError(f"histogram needs exactly {N_BINS} bins")
        if np.any(bins < 0):
            raise ValueError("bin counts must be non-negative")
        object.__setattr__(self, "bins", bins)

    @property
    def total(self) -> int:
        return int(self.bins.sum())


@dataclass(frozen=True)
class SpeakerCensus:
    """Accepted speaker count with the peak azimuths that produced it.

    peak_azimuths are bin centers sorted by descending bin count; peak_counts
    matches that order.
    """

    count: int
    peak_azimuths: tuple
    peak_counts: tuple

    def __post_init__(self):
        if not 1 <= self.count <= MAX_SPEAKERS:
            raise ValueError(f"count must be in [1, {MAX_SPEAKERS}]")
        if len(self.peak_azimuths) != self.count or len(self.peak_counts) != self.count:
            raise ValueError("peak lists must match the accepted count")
        if any(a < b for a, b in zip(self.peak_counts, self.peak_counts[1:])):
            raise ValueError("peak_counts must be non-increasing")


def build_histogram(track: DoaTrack, include_low_confidence: bool = False) -> AngularHistogram:
    """Count each localized frame into the bin containing its argmax azimuth.

    Low-confidence frames are skipped unless the flag is set. Raises when
    nothing is counted.
    """
    bins = np.zeros(N_BINS, dtype=np.int64)
    for frame in track.frames:
        if not frame.confident and not include_low_confidence:
            continue
        bins[int(frame.argmax_azimuth // BIN_WIDTH) % N_BINS] += 1
    if bins.sum() == 0:
        raise ValueError("no localized frames")
    return AngularHistogram(bins)


def find_local_maxima(hist: AngularHistogram) -> list[tuple[float, int]]:
    """Circular local maxima of the histogram as (bin_center_deg, count).

    A bin (or plateau of equal bins) is a peak when the nearest differing
    neighbor on each side, scanning circularly, is strictly lower. A plateau
    collapses to one peak at its clockwise entry bin (the plateau bin whose
    predecessor lies outside it), which keeps peak positions equivariant
    under histogram rotation. Zero bins are never peaks; a constant histogram
    has none. Results come back in bin order.
    """
    bins = hist.bins
    qualifies = np.zeros(N_BINS, dtype=bool)
    for k in range(N_BINS):
        if bins[k] == 0:
            continue
        ok = True
        for step in (-1, 1):
            j = (k + step) % N_BINS
            walked = 1
            while bins[j] == bins[k] and walked < N_BINS:
                j = (j + step) % N_BINS
                walked += 1
            if walked >= N_BINS or bins[j] >= bins[k]:
                ok = False
                break
        qualifies[k] = ok
    peaks = []
    seen = np.zeros(N_BINS, dtype=bool)
    for k in range(N_BINS):
        if not qualifies[k] or seen[k]:
            continue
        plateau = [k]
        seen[k] = True
        for step in (-1, 1):
            j = (k + step) % N_BINS
            while qualifies[j] and not seen[j] and bins[j] == bins[k]:
                plateau.append(j)
                seen[j] = True
                j = (j + step) % N_BINS
        plateau_set = set(plateau)
        rep = next(b for b in plateau if (b - 1) % N_BINS not in plateau_set)
        peaks.append((rep * BIN_WIDTH + BIN_WIDTH / 2.0, int(bins[rep])))
    peaks.sort()
    return peaks


def count_speakers(hist: AngularHistogram) -> SpeakerCensus:
    """Apply the quarter-of-second-peak rule to the histogram's local maxima.

    Peaks rank by descending count (ties by azimuth). The top two are always
    accepted; the 3rd and 4th only when their count strictly exceeds a quarter
    of the 2nd peak's count; later peaks never.
    """
    peaks = find_local_maxima(hist)
    if not peaks:
        raise ValueError("histogram has no local maxima")
    ranked = sorted(peaks, key=lambda pc: (-pc[1], pc[0]))
    accepted = ranked[: min(2, len(ranked))]
    if len(ranked) >= 2:
        threshold = ranked[1][1] * SECONDARY_PEAK_RATIO
        for candidate in ranked[2:MAX_SPEAKERS]:
            if candidate[1] > threshold:
                accepted.append(candidate)
    return SpeakerCensus(
        count=len(accepted),
        peak_azimuths=tuple(azimuth for azimuth, _ in accepted),
        peak_counts=tuple(count for _, count in accepted),
    )


def save_census(census: SpeakerCensus, hist: AngularHistogram, path) -> None:
    """Write census JSON: count, peaks and the full histogram for plotting."""
    payload = {
        "count": census.count,
        "peak_azimuths": list(census.peak_azimuths),
        "peak_counts": list(census.peak_counts),
        "histogram": [int(c) for c in hist.bins],
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")


def load_census(path) -> SpeakerCensus:
    with open(path, "r", encoding="utf-8") as fh:
        payload = json.load(fh)
    return SpeakerCensus(
        count=int(payload["count"]),
        peak_azimuths=tuple(float(a) for a in payload["peak_azimuths"]),
        peak_counts=tuple(int(c) for c in payload["peak_counts"]),
    )


def save_histogram_csv(hist: AngularHistogram, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("bin_center_deg,count\n")
        for k in range(N_BINS):
            fh.write(f"{k * BIN_WIDTH + BIN_WIDTH / 2.0:.1f},{int(hist.bins[k])}\n")
