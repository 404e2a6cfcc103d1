"""Angular sectors around census peaks and the spatial diarization output.

Adjacent accepted peaks are separated at their circular midpoint; every frame
then takes the label of the sector containing its azimuth, and runs of
identical labels merge into RTTM segments.
"""

from __future__ import annotations

from dataclasses import dataclass

from .census import SpeakerCensus
from .doa import DoaTrack, SrpFrame
from .io import FramePlan, Segment

_TIME_EPS = 1e-6


@dataclass(frozen=True)
class Sector:
    """Half-open arc [lower, lower+width) on the circle, owning one peak."""

    label: str
    lower: float
    width: float
    peak_azimuth: float

    @property
    def upper(self) -> float:
        return (self.lower + self.width) % 360.0

    def contains(self, azimuth: float) -> bool:
        if self.width >= 360.0:
            return True
        return (azimuth - self.lower) % 360.0 < self.width


@dataclass(frozen=True)
class SectorMap:
    """Sectors partitioning [0, 360): disjoint, total, one per speaker.

    Assignment bisects one shared sorted list of the sectors' lower
    boundaries, so every azimuth lands in exactly one sector even when
    independently computed boundary floats differ in the last ulp.
    """

    sectors: tuple

    def __post_init__(self):
        lowers = sorted((s.lower, s.label) for s in self.sectors)
        object.__setattr__(self, "_bounds", [b for b, _ in lowers])
        object.__setattr__(self, "_labels", [lab for _, lab in lowers])
        total = sum(s.width for s in self.sectors)
        if abs(total - 360.0) > 1e-6:
            raise ValueError(f"sectors must cover the full circle, got {total} degrees")
        for s in self.sectors:
            if self.label_for(s.peak_azimuth) != s.label:
                raise ValueError(f"sector {s.label} does not contain its own peak")

    def label_for(self, azimuth: float) -> str:
        from bisect import bisect_right

        azimuth = azimuth % 360.0
        idx = bisect_right(self._bounds, azimuth) - 1
        return self._labels[idx]  # idx -1 wraps to the sector crossing 0


def build_sectors(census: SpeakerCensus) -> SectorMap:
    """Bisect the circle between adjacent accepted peaks.

    Peaks sort ascending on the circle; the boundary between neighbors a -> b
    (clockwise) is the circular midpoint a + ((b - a) mod 360)/2. One speaker
    owns the whole circle. Labels are spk0..spkK-1 in azimuth order.
    """
    peaks = sorted(a % 360.0 for a in census.peak_azimuths)
    if len(set(peaks)) != len(peaks):
        raise ValueError("duplicate peak azimuths cannot be bisected")
    k = len(peaks)
    if k == 1:
        return SectorMap((Sector("spk0", 0.0, 360.0, peaks[0]),))
    boundaries = []
    for i in range(k):
        a = peaks[i]
        b = peaks[(i + 1) % k]
        boundaries.append((a + ((b - a) % 360.0) / 2.0) % 360.0)
    sectors = []
    for i in range(k):
        lower = boundaries[i - 1]
        width = (boundaries[i] - lower) % 360.0
        sectors.append(Sector(f"spk{i}", lower, width, peaks[i]))
    return SectorMap(tuple(sectors))


def assign_frames(
    track: DoaTrack,
    sector_map: SectorMap,
    carry_low_confidence: bool = True,
) -> list[tuple[float, str]]:
    """Label each frame by the sector containing its azimuth.

    Low-confidence frames inherit the previous confident frame's label when
    carry_low_confidence is set (dropped if none precedes them); otherwise
    they are dropped outright.
    """
    labeled = []
    previous = None
    for frame in track.frames:
        if frame.confident:
            previous = sector_map.label_for(frame.argmax_azimuth)
            labeled.append((frame.frame_start, previous))
        elif carry_low_confidence and previous is not None:
            labeled.append((frame.frame_start, previous))
    return labeled


def frames_to_rttm(
    labels: list[tuple[float, str]],
    plan: FramePlan,
    recording_id: str,
) -> list[Segment]:
    """Merge maximal runs of identical consecutive labels into segments.

    A run covers [first_start, last_start + frame_length]. Runs break on a
    label change or a time gap larger than the frame shift (VAD exclusions).
    """
    segments = []
    run_start = None
    run_label = None
    last_start = None
    for start, label in labels:
        breaks = (
            run_label is None
            or label != run_label
            or start - last_start > plan.frame_shift + _TIME_EPS
        )
        if breaks:
            if run_label is not None:
                segments.append(
                    Segment(recording_id, run_start, last_start + plan.frame_length - run_start, run_label)
                )
            run_start = start
            run_label = label
        last_start = start
    if run_label is not None:
        segments.append(
            Segment(recording_id, run_start, last_start + plan.frame_length - run_start, run_label)
        )
    return segments


def _circular_distance(a: float, b: float) -> float:
    d = (a - b) % 360.0
    return min(d, 360.0 - d)


def _circular_median(angles: list[float]) -> float:
    best = None
    best_cost = None
    for candidate in sorted(angles):
        cost = sum(_circular_distance(candidate, other) for other in angles)
        if best_cost is None or cost < best_cost:
            best, best_cost = candidate, cost
    return best


def smooth_track(track: DoaTrack, window: int) -> DoaTrack:
    """Replace each frame azimuth with the circular median over a sliding window.

    Window must be odd; it truncates at the track edges. Off by default in the
    pipeline since the localization output is used raw.
    """
    if window < 1 or window % 2 == 0:
        raise ValueError("smoothing window must be a positive odd integer")
    if window == 1 or len(track) == 0:
        return track
    azimuths = [f.argmax_azimuth for f in track.frames]
    half = window // 2
    smoothed = []
    for idx, frame in enumerate(track.frames):
        lo = max(0, idx - half)
        hi = min(len(azimuths), idx + half + 1)
        smoothed.append(
            SrpFrame(
                frame_start=frame.frame_start,
                powers=frame.powers,
                argmax_azimuth=_circular_median(azimuths[lo:hi]),
                argmax_power=frame.argmax_power,
                confident=frame.confident,
            )
        )
    return DoaTrack(tuple(smoothed), track.plan, track.grid)
