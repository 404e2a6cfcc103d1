"""Direction-of-arrival estimation via PHAT-weighted steered-response power.

A far-field plane-wave model steers a circular azimuth grid: for each grid
direction the theoretical pairwise delays index into per-pair GCC-PHAT
correlation functions, and the summed response over all M(M-1)/2 pairs is
maximized over the grid. Azimuth 0 degrees points along the +x axis of the
geometry file and angles grow counterclockwise toward +y.
"""

from __future__ import annotations

import csv
import logging
from bisect import bisect_right
from dataclasses import dataclass

import numpy as np

from . import kernels
from .io import FramePlan, MicArrayGeometry, MultichannelClip, frame_clip, speech_spans

log = logging.getLogger(__name__)

DEFAULT_GRID_SIZE = 256
DEFAULT_PLAN = FramePlan(frame_length=0.5, frame_shift=0.5)

# cross-spectrum magnitude floor, relative to the peak magnitude
PHAT_FLOOR_RATIO = 1e-12
# frames whose peak power falls below this fraction of the pair count are
# flagged low-confidence (silence or diffuse input inside the VAD mask)
LOW_CONFIDENCE_RATIO = 0.1


def _analysis_window(length: int) -> np.ndarray:
    # Hann taper before the DFT: frame-edge discontinuities otherwise leak
    # across the whole spectrum and PHAT amplifies every leaked bin to unit
    # magnitude, letting edge transients outvote band-limited speech
    return np.hanning(length)


def next_pow2(n: int) -> int:
    return 1 << max(0, int(n - 1)).bit_length()


def correlation_fft_size(frame_samples: int) -> int:
    """FFT length for GCC: covers all 2L-1 linear lags without circular overlap."""
    return next_pow2(2 * frame_samples - 1)


# ---------------------------------------------------------------------------
# steering grid


@dataclass(frozen=True)
class SteeringGrid:
    """Azimuth grid with the per-direction, per-pair theoretical delays.

    Attributes:
        azimuths_deg: (D,) strictly increasing grid angles over [0, 360).
        delays: (D, P) delay in seconds of mic j relative to mic i for each
            pair (i, j), i < j, for a plane wave arriving from each azimuth.
        pairs: the (i, j) mic index pairs matching the delay columns.
        sample_rate: Hz, copied from the geometry.
    """

    azimuths_deg: np.ndarray
    delays: np.ndarray
    pairs: tuple
    sample_rate: float

    @property
    def n_directions(self) -> int:
        return self.azimuths_deg.shape[0]

    @property
    def n_mics(self) -> int:
        return max(max(i, j) for i, j in self.pairs) + 1


def build_grid(geometry: MicArrayGeometry, n_directions: int = DEFAULT_GRID_SIZE) -> SteeringGrid:
    """Build the steering grid for a geometry.

    For unit direction u(theta) = (cos theta, sin theta, 0), the delay of the
    signal at mic j relative to mic i is ((pos_i - pos_j) . u) / c.
    """
    if n_directions < 8:
        raise ValueError("n_directions must be at least 8")
    xy = geometry.mics[:, :2]
    spread = np.sqrt(((xy[:, None, :] - xy[None, :, :]) ** 2).sum(axis=2)).max()
    if spread < 1e-9:
        raise ValueError(
            "azimuth unobservable: all mics coincide in the horizontal plane"
        )
    azimuths = np.arange(n_directions, dtype=np.float64) * (360.0 / n_directions)
    rad = np.deg2rad(azimuths)
    u = np.stack([np.cos(rad), np.sin(rad), np.zeros_like(rad)], axis=1)
    pairs = geometry.pairs()
    baselines = np.stack([geometry.mics[i] - geometry.mics[j] for i, j in pairs])
    delays = (u @ baselines.T) / geometry.speed_of_sound
    return SteeringGrid(azimuths, delays, tuple(pairs), geometry.sample_rate)


def steering_lag_indices(grid: SteeringGrid, n_fft: int) -> np.ndarray:
    """Round steering delays to integer sample lags and map them onto the
    circular correlation index space."""
    lags = np.rint(grid.delays * grid.sample_rate).astype(np.int64)
    if np.abs(lags).max() >= n_fft // 2:
        raise ValueError("frame too short for the array aperture at this rate")
    return np.ascontiguousarray(np.mod(lags, n_fft))


# ---------------------------------------------------------------------------
# GCC-PHAT


def _phat_correlation(spec_x: np.ndarray, spec_y: np.ndarray, n_fft: int) -> np.ndarray:
    """Circular PHAT-weighted cross-correlation from two rfft spectra.

    The cross-spectrum conj(X)*Y puts the peak at positive lag when y lags x.
    Bins are normalized to unit magnitude with a relative floor; an all-zero
    cross-spectrum yields an all-zero correlation.
    """
    cross = np.conj(spec_x) * spec_y
    mag = np.abs(cross)
    peak = mag.max()
    if peak == 0.0:
        return np.zeros(n_fft, dtype=np.float64)
    np.maximum(mag, PHAT_FLOOR_RATIO * peak, out=mag)
    return np.fft.irfft(cross / mag, n_fft)


def gcc_phat(x, y) -> np.ndarray:
    """GCC-PHAT correlation of two equal-length frames at integer lags.

    Returns a (2L-1,) real array covering lags -(L-1)..(L-1); index i holds
    lag i-(L-1). Positive lag means y lags (arrives after) x. Amplitude is
    normalized: values stay within [-1, 1] up to rounding.
    """
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.ndim != 1 or x.shape != y.shape:
        raise ValueError("gcc_phat expects two equal-length 1-D frames")
    length = x.shape[0]
    if length < 2:
        raise ValueError("frames must hold at least 2 samples")
    n_fft = correlation_fft_size(length)
    window = _analysis_window(length)
    circ = _phat_correlation(
        np.fft.rfft(x * window, n_fft), np.fft.rfft(y * window, n_fft), n_fft
    )
    lags = np.arange(-(length - 1), length)
    return circ[np.mod(lags, n_fft)]


def gcc_phat_lags(frame_samples: int) -> np.ndarray:
    """Lag axis matching :func:`gcc_phat` output."""
    return np.arange(-(frame_samples - 1), frame_samples)


# ---------------------------------------------------------------------------
# SRP frames and tracks


@dataclass(frozen=True)
class SrpFrame:
    """Steered-response result for one analysis frame.

    powers is None when the frame was restored from a track CSV. On ties the
    argmax azimuth is the smallest tied grid angle.
    """

    frame_start: float
    powers: np.ndarray | None
    argmax_azimuth: float
    argmax_power: float
    confident: bool


@dataclass(frozen=True)
class DoaTrack:
    """Per-frame azimuth estimates, ordered by frame start."""

    frames: tuple
    plan: FramePlan | None
    grid: SteeringGrid | None

    def __len__(self) -> int:
        return len(self.frames)

    def azimuths(self) -> np.ndarray:
        return np.array([f.argmax_azimuth for f in self.frames])


def _pair_correlations(frame: np.ndarray, pairs, n_fft: int) -> np.ndarray:
    window = _analysis_window(frame.shape[1])
    spectra = [
        np.fft.rfft(np.asarray(frame[ch], dtype=np.float64) * window, n_fft)
        for ch in range(frame.shape[0])
    ]
    cc = np.empty((len(pairs), n_fft), dtype=np.float64)
    for p, (i, j) in enumerate(pairs):
        cc[p] = _phat_correlation(spectra[i], spectra[j], n_fft)
    return cc


def srp_phat_frame(
    frame: np.ndarray,
    grid: SteeringGrid,
    frame_start: float = 0.0,
    lag_indices: np.ndarray | None = None,
) -> SrpFrame:
    """Steered-response power of one multichannel frame over the whole grid.

    For every grid direction, sums the per-pair GCC-PHAT values sampled at
    the rounded steering lags. Deterministic; ties resolve to the smallest
    azimuth.
    """
    frame = np.asarray(frame)
    if frame.ndim != 2:
        raise ValueError("frame must be (channels, samples)")
    if frame.shape[0] != grid.n_mics:
        raise ValueError(
            f"frame has {frame.shape[0]} channels but grid expects {grid.n_mics}"
        )
    n_fft = correlation_fft_size(frame.shape[1])
    if lag_indices is None:
        lag_indices = steering_lag_indices(grid, n_fft)
    cc = _pair_correlations(frame, grid.pairs, n_fft)
    powers = kernels.srp_accumulate(cc, lag_indices)
    best = int(np.argmax(powers))
    best_power = float(powers[best])
    confident = best_power >= LOW_CONFIDENCE_RATIO * len(grid.pairs)
    return SrpFrame(
        frame_start=float(frame_start),
        powers=powers,
        argmax_azimuth=float(grid.azimuths_deg[best]),
        argmax_power=best_power,
        confident=confident,
    )


def localize(
    clip: MultichannelClip,
    plan: FramePlan | None,
    grid: SteeringGrid,
    vad,
) -> DoaTrack:
    """Run SRP-PHAT on every frame whose center lies inside VAD speech.

    vad is a segment list; any labeled speech counts. An empty VAD produces
    an empty track with a warning.
    """
    if plan is None:
        plan = DEFAULT_PLAN
    if clip.channel_count != grid.n_mics:
        raise ValueError(
            f"clip has {clip.channel_count} channels but grid expects {grid.n_mics}"
        )
    spans = speech_spans(vad)
    if not spans:
        log.warning("empty VAD: no frames localized")
        return DoaTrack((), plan, grid)
    batch = frame_clip(clip, plan)
    if len(batch) == 0:
        return DoaTrack((), plan, grid)
    n_fft = correlation_fft_size(batch.frames.shape[2])
    lag_indices = steering_lag_indices(grid, n_fft)
    span_starts = [s for s, _ in spans]
    frames = []
    for k in range(len(batch)):
        center = batch.starts[k] + plan.frame_length / 2.0
        pos = bisect_right(span_starts, center) - 1
        if pos < 0 or center > spans[pos][1]:
            continue
        frames.append(
            srp_phat_frame(batch.frames[k], grid, batch.starts[k], lag_indices)
        )
    return DoaTrack(tuple(frames), plan, grid)


# ---------------------------------------------------------------------------
# track CSV

_TRACK_FIELDS = ["frame_start", "azimuth_deg", "power", "confident"]


def write_track_csv(track: DoaTrack, path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(_TRACK_FIELDS)
        for f in track.frames:
            writer.writerow(
                [
                    f"{f.frame_start:.3f}",
                    f"{f.argmax_azimuth:.6f}",
                    f"{f.argmax_power:.9g}",
                    int(f.confident),
                ]
            )


def read_track_csv(path) -> DoaTrack:
    """Restore a track written by :func:`write_track_csv` (powers are dropped)."""
    frames = []
    with open(path, "r", newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != _TRACK_FIELDS:
            raise ValueError(f"{path}: not a DOA track CSV")
        for row in reader:
            if not row:
                continue
            frames.append(
                SrpFrame(
                    frame_start=float(row[0]),
                    powers=None,
                    argmax_azimuth=float(row[1]),
                    argmax_power=float(row[2]),
                    confident=bool(int(row[3])),
                )
            )
    return DoaTrack(tuple(frames), None, None)
