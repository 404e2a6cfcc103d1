"""File formats and framing for multichannel meeting recordings.

Covers WAV ingestion, fixed-shift frame slicing, RTTM segment lists, the
speaker-embedding table format and key/value config files (array geometry,
scene specs, pipeline runs). Times are seconds everywhere; serialized time
values are quantized to milliseconds.
"""

from __future__ import annotations

import ast
import logging
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.io import wavfile

log = logging.getLogger(__name__)

DEFAULT_SPEED_OF_SOUND = 343.0

_PCM16_SCALE = 32768.0
_PCM32_SCALE = 2147483648.0


# ---------------------------------------------------------------------------
# domain types


@dataclass(frozen=True)
class MicArrayGeometry:
    """Microphone positions plus the constants that turn geometry into delays.

    Attributes:
        mics: (M, 3) positions in meters.
        sample_rate: sampling rate in Hz of the audio this array records.
        speed_of_sound: propagation speed in m/s.
    """

    mics: np.ndarray
    sample_rate: float
    speed_of_sound: float = DEFAULT_SPEED_OF_SOUND

    def __post_init__(self):
        mics = np.asarray(self.mics, dtype=np.float64)
        if mics.ndim != 2 or mics.shape[1] != 3:
            raise ValueError("mic positions must form an (M, 3) array of x,y,z meters")
        if mics.shape[0] < 2:
            raise ValueError("need at least 2 microphones")
        if not np.all(np.isfinite(mics)):
            raise ValueError("mic positions must be finite")
        for i in range(mics.shape[0]):
            for j in range(i + 1, mics.shape[0]):
                if np.array_equal(mics[i], mics[j]):
                    raise ValueError(f"mics {i} and {j} share the same position")
        if not self.sample_rate > 0:
            raise ValueError("sample_rate must be positive")
        if not self.speed_of_sound > 0:
            raise ValueError("speed_of_sound must be positive")
        object.__setattr__(self, "mics", mics)
        object.__setattr__(self, "sample_rate", float(self.sample_rate))
        object.__setattr__(self, "speed_of_sound", float(self.speed_of_sound))

    @property
    def n_mics(self) -> int:
        return self.mics.shape[0]

    @property
    def n_pairs(self) -> int:
        m = self.n_mics
        return m * (m - 1) // 2

    def pairs(self) -> list[tuple[int, int]]:
        """All ordered mic pairs (i, j) with i < j; exactly M(M-1)/2 of them."""
        m = self.n_mics
        return [(i, j) for i in range(m) for j in range(i + 1, m)]

    @property
    def aperture(self) -> float:
        """Largest inter-mic distance in meters."""
        diffs = self.mics[:, None, :] - self.mics[None, :, :]
        return float(np.sqrt((diffs**2).sum(axis=2)).max())


@dataclass(frozen=True)
class MultichannelClip:
    """Audio as a (channels, samples) float32 array with amplitudes in [-1, 1]."""

    samples: np.ndarray
    sample_rate: float

    def __post_init__(self):
        samples = np.asarray(self.samples, dtype=np.float32)
        if samples.ndim != 2:
            raise ValueError("samples must be a (channels, n_samples) array")
        if not self.sample_rate > 0:
            raise ValueError("sample_rate must be positive")
        object.__setattr__(self, "samples", samples)
        object.__setattr__(self, "sample_rate", float(self.sample_rate))

    @property
    def channel_count(self) -> int:
        return self.samples.shape[0]

    @property
    def n_samples(self) -> int:
        return self.samples.shape[1]

    @property
    def duration(self) -> float:
        return self.n_samples / self.sample_rate


@dataclass(frozen=True)
class FramePlan:
    """Analysis framing: window length and hop, both in seconds."""

    frame_length: float
    frame_shift: float

    def __post_init__(self):
        if not self.frame_length > 0:
            raise ValueError("frame_length must be positive")
        if not self.frame_shift > 0:
            raise ValueError("frame_shift must be positive")
        if self.frame_shift > self.frame_length:
            raise ValueError("frame_shift must not exceed frame_length")

    def length_samples(self, sample_rate: float) -> int:
        return int(round(self.frame_length * sample_rate))

    def shift_samples(self, sample_rate: float) -> int:
        return int(round(self.frame_shift * sample_rate))


@dataclass(frozen=True)
class FrameBatch:
    """Sliced frames: (n_frames, channels, frame_samples) plus start times."""

    frames: np.ndarray
    starts: np.ndarray
    plan: FramePlan

    def __len__(self) -> int:
        return self.frames.shape[0]


@dataclass(frozen=True, order=True)
class Segment:
    """One RTTM entry: a speaker-labeled stretch of one recording."""

    recording_id: str
    start: float
    duration: float
    speaker: str

    @property
    def end(self) -> float:
        return self.start + self.duration


# a SegmentList in file terms is simply a list of Segment entries
SegmentList = list


@dataclass(frozen=True)
class EmbeddingSet:
    """Per-segment fixed-dimension speaker vectors with time bounds."""

    starts: np.ndarray
    ends: np.ndarray
    vectors: np.ndarray

    def __post_init__(self):
        starts = np.asarray(self.starts, dtype=np.float64)
        ends = np.asarray(self.ends, dtype=np.float64)
        vectors = np.asarray(self.vectors, dtype=np.float64)
        if vectors.ndim != 2:
            raise ValueError("vectors must form an (n, D) matrix")
        if not (starts.shape == ends.shape == (vectors.shape[0],)):
            raise ValueError("starts, ends and vectors must agree on segment count")
        if not np.all(np.isfinite(vectors)):
            raise ValueError("embedding vectors must be finite")
        if not np.all(np.isfinite(starts)) or not np.all(np.isfinite(ends)):
            raise ValueError("segment times must be finite")
        bad = np.nonzero(ends <= starts)[0]
        if bad.size:
            raise ValueError(f"segment {bad[0]}: end must exceed start")
        object.__setattr__(self, "starts", starts)
        object.__setattr__(self, "ends", ends)
        object.__setattr__(self, "vectors", vectors)

    @property
    def dim(self) -> int:
        return self.vectors.shape[1]

    def __len__(self) -> int:
        return self.vectors.shape[0]


# ---------------------------------------------------------------------------
# WAV


def load_wav(path) -> MultichannelClip:
    """Read a RIFF/WAVE file into a clip with amplitudes normalized to [-1, 1].

    Supports integer PCM (16/32-bit, plus 8-bit unsigned) and IEEE float
    (32/64-bit). Channel-interleaved data comes back channel-major.
    """
    try:
        rate, data = wavfile.read(str(path))
    except Exception as exc:
        raise ValueError(f"cannot read WAV file {path}: {exc}") from None
    if data.size == 0:
        raise ValueError(f"zero-length audio in {path}")
    if data.ndim == 1:
        data = data[:, None]
    x = data.T
    if x.dtype == np.int16:
        samples = x.astype(np.float32) / _PCM16_SCALE
    elif x.dtype == np.int32:
        samples = x.astype(np.float32) / _PCM32_SCALE
    elif x.dtype == np.uint8:
        samples = (x.astype(np.float32) - 128.0) / 128.0
    elif x.dtype == np.float32:
        samples = x
    elif x.dtype == np.float64:
        samples = x.astype(np.float32)
    else:
        raise ValueError(f"unsupported WAV sample format {x.dtype} in {path}")
    return MultichannelClip(np.ascontiguousarray(samples), float(rate))


def write_wav(clip: MultichannelClip, path, sample_format: str = "float32") -> None:
    """Write a clip as interleaved RIFF PCM, either 32-bit float or 16-bit int."""
    if sample_format == "float32":
        data = clip.samples.T.astype(np.float32)
    elif sample_format == "int16":
        scaled = np.clip(np.rint(clip.samples.T * _PCM16_SCALE), -32768, 32767)
        data = scaled.astype(np.int16)
    else:
        raise ValueError(f"unsupported sample_format {sample_format!r}")
    wavfile.write(str(path), int(round(clip.sample_rate)), np.ascontiguousarray(data))


# ---------------------------------------------------------------------------
# framing


def frame_clip(clip: MultichannelClip, plan: FramePlan) -> FrameBatch:
    """Slice a clip into fixed-length frames at fixed shifts.

    Frame k starts at sample k*round(shift*rate) and at time k*frame_shift;
    a trailing partial frame is dropped. A clip shorter than one frame yields
    an empty batch.
    """
    length = plan.length_samples(clip.sample_rate)
    hop = plan.shift_samples(clip.sample_rate)
    if length < 1 or hop < 1:
        raise ValueError("frame plan is shorter than one sample at this rate")
    n = clip.n_samples
    count = 0 if n < length else (n - length) // hop + 1
    frames = np.empty((count, clip.channel_count, length), dtype=np.float32)
    for k in range(count):
        frames[k] = clip.samples[:, k * hop : k * hop + length]
    starts = np.arange(count, dtype=np.float64) * plan.frame_shift
    return FrameBatch(frames, starts, plan)


# ---------------------------------------------------------------------------
# RTTM


def normalize_segments(entries) -> list[Segment]:
    """Sort entries by (recording, start) and quantize times to milliseconds."""
    rounded = [
        Segment(e.recording_id, round(e.start, 3), round(e.duration, 3), e.speaker)
        for e in entries
    ]
    return sorted(rounded, key=lambda s: (s.recording_id, s.start, s.speaker))


def read_rttm(path) -> list[Segment]:
    """Parse an RTTM file into a sorted segment list.

    Only SPEAKER lines are read; other line types are skipped with a warning.
    Malformed SPEAKER lines raise with the offending line number.
    """
    entries = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, 1):
            line = raw.strip()
            if not line:
                continue
            fields = line.split()
            if fields[0] != "SPEAKER":
                log.warning("%s:%d: skipping line type %r", path, lineno, fields[0])
                continue
            if len(fields) != 10:
                raise ValueError(
                    f"{path}:{lineno}: expected 10 fields, got {len(fields)}"
                )
            try:
                start = float(fields[3])
                duration = float(fields[4])
            except ValueError:
                raise ValueError(f"{path}:{lineno}: non-numeric start/duration") from None
            if start < 0:
                raise ValueError(f"{path}:{lineno}: negative start time")
            if duration <= 0:
                raise ValueError(f"{path}:{lineno}: non-positive duration")
            entries.append(Segment(fields[1], start, duration, fields[7]))
    return normalize_segments(entries)


def write_rttm(entries, path) -> None:
    """Write segments as 10-field RTTM SPEAKER lines, times at 3 decimals."""
    with open(path, "w", encoding="utf-8") as fh:
        for seg in normalize_segments(entries):
            if seg.duration <= 0:
                raise ValueError(f"segment {seg} has non-positive duration")
            fh.write(
                f"SPEAKER {seg.recording_id} 1 {seg.start:.3f} {seg.duration:.3f} "
                f"<NA> <NA> {seg.speaker} <NA> <NA>\n"
            )


def speech_spans(entries) -> list[tuple[float, float]]:
    """Merged (start, end) spans covered by any segment, e.g. a VAD mask."""
    spans = sorted((e.start, e.end) for e in entries)
    merged: list[list[float]] = []
    for s, e in spans:
        if merged and s <= merged[-1][1]:
            merged[-1][1] = max(merged[-1][1], e)
        else:
            merged.append([s, e])
    return [(s, e) for s, e in merged]


# ---------------------------------------------------------------------------
# embeddings


def read_embeddings(path) -> EmbeddingSet:
    """Read the embedding table: a `dim=<D>` header then `<start> <end> <v1..vD>` rows."""
    with open(path, "r", encoding="utf-8") as fh:
        header = fh.readline().strip()
        if not header.startswith("dim="):
            raise ValueError(f"{path}:1: expected 'dim=<D>' header, got {header!r}")
        try:
            dim = int(header[4:])
        except ValueError:
            raise ValueError(f"{path}:1: bad dimension in header {header!r}") from None
        if dim < 1:
            raise ValueError(f"{path}:1: dimension must be positive")
        starts, ends, rows = [], [], []
        for lineno, raw in enumerate(fh, 2):
            line = raw.strip()
            if not line:
                continue
            fields = line.split()
            if len(fields) != dim + 2:
                raise ValueError(
                    f"{path}:{lineno}: expected {dim + 2} columns, got {len(fields)}"
                )
            try:
                values = [float(v) for v in fields]
            except ValueError:
                raise ValueError(f"{path}:{lineno}: non-numeric value") from None
            if values[1] <= values[0]:
                raise ValueError(f"{path}:{lineno}: end must exceed start")
            vec = values[2:]
            if not all(np.isfinite(vec)):
                raise ValueError(f"{path}:{lineno}: non-finite embedding component")
            starts.append(values[0])
            ends.append(values[1])
            rows.append(vec)
    if not rows:
        raise ValueError(f"{path}: no embedding rows")
    return EmbeddingSet(np.array(starts), np.array(ends), np.array(rows))


def write_embeddings(es: EmbeddingSet, path) -> None:
    """Write the embedding table; times at 3 decimals, components at full precision."""
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"dim={es.dim}\n")
        for i in range(len(es)):
            comps = " ".join(repr(float(v)) for v in es.vectors[i])
            fh.write(f"{es.starts[i]:.3f} {es.ends[i]:.3f} {comps}\n")


# ---------------------------------------------------------------------------
# key/value config files


def _brackets_balanced(text: str) -> bool:
    depth = 0
    quote = None
    for ch in text:
        if quote is not None:
            if ch == quote:
                quote = None
        elif ch in "\"'":
            quote = ch
        elif ch in "([{":
            depth += 1
        elif ch in ")]}":
            depth -= 1
    return depth <= 0 and quote is None


def read_config(path) -> dict:
    """Parse `key = value` lines where values are Python literals.

    Bracketed values (lists, dicts) may span multiple lines. Lines starting
    with `#` and blank lines are ignored.
    """
    entries: dict = {}
    key = None
    buf = ""
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, 1):
            line = raw.rstrip("\n")
            if key is None:
                if not line.strip() or line.lstrip().startswith("#"):
                    continue
                if "=" not in line:
                    raise ValueError(f"{path}:{lineno}: expected 'key = value'")
                key, _, buf = line.partition("=")
                key = key.strip()
                buf = buf.strip()
            else:
                buf += " " + line.strip()
            if _brackets_balanced(buf):
                try:
                    entries[key] = ast.literal_eval(buf)
                except (ValueError, SyntaxError) as exc:
                    raise ValueError(
                        f"{path}:{lineno}: bad literal for {key!r}: {exc}"
                    ) from None
                key = None
                buf = ""
    if key is not None:
        raise ValueError(f"{path}: unterminated value for {key!r}")
    return entries


def load_geometry(path) -> MicArrayGeometry:
    """Load a geometry config with `mics`, `sample_rate` and optional `speed_of_sound`."""
    cfg = read_config(path)
    for required in ("mics", "sample_rate"):
        if required not in cfg:
            raise ValueError(f"{path}: geometry config missing {required!r}")
    return MicArrayGeometry(
        mics=np.asarray(cfg["mics"], dtype=np.float64),
        sample_rate=float(cfg["sample_rate"]),
        speed_of_sound=float(cfg.get("speed_of_sound", DEFAULT_SPEED_OF_SOUND)),
    )


def save_geometry(geometry: MicArrayGeometry, path) -> None:
    """Write a geometry config readable by :func:`load_geometry`."""
    rows = ", ".join(
        "[" + ", ".join(repr(float(v)) for v in mic) + "]" for mic in geometry.mics
    )
    text = (
        f"sample_rate = {geometry.sample_rate!r}\n"
        f"speed_of_sound = {geometry.speed_of_sound!r}\n"
        f"mics = [{rows}]\n"
    )
    Path(path).write_text(text, encoding="utf-8")
