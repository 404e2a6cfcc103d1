"""Synthetic multichannel scenes with known geometry and turn-taking.

Sources render as far-field plane waves: each mic receives the source signal
through a 32-tap windowed-sinc fractional delay matching the exact geometry
delay, simultaneously active sources sum, and white noise is added at the
requested SNR relative to the unit-power sources. The returned reference and
VAD segment lists are the ground truth for localization, counting and
diarization tests.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.signal import fftconvolve, firwin

from .io import MicArrayGeometry, MultichannelClip, Segment, read_config

SINC_TAPS = 32
SPEECH_BAND_HZ = (300.0, 3400.0)
SIGNAL_KINDS = ("speech-noise", "tone-complex", "file")
# deep-stopband linear-phase band-pass: out-of-band residue must stay below
# the PHAT normalization floor or it votes in the correlation with junk phase
_BAND_KAISER_BETA = 24.0
_BAND_TRANSITION_HZ = 100.0


@dataclass(frozen=True)
class SourceSpec:
    """One source: where it sits, when it talks, and what it emits.

    `signal` is one of SIGNAL_KINDS; the "file" kind plays the first channel
    of `file` (a WAV at the scene's sample rate), tiled to the scene length.
    """

    azimuth: float
    schedule: tuple
    signal: str = "speech-noise"
    file: str | None = None

    def __post_init__(self):
        if not 0.0 <= self.azimuth < 360.0:
            raise ValueError("azimuth must lie in [0, 360)")
        if self.signal not in SIGNAL_KINDS:
            raise ValueError(f"signal must be one of {SIGNAL_KINDS}")
        if (self.signal == "file") != (self.file is not None):
            raise ValueError("a source file is set if and only if signal == 'file'")
        schedule = tuple((float(s), float(e)) for s, e in self.schedule)
        for s, e in schedule:
            if s < 0 or e <= s:
                raise ValueError(f"bad schedule entry ({s}, {e})")
        object.__setattr__(self, "schedule", schedule)


@dataclass(frozen=True)
class SceneSpec:
    """Full scene: geometry, sources, noise level, duration and RNG seed."""

    geometry: MicArrayGeometry
    sources: tuple
    duration: float
    snr_db: float = np.inf
    seed: int = 0
    recording_id: str = "synth"

    def __post_init__(self):
        if not self.duration > 0:
            raise ValueError("duration must be positive")
        sources = tuple(self.sources)
        for src in sources:
            for s, e in src.schedule:
                if e > self.duration + 1e-9:
                    raise ValueError("schedule extends past the scene duration")
        object.__setattr__(self, "sources", sources)


def fractional_delay(x: np.ndarray, delay_samples: float, taps: int = SINC_TAPS) -> np.ndarray:
    """Delay a signal by a possibly fractional number of samples.

    Windowed-sinc interpolation (Hamming window); positive delays shift the
    signal later, negative earlier. Output length matches the input; shifted-in
    samples are zero.
    """
    x = np.asarray(x, dtype=np.float64)
    whole = int(np.floor(delay_samples))
    frac = delay_samples - whole
    half = taps // 2
    k = np.arange(taps) - (half - 1)
    kernel = np.sinc(k - frac) * np.hamming(taps)
    full = np.convolve(x, kernel)
    # full[m] = sum_j kernel[j] x[m-j]; sample n of the delayed signal sits at
    # m = n - whole + (half-1)
    out = np.zeros_like(x)
    n = x.shape[0]
    src_lo = -whole + (half - 1)
    lo = max(0, -src_lo)
    hi = min(n, full.shape[0] - src_lo)
    if hi > lo:
        out[lo:hi] = full[lo + src_lo : hi + src_lo]
    return out


def _schedule_mask(schedule, n_samples: int, fs: float) -> np.ndarray:
    mask = np.zeros(n_samples, dtype=bool)
    for s, e in schedule:
        lo = min(n_samples, int(round(s * fs)))
        hi = min(n_samples, int(round(e * fs)))
        mask[lo:hi] = True
    return mask


def _speech_band_filter(fs: float) -> np.ndarray:
    numtaps = int(round(8.0 * fs / _BAND_TRANSITION_HZ)) | 1
    return firwin(
        numtaps,
        SPEECH_BAND_HZ,
        pass_zero=False,
        fs=fs,
        window=("kaiser", _BAND_KAISER_BETA),
    )


def _source_signal(src: SourceSpec, n_samples: int, fs: float, rng: np.random.Generator) -> np.ndarray:
    if src.signal == "speech-noise":
        white = rng.standard_normal(n_samples)
        return fftconvolve(white, _speech_band_filter(fs), mode="same")
    if src.signal == "tone-complex":
        f0 = 180.0 + rng.uniform(0.0, 120.0)
        t = np.arange(n_samples) / fs
        sig = np.zeros(n_samples)
        for harmonic in range(1, 9):
            phase = rng.uniform(0.0, 2 * np.pi)
            sig += np.sin(2 * np.pi * f0 * harmonic * t + phase) / harmonic
        return sig
    if src.signal == "file":
        from .io import load_wav  # local import: io does not depend on synth

        clip = load_wav(src.file)
        if clip.sample_rate != fs:
            raise ValueError(
                f"source file {src.file} is at {clip.sample_rate} Hz, scene needs {fs} Hz"
            )
        mono = clip.samples[0].astype(np.float64)
        reps = int(np.ceil(n_samples / mono.shape[0]))
        return np.tile(mono, reps)[:n_samples]
    raise ValueError(f"unknown signal kind {src.signal!r}")


def render(spec: SceneSpec) -> tuple[MultichannelClip, list, list]:
    """Render a scene to (clip, reference segments, VAD segments).

    Channels carry unit-RMS sources (measured over each source's active
    samples); deterministic for a given spec and seed.
    """
    geom = spec.geometry
    fs = geom.sample_rate
    n_samples = int(round(spec.duration * fs))
    rng = np.random.default_rng(spec.seed)
    channels = np.zeros((geom.n_mics, n_samples), dtype=np.float64)

    for src in spec.sources:
        signal = _source_signal(src, n_samples, fs, rng)
        mask = _schedule_mask(src.schedule, n_samples, fs)
        if not mask.any():
            continue
        signal = signal * mask
        rms = np.sqrt(np.mean(signal[mask] ** 2))
        if rms > 0:
            signal /= rms
        rad = np.deg2rad(src.azimuth)
        direction = np.array([np.cos(rad), np.sin(rad), 0.0])
        for m in range(geom.n_mics):
            delay_s = -(geom.mics[m] @ direction) / geom.speed_of_sound
            channels[m] += fractional_delay(signal, delay_s * fs)

    if np.isfinite(spec.snr_db):
        noise_rms = 10.0 ** (-spec.snr_db / 20.0)
        channels += noise_rms * rng.standard_normal(channels.shape)

    clip = MultichannelClip(channels.astype(np.float32), fs)

    reference = []
    for i, src in enumerate(spec.sources):
        for s, e in src.schedule:
            reference.append(Segment(spec.recording_id, s, e - s, f"spk{i}"))
    reference.sort(key=lambda seg: (seg.start, seg.speaker))

    spans = sorted((s, e) for src in spec.sources for s, e in src.schedule)
    merged: list[list[float]] = []
    for s, e in spans:
        if merged and s <= merged[-1][1]:
            merged[-1][1] = max(merged[-1][1], e)
        else:
            merged.append([s, e])
    vad = [Segment(spec.recording_id, s, e - s, "speech") for s, e in merged]
    return clip, reference, vad


def load_scene(path) -> SceneSpec:
    """Read a scene config: geometry keys plus `sources`, `duration`, etc."""
    cfg = read_config(path)
    for required in ("mics", "sample_rate", "sources", "duration"):
        if required not in cfg:
            raise ValueError(f"{path}: scene config missing {required!r}")
    geometry = MicArrayGeometry(
        mics=np.asarray(cfg["mics"], dtype=np.float64),
        sample_rate=float(cfg["sample_rate"]),
        speed_of_sound=float(cfg.get("speed_of_sound", 343.0)),
    )
    base = Path(path).resolve().parent
    sources = []
    for i, entry in enumerate(cfg["sources"]):
        try:
            file = entry.get("file")
            if file is not None and not Path(file).is_absolute():
                file = str(base / file)
            sources.append(
                SourceSpec(
                    azimuth=float(entry["azimuth"]),
                    schedule=tuple((float(s), float(e)) for s, e in entry["schedule"]),
                    signal=entry.get("signal", "speech-noise"),
                    file=file,
                )
            )
        except (KeyError, TypeError) as exc:
            raise ValueError(f"{path}: bad source entry {i}: {exc}") from None
    snr = cfg.get("snr_db", "inf")
    return SceneSpec(
        geometry=geometry,
        sources=tuple(sources),
        duration=float(cfg["duration"]),
        snr_db=float(snr),
        seed=int(cfg.get("seed", 0)),
        recording_id=str(cfg.get("recording_id", "synth")),
    )
