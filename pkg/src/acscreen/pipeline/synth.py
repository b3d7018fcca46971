"""Synthetic two-class audio standing in for real recordings.

``default`` mode: amplitude-modulated harmonic complexes over band-limited noise;
positives have their spectral centroid raised by ``separation`` octaves.

``mismatch`` mode: a narrowband marker tone among random distractor tones,
all below 4 kHz. Positives carry the marker at the fixed ``cue_hz`` (with
probability ``separation``), negatives at a random frequency, so the classes
differ only in where one component sits, not in how much energy there is.
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from ..errors import InvalidParameterError
from ..frontend import Waveform, mel_centers_hz
from ..numerics import Rng
from .audio import write_wav
from .manifest import DatasetManifest, Entry, stratified_folds, write_manifest

TARGET_RMS = 0.1


@dataclass(frozen=True)
class SynthSpec:
    n_pos: int = 43
    n_neg: int = 207
    duration: float = 0.3
    sample_rate: int = 44100
    separation: float = 1.0
    noise_level: float = 0.5
    seed: int = 0
    mode: str = "default"
    modality: str = "speech"
    n_folds: int = 5
    cue_hz: float | None = None  # mismatch mode; None picks a point between mel centres
    n_distractors: int = 6
    band_hz: tuple = field(default=(150.0, 2500.0))

    def __post_init__(self):
        if self.n_pos < self.n_folds or self.n_neg < self.n_folds:
            raise InvalidParameterError("each fold needs at least one sample of each class")
        if self.mode not in ("default", "mismatch"):
            raise InvalidParameterError(f"unknown synth mode {self.mode!r}")

    @property
    def positive_fraction(self) -> float:
        return self.n_pos / (self.n_pos + self.n_neg)

    def with_(self, **kw) -> "SynthSpec":
        return replace(self, **kw)


def default_cue_hz(n_bands: int = 16, sample_rate: int = 44100) -> float:
    """Geometric midpoint between the 3rd and 4th of ``n_bands`` mel centres."""
    c = mel_centers_hz(n_bands, sample_rate)
    return float(np.sqrt(c[2] * c[3]))


def _bandlimited_noise(n: int, sr: int, lo: float, hi: float, rng: Rng) -> np.ndarray:
    spec = np.fft.rfft(rng.normal(size=n))
    f = np.fft.rfftfreq(n, 1.0 / sr)
    spec[(f < lo) | (f > hi)] = 0.0
    x = np.fft.irfft(spec, n)
    return x / (np.sqrt(np.mean(x**2)) + 1e-12)


def _rms_normalise(x: np.ndarray) -> np.ndarray:
    return x * (TARGET_RMS / (np.sqrt(np.mean(x**2)) + 1e-12))


def _default_clip(label: int, spec: SynthSpec, rng: Rng) -> np.ndarray:
    sr = spec.sample_rate
    n = int(round(spec.duration * sr))
    t = np.arange(n) / sr
    f0 = rng.uniform(120.0, 250.0)
    centroid = 1000.0 * 2.0 ** (label * spec.separation + rng.normal(0.0, 0.35))
    n_harm = int(8000.0 // f0)
    h = np.arange(1, n_harm + 1)
    amps = np.exp(-0.5 * (np.log2(h * f0 / centroid) / 0.5) ** 2)
    phases = rng.uniform(0.0, 2 * np.pi, n_harm)
    harm = (amps[:, None] * np.sin(2 * np.pi * f0 * h[:, None] * t + phases[:, None])).sum(axis=0)
    harm /= np.sqrt(np.mean(harm**2)) + 1e-12
    am = 1.0 + 0.5 * np.sin(2 * np.pi * rng.uniform(2.0, 6.0) * t + rng.uniform(0, 2 * np.pi))
    noise = _bandlimited_noise(n, sr, 100.0, 8000.0, rng)
    return _rms_normalise(am * harm + spec.noise_level * noise)


def _mismatch_clip(label: int, spec: SynthSpec, rng: Rng) -> np.ndarray:
    sr = spec.sample_rate
    n = int(round(spec.duration * sr))
    t = np.arange(n) / sr
    lo, hi = spec.band_hz
    cue = spec.cue_hz if spec.cue_hz is not None else default_cue_hz(sample_rate=sr)
    freqs = list(rng.uniform(lo, hi, spec.n_distractors))
    amps = list(rng.uniform(0.5, 1.5, spec.n_distractors))
    on_cue = label == 1 and rng.uniform() < spec.separation
    marker = cue if on_cue else rng.uniform(lo, hi)
    freqs.append(marker)
    amps.append(1.0)
    x = np.zeros(n)
    for f, a in zip(freqs, amps):
        x += a * np.sin(2 * np.pi * f * t + rng.uniform(0, 2 * np.pi))
    x += spec.noise_level * _bandlimited_noise(n, sr, 100.0, 4000.0, rng)
    return _rms_normalise(x)


def synth_waveforms(spec: SynthSpec) -> tuple[list[str], list[Waveform], np.ndarray, np.ndarray]:
    """In-memory clips: (ids, waveforms, labels, folds), positives first."""
    root = Rng(spec.seed)
    labels = np.r_[np.ones(spec.n_pos, dtype=np.int64), np.zeros(spec.n_neg, dtype=np.int64)]
    make = _default_clip if spec.mode == "default" else _mismatch_clip
    waves, ids = [], []
    for i, y in enumerate(labels):
        waves.append(Waveform(make(int(y), spec, root.derive(1, i)), spec.sample_rate))
        ids.append(f"{spec.modality}_{i:04d}")
    folds = stratified_folds(labels, spec.n_folds, root.derive(2))
    return ids, waves, labels, folds


def synth_dataset(spec: SynthSpec, out_dir) -> DatasetManifest:
    """Write one WAV per clip plus ``manifest.csv`` into ``out_dir``."""
    out = Path(out_dir)
    (out / "wav").mkdir(parents=True, exist_ok=True)
    ids, waves, labels, folds = synth_waveforms(spec)
    entries = []
    for sid, w, y, f in zip(ids, waves, labels, folds):
        rel = f"wav/{sid}.wav"
        write_wav(out / rel, w)
        entries.append(Entry(sid, rel, int(y), spec.modality, int(f)))
    manifest = DatasetManifest(entries, out)
    write_manifest(out / "manifest.csv", manifest)
    return manifest
