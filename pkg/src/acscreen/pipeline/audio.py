"""16-bit PCM mono WAV reading and writing (stdlib ``wave``)."""
from __future__ import annotations

import wave

import numpy as np

from ..errors import FormatError
from ..frontend import Waveform


def load_wav(path) -> Waveform:
    """Samples scaled by 1/32768 into [-1, 1); the header's rate is kept as-is."""
    try:
        with wave.open(str(path), "rb") as wf:
            channels = wf.getnchannels()
            width = wf.getsampwidth()
            rate = wf.getframerate()
            comp = wf.getcomptype()
            raw = wf.readframes(wf.getnframes())
    except (wave.Error, EOFError, OSError) as exc:
        raise FormatError(f"{path}: unreadable WAV ({exc})") from None
    if comp != "NONE":
        raise FormatError(f"{path}: compressed WAV ({comp}) not supported")
    if channels != 1:
        raise FormatError(f"{path}: {channels} channels, expected mono")
    if width != 2:
        raise FormatError(f"{path}: {8 * width}-bit samples, expected 16-bit PCM")
    data = np.frombuffer(raw, dtype="<i2").astype(np.float64) / 32768.0
    return Waveform(data, rate)


def to_pcm16(samples: np.ndarray) -> np.ndarray:
    x = np.clip(np.asarray(samples, dtype=np.float64), -1.0, 1.0)
    return np.clip(np.round(x * 32768.0), -32768, 32767).astype("<i2")


def write_wav(path, w: Waveform) -> None:
    with wave.open(str(path), "wb") as wf:
        wf.setnchannels(1)
        wf.setsampwidth(2)
        wf.setframerate(int(w.sample_rate))
        wf.writeframes(to_pcm16(w.samples).tobytes())
