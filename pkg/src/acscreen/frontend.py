"""Waveform to time-frequency features.

Two paths produce an F x T matrix of log energies from the same framing:

* a learnable bank of cosine-modulated Gaussian kernels
  ``g(l) = cos(2 pi mu l) * exp(-l^2 mu^2 / 2)`` whose outputs are squared,
  averaged over each frame and log-compressed;
* a fixed log-mel spectrogram used by the baseline systems.

A relevance network turns the learned representation into a (0, 1) mask that
gates every time-frequency bin. All arrays may carry leading batch axes; the
last two axes are always (samples, frames) or (bands, frames).
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from functools import lru_cache
from pathlib import Path

import numpy as np
import scipy.fft as sfft
from scipy.signal import get_window

from .errors import FormatError, InputTooShortError, InvalidConfigError, InvalidParameterError
from .numerics import Rng, sigmoid

LOG_FLOOR = 1e-10
MU_MIN, MU_MAX = 0.001, 0.499


@dataclass
class Waveform:
    samples: np.ndarray
    sample_rate: int

    def __post_init__(self):
        self.samples = np.asarray(self.samples, dtype=np.float64)
        if self.samples.ndim != 1:
            raise InvalidParameterError("waveform must be mono (1-D)")

    def __len__(self):
        return self.samples.size

    @property
    def duration(self) -> float:
        return self.samples.size / self.sample_rate


@dataclass
class TimeFreqRepr:
    data: np.ndarray  # F x T
    source: str  # "learned" or "mel"

    @property
    def F(self) -> int:
        return self.data.shape[0]

    @property
    def T(self) -> int:
        return self.data.shape[1]


def n_frames(n_samples: int, S: int, hop: int) -> int:
    if n_samples < S:
        raise InputTooShortError(f"{n_samples} samples is shorter than one {S}-sample window")
    return (n_samples - S) // hop + 1


def frame_signal(w, S: int, hop: int) -> np.ndarray:
    """Slice a waveform into an S x T matrix; column t is samples [t*hop, t*hop + S).

    No padding: the trailing remainder that does not fill a window is dropped.
    """
    x = w.samples if isinstance(w, Waveform) else np.asarray(w, dtype=np.float64)
    T = n_frames(x.size, S, hop)
    idx = np.arange(S)[:, None] + hop * np.arange(T)[None, :]
    return x[idx]


# -- cosine-modulated Gaussian bank ------------------------------------------


def _offsets(k: int) -> np.ndarray:
    if k % 2 == 0 or k < 1:
        raise InvalidParameterError(f"kernel length must be odd and positive, got {k}")
    half = (k - 1) // 2
    return np.arange(-half, half + 1, dtype=np.float64)


def gauss_kernel(mu_i: float, k: int) -> np.ndarray:
    """Kernel values at the centred offsets l = -(k-1)/2 .. (k-1)/2."""
    l = _offsets(k)
    return np.cos(2 * np.pi * mu_i * l) * np.exp(-(l**2) * mu_i**2 / 2)


def gauss_kernels(mu: np.ndarray, k: int) -> tuple[np.ndarray, np.ndarray]:
    """All kernels (F x k) and their derivatives with respect to each mu_i."""
    l = _offsets(k)[None, :]
    mu = np.asarray(mu, dtype=np.float64)[:, None]
    phase = 2 * np.pi * mu * l
    env = np.exp(-(l**2) * mu**2 / 2)
    cos = np.cos(phase)
    g = cos * env
    dg = (-2 * np.pi * l * np.sin(phase) - cos * l**2 * mu) * env
    return g, dg


def filterbank_forward(frames: np.ndarray, mu: np.ndarray, k: int, floor: float = LOG_FLOOR):
    """Log average power of each kernel's valid convolution with each frame.

    ``frames`` is (..., S, T); returns ((..., F, T) log energies, cache).
    """
    frames = np.asarray(frames, dtype=np.float64)
    S, T = frames.shape[-2:]
    if S < k:
        raise InvalidConfigError(f"frame length {S} is shorter than kernel length {k}")
    V = S - k + 1
    nfft = sfft.next_fast_len(S + k - 1, real=True)
    g, dg = gauss_kernels(mu, k)
    X = sfft.rfft(np.swapaxes(frames, -1, -2), nfft)  # (..., T, nf)
    H = sfft.rfft(g, nfft)  # (F, nf)
    y = sfft.irfft(X[..., None, :, :] * H[:, None, :], nfft)[..., k - 1 : S]  # (..., F, T, V)
    energy = np.mean(y * y, axis=-1)
    out = np.log(energy + floor)
    cache = dict(X=X, H=H, y=y, energy=energy, dg=dg, S=S, k=k, V=V, nfft=nfft, floor=floor)
    return out, cache


def filterbank_backward(dout: np.ndarray, cache, need_dx: bool = True):
    """Gradients of a loss with respect to the centres mu (F,) and the frames (..., S, T).

    With ``need_dx=False`` the frame gradient is skipped and returned as None.
    """
    S, k, V, nfft = cache["S"], cache["k"], cache["V"], cache["nfft"]
    y = cache["y"]
    scale = dout / (cache["energy"] + cache["floor"]) * (2.0 / V)
    delta = np.zeros(y.shape[:-1] + (nfft,))
    delta[..., k - 1 : S] = scale[..., None] * y
    D = sfft.rfft(delta, nfft)  # (..., F, T, nf)
    X = cache["X"]
    # kernel gradient: correlate output error with the input, summed over batch and frames
    F, T, nf = D.shape[-3:]
    acc = np.einsum("bftn,btn->fn", D.reshape(-1, F, T, nf), np.conj(X).reshape(-1, T, nf))
    dh = sfft.irfft(acc, nfft)[:, :k]
    dmu = np.sum(dh * cache["dg"], axis=1)
    if not need_dx:
        return dmu, None
    dx = sfft.irfft(np.einsum("...ftn,fn->...tn", D, np.conj(cache["H"])), nfft)[..., :S]
    return dmu, np.swapaxes(dx, -1, -2)


class GaussFilterbank:
    """Learnable bank; the centre frequencies (cycles/sample) are its only parameters."""

    def __init__(self, mu: np.ndarray, k: int, floor: float = LOG_FLOOR):
        self.params = {"mu": np.array(mu, dtype=np.float64)}
        self.k = int(k)
        self.floor = floor
        _offsets(self.k)
        self.grads: dict[str, np.ndarray] = {}
        self._cache = None

    @classmethod
    def mel_init(cls, F: int, sample_rate: int, k: int, floor: float = LOG_FLOOR):
        return cls(init_centers_mel(F, sample_rate), k, floor)

    @property
    def mu(self) -> np.ndarray:
        return self.params["mu"]

    @property
    def F(self) -> int:
        return self.mu.size

    def forward(self, frames):
        out, self._cache = filterbank_forward(frames, self.mu, self.k, self.floor)
        return out

    def backward(self, dout, need_dx: bool = True):
        dmu, dframes = filterbank_backward(dout, self._cache, need_dx)
        self.grads = {"mu": dmu}
        return dframes

    def constrain(self):
        np.clip(self.params["mu"], MU_MIN, MU_MAX, out=self.params["mu"])


# -- relevance weighting -----------------------------------------------------


@lru_cache(maxsize=32)
def _context_index(T: int, c: int) -> tuple[np.ndarray, np.ndarray]:
    """Edge-replicated context indices (T, 2c+1) and the matching scatter matrix."""
    idx = np.clip(np.arange(T)[:, None] + np.arange(-c, c + 1)[None, :], 0, T - 1)
    scatter = np.zeros((T * (2 * c + 1), T))
    scatter[np.arange(idx.size), idx.ravel()] = 1.0
    return idx, scatter


class RelevanceNet:
    """Two-layer sigmoid network shared by every time-frequency bin.

    Each bin sees its own sub-band over a (2c+1)-frame window centred on it.
    """

    def __init__(self, c: int = 51, hidden: int = 50, rng: Rng | None = None):
        self.c, self.hidden = int(c), int(hidden)
        rng = rng or Rng(0)
        width = 2 * self.c + 1
        lim1 = math.sqrt(6.0 / (width + self.hidden))
        lim2 = math.sqrt(6.0 / (self.hidden + 1))
        self.params = {
            "Omega1": rng.uniform(-lim1, lim1, (self.hidden, width)),
            "b1": np.zeros(self.hidden),
            "Omega2": rng.uniform(-lim2, lim2, (1, self.hidden)),
            "b2": np.zeros(1),
        }
        self.grads: dict[str, np.ndarray] = {}
        self._cache = None

    def forward(self, x):
        mask, weighted, self._cache = relevance_forward(x, self)
        return weighted

    def backward(self, dweighted):
        self.grads, dx = relevance_backward(dweighted, self._cache)
        return dx


def relevance_forward(x: np.ndarray, net: RelevanceNet):
    """Returns (mask, mask * x, cache) for x of shape (..., F, T)."""
    x = np.asarray(x, dtype=np.float64)
    T = x.shape[-1]
    idx, _ = _context_index(T, net.c)
    p = net.params
    Y = x[..., idx]  # (..., F, T, 2c+1)
    H1 = sigmoid(Y @ p["Omega1"].T + p["b1"])
    mask = sigmoid(H1 @ p["Omega2"][0] + p["b2"][0])
    cache = dict(x=x, Y=Y, H1=H1, mask=mask, p=p, c=net.c)
    return mask, mask * x, cache


def relevance_backward(dweighted: np.ndarray, cache, dmask: np.ndarray | None = None):
    """Gradients for (Omega1, b1, Omega2, b2) and for x through both paths."""
    x, Y, H1, mask, p = cache["x"], cache["Y"], cache["H1"], cache["mask"], cache["p"]
    T = x.shape[-1]
    c = cache["c"]
    dm = dweighted * x
    if dmask is not None:
        dm = dm + dmask
    dx = dweighted * mask
    dz2 = dm * mask * (1.0 - mask)
    hidden = H1.shape[-1]
    width = 2 * c + 1
    grads = {
        "Omega2": (dz2.reshape(1, -1) @ H1.reshape(-1, hidden)),
        "b2": np.array([dz2.sum()]),
    }
    dz1 = dz2[..., None] * p["Omega2"][0] * H1 * (1.0 - H1)
    grads["Omega1"] = dz1.reshape(-1, hidden).T @ Y.reshape(-1, width)
    grads["b1"] = dz1.reshape(-1, hidden).sum(axis=0)
    dY = dz1 @ p["Omega1"]  # (..., F, T, 2c+1)
    _, scatter = _context_index(T, c)
    dx = dx + dY.reshape(dY.shape[:-2] + (T * width,)) @ scatter
    return grads, dx


# -- mel reference path ------------------------------------------------------


def hz_to_mel(f):
    return 2595.0 * np.log10(1.0 + np.asarray(f, dtype=np.float64) / 700.0)


def mel_to_hz(m):
    return 700.0 * (10.0 ** (np.asarray(m, dtype=np.float64) / 2595.0) - 1.0)


def mel_centers_hz(n: int, sample_rate: int) -> np.ndarray:
    """Centres of ``n`` HTK-mel bands spanning 0 .. Nyquist (edges excluded)."""
    pts = np.linspace(0.0, hz_to_mel(sample_rate / 2.0), n + 2)
    return mel_to_hz(pts[1:-1])


def init_centers_mel(F: int, sample_rate: int) -> np.ndarray:
    if F < 1:
        raise InvalidParameterError("need at least one centre")
    return np.clip(mel_centers_hz(F, sample_rate) / sample_rate, MU_MIN, MU_MAX)


@lru_cache(maxsize=16)
def mel_filterbank(n_mels: int, nfft: int, sample_rate: int) -> np.ndarray:
    """Triangular HTK-mel weights, shape (n_mels, nfft // 2 + 1), unnormalised."""
    edges = mel_to_hz(np.linspace(0.0, hz_to_mel(sample_rate / 2.0), n_mels + 2))
    freqs = np.arange(nfft // 2 + 1) * sample_rate / nfft
    lo, mid, hi = edges[:-2, None], edges[1:-1, None], edges[2:, None]
    rise = (freqs[None, :] - lo) / (mid - lo)
    fall = (hi - freqs[None, :]) / (hi - mid)
    return np.maximum(0.0, np.minimum(rise, fall))


def mel_frontend(w: Waveform, n_mels: int = 64, S: int = 1102, hop: int = 441,
                 floor: float = LOG_FLOOR) -> TimeFreqRepr:
    """Log-mel spectrogram from a Hann-windowed magnitude STFT."""
    frames = frame_signal(w, S, hop)
    return TimeFreqRepr(mel_from_frames(frames, n_mels, w.sample_rate, floor), "mel")


def mel_from_frames(frames: np.ndarray, n_mels: int, sample_rate: int,
                    floor: float = LOG_FLOOR) -> np.ndarray:
    S = frames.shape[-2]
    nfft = 1 << (S - 1).bit_length()
    win = get_window("hann", S)
    spec = np.abs(sfft.rfft(np.swapaxes(frames, -1, -2) * win, nfft))  # (..., T, nf)
    fb = mel_filterbank(n_mels, nfft, int(sample_rate))
    return np.ascontiguousarray(np.log(np.swapaxes(spec @ fb.T, -1, -2) + floor))


# -- dumps -------------------------------------------------------------------


def dump_centers(mu: np.ndarray, sample_rate: int) -> list[tuple[int, float]]:
    hz = np.sort(np.asarray(mu, dtype=np.float64) * sample_rate)
    return [(i, float(f)) for i, f in enumerate(hz)]


def write_centers_csv(path, pairs) -> None:
    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh, lineterminator="\n")
        wr.writerow(["index", "hz"])
        for i, f in pairs:
            wr.writerow([i, repr(float(f))])


def write_features(path, rep: TimeFreqRepr) -> None:
    """CSV matrix preceded by a three-line ``F=``, ``T=``, ``source=`` header.

    Values use 17 significant digits so a re-read is bit-exact.
    """
    with open(path, "w", newline="") as fh:
        fh.write(f"F={rep.F}\nT={rep.T}\nsource={rep.source}\n")
        for row in rep.data:
            fh.write(",".join(format(v, ".17g") for v in row) + "\n")


def read_features(path) -> TimeFreqRepr:
    lines = Path(path).read_text().splitlines()
    try:
        head = dict(line.split("=", 1) for line in lines[:3])
        F, T, source = int(head["F"]), int(head["T"]), head["source"]
        data = np.array([[float(v) for v in line.split(",")] for line in lines[3 : 3 + F]])
    except (KeyError, ValueError) as exc:
        raise FormatError(f"{path}: malformed feature file ({exc})") from None
    if data.shape != (F, T):
        raise FormatError(f"{path}: header says {F}x{T}, body is {data.shape}")
    return TimeFreqRepr(data, source)
