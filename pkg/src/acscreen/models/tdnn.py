"""x-vector style TDNN classifier: dilated frame layers, statistics pooling, two segment layers."""
from __future__ import annotations

import numpy as np

from ..errors import InputTooShortError, InvalidConfigError
from ..numerics import Rng

STATS_EPS = 1e-8

CONTEXTS = (5, 3, 3, 1, 1)
DILATIONS = (1, 2, 3, 1, 1)
CHANNELS = (512, 512, 512, 512, 1500)


def stats_pool(h: np.ndarray) -> np.ndarray:
    """Per-channel mean and population std over time, concatenated: (..., C, T) -> (..., 2C)."""
    h = np.asarray(h, dtype=np.float64)
    mean = h.mean(axis=-1)
    std = np.sqrt(h.var(axis=-1) + STATS_EPS)
    return np.concatenate([mean, std], axis=-1)


def stats_pool_backward(dout: np.ndarray, h: np.ndarray) -> np.ndarray:
    C, T = h.shape[-2:]
    mean = h.mean(axis=-1, keepdims=True)
    std = np.sqrt(h.var(axis=-1, keepdims=True) + STATS_EPS)
    dmean = dout[..., :C, None]
    dstd = dout[..., C:, None]
    return dmean / T + dstd * (h - mean) / (T * std)


def receptive_field(contexts=CONTEXTS, dilations=DILATIONS) -> int:
    return 1 + sum((k - 1) * d for k, d in zip(contexts, dilations))


class TdnnClassifier:
    """Frame layers act on (m, T, C) internally; inputs are (m, F, T) like the BLSTM."""

    arch = "tdnn"

    def __init__(self, input_dim: int, width: float = 0.25, seg_dim: int = 128,
                 contexts=CONTEXTS, dilations=DILATIONS, channels=CHANNELS, rng: Rng | None = None):
        if not (len(contexts) == len(dilations) == len(channels)):
            raise InvalidConfigError("contexts, dilations and channels must align")
        rng = rng or Rng(0)
        self.input_dim = int(input_dim)
        self.width = float(width)
        self.seg_dim = int(seg_dim)
        self.contexts = tuple(int(c) for c in contexts)
        self.dilations = tuple(int(d) for d in dilations)
        self.channels = tuple(max(1, int(round(c * self.width))) for c in channels)
        p = {}
        c_in = self.input_dim
        for i, (k, c_out) in enumerate(zip(self.contexts, self.channels), start=1):
            fan_in = k * c_in
            p[f"frame{i}.W"] = rng.normal(0.0, np.sqrt(2.0 / fan_in), (fan_in, c_out))
            p[f"frame{i}.b"] = np.zeros(c_out)
            c_in = c_out
        dims = [2 * c_in, self.seg_dim, self.seg_dim]
        for j in range(2):
            p[f"seg{j + 1}.W"] = rng.normal(0.0, np.sqrt(2.0 / dims[j]), (dims[j], dims[j + 1]))
            p[f"seg{j + 1}.b"] = np.zeros(dims[j + 1])
        p["out.W"] = rng.normal(0.0, np.sqrt(1.0 / self.seg_dim), (self.seg_dim, 2))
        p["out.b"] = np.zeros(2)
        self.params = p
        self.grads: dict[str, np.ndarray] = {}

    @property
    def dims(self) -> dict:
        return {"input_dim": self.input_dim, "width": self.width, "seg_dim": self.seg_dim}

    @property
    def receptive_field(self) -> int:
        return receptive_field(self.contexts, self.dilations)

    def forward(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64)
        if x.ndim == 2:
            x = x[None]
        if x.shape[1] != self.input_dim:
            raise InvalidConfigError(f"expected {self.input_dim} input channels, got {x.shape[1]}")
        if x.shape[2] < self.receptive_field:
            raise InputTooShortError(f"{x.shape[2]} frames < receptive field {self.receptive_field}")
        p = self.params
        h = np.transpose(x, (0, 2, 1))
        frames = []
        for i, (k, d) in enumerate(zip(self.contexts, self.dilations), start=1):
            t_out = h.shape[1] - (k - 1) * d
            u = np.concatenate([h[:, j * d : j * d + t_out, :] for j in range(k)], axis=-1)
            h = np.maximum(u @ p[f"frame{i}.W"] + p[f"frame{i}.b"], 0.0)
            frames.append((u, h))
        hT = np.transpose(h, (0, 2, 1))
        pooled = stats_pool(hT)
        s1 = np.maximum(pooled @ p["seg1.W"] + p["seg1.b"], 0.0)
        s2 = np.maximum(s1 @ p["seg2.W"] + p["seg2.b"], 0.0)
        self._cache = (x.shape, frames, hT, pooled, s1, s2)
        return s2 @ p["out.W"] + p["out.b"]

    def backward(self, dlogits: np.ndarray) -> np.ndarray:
        shape, frames, hT, pooled, s1, s2 = self._cache
        p = self.params
        g = {"out.W": s2.T @ dlogits, "out.b": dlogits.sum(axis=0)}
        d = (dlogits @ p["out.W"].T) * (s2 > 0)
        g["seg2.W"], g["seg2.b"] = s1.T @ d, d.sum(axis=0)
        d = (d @ p["seg2.W"].T) * (s1 > 0)
        g["seg1.W"], g["seg1.b"] = pooled.T @ d, d.sum(axis=0)
        dpool = d @ p["seg1.W"].T
        dh = np.transpose(stats_pool_backward(dpool, hT), (0, 2, 1))
        for i in reversed(range(len(frames))):
            u, h = frames[i]
            k, dl = self.contexts[i], self.dilations[i]
            dz = dh * (h > 0)
            W = p[f"frame{i + 1}.W"]
            g[f"frame{i + 1}.W"] = np.einsum("mtu,mtc->uc", u, dz)
            g[f"frame{i + 1}.b"] = dz.sum(axis=(0, 1))
            du = dz @ W.T
            c_in = W.shape[0] // k
            t_in = h.shape[1] + (k - 1) * dl
            dh = np.zeros((h.shape[0], t_in, c_in))
            t_out = h.shape[1]
            for j in range(k):
                dh[:, j * dl : j * dl + t_out, :] += du[..., j * c_in : (j + 1) * c_in]
        self.grads = g
        return np.transpose(dh, (0, 2, 1))
