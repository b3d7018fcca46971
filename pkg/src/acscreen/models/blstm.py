"""Bidirectional LSTM sequence classifier with a tanh FC head."""
from __future__ import annotations

import numpy as np

from ..errors import InvalidConfigError
from ..numerics import Rng, sigmoid

GATES = "ifog"  # input, forget, output, candidate


class _Direction:
    """One LSTM direction; runs over time-major input (T, m, D)."""

    def __init__(self, params: dict, prefix: str):
        self.p = params
        self.prefix = prefix

    def _w(self, name):
        return self.p[f"{self.prefix}.{name}"]

    def forward(self, xs: np.ndarray):
        Wx, Wh, b = self._w("Wx"), self._w("Wh"), self._w("b")
        T, m, _ = xs.shape
        H = Wh.shape[0]
        zx = xs @ Wx + b
        hs = np.zeros((T + 1, m, H))  # hs[0] is the initial state
        cs = np.zeros((T + 1, m, H))
        acts = np.empty((T, m, 4 * H))
        for t in range(T):
            z = zx[t] + hs[t] @ Wh
            a = acts[t]
            a[:, : 3 * H] = sigmoid(z[:, : 3 * H])
            a[:, 3 * H :] = np.tanh(z[:, 3 * H :])
            i, f, o, g = a[:, :H], a[:, H : 2 * H], a[:, 2 * H : 3 * H], a[:, 3 * H :]
            cs[t + 1] = f * cs[t] + i * g
            hs[t + 1] = o * np.tanh(cs[t + 1])
        self._cache = (xs, hs, cs, acts)
        return hs[1:]

    def backward(self, dhs: np.ndarray):
        xs, hs, cs, acts = self._cache
        Wx, Wh = self._w("Wx"), self._w("Wh")
        T, m, H = dhs.shape
        dz = np.empty((T, m, 4 * H))
        dWh = np.zeros_like(Wh)
        dh_next = np.zeros((m, H))
        dc_next = np.zeros((m, H))
        for t in reversed(range(T)):
            a = acts[t]
            i, f, o, g = a[:, :H], a[:, H : 2 * H], a[:, 2 * H : 3 * H], a[:, 3 * H :]
            tc = np.tanh(cs[t + 1])
            dh = dhs[t] + dh_next
            dc = dc_next + dh * o * (1.0 - tc * tc)
            d = dz[t]
            d[:, :H] = dc * g * i * (1.0 - i)
            d[:, H : 2 * H] = dc * cs[t] * f * (1.0 - f)
            d[:, 2 * H : 3 * H] = dh * tc * o * (1.0 - o)
            d[:, 3 * H :] = dc * i * (1.0 - g * g)
            dc_next = dc * f
            dWh += hs[t].T @ d
            dh_next = d @ Wh.T
        grads = {
            f"{self.prefix}.Wx": np.einsum("tmd,tmg->dg", xs, dz),
            f"{self.prefix}.Wh": dWh,
            f"{self.prefix}.b": dz.sum(axis=(0, 1)),
        }
        return grads, dz @ Wx.T


class BlstmClassifier:
    """BLSTM over the frames of an F x T input, temporal mean, FC(tanh), 2 logits.

    Inputs are batches shaped (m, F, T).
    """

    arch = "blstm"

    def __init__(self, input_dim: int, hidden: int = 64, fc_hidden: int = 64, rng: Rng | None = None):
        self.input_dim, self.hidden, self.fc_hidden = int(input_dim), int(hidden), int(fc_hidden)
        rng = rng or Rng(0)
        F, H = self.input_dim, self.hidden
        p = {}
        for d in ("fwd", "bwd"):
            lim = 1.0 / np.sqrt(H)
            p[f"{d}.Wx"] = rng.uniform(-lim, lim, (F, 4 * H))
            p[f"{d}.Wh"] = rng.uniform(-lim, lim, (H, 4 * H))
            b = np.zeros(4 * H)
            b[H : 2 * H] = 1.0  # forget-gate bias
            p[f"{d}.b"] = b
        lim = np.sqrt(6.0 / (2 * H + self.fc_hidden))
        p["fc.W"] = rng.uniform(-lim, lim, (2 * H, self.fc_hidden))
        p["fc.b"] = np.zeros(self.fc_hidden)
        lim = np.sqrt(6.0 / (self.fc_hidden + 2))
        p["out.W"] = rng.uniform(-lim, lim, (self.fc_hidden, 2))
        p["out.b"] = np.zeros(2)
        self.params = p
        self.grads: dict[str, np.ndarray] = {}
        self._fwd = _Direction(p, "fwd")
        self._bwd = _Direction(p, "bwd")

    @property
    def dims(self) -> dict:
        return {"input_dim": self.input_dim, "hidden": self.hidden, "fc_hidden": self.fc_hidden}

    def forward(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64)
        if x.ndim == 2:
            x = x[None]
        if x.shape[1] != self.input_dim or x.shape[2] < 1:
            raise InvalidConfigError(f"expected (m, {self.input_dim}, T>=1) input, got {x.shape}")
        xs = np.transpose(x, (2, 0, 1))  # (T, m, F)
        hf = self._fwd.forward(xs)
        hb = self._bwd.forward(xs[::-1])[::-1]
        pooled = np.concatenate([hf, hb], axis=-1).mean(axis=0)
        a = np.tanh(pooled @ self.params["fc.W"] + self.params["fc.b"])
        self._cache = (x.shape, pooled, a)
        return a @ self.params["out.W"] + self.params["out.b"]

    def backward(self, dlogits: np.ndarray) -> np.ndarray:
        shape, pooled, a = self._cache
        p = self.params
        T = shape[2]
        H = self.hidden
        g = {"out.W": a.T @ dlogits, "out.b": dlogits.sum(axis=0)}
        dzfc = (dlogits @ p["out.W"].T) * (1.0 - a * a)
        g["fc.W"] = pooled.T @ dzfc
        g["fc.b"] = dzfc.sum(axis=0)
        dpool = dzfc @ p["fc.W"].T / T
        dh = np.broadcast_to(dpool, (T,) + dpool.shape)
        gf, dxf = self._fwd.backward(np.ascontiguousarray(dh[..., :H]))
        gb, dxb = self._bwd.backward(np.ascontiguousarray(dh[::-1, :, H:]))
        g.update(gf)
        g.update(gb)
        self.grads = g
        dxs = dxf + dxb[::-1]
        return np.transpose(dxs, (1, 2, 0))
