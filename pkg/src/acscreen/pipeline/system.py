"""Composition of front-end stages and a classifier into one trainable model."""
from __future__ import annotations

import numpy as np

from ..errors import FormatError, InvalidConfigError
from ..frontend import GaussFilterbank, RelevanceNet
from ..models import BlstmClassifier, TdnnClassifier, read_checkpoint, write_checkpoint
from ..numerics import Rng
from .config import ExperimentConfig


class FeatureNorm:
    """Fixed per-band affine map (x - mean) / scale, fitted once on training data."""

    def __init__(self, mean: np.ndarray, scale: np.ndarray):
        self.buffers = {"mean": np.asarray(mean, dtype=np.float64),
                        "scale": np.asarray(scale, dtype=np.float64)}
        self.params: dict[str, np.ndarray] = {}
        self.grads: dict[str, np.ndarray] = {}

    @classmethod
    def fit(cls, feats: np.ndarray) -> "FeatureNorm":
        """``feats`` is (N, F, T); statistics pool over samples and frames."""
        mean = feats.mean(axis=(0, 2))
        std = feats.std(axis=(0, 2))
        return cls(mean, np.where(std > 1e-12, std, 1.0))

    def forward(self, x):
        return (x - self.buffers["mean"][:, None]) / self.buffers["scale"][:, None]

    def backward(self, d):
        return d / self.buffers["scale"][:, None]


class Chain:
    """Stages run in order; parameter names are prefixed by stage name."""

    def __init__(self, stages: list[tuple[str, object]], arch: str, dims: dict):
        self.stages = stages
        self.arch = arch
        self.dims = dims
        self.params = {f"{n}.{k}": v for n, s in stages for k, v in s.params.items()}
        self.grads: dict[str, np.ndarray] = {}

    def stage(self, name: str):
        return dict(self.stages)[name]

    def set_stage(self, name: str, obj) -> None:
        """Swap a parameter-free stage (the fitted input normaliser, say)."""
        i = [n for n, _ in self.stages].index(name)
        if self.stages[i][1].params or obj.params:
            raise InvalidConfigError("only parameter-free stages can be swapped")
        self.stages[i] = (name, obj)

    def forward(self, x, start: str | None = None):
        """Run from stage ``start`` (default: the first)."""
        names = [n for n, _ in self.stages]
        i0 = names.index(start) if start else 0
        for _, s in self.stages[i0:]:
            x = s.forward(x)
        return x

    def backward(self, d):
        grads = {}
        for i in range(len(self.stages) - 1, -1, -1):
            n, s = self.stages[i]
            # nothing upstream of a waveform front-end needs its input gradient
            d = s.backward(d, need_dx=False) if i == 0 and isinstance(s, GaussFilterbank) else s.backward(d)
            grads.update({f"{n}.{k}": v for k, v in s.grads.items()})
        self.grads = grads
        return d

    def constrain(self):
        for _, s in self.stages:
            if hasattr(s, "constrain"):
                s.constrain()

    def state(self) -> dict[str, np.ndarray]:
        out = dict(self.params)
        for n, s in self.stages:
            for k, v in getattr(s, "buffers", {}).items():
                out[f"{n}.{k}"] = v
        return out

    def load_state(self, state: dict[str, np.ndarray]) -> None:
        mine = self.state()
        if set(mine) != set(state):
            raise FormatError(f"checkpoint tensors {sorted(set(state) ^ set(mine))} do not match model")
        for k, v in state.items():
            if mine[k].shape != v.shape:
                raise FormatError(f"{k}: shape {v.shape} vs model {mine[k].shape}")
            mine[k][...] = v

    @property
    def uses_waveform_frames(self) -> bool:
        return self.stages[0][0] == "frontend"


def system_dims(cfg: ExperimentConfig, sample_rate: int) -> dict:
    keys = ["n_bands", "S", "hop", "k", "frames", "relevance", "rel_context", "rel_hidden",
            "hidden", "fc_hidden", "tdnn_width"]
    d = {k: getattr(cfg, k) for k in keys}
    d["sample_rate"] = int(sample_rate)
    return d


def build_system(arch: str, dims: dict, rng: Rng | int = 0, norm: FeatureNorm | None = None) -> Chain:
    rng = rng if isinstance(rng, Rng) else Rng(rng)
    F = dims["n_bands"]
    norm = norm or FeatureNorm(np.zeros(F), np.ones(F))
    stages: list[tuple[str, object]] = []
    if arch == "cosgauss-relevance":
        stages.append(("frontend", GaussFilterbank.mel_init(F, dims["sample_rate"], dims["k"])))
    stages.append(("norm", norm))
    if arch == "cosgauss-relevance" and dims["relevance"]:
        stages.append(("relevance", RelevanceNet(dims["rel_context"], dims["rel_hidden"], rng.derive(1))))
    if arch in ("baseline", "mixup", "cosgauss-relevance"):
        clf = BlstmClassifier(F, dims["hidden"], dims["fc_hidden"], rng.derive(2))
    elif arch == "tdnn":
        clf = TdnnClassifier(F, width=dims["tdnn_width"], rng=rng.derive(2))
    else:
        raise InvalidConfigError(f"no sequence model for system {arch!r}")
    stages.append(("clf", clf))
    return Chain(stages, arch, dims)


def save_system(path, system: Chain) -> None:
    write_checkpoint(path, system.arch, system.dims, system.state())


def load_system(path) -> Chain:
    arch, dims, state = read_checkpoint(path)
    system = build_system(arch, dims)
    system.load_state(state)
    return system
