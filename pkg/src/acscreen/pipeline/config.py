"""Flat ``key=value`` experiment configuration."""
from __future__ import annotations

import typing
from dataclasses import asdict, dataclass, fields
from pathlib import Path

from ..errors import InvalidConfigError

SYSTEMS = ("baseline", "mixup", "cosgauss-relevance", "tdnn", "embedding-head")


@dataclass
class ExperimentConfig:
    system: str = "baseline"
    manifest: str = ""
    modality: str | None = None
    folds: str = "all"
    seed: int = 0
    # training
    epochs: int = 20
    batch_size: int = 32
    lr0: float = 0.001
    lr_factor: float = 0.9085
    lr_step_epochs: int = 2
    alpha: float | None = None
    tau: float = 1.0
    mu_lr_scale: float = 1.0
    # front-end
    n_bands: int = 64
    S: int = 1102
    hop: int = 441
    k: int = 353
    frames: int = 0  # 0: shortest clip decides
    relevance: bool = True
    rel_context: int = 51
    rel_hidden: int = 50
    # classifiers
    hidden: int = 64
    fc_hidden: int = 64
    tdnn_width: float = 0.25
    pca_components: int = 0  # 0: keep every dimension
    C: float = 1.0
    class_weight: str = "none"
    embeddings: str = ""

    def __post_init__(self):
        if self.system not in SYSTEMS:
            raise InvalidConfigError(f"unknown system {self.system!r}; choose from {SYSTEMS}")
        if self.system == "mixup" and self.alpha is None:
            self.alpha = 0.4
        if self.system == "embedding-head" and self.alpha is not None:
            raise InvalidConfigError("alpha has no meaning for the embedding head")

    def fold_list(self, available) -> list[int]:
        if self.folds == "all":
            return sorted(set(int(f) for f in available))
        return [int(f) for f in self.folds.split(",") if f.strip()]

    def as_text(self) -> str:
        lines = []
        for k, v in asdict(self).items():
            if v is None:
                continue
            lines.append(f"{k}={v}")
        return "\n".join(lines) + "\n"


def convert_value(name: str, raw: str, tp):
    origin = typing.get_origin(tp)
    args = typing.get_args(tp)
    if origin is typing.Union or (origin is not None and type(None) in args):
        if raw.lower() in ("", "none", "null"):
            return None
        tp = next(a for a in args if a is not type(None))
    try:
        if tp is bool:
            if raw.lower() in ("1", "true", "yes", "on"):
                return True
            if raw.lower() in ("0", "false", "no", "off"):
                return False
            raise ValueError(raw)
        return tp(raw)
    except ValueError:
        raise InvalidConfigError(f"{name}: cannot parse {raw!r} as {tp.__name__}") from None


def parse_config(text: str, cls=ExperimentConfig, **overrides):
    """Build ``cls`` from ``key=value`` lines; ``#`` starts a comment, unknown keys fail."""
    hints = typing.get_type_hints(cls)
    known = {f.name for f in fields(cls)}
    values = {}
    for n, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise InvalidConfigError(f"line {n}: expected key=value, got {line!r}")
        key, raw = (s.strip() for s in line.split("=", 1))
        if key not in known:
            raise InvalidConfigError(f"line {n}: unknown key {key!r}")
        values[key] = convert_value(key, raw, hints[key])
    for key, v in overrides.items():
        if key not in known:
            raise InvalidConfigError(f"unknown key {key!r}")
        if v is not None:
            values[key] = v
    return cls(**values)


def load_config(path, **overrides) -> ExperimentConfig:
    cfg = parse_config(Path(path).read_text(), **overrides)
    if cfg.manifest and not Path(cfg.manifest).is_absolute():
        cfg.manifest = str((Path(path).parent / cfg.manifest).resolve())
    return cfg
