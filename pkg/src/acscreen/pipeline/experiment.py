"""Per-fold training runs, score export and the prediction path."""
from __future__ import annotations

import csv
import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ..errors import FoldFailedError, FormatError, InvalidConfigError
from ..frontend import TimeFreqRepr, Waveform, frame_signal, mel_from_frames, n_frames
from ..fusion import ScoreTable, auc, write_scores
from ..models import EmbeddingHead, read_checkpoint, write_checkpoint
from ..models.embedding import PCA, LogisticRegression, Standardizer
from ..numerics import Rng
from ..trainer import TrainConfig, fit, positive_scores, predict_logits, schedule_note
from .audio import load_wav
from .config import ExperimentConfig
from .manifest import DatasetManifest, read_manifest
from .system import Chain, FeatureNorm, build_system, load_system, save_system, system_dims

log = logging.getLogger(__name__)

SEQUENCE_SYSTEMS = ("baseline", "mixup", "cosgauss-relevance", "tdnn")


# -- inputs --------------------------------------------------------------------


def fit_length(w: Waveform, T: int, S: int, hop: int) -> Waveform:
    """Crop, or zero-pad at the end, to exactly the samples needed for T frames."""
    need = S + (T - 1) * hop
    x = w.samples[:need]
    if x.size < need:
        x = np.concatenate([x, np.zeros(need - x.size)])
    return Waveform(x, w.sample_rate)


def framed(waves, T: int, S: int, hop: int) -> np.ndarray:
    return np.stack([frame_signal(fit_length(w, T, S, hop), S, hop) for w in waves])


def common_frames(waves, S: int, hop: int) -> int:
    return max(1, min(n_frames(len(w.samples), S, hop) for w in waves))


def sample_rate_of(waves) -> int:
    rates = {int(w.sample_rate) for w in waves}
    if len(rates) != 1:
        raise FormatError(f"mixed sample rates {sorted(rates)}; resample beforehand")
    return rates.pop()


def system_features(system: Chain, frames: np.ndarray, batch_size: int = 64) -> np.ndarray:
    """What the ``features`` command writes: log-mel, or the learned filter-bank output."""
    d = system.dims
    if system.uses_waveform_frames:
        fb = system.stage("frontend")
        return np.concatenate([fb.forward(frames[i : i + batch_size])
                               for i in range(0, len(frames), batch_size)])
    return mel_from_frames(frames, d["n_bands"], d["sample_rate"])


def system_inputs(system: Chain, frames: np.ndarray) -> np.ndarray:
    """Training inputs: raw frames for the learned front-end, log-mel otherwise."""
    return frames if system.uses_waveform_frames else system_features(system, frames)


def score_features(system: Chain, feats: np.ndarray, batch_size: int = 64) -> np.ndarray:
    """Scores from precomputed features; everything after the feature stage runs here.

    The input is copied to C order first: BLAS may round differently for other layouts.
    """
    class _Tail:
        def forward(self, x):
            return system.forward(x, start="norm")
    return positive_scores(predict_logits(_Tail(), np.ascontiguousarray(feats), batch_size))


def stats_embedding(feats: np.ndarray) -> np.ndarray:
    """Per-band temporal mean and standard deviation, (N, 2F)."""
    return np.concatenate([feats.mean(axis=-1), feats.std(axis=-1)], axis=1)


def read_embeddings(path, ids) -> np.ndarray:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows or rows[0][0] != "id":
        raise FormatError(f"{path}: expected header id,e0,e1,...")
    table = {r[0]: np.array([float(v) for v in r[1:]]) for r in rows[1:] if r}
    missing = [i for i in ids if i not in table]
    if missing:
        raise FormatError(f"{path}: no embedding for {missing[:5]}")
    return np.stack([table[i] for i in ids])


# -- embedding head checkpoints -------------------------------------------------


def save_head(path, head: EmbeddingHead, dims: dict) -> None:
    params = {
        "scaler.mean": head.scaler.mean, "scaler.scale": head.scaler.scale,
        "pca.mean": head.pca.mean, "pca.components": head.pca.components,
        "pca.explained_variance": head.pca.explained_variance,
        "clf.w": head.clf.w, "clf.b": np.atleast_1d(np.float64(head.clf.b)),
    }
    write_checkpoint(path, "embedding-head", dims, params)


def load_head(path) -> tuple[EmbeddingHead, dict]:
    arch, dims, p = read_checkpoint(path)
    if arch != "embedding-head":
        raise FormatError(f"{path}: holds a {arch} model, not an embedding head")
    scaler = Standardizer(p["scaler.mean"], p["scaler.scale"])
    pca = PCA(p["pca.mean"], p["pca.components"], p["pca.explained_variance"])
    clf = LogisticRegression(p["clf.w"], float(p["clf.b"][0]), dims.get("C", 1.0), dims.get("class_weight"))
    return EmbeddingHead(scaler, pca, clf), dims


def load_any(path):
    arch, _, _ = read_checkpoint(path)
    return load_head(path)[0] if arch == "embedding-head" else load_system(path)


# -- experiment ----------------------------------------------------------------


@dataclass
class ExperimentResult:
    fold_aucs: dict[int, float]
    tables: dict[int, ScoreTable]
    out_dir: Path | None
    notes: list[str] = field(default_factory=list)

    @property
    def mean_auc(self) -> float:
        return float(np.mean(list(self.fold_aucs.values())))


@dataclass
class Dataset:
    ids: list[str]
    waves: list[Waveform]
    labels: np.ndarray
    folds: np.ndarray

    @classmethod
    def from_manifest(cls, m: DatasetManifest) -> "Dataset":
        waves = [load_wav(m.resolve(e)) for e in m.entries]
        return cls(m.ids, waves, m.labels, m.folds)


def train_config(cfg: ExperimentConfig) -> TrainConfig:
    return TrainConfig(
        alpha=cfg.alpha, tau=cfg.tau, lr0=cfg.lr0, lr_factor=cfg.lr_factor,
        lr_step_epochs=cfg.lr_step_epochs, epochs=cfg.epochs, batch_size=cfg.batch_size,
        seed=cfg.seed, lr_scale={"frontend.mu": cfg.mu_lr_scale},
    )


def _fold_sequence(cfg, data, X, tr, va, fold, dims, fold_dir):
    rng = Rng(cfg.seed).derive(fold)
    system = build_system(cfg.system, dims, rng)
    # input standardisation is fixed from the training split at initialisation
    feats_tr = system_features(system, X[tr]) if system.uses_waveform_frames else X[tr]
    system.set_stage("norm", FeatureNorm.fit(feats_tr))
    tcfg = train_config(cfg)
    log_path = fold_dir / "train_log.csv" if fold_dir else None
    fit(system, (X[tr], data.labels[tr]), (X[va], data.labels[va]), tcfg, log_path)
    if fold_dir:
        save_system(fold_dir / "model.ckpt", system)
    return positive_scores(predict_logits(system, X[va]))


def _fold_head(cfg, data, E, tr, va, fold, dims, fold_dir):
    n = cfg.pca_components or min(E.shape[1], int(tr.sum()) - 1)
    cw = None if cfg.class_weight == "none" else cfg.class_weight
    head = EmbeddingHead.fit(E[tr], data.labels[tr], n, cfg.C, cw)
    if fold_dir:
        save_head(fold_dir / "model.ckpt", head, dims | {"C": cfg.C, "class_weight": cw})
    return head.predict_proba(E[va])


def run_experiment(cfg: ExperimentConfig, out_dir=None, data: Dataset | None = None) -> ExperimentResult:
    """Train and score each validation fold; writes artefacts under ``out_dir`` if given."""
    if data is None:
        if not cfg.manifest:
            raise InvalidConfigError("config needs manifest=<path> (or pass data directly)")
        data = Dataset.from_manifest(read_manifest(cfg.manifest).filter(cfg.modality))
    out = Path(out_dir) if out_dir else None
    if out:
        out.mkdir(parents=True, exist_ok=True)
        (out / "config.txt").write_text(cfg.as_text())
    sr = sample_rate_of(data.waves)
    T = cfg.frames or common_frames(data.waves, cfg.S, cfg.hop)
    dims = system_dims(cfg, sr) | {"frames": T}
    frames = framed(data.waves, T, cfg.S, cfg.hop)
    notes = []
    if cfg.system in SEQUENCE_SYSTEMS:
        notes.append(schedule_note(train_config(cfg).schedule))
        probe = build_system(cfg.system, dims)
        X = system_inputs(probe, frames)
        run_fold = _fold_sequence
    else:
        X = (read_embeddings(cfg.embeddings, data.ids) if cfg.embeddings
             else stats_embedding(mel_from_frames(frames, cfg.n_bands, sr)))
        run_fold = _fold_head
    fold_aucs, tables = {}, {}
    for fold in cfg.fold_list(data.folds):
        va = data.folds == fold
        tr = ~va
        fold_dir = out / f"fold{fold}" if out else None
        if fold_dir:
            fold_dir.mkdir(exist_ok=True)
        try:
            scores = run_fold(cfg, data, X, tr, va, fold, dims, fold_dir)
            ids = [i for i, v in zip(data.ids, va) if v]
            table = ScoreTable(ids, scores, data.labels[va], cfg.system)
            fold_aucs[fold] = auc(scores, data.labels[va])
        except Exception as exc:
            raise FoldFailedError(fold, exc) from exc
        tables[fold] = table
        if fold_dir:
            write_scores(fold_dir / "scores.csv", table)
        log.info("fold %d AUC %.4f", fold, fold_aucs[fold])
    result = ExperimentResult(fold_aucs, tables, out, notes)
    if out:
        _write_summary(out, cfg, result)
    return result


def _write_summary(out: Path, cfg: ExperimentConfig, res: ExperimentResult) -> None:
    with open(out / "summary.csv", "w", newline="") as fh:
        wr = csv.writer(fh, lineterminator="\n")
        wr.writerow(["fold", "auc"])
        for f, a in res.fold_aucs.items():
            wr.writerow([f, repr(a)])
        wr.writerow(["mean", repr(res.mean_auc)])
    lines = [f"system={cfg.system} seed={cfg.seed}", *res.notes]
    lines += [f"fold {f}: AUC {a:.4f}" for f, a in res.fold_aucs.items()]
    lines.append(format_table_row(cfg.system, res))
    (out / "run.log").write_text("\n".join(lines) + "\n")


def format_table_row(name: str, res: ExperimentResult) -> str:
    """One results-table line: system name, per-fold AUCs in percent, mean."""
    cells = " | ".join(f"{100 * a:6.2f}" for a in res.fold_aucs.values())
    return f"{name:<20} | {cells} | mean {100 * res.mean_auc:6.2f}"


# -- prediction ----------------------------------------------------------------


def inputs_features(model, waves) -> np.ndarray:
    """Feature tensor for ``waves`` as the given checkpointed system sees it."""
    d = model.dims
    frames = framed(waves, d["frames"], d["S"], d["hop"])
    if isinstance(model, Chain):
        return system_features(model, frames)
    return mel_from_frames(frames, d["n_bands"], d["sample_rate"])


def predict_from_features(model, feats: np.ndarray) -> np.ndarray:
    if isinstance(model, Chain):
        return score_features(model, feats)
    return model.predict_proba(stats_embedding(feats))


def features_to_array(reps: list[TimeFreqRepr]) -> np.ndarray:
    shapes = {r.data.shape for r in reps}
    if len(shapes) != 1:
        raise FormatError(f"feature files disagree in shape: {sorted(shapes)}")
    return np.stack([r.data for r in reps])
