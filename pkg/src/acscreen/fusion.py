"""Score-level fusion and rank-based evaluation.

Each model's scores are z-scored, then linearly mixed with weights on the
probability simplex. Weights are picked by drawing candidates from a symmetric
Dirichlet and keeping the one with the best mean validation-fold AUC.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import AlignmentError, DegenerateLabelError, DegenerateScoresError, FormatError
from .numerics import Rng, sample_dirichlet


@dataclass
class ScoreTable:
    ids: list[str]
    scores: np.ndarray
    labels: np.ndarray | None = None
    model_tag: str = ""

    def __post_init__(self):
        self.ids = [str(i) for i in self.ids]
        self.scores = np.asarray(self.scores, dtype=np.float64)
        if len(set(self.ids)) != len(self.ids):
            raise FormatError(f"duplicate sample ids in table {self.model_tag!r}")
        if self.scores.shape != (len(self.ids),):
            raise FormatError("one score per id required")
        if not np.all(np.isfinite(self.scores)):
            raise FormatError(f"non-finite scores in table {self.model_tag!r}")
        if self.labels is not None:
            self.labels = np.asarray(self.labels, dtype=np.int64)

    def __len__(self):
        return len(self.ids)

    def subset(self, ids: Sequence[str]) -> "ScoreTable":
        pos = {k: i for i, k in enumerate(self.ids)}
        idx = [pos[k] for k in ids]
        labels = None if self.labels is None else self.labels[idx]
        return ScoreTable(list(ids), self.scores[idx], labels, self.model_tag)


@dataclass
class FusionWeights:
    a: np.ndarray
    gamma: float
    n_samples: int
    chosen_auc: float
    draw_index: int = 0


def zscore(v) -> np.ndarray:
    """(v - mean) / std with the population std."""
    v = np.asarray(v, dtype=np.float64)
    if v.size < 2:
        raise DegenerateScoresError("need at least two scores to standardise")
    sd = v.std()
    if sd == 0:
        raise DegenerateScoresError("scores have zero variance")
    return (v - v.mean()) / sd


def _check_labels(labels) -> tuple[np.ndarray, int, int]:
    y = np.asarray(labels)
    n_pos = int(np.sum(y == 1))
    n_neg = int(np.sum(y == 0))
    if n_pos + n_neg != y.size:
        raise DegenerateLabelError("labels must be 0 or 1")
    if n_pos == 0 or n_neg == 0:
        raise DegenerateLabelError("AUC needs both classes")
    return y, n_pos, n_neg


def auc(scores, labels) -> float:
    """Mann-Whitney AUC: P(positive outscores negative), ties counting one half.

    Sorts once and assigns average ranks to tied runs.
    """
    y, n_pos, n_neg = _check_labels(labels)
    s = np.asarray(scores, dtype=np.float64)
    order = np.argsort(s, kind="mergesort")
    ss = s[order]
    # boundaries of runs of equal scores
    starts = np.flatnonzero(np.r_[True, ss[1:] != ss[:-1]])
    ends = np.r_[starts[1:], ss.size]
    avg_rank = (starts + ends + 1) / 2.0  # 1-based mean rank of each run
    ranks = np.empty(ss.size)
    ranks[order] = np.repeat(avg_rank, ends - starts)
    u = ranks[y == 1].sum() - n_pos * (n_pos + 1) / 2.0
    return float(u / (n_pos * n_neg))


def auc_pairwise(scores, labels) -> float:
    """O(N^2) reference: count concordant and tied positive-negative pairs."""
    y, n_pos, n_neg = _check_labels(labels)
    s = np.asarray(scores, dtype=np.float64)
    pos = s[y == 1][:, None]
    neg = s[y == 0][None, :]
    wins = float(np.sum(pos > neg)) + 0.5 * float(np.sum(pos == neg))
    return wins / (n_pos * n_neg)


def _aligned_matrix(tables: Sequence[ScoreTable]) -> tuple[list[str], np.ndarray]:
    """Id order of the first table and an (N, H) matrix of z-scored columns."""
    ref = tables[0].ids
    ref_set = set(ref)
    cols = []
    for t in tables:
        other = set(t.ids)
        if other != ref_set:
            missing = sorted(ref_set - other)
            extra = sorted(other - ref_set)
            raise AlignmentError(
                f"table {t.model_tag!r} id mismatch: missing {missing[:10]}, unexpected {extra[:10]}"
            )
        cols.append(zscore(t.subset(ref).scores))
    return list(ref), np.stack(cols, axis=1)


def fuse(tables: Sequence[ScoreTable], a, tag: str = "fused") -> ScoreTable:
    """Weighted sum of z-scored tables, aligned on the first table's id order."""
    a = np.asarray(getattr(a, "a", a), dtype=np.float64)
    if a.shape != (len(tables),):
        raise AlignmentError(f"{a.size} weights for {len(tables)} tables")
    ids, Z = _aligned_matrix(tables)
    labels = tables[0].subset(ids).labels
    return ScoreTable(ids, Z @ a, labels, tag)


@dataclass
class SearchResult:
    weights: FusionWeights
    draws: np.ndarray  # (n_samples, H)
    mean_aucs: np.ndarray


def mean_fold_auc(fold_mats, a) -> float:
    return float(np.mean([auc(Z @ a, y) for Z, y in fold_mats]))


def search_weights(fold_tables: Sequence[Sequence[ScoreTable]], gamma: float = 0.4,
                   n_samples: int = 500, rng: Rng | None = None) -> SearchResult:
    """Random search over Dir(gamma) weights maximising the mean AUC across folds.

    ``fold_tables[f][h]`` is model ``h``'s labelled table on validation fold ``f``.
    Draw ``i`` uses its own child seed, so the outcome does not depend on evaluation
    order. Ties keep the earliest draw.
    """
    rng = rng or Rng(0)
    if not fold_tables:
        raise AlignmentError("no folds given")
    H = len(fold_tables[0])
    if H < 2:
        raise AlignmentError("fusion needs at least two models")
    fold_mats = []
    for tables in fold_tables:
        if len(tables) != H:
            raise AlignmentError("every fold needs the same number of models")
        ids, Z = _aligned_matrix(tables)
        labels = tables[0].subset(ids).labels
        if labels is None:
            raise DegenerateLabelError("validation tables must carry labels")
        _check_labels(labels)
        fold_mats.append((Z, labels))
    draws = np.stack([sample_dirichlet(gamma, H, rng.derive(i)) for i in range(n_samples)])
    scores = np.array([mean_fold_auc(fold_mats, a) for a in draws])
    best = int(np.argmax(scores))  # first maximum
    w = FusionWeights(draws[best].copy(), gamma, n_samples, float(scores[best]), best)
    return SearchResult(w, draws, scores)


# -- files -----------------------------------------------------------------------


def read_scores(path, model_tag: str | None = None) -> ScoreTable:
    """CSV with header ``id,score`` or ``id,score,label``."""
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    if not rows or rows[0][:2] != ["id", "score"]:
        raise FormatError(f"{path}: expected header id,score[,label]")
    has_label = len(rows[0]) > 2 and rows[0][2] == "label"
    ids, scores, labels = [], [], []
    for n, row in enumerate(rows[1:], start=2):
        if not row:
            continue
        try:
            ids.append(row[0])
            scores.append(float(row[1]))
            if has_label:
                labels.append(int(row[2]))
        except (IndexError, ValueError):
            raise FormatError(f"{path}:{n}: malformed row {row}") from None
    return ScoreTable(ids, np.array(scores), np.array(labels) if has_label else None,
                      model_tag or str(path))


def write_scores(path, table: ScoreTable) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        wr = csv.writer(fh, lineterminator="\n")
        has_label = table.labels is not None
        wr.writerow(["id", "score", "label"] if has_label else ["id", "score"])
        for i, k in enumerate(table.ids):
            row = [k, repr(float(table.scores[i]))]
            if has_label:
                row.append(int(table.labels[i]))
            wr.writerow(row)


def write_fusion_report(path, result: SearchResult, tags: Sequence[str] | None = None) -> None:
    H = result.draws.shape[1]
    names = list(tags) if tags else [f"w{h}" for h in range(H)]
    with open(path, "w", newline="", encoding="utf-8") as fh:
        wr = csv.writer(fh, lineterminator="\n")
        wr.writerow(["draw", *names, "mean_auc"])
        for i, (a, s) in enumerate(zip(result.draws, result.mean_aucs)):
            wr.writerow([i, *[repr(float(v)) for v in a], repr(float(s))])
        w = result.weights
        wr.writerow(["winner", *[repr(float(v)) for v in w.a], repr(w.chosen_auc)])


def is_close_simplex(a, tol: float = 1e-12) -> bool:
    a = np.asarray(a)
    return bool(np.all(a >= 0) and math.isclose(a.sum(), 1.0, abs_tol=tol))
