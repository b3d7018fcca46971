"""Dataset manifests (``id,path,label,modality,fold``) and stratified folds."""
from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from ..errors import FormatError
from ..numerics import Rng

MODALITIES = ("breathing", "cough", "speech")
HEADER = ["id", "path", "label", "modality", "fold"]


@dataclass(frozen=True)
class Entry:
    sample_id: str
    path: str
    label: int
    modality: str
    fold: int


@dataclass
class DatasetManifest:
    entries: list[Entry]
    root: Path = Path(".")

    def __post_init__(self):
        ids = [e.sample_id for e in self.entries]
        if len(set(ids)) != len(ids):
            raise FormatError("manifest ids must be unique")

    def __len__(self):
        return len(self.entries)

    @property
    def ids(self) -> list[str]:
        return [e.sample_id for e in self.entries]

    @property
    def labels(self) -> np.ndarray:
        return np.array([e.label for e in self.entries], dtype=np.int64)

    @property
    def folds(self) -> np.ndarray:
        return np.array([e.fold for e in self.entries], dtype=np.int64)

    def resolve(self, e: Entry) -> Path:
        p = Path(e.path)
        return p if p.is_absolute() else self.root / p

    def filter(self, modality: str | None) -> "DatasetManifest":
        if modality is None:
            return self
        return DatasetManifest([e for e in self.entries if e.modality == modality], self.root)


def stratified_folds(labels, n_folds: int, rng: Rng) -> np.ndarray:
    """Fold index per sample; each class is shuffled and dealt round-robin."""
    labels = np.asarray(labels)
    folds = np.empty(labels.size, dtype=np.int64)
    offset = 0
    for cls in (1, 0):
        idx = np.flatnonzero(labels == cls)
        idx = idx[rng.permutation(idx.size)]
        folds[idx] = (np.arange(idx.size) + offset) % n_folds
        offset += idx.size
    return folds


def read_manifest(path) -> DatasetManifest:
    path = Path(path)
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    if not rows or rows[0] != HEADER:
        raise FormatError(f"{path}: expected header {','.join(HEADER)}")
    entries = []
    for n, row in enumerate(rows[1:], start=2):
        if not row:
            continue
        try:
            sid, p, label, modality, fold = row
            entries.append(Entry(sid, p, int(label), modality, int(fold)))
        except ValueError:
            raise FormatError(f"{path}:{n}: malformed row {row}") from None
        if entries[-1].label not in (0, 1):
            raise FormatError(f"{path}:{n}: label must be 0 or 1")
    return DatasetManifest(entries, path.parent)


def write_manifest(path, manifest: DatasetManifest) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        wr = csv.writer(fh, lineterminator="\n")
        wr.writerow(HEADER)
        for e in manifest.entries:
            wr.writerow([e.sample_id, e.path, e.label, e.modality, e.fold])
