from .blstm import BlstmClassifier
from .checkpoint import read_checkpoint, write_checkpoint
from .embedding import EmbeddingHead, LogisticRegression, PCA, Standardizer, logreg_train, pca_fit
from .tdnn import TdnnClassifier, receptive_field, stats_pool

__all__ = [
    "BlstmClassifier",
    "TdnnClassifier",
    "EmbeddingHead",
    "LogisticRegression",
    "PCA",
    "Standardizer",
    "logreg_train",
    "pca_fit",
    "read_checkpoint",
    "receptive_field",
    "stats_pool",
    "write_checkpoint",
]
