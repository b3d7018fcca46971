"""Data ingestion, synthetic corpora, experiment running."""
from .audio import load_wav, write_wav
from .config import ExperimentConfig, load_config, parse_config
from .experiment import Dataset, ExperimentResult, run_experiment
from .manifest import DatasetManifest, Entry, read_manifest, stratified_folds, write_manifest
from .synth import SynthSpec, synth_dataset, synth_waveforms
from .system import Chain, FeatureNorm, build_system, load_system, save_system

__all__ = [
    "Chain", "Dataset", "DatasetManifest", "Entry", "ExperimentConfig", "ExperimentResult",
    "FeatureNorm", "SynthSpec", "build_system", "load_config", "load_system", "load_wav",
    "parse_config", "read_manifest", "run_experiment", "save_system", "stratified_folds",
    "synth_dataset", "synth_waveforms", "write_manifest", "write_wav",
]
