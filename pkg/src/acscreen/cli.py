"""Command-line entry point: ``acscreen <subcommand> ...``.

Exit status is 0 on success, 1 for usage or configuration mistakes and 2 when
input data cannot be used.
"""
from __future__ import annotations

import argparse
import logging
import sys
import typing
from pathlib import Path

import numpy as np

from .errors import FoldFailedError, FormatError, InvalidConfigError, InvalidParameterError
from .frontend import GaussFilterbank, TimeFreqRepr, dump_centers, read_features, write_centers_csv, write_features
from .fusion import ScoreTable, auc, fuse, read_scores, search_weights, write_fusion_report, write_scores
from .numerics import Rng
from .pipeline.audio import load_wav
from .pipeline.config import ExperimentConfig, convert_value, load_config
from .pipeline.experiment import (common_frames, features_to_array, format_table_row, inputs_features, load_any,
                                  predict_from_features, run_experiment, sample_rate_of)
from .pipeline.manifest import read_manifest
from .pipeline.synth import SynthSpec, synth_dataset
from .pipeline.system import Chain

EXIT_OK, EXIT_USAGE, EXIT_DATA = 0, 1, 2


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _out_dir(args) -> Path:
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    return out


# -- subcommands -----------------------------------------------------------------


def cmd_synth(args) -> int:
    spec = SynthSpec(n_pos=args.n_pos, n_neg=args.n_neg, duration=args.duration,
                     sample_rate=args.sample_rate, separation=args.separation,
                     noise_level=args.noise_level, seed=args.seed, mode=args.mode,
                     modality=args.modality)
    m = synth_dataset(spec, _out_dir(args))
    print(f"wrote {len(m)} clips ({int(m.labels.sum())} positive) to {args.out_dir}/manifest.csv")
    return EXIT_OK


def _gather_inputs(args) -> tuple[list[str], list, np.ndarray | None]:
    if args.manifest:
        m = read_manifest(args.manifest)
        return m.ids, [load_wav(m.resolve(e)) for e in m.entries], m.labels
    if not args.inputs:
        raise UsageError("give WAV files or --manifest")
    return [Path(p).stem for p in args.inputs], [load_wav(p) for p in args.inputs], None


def _feature_model(args, waves):
    if args.checkpoint:
        return load_any(args.checkpoint)
    # plain log-mel with the requested geometry
    T = args.frames or common_frames(waves, args.S, args.hop)

    class _Mel:
        dims = {"n_bands": args.n_bands, "S": args.S, "hop": args.hop, "frames": T,
                "sample_rate": sample_rate_of(waves)}
    return _Mel()


def cmd_features(args) -> int:
    ids, waves, _ = _gather_inputs(args)
    model = _feature_model(args, waves)
    feats = inputs_features(model, waves)
    source = "learned" if isinstance(model, Chain) and model.uses_waveform_frames else "mel"
    out = _out_dir(args)
    for sid, f in zip(ids, feats):
        write_features(out / f"{sid}.csv", TimeFreqRepr(f, source))
    print(f"wrote {len(ids)} feature files ({feats.shape[1]}x{feats.shape[2]}) to {out}")
    return EXIT_OK


def _parse_overrides(pairs) -> dict:
    hints = typing.get_type_hints(ExperimentConfig)
    out = {}
    for p in pairs or []:
        if "=" not in p:
            raise UsageError(f"--set expects key=value, got {p!r}")
        k, v = (s.strip() for s in p.split("=", 1))
        if k not in hints:
            raise UsageError(f"unknown config key {k!r}")
        out[k] = convert_value(k, v, hints[k])
    return out


def cmd_train(args) -> int:
    overrides = _parse_overrides(args.set)
    overrides["seed"] = args.seed
    if args.manifest:
        overrides["manifest"] = str(Path(args.manifest).resolve())
    cfg = load_config(args.config, **overrides)
    res = run_experiment(cfg, _out_dir(args))
    for note in res.notes:
        print(note)
    for f, a in res.fold_aucs.items():
        print(f"fold {f}: AUC {a:.4f}")
    print(format_table_row(cfg.system, res))
    return EXIT_OK


def cmd_predict(args) -> int:
    model = load_any(args.checkpoint)
    labels = None
    if args.features:
        ids = [Path(p).stem for p in args.features]
        feats = features_to_array([read_features(p) for p in args.features])
    else:
        ids, waves, labels = _gather_inputs(args)
        feats = inputs_features(model, waves)
    scores = predict_from_features(model, feats)
    table = ScoreTable(ids, scores, labels, Path(args.checkpoint).stem)
    out = _out_dir(args) / "scores.csv"
    write_scores(out, table)
    for sid, s in zip(ids, scores):
        print(f"{sid},{float(s)!r}")
    return EXIT_OK


def _fold_tables(source: str, tag: str) -> dict[str, ScoreTable]:
    """A run directory gives one table per ``fold*/scores.csv``; a CSV is a single fold."""
    p = Path(source)
    if p.is_dir():
        files = sorted(p.glob("fold*/scores.csv"), key=lambda q: int(q.parent.name[4:]))
        if not files:
            raise FileNotFoundError(f"{p}: no fold*/scores.csv found")
        return {q.parent.name: read_scores(q, tag) for q in files}
    return {"fold0": read_scores(p, tag)}


def cmd_fuse(args) -> int:
    if len(args.runs) < 2:
        raise UsageError("fusion needs at least two runs")
    tags = [Path(r).name for r in args.runs]
    per_model = [_fold_tables(r, t) for r, t in zip(args.runs, tags)]
    folds = sorted(set.intersection(*[set(m) for m in per_model]), key=lambda s: int(s[4:]))
    if not folds:
        raise FileNotFoundError("the runs share no fold")
    fold_tables = [[m[f] for m in per_model] for f in folds]
    res = search_weights(fold_tables, args.gamma, args.samples, Rng(args.seed))
    out = _out_dir(args)
    write_fusion_report(out / "fusion_report.csv", res, tags)
    fused = [fuse(t, res.weights.a) for t in fold_tables]
    for f, t in zip(folds, fused):
        write_scores(out / f"fused_{f}.csv", t)
    if args.apply:
        if len(args.apply) != len(tags):
            raise UsageError("--apply needs one score table per run, in the same order")
        test = fuse([read_scores(p, t) for p, t in zip(args.apply, tags)], res.weights.a)
        write_scores(out / "fused_test.csv", test)
    w = ", ".join(f"{t}={v:.4f}" for t, v in zip(tags, res.weights.a))
    print(f"weights: {w}")
    print(f"mean fold AUC {res.weights.chosen_auc:.4f} (draw {res.weights.draw_index} of {args.samples})")
    return EXIT_OK


def cmd_eval_auc(args) -> int:
    t = read_scores(args.scores)
    if t.labels is None:
        raise FormatError(f"{args.scores}: no label column")
    print(f"{auc(t.scores, t.labels):.4f}")
    return EXIT_OK


def cmd_dump_centers(args) -> int:
    if args.checkpoint:
        model = load_any(args.checkpoint)
        if not (isinstance(model, Chain) and model.uses_waveform_frames):
            raise UsageError(f"{args.checkpoint} has no learnable filter-bank")
        fb, sr = model.stage("frontend"), model.dims["sample_rate"]
    else:
        fb, sr = GaussFilterbank.mel_init(args.n_bands, args.sample_rate, args.k), args.sample_rate
    pairs = dump_centers(fb.mu, sr)
    write_centers_csv(_out_dir(args) / "centers.csv", pairs)
    for i, hz in pairs:
        print(f"{i},{hz:.2f}")
    return EXIT_OK


# -- parser ----------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=0)
    common.add_argument("--out-dir", default=".")
    common.add_argument("-v", "--verbose", action="store_true")

    p = _Parser(prog="acscreen", description="Acoustic screening experiments.")
    sub = p.add_subparsers(dest="command", parser_class=_Parser, metavar="command")

    s = sub.add_parser("synth", parents=[common], help="write a synthetic WAV corpus and manifest")
    s.add_argument("--n-pos", type=int, default=43)
    s.add_argument("--n-neg", type=int, default=207)
    s.add_argument("--duration", type=float, default=0.3)
    s.add_argument("--sample-rate", type=int, default=44100)
    s.add_argument("--separation", type=float, default=1.0)
    s.add_argument("--noise-level", type=float, default=0.5)
    s.add_argument("--mode", choices=("default", "mismatch"), default="default")
    s.add_argument("--modality", choices=("breathing", "cough", "speech"), default="speech")
    s.set_defaults(func=cmd_synth)

    def add_inputs(q):
        q.add_argument("inputs", nargs="*", help="WAV files")
        q.add_argument("--manifest")

    s = sub.add_parser("features", parents=[common], help="dump time-frequency features per clip")
    add_inputs(s)
    s.add_argument("--checkpoint", help="use this model's front-end and frame count")
    s.add_argument("--n-bands", type=int, default=64)
    s.add_argument("--S", type=int, default=1102)
    s.add_argument("--hop", type=int, default=441)
    s.add_argument("--frames", type=int, default=0)
    s.set_defaults(func=cmd_features)

    s = sub.add_parser("train", parents=[common], help="cross-validated training from a config file")
    s.add_argument("config")
    s.add_argument("--manifest", help="overrides manifest= in the config")
    s.add_argument("--set", action="append", metavar="KEY=VALUE", help="override a config key")
    s.set_defaults(func=cmd_train)

    s = sub.add_parser("predict", parents=[common], help="score clips or feature files with a checkpoint")
    add_inputs(s)
    s.add_argument("--checkpoint", required=True)
    s.add_argument("--features", nargs="+", help="feature files written by `features`")
    s.set_defaults(func=cmd_predict)

    s = sub.add_parser("fuse", parents=[common], help="Dirichlet random search for fusion weights")
    s.add_argument("runs", nargs="+", help="run directories (fold*/scores.csv) or score CSVs")
    s.add_argument("--gamma", type=float, default=0.4)
    s.add_argument("--samples", type=int, default=500)
    s.add_argument("--apply", nargs="+", help="held-out tables, one per run, to fuse with the chosen weights")
    s.set_defaults(func=cmd_fuse)

    s = sub.add_parser("eval-auc", parents=[common], help="AUC of a labelled score table")
    s.add_argument("scores")
    s.set_defaults(func=cmd_eval_auc)

    s = sub.add_parser("dump-centers", parents=[common], help="filter-bank centre frequencies as CSV")
    s.add_argument("--checkpoint")
    s.add_argument("--n-bands", type=int, default=64)
    s.add_argument("--sample-rate", type=int, default=44100)
    s.add_argument("--k", type=int, default=353)
    s.set_defaults(func=cmd_dump_centers)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:  # --help or a usage error; report the code instead of exiting
        return int(exc.code or 0)
    if args.command is None:
        parser.print_help(sys.stderr)
        return EXIT_USAGE
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (UsageError, InvalidConfigError, InvalidParameterError) as exc:
        print(f"acscreen {args.command}: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (ValueError, OSError, FoldFailedError) as exc:
        print(f"acscreen {args.command}: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
