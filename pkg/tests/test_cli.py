import numpy as np
import pytest

from acscreen.cli import main
from acscreen.frontend import init_centers_mel
from acscreen.fusion import read_scores

TINY = ["--set", "n_bands=8", "--set", "hidden=6", "--set", "fc_hidden=6", "--set", "epochs=2"]


@pytest.fixture(scope="module")
def corpus(tmp_path_factory):
    root = tmp_path_factory.mktemp("cli")
    data = root / "data"
    assert main(["synth", "--n-pos", "10", "--n-neg", "15", "--duration", "0.1", "--out-dir", str(data)]) == 0
    (root / "base.cfg").write_text("system=baseline\nmanifest=data/manifest.csv\n")
    (root / "learned.cfg").write_text("system=cosgauss-relevance\nmanifest=data/manifest.csv\n"
                                      "rel_context=2\nrel_hidden=3\n")
    assert main(["train", str(root / "base.cfg"), "--out-dir", str(root / "run_base"), *TINY]) == 0
    assert main(["train", str(root / "learned.cfg"), "--out-dir", str(root / "run_learned"), *TINY]) == 0
    return root


def lines(capsys):
    return capsys.readouterr().out.strip().splitlines()


def test_eval_auc_worked_example(tmp_path, capsys):
    (tmp_path / "s.csv").write_text("id,score,label\na,0.1,0\nb,0.4,0\nc,0.35,1\nd,0.8,1\n")
    assert main(["eval-auc", str(tmp_path / "s.csv")]) == 0
    assert lines(capsys) == ["0.7500"]


def test_eval_auc_needs_labels(tmp_path):
    (tmp_path / "s.csv").write_text("id,score\na,0.1\nb,0.4\n")
    assert main(["eval-auc", str(tmp_path / "s.csv")]) == 2


def test_dump_centers_fresh(tmp_path, capsys):
    assert main(["dump-centers", "--n-bands", "16", "--out-dir", str(tmp_path)]) == 0
    out = lines(capsys)
    hz = [float(r.split(",")[1]) for r in out]
    np.testing.assert_allclose(hz, init_centers_mel(16, 44100) * 44100, atol=0.01)
    assert (tmp_path / "centers.csv").read_text().splitlines()[0] == "index,hz"


def test_dump_centers_from_checkpoint(corpus, capsys):
    ckpt = corpus / "run_learned" / "fold0" / "model.ckpt"
    assert main(["dump-centers", "--checkpoint", str(ckpt), "--out-dir", str(corpus / "dc")]) == 0
    assert len(lines(capsys)) == 8
    # the mel baseline has no filter-bank to dump
    assert main(["dump-centers", "--checkpoint", str(corpus / "run_base" / "fold0" / "model.ckpt")]) == 1


def test_train_outputs(corpus):
    log = (corpus / "run_base" / "run.log").read_text()
    assert "system=baseline" in log and "48" not in log.split("\n")[0]
    for f in range(5):
        assert (corpus / "run_base" / f"fold{f}" / "scores.csv").exists()


@pytest.mark.parametrize("run", ["run_base", "run_learned"])
def test_features_then_predict_matches_direct(corpus, run, capsys):
    ckpt = corpus / run / "fold1" / "model.ckpt"
    manifest = corpus / "data" / "manifest.csv"
    feat_dir, direct, via = corpus / f"feat_{run}", corpus / f"direct_{run}", corpus / f"via_{run}"
    assert main(["features", "--manifest", str(manifest), "--checkpoint", str(ckpt), "--out-dir", str(feat_dir)]) == 0
    assert main(["predict", "--manifest", str(manifest), "--checkpoint", str(ckpt), "--out-dir", str(direct)]) == 0
    files = sorted(str(p) for p in feat_dir.glob("*.csv"))
    assert main(["predict", "--features", *files, "--checkpoint", str(ckpt), "--out-dir", str(via)]) == 0
    a, b = read_scores(direct / "scores.csv"), read_scores(via / "scores.csv")
    assert a.ids == b.ids and a.scores.tobytes() == b.scores.tobytes()
    capsys.readouterr()


def test_features_mel_without_checkpoint(corpus, capsys):
    out = corpus / "mel"
    assert main(["features", "--manifest", str(corpus / "data" / "manifest.csv"), "--n-bands", "12",
                 "--out-dir", str(out)]) == 0
    assert len(list(out.glob("*.csv"))) == 25
    assert "12x" in lines(capsys)[-1]


def test_fuse(corpus, capsys):
    out = corpus / "fused"
    args = ["fuse", str(corpus / "run_base"), str(corpus / "run_learned"), "--samples", "20", "--out-dir", str(out)]
    assert main(args) == 0
    first = (out / "fusion_report.csv").read_bytes()
    assert (out / "fused_fold0.csv").exists() and "mean fold AUC" in lines(capsys)[-1]
    assert main(args) == 0
    assert (out / "fusion_report.csv").read_bytes() == first


def test_fuse_apply(corpus, capsys):
    out = corpus / "fused_apply"
    a, b = corpus / "run_base" / "fold0" / "scores.csv", corpus / "run_learned" / "fold0" / "scores.csv"
    assert main(["fuse", str(corpus / "run_base"), str(corpus / "run_learned"), "--samples", "5",
                 "--apply", str(a), str(b), "--out-dir", str(out)]) == 0
    assert len(read_scores(out / "fused_test.csv")) == len(read_scores(a))
    assert main(["fuse", str(corpus / "run_base"), "--out-dir", str(out)]) == 1


@pytest.mark.parametrize("argv, code", [
    ([], 1),
    (["frobnicate"], 1),
    (["eval-auc"], 1),
    (["eval-auc", "/nonexistent/s.csv"], 2),
    (["predict", "--checkpoint", "/nonexistent/m.ckpt", "x.wav"], 2),
    (["fuse", "--gamma", "abc", "a", "b"], 1),
])
def test_exit_codes(argv, code, capsys):
    assert main(argv) == code
    capsys.readouterr()


def test_bad_config_key(corpus, tmp_path):
    (tmp_path / "bad.cfg").write_text("sytem=baseline\n")
    assert main(["train", str(tmp_path / "bad.cfg")]) == 1
    assert main(["train", str(corpus / "base.cfg"), "--set", "colour=red"]) == 1


def test_corrupt_wav_is_data_error(tmp_path, capsys):
    (tmp_path / "x.wav").write_bytes(b"not audio")
    assert main(["features", str(tmp_path / "x.wav"), "--out-dir", str(tmp_path)]) == 2
