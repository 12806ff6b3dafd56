import json

import numpy as np
import pytest

from maskrnn import cli
from maskrnn import data as D

SMALL = {
    "seed": 3,
    "model": {"segnet": {"blocks": [[1, 4], [1, 8], [1, 8]]}, "loc": {"fc_width": 16, "roi_grid": 3}},
    "train": {"window": 2, "online_iterations": 3},
}


def run(*argv):
    return cli.main([str(a) for a in argv])


@pytest.fixture(scope="module")
def work(tmp_path_factory):
    root = tmp_path_factory.mktemp("cli")
    (root / "small.json").write_text(json.dumps(SMALL))
    corpus = root / "corpus"
    assert run("synth", "--out", corpus, "--train-videos", 2, "--test-videos", 1, "--width", 32, "--height", 32,
               "--frames", 4, "--seed", 5) == 0
    test_seq = [s["name"] for s in json.loads((corpus / "manifest.json").read_text())["sequences"]
                if s.get("split") == "test"][0]
    return root, corpus, test_seq


def _train(root, corpus, out, stage="static", init=None):
    args = ["train", "--config", root / "small.json", "--stage", stage, "--data", corpus, "--out", out,
            "--epochs", 1, "--threads", 1]
    if init:
        args += ["--init", init]
    return run(*args)


def test_synth_layout(work):
    root, corpus, seq = work
    assert (corpus / "JPEGImages" / seq / "00000.jpg").exists() or (corpus / "JPEGImages" / seq / "00000.png").exists()
    assert (corpus / "Annotations" / seq / "00000.png").exists()
    manifest = json.loads((corpus / "run.json").read_text())
    assert manifest["command"] == "synth" and manifest["seed"] == 5


def test_train_finetune_infer_deterministic(work, tmp_path):
    root, corpus, seq = work
    for tag in ("a", "b"):
        assert _train(root, corpus, tmp_path / f"s_{tag}.ckpt") == 0
        assert _train(root, corpus, tmp_path / f"r_{tag}.ckpt", "recurrent", tmp_path / f"s_{tag}.ckpt") == 0
        assert run("finetune", "--video", corpus / "JPEGImages" / seq, "--ckpt", tmp_path / f"r_{tag}.ckpt",
                   "--out", tmp_path / f"f_{tag}.ckpt", "--threads", 1) == 0
        assert run("infer", "--video", corpus, "--seq", seq, "--ckpt", tmp_path / f"f_{tag}.ckpt",
                   "--out", tmp_path / f"pred_{tag}", "--threads", 1) == 0
    for name in ("s", "r", "f"):
        assert (tmp_path / f"{name}_a.ckpt").read_bytes() == (tmp_path / f"{name}_b.ckpt").read_bytes()
    pngs = sorted(p.name for p in (tmp_path / "pred_a").glob("*.png"))
    assert len(pngs) == 4
    for n in pngs:
        assert (tmp_path / "pred_a" / n).read_bytes() == (tmp_path / "pred_b" / n).read_bytes()
    assert (tmp_path / "pred_a/boxes.json").read_bytes() == (tmp_path / "pred_b/boxes.json").read_bytes()
    manifest = json.loads((tmp_path / "pred_a/run.json").read_text())
    assert manifest["seed"] == 3
    assert len(manifest["timing"]["per_frame"]) == 4
    assert manifest["config"]["model"]["segnet"]["blocks"] == SMALL["model"]["segnet"]["blocks"]


def test_infer_keeps_first_frame_and_label_ids(work, tmp_path):
    root, corpus, seq = work
    ckpt = tmp_path / "s.ckpt"
    assert _train(root, corpus, ckpt) == 0
    assert run("infer", "--video", corpus / "JPEGImages" / seq, "--ckpt", ckpt, "--out", tmp_path / "pred") == 0
    first = D.load_label_png(tmp_path / "pred/00000.png")
    np.testing.assert_array_equal(first, D.load_label_png(corpus / "Annotations" / seq / "00000.png"))


def test_eval_writes_report_table_and_figure(work, tmp_path, capsys):
    root, corpus, seq = work
    gt = corpus / "Annotations" / seq
    # ground truth scored against itself
    assert run("eval", "--pred", gt, "--gt", gt, "--report", tmp_path / "rep" / "report.json") == 0
    out = capsys.readouterr().out
    assert "Mean M" in out and "Decay D" in out
    rep = json.loads((tmp_path / "rep/report.json").read_text())
    assert rep["J"]["mean"] == 1.0 and rep["F"]["mean"] == 1.0
    assert (tmp_path / "rep/report.png").stat().st_size > 0


def test_eval_missing_prediction_frames(work, tmp_path):
    root, corpus, seq = work
    gt = corpus / "Annotations" / seq
    pred = tmp_path / "pred"
    pred.mkdir()
    (pred / "00000.png").write_bytes((gt / "00000.png").read_bytes())
    assert run("eval", "--pred", pred, "--gt", gt, "--report", tmp_path / "r.json") == cli.EXIT_DATA


def test_overlay(work, tmp_path):
    root, corpus, seq = work
    out = tmp_path / "ov"
    assert run("overlay", "--video", corpus, "--seq", seq, "--masks", corpus / "Annotations" / seq, "--out", out) == 0
    assert len(list(out.glob("*.png"))) == 4


def test_ablate_quick(tmp_path, capsys):
    out = tmp_path / "abl"
    assert run("ablate", "--quick", "--seeds", 1, "--toggles", "AStream,+FStream", "--out", out) == 0
    assert "AStream" in capsys.readouterr().out
    doc = json.loads((out / "ablation.json").read_text())
    assert doc["rows"] == ["AStream", "+FStream"]
    assert (out / "ablation.png").stat().st_size > 0


@pytest.mark.parametrize(
    "argv",
    [
        [],
        ["train", "--stage", "bogus", "--data", "x", "--out", "y"],
        ["ablate", "--toggles", "+Nothing", "--out", "z"],
        ["infer", "--video", "x"],
    ],
)
def test_usage_errors(argv, capsys):
    assert run(*argv) == cli.EXIT_USAGE
    err = capsys.readouterr().err.strip().splitlines()
    assert err[-1].startswith("error=usage reason=")


def test_unknown_config_keys(work, tmp_path):
    root, corpus, _ = work
    for bad in ({"bogus": 1}, {"model": {"bogus": 1}}, {"train": {"epochz": 1}}, {"train": {"epochs": -1}}):
        cfg = tmp_path / "bad.json"
        cfg.write_text(json.dumps(bad))
        assert run("train", "--config", cfg, "--stage", "static", "--data", corpus, "--out", tmp_path / "x") == 1


def test_data_errors(work, tmp_path, capsys):
    root, corpus, seq = work
    assert run("infer", "--video", tmp_path / "nowhere", "--ckpt", "x", "--out", tmp_path / "p") == cli.EXIT_DATA
    ckpt = tmp_path / "s.ckpt"
    assert _train(root, corpus, ckpt) == 0
    trunc = tmp_path / "t.ckpt"
    trunc.write_bytes(ckpt.read_bytes()[:20])
    assert run("infer", "--video", corpus, "--seq", seq, "--ckpt", trunc, "--out", tmp_path / "p") == cli.EXIT_DATA
    assert "error=data" in capsys.readouterr().err


def test_numeric_failure(work, tmp_path, capsys):
    root, corpus, _ = work
    with pytest.warns(RuntimeWarning):
        code = run("train", "--config", root / "small.json", "--stage", "static", "--data", corpus,
                   "--out", tmp_path / "n.ckpt", "--learning-rate", 1e30, "--epochs", 2)
    assert code == cli.EXIT_NUMERIC
    assert capsys.readouterr().err.strip().splitlines()[-1].startswith("error=numeric")
    assert not (tmp_path / "n.ckpt").exists()


def test_flags_override_config(work, tmp_path):
    root, corpus, _ = work
    out = tmp_path / "m.json"
    assert run("train", "--config", root / "small.json", "--stage", "static", "--data", corpus,
               "--out", tmp_path / "c.ckpt", "--epochs", 1, "--seed", 11, "--manifest", out) == 0
    doc = json.loads(out.read_text())
    assert doc["seed"] == 11 and doc["config"]["train"]["epochs"] == 1
    assert doc["config"]["train"]["window"] == 2
