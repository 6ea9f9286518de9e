import json
import os

import pytest

from phocconf.cli import main

SMALL = {
    "datagen": {"feature_dim": 24, "lexicon_size": 8, "od_writers": 4, "meta_writers": 4,
                "samples": {"train": 40, "id_test": 12, "od_test": 12, "meta_od": 40}},
    "estimator": {"hidden": [16, 16], "iterations": 100},
    "meta": {"projection_width": 8, "iterations": 60},
    "evaluation": {"dropout_passes": 3, "bins": 10},
}


@pytest.fixture(scope="module")
def workdir(tmp_path_factory):
    d = tmp_path_factory.mktemp("cli")
    cfg = d / "run.json"
    cfg.write_text(json.dumps(SMALL))
    c = ["--config", str(cfg)]
    assert main(["gen", *c, "--out", str(d / "corpus.jsonl")]) == 0
    assert main(["train", *c, "--corpus", str(d / "corpus.jsonl"), "--out", str(d / "est.json")]) == 0
    assert main(["meta", "ti", *c, "--corpus", str(d / "corpus.jsonl"), "--out", str(d / "ti.json")]) == 0
    assert main(["meta", "td", *c, "--corpus", str(d / "corpus.jsonl"), "--estimator", str(d / "est.json"),
                 "--out", str(d / "td.json")]) == 0
    return d, c


def eval_args(d, c, out, **extra):
    args = ["eval", *c, "--corpus", str(d / "corpus.jsonl"), "--estimator", str(extra.get("est", d / "est.json")),
            "--out", str(d / out)]
    if extra.get("ti", True):
        args += ["--ti", str(d / "ti.json")]
    if extra.get("td", True):
        args += ["--td", str(d / "td.json")]
    return args


def test_resolved_configs_written(workdir):
    d, _ = workdir
    for name in ("corpus.jsonl", "est.json", "ti.json", "td.json"):
        resolved = json.loads((d / f"{name}.config.json").read_text())
        assert resolved["estimator"]["hidden"] == [16, 16]
        assert resolved["seed"] == 42


def test_gen_refuses_overwrite(workdir, capsys):
    d, c = workdir
    assert main(["gen", *c, "--out", str(d / "corpus.jsonl")]) == 2
    assert "exists" in capsys.readouterr().err


def test_gen_force_is_identical(workdir, tmp_path):
    d, c = workdir
    out = tmp_path / "again.jsonl"
    assert main(["gen", *c, "--out", str(out)]) == 0
    assert out.read_bytes() == (d / "corpus.jsonl").read_bytes()
    assert main(["gen", *c, "--out", str(out), "--force"]) == 0


def test_seed_flag(workdir, tmp_path):
    d, c = workdir
    out = tmp_path / "s.jsonl"
    assert main(["gen", *c, "--seed", "7", "--out", str(out)]) == 0
    assert out.read_bytes() != (d / "corpus.jsonl").read_bytes()
    assert json.loads((tmp_path / "s.jsonl.config.json").read_text())["seed"] == 7


def test_missing_config(tmp_path, capsys):
    assert main(["gen", "--config", str(tmp_path / "nope.json"), "--out", str(tmp_path / "x")]) == 2
    assert "not found" in capsys.readouterr().err


def test_unknown_config_key(tmp_path):
    cfg = tmp_path / "bad.json"
    cfg.write_text(json.dumps({"estimator": {"depth": 3}}))
    assert main(["gen", "--config", str(cfg), "--out", str(tmp_path / "x")]) == 2


def test_iterations_zero_saves_init(workdir, tmp_path):
    d, c = workdir
    a, b = tmp_path / "a.json", tmp_path / "b.json"
    assert main(["train", *c, "--corpus", str(d / "corpus.jsonl"), "--out", str(a), "--iterations", "0"]) == 0
    assert main(["train", *c, "--corpus", str(d / "corpus.jsonl"), "--out", str(b), "--iterations", "0"]) == 0
    assert a.read_bytes() == b.read_bytes() != (d / "est.json").read_bytes()


def test_corrupted_corpus(workdir, tmp_path, capsys):
    d, c = workdir
    lines = (d / "corpus.jsonl").read_text().splitlines()
    lines[3] = "{not json"
    bad = tmp_path / "bad.jsonl"
    bad.write_text("\n".join(lines) + "\n")
    assert main(["train", *c, "--corpus", str(bad), "--out", str(tmp_path / "e.json")]) == 3
    assert "line 4" in capsys.readouterr().err


def test_ti_needs_no_estimator(workdir):
    d, _ = workdir
    assert (d / "ti.json").exists()


def test_td_without_estimator(workdir, tmp_path):
    d, c = workdir
    assert main(["meta", "td", *c, "--corpus", str(d / "corpus.jsonl"), "--out", str(tmp_path / "t.json")]) == 4


def test_td_digest_refused(workdir, tmp_path):
    d, c = workdir
    assert main(["meta", "td", *c, "--corpus", str(d / "corpus.jsonl"), "--estimator", str(d / "est.json"),
                 "--expect-digest", "0" * 64, "--out", str(tmp_path / "t.json")]) == 4


def test_eval_bundle_and_determinism(workdir):
    d, c = workdir
    assert main(eval_args(d, c, "ev1")) == 0
    assert main(eval_args(d, c, "ev2")) == 0
    files = sorted(os.path.relpath(os.path.join(r, f), d / "ev1") for r, _, fs in os.walk(d / "ev1") for f in fs)
    for m in ("activation", "test_dropout", "ti_meta", "td_meta"):
        for name in ("histogram.csv", "threshold_curve.csv", "wer_curve.csv", "quality_scatter.csv"):
            assert os.path.join(m, name) in files
    for f in (f for f in files if f.endswith(".csv")):
        assert (d / "ev1" / f).read_bytes() == (d / "ev2" / f).read_bytes()
    rows = (d / "ev1" / "summary.csv").read_text().splitlines()
    assert [r.split(",")[0] for r in rows[1:]] == ["activation", "test_dropout", "ti_meta", "td_meta"]


def test_eval_measure_subset(workdir):
    d, c = workdir
    assert main(eval_args(d, c, "ev3", ti=False, td=False) + ["--measures", "activation"]) == 0
    assert len((d / "ev3" / "summary.csv").read_text().splitlines()) == 2


def test_eval_td_missing(workdir):
    d, c = workdir
    assert main(eval_args(d, c, "ev4", td=False)) == 4


def test_eval_td_mismatch(workdir, tmp_path):
    d, c = workdir
    other = tmp_path / "other.json"
    assert main(["train", *c, "--corpus", str(d / "corpus.jsonl"), "--out", str(other), "--iterations", "0"]) == 0
    assert main(eval_args(d, c, "ev5", est=other)) == 4
