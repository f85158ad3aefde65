import hashlib
import json
import shutil
import subprocess
import sys
import time

import pytest
import yaml

from ktm.cli import main
from ktm.config import RunConfig
from ktm.errors import InvalidConfigError

FAST = ["--set", "mdn.epochs=3", "--set", "mdn.hidden_dim=8"]


def digest(path):
    return hashlib.sha256(path.read_bytes()).hexdigest()


@pytest.fixture(scope="module")
def corpus(tmp_path_factory):
    path = tmp_path_factory.mktemp("data") / "corpus.csv"
    assert main(["simulate", "--out", str(path), "--set", "simulate.num_trajectories=30", "--seed", "2"]) == 0
    return path


@pytest.fixture(scope="module")
def model(tmp_path_factory, corpus):
    path = tmp_path_factory.mktemp("model") / "m.ktm"
    assert main(["train", str(corpus), "--out", str(path), *FAST]) == 0
    return path


def test_simulate_defaults(tmp_path, capsys):
    out = tmp_path / "sim.csv"
    assert main(["simulate", "--out", str(out)]) == 0
    lines = out.read_text().splitlines()
    assert lines[0] == "id,t,x,y"
    assert len({line.split(",")[0] for line in lines[1:]}) == 600
    assert "600" in capsys.readouterr().out
    assert (tmp_path / "sim.config.yaml").is_file()


def test_simulate_seed_controls_bytes(tmp_path):
    paths = [tmp_path / f"{name}.csv" for name in ("a", "b", "c")]
    for path, seed in zip(paths, ("1", "1", "2")):
        assert main(["simulate", "--out", str(path), "--seed", seed, "--set", "simulate.num_trajectories=20"]) == 0
    assert digest(paths[0]) == digest(paths[1]) != digest(paths[2])


def test_train_tiny_corpus_quickly_and_reproducibly(tmp_path, capsys):
    corpus = tmp_path / "tiny.csv"
    main(["simulate", "--out", str(corpus), "--set", "simulate.num_trajectories=10"])
    start = time.perf_counter()
    assert main(["train", str(corpus), "--out", str(tmp_path / "a.ktm")]) == 0
    assert time.perf_counter() - start < 60
    out = capsys.readouterr().out
    assert "epoch   80" in out and "epoch    1" in out
    log_lines = (tmp_path / "a.train.log").read_text().splitlines()
    assert log_lines[0] == "epoch,loss" and len(log_lines) == 81
    assert main(["train", str(corpus), "--out", str(tmp_path / "b.ktm")]) == 0
    assert digest(tmp_path / "a.ktm") == digest(tmp_path / "b.ktm")


def test_missing_corpus_exits_2(tmp_path, capsys):
    assert main(["train", str(tmp_path / "nope.csv"), "--out", str(tmp_path / "m.ktm")]) == 2
    assert "not found" in capsys.readouterr().err


def test_malformed_corpus_exits_2(tmp_path, capsys):
    bad = tmp_path / "bad.csv"
    bad.write_text("id,t,x,y\na,0,0,0\na,1,oops,0\n")
    assert main(["train", str(bad), "--out", str(tmp_path / "m.ktm")]) == 2
    assert "line 3" in capsys.readouterr().err


def test_bad_config_value_names_the_key(tmp_path, capsys):
    code = main(["simulate", "--out", str(tmp_path / "x.csv"), "--set", "mdn.num_components=0"])
    assert code == 2
    assert "mdn.num_components" in capsys.readouterr().err
    assert main(["simulate", "--out", str(tmp_path / "x.csv"), "--set", "mdn.bogus=1"]) == 2


def test_config_file_errors_are_path_qualified(tmp_path):
    cfg = tmp_path / "c.yaml"
    cfg.write_text("kernel:\n  ell_df: -3\n")
    with pytest.raises(InvalidConfigError, match="kernel.ell_df"):
        RunConfig.load(cfg)
    cfg.write_text("eval:\n  ratio: 1:1\n")
    with pytest.raises(InvalidConfigError, match="eval.ratio: unknown key"):
        RunConfig.load(cfg)


def test_predict_writes_samples_and_mixture(tmp_path, model, corpus):
    out = tmp_path / "pred"
    assert main(["predict", str(model), str(corpus), "--samples", "4", "--horizon", "7", "--out", str(out)]) == 0
    mixture = json.loads((out / "mixture.json").read_text())
    assert len(mixture["queries"]) == 30
    first = mixture["queries"][0]
    assert abs(sum(first["alphas"]) - 1) < 1e-6
    assert all(q["seconds"] < 0.2 for q in mixture["queries"])
    rows = (out / "samples.csv").read_text().splitlines()
    assert rows[0] == "id,sample,component,t,x,y"
    assert len(rows) - 1 == 30 * 4 * 7


def test_predict_zero_samples_writes_mixture_only(tmp_path, model, corpus):
    out = tmp_path / "pred"
    assert main(["predict", str(model), str(corpus), "--samples", "0", "--out", str(out)]) == 0
    assert (out / "mixture.json").is_file()
    assert not (out / "samples.csv").exists()


def test_predict_is_seeded(tmp_path, model, corpus):
    for name in ("a", "b"):
        main(["predict", str(model), str(corpus), "--samples", "3", "--seed", "4", "--out", str(tmp_path / name)])
    assert digest(tmp_path / "a" / "samples.csv") == digest(tmp_path / "b" / "samples.csv")


def test_predict_rejects_corrupt_model(tmp_path, corpus, capsys):
    junk = tmp_path / "junk.ktm"
    junk.write_bytes(b"not a zip")
    assert main(["predict", str(junk), str(corpus), "--out", str(tmp_path / "p")]) == 2
    assert capsys.readouterr().err


def test_eval_defaults_and_repetitions_flag(tmp_path, corpus):
    assert RunConfig()["eval.repetitions"] == 5
    out = tmp_path / "ev"
    assert main(["eval", str(corpus), "--repetitions", "1", "--out", str(out), *FAST]) == 0
    report = json.loads((out / "report.json").read_text())
    assert report["metadata"]["repetitions"] == 1
    assert all(len(c["per_repetition"]) == 1 for m in report["methods"][:3] for c in m["metrics"])
    assert (out / "report.txt").read_text().splitlines()[0].split() == ["KTM-C", "KTM-W", "CV", "DGM"]


def test_eval_exits_nonzero_when_a_repetition_fails(tmp_path, corpus, capsys):
    code = main(["eval", str(corpus), "--repetitions", "2", "--out", str(tmp_path / "ev"),
                 "--set", "mdn.learning_rate=1e12", "--set", "mdn.epochs=3"])
    assert code == 1
    assert "failed" in capsys.readouterr().err
    report = json.loads((tmp_path / "ev" / "report.json").read_text())
    assert report["failures"]


def test_config_echo_reproduces_outputs(tmp_path, corpus):
    first = tmp_path / "first"
    assert main(["eval", str(corpus), "--repetitions", "2", "--seed", "6", "--out", str(first), *FAST]) == 0
    echoed = yaml.safe_load((first / "config.yaml").read_text())
    assert echoed["seed"] == 6 and echoed["mdn"]["epochs"] == 3 and echoed["eval"]["repetitions"] == 2
    second = tmp_path / "second"
    assert main(["eval", str(corpus), "--config", str(first / "config.yaml"), "--out", str(second)]) == 0
    assert (first / "report.json").read_bytes() == (second / "report.json").read_bytes()


def test_train_config_echo_reproduces_model(tmp_path, corpus):
    a = tmp_path / "a.ktm"
    assert main(["train", str(corpus), "--out", str(a), "--seed", "3", *FAST]) == 0
    b = tmp_path / "b.ktm"
    assert main(["train", str(corpus), "--out", str(b), "--config", str(tmp_path / "a.config.yaml")]) == 0
    assert a.read_bytes() == b.read_bytes()


@pytest.mark.skipif(shutil.which("ktm") is None, reason="console script not installed")
def test_console_script_usage_error():
    proc = subprocess.run(["ktm", "bogus"], capture_output=True, text=True)
    assert proc.returncode == 2


def test_module_entry_point(tmp_path):
    proc = subprocess.run([sys.executable, "-m", "ktm.cli", "simulate", "--out", str(tmp_path / "s.csv"),
                           "--set", "simulate.num_trajectories=4"], capture_output=True, text=True)
    assert proc.returncode == 0, proc.stderr


def test_exponent_literals_are_numbers(tmp_path):
    cfg = tmp_path / "c.yaml"
    cfg.write_text("mdn:\n  learning_rate: 1e-3\n")
    assert RunConfig.load(cfg, ["basis.lambda2=1e4"])["mdn.learning_rate"] == 1e-3
    assert RunConfig.load(cfg, ["basis.lambda2=1e4"])["basis.lambda2"] == 1e4
