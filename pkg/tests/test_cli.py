import json
import subprocess
import sys

import numpy as np
import pytest

from svmpool import io
from svmpool.cli import CliError, load_config, main

SPEC = "classes=3\nsequences_per_class=6\nn_frames=20\np=12\nseed=2\n"


def run(*argv):
    return main([str(a) for a in argv])


@pytest.fixture
def dataset(tmp_path):
    (tmp_path / "spec.txt").write_text(SPEC)
    assert run("synth", "--spec-file", tmp_path / "spec.txt", "--out-dir", tmp_path / "data") == 0
    return tmp_path / "data"


def test_unknown_flag_exits_with_usage_error():
    proc = subprocess.run([sys.executable, "-m", "svmpool", "pool", "--frobnicate"],
                          capture_output=True, text=True)
    assert proc.returncode == 2
    assert "unrecognized arguments" in proc.stderr or "required" in proc.stderr


def test_gradcheck_exit_status(capsys):
    assert run("gradcheck", "--seed", 1, "--instances", 3) == 0
    assert "3/3 instances within 0.001" in capsys.readouterr().out
    assert run("gradcheck", "--seed", 1, "--instances", 2, "--tol", 1e-30) == 1


def test_config_unknown_key(tmp_path, capsys):
    (tmp_path / "c.txt").write_text("eta = 0.5  # fine\nfoo=1\n")
    with pytest.raises(CliError, match=r"c.txt:2: unknown key 'foo' in line 'foo=1'"):
        load_config(tmp_path / "c.txt")


def test_config_values_and_overrides(tmp_path):
    (tmp_path / "c.txt").write_text("# comment\neta=0.5\nc1=3\nnormalize_descriptor=false\nkernel=chi2\nperiod=0.5\n")
    cfg, ker = load_config(tmp_path / "c.txt", eta=0.25)
    assert cfg.eta == 0.25 and cfg.c1 == 3.0 and cfg.normalize_descriptor is False
    assert ker.kernel == "chi2" and ker.period == 0.5
    assert load_config(None)[1] is None


def test_errors_are_one_line(tmp_path, capsys):
    (tmp_path / "bad.svmp").write_bytes(b"JUNKJUNKJUNKJUNK")
    (tmp_path / "m.csv").write_text("bad.svmp,1\n")
    assert run("baseline", "--manifest", tmp_path / "m.csv", "--method", "avg", "--out", tmp_path / "o") == 1
    err = capsys.readouterr().err
    assert err.startswith("error: bad-magic: ") and err.count("\n") == 1


def test_missing_manifest_entry_is_reported(tmp_path, capsys):
    (tmp_path / "m.csv").write_text("nope.svmp,1\n")
    assert run("baseline", "--manifest", tmp_path / "m.csv", "--method", "avg", "--out", tmp_path / "o") == 1
    assert "error: manifest:" in capsys.readouterr().err


def test_synth_writes_manifests(dataset):
    assert len(io.read_manifest(dataset / "manifest.csv")) == 18
    tr, te = io.read_manifest(dataset / "train.csv"), io.read_manifest(dataset / "test.csv")
    assert len(tr) + len(te) == 18 and not {p for p, _ in tr} & {p for p, _ in te}


def test_pool_train_eval_flow(dataset, tmp_path, capsys):
    d = dataset
    assert run("gen-negatives", "--from-manifest", d / "train.csv", "--count", 40, "--out", tmp_path / "neg.svmp") == 0
    for split in ("train", "test"):
        assert run("pool", "--manifest", d / f"{split}.csv", "--neg", tmp_path / "neg.svmp",
                   "--algo", "tune", "--eta", 0.2, "--out", tmp_path / f"{split}.svmp") == 0
    report = (tmp_path / "train.svmp.report.csv").read_text().splitlines()
    assert report[0] == "sequence_id,feasible,objective,iterations,error"
    assert len(report) == 1 + len(io.read_manifest(d / "train.csv"))
    assert run("train", "--desc", tmp_path / "train.svmp", "--out", tmp_path / "model.json") == 0
    capsys.readouterr()
    assert run("eval", "--desc", tmp_path / "test.svmp", "--model", tmp_path / "model.json",
               "--report", tmp_path / "eval.txt") == 0
    out = capsys.readouterr().out
    assert out.startswith("accuracy ") and out == (tmp_path / "eval.txt").read_text()
    doc = json.loads((tmp_path / "eval.txt.json").read_text())
    assert np.asarray(doc["confusion"]).sum() == doc["n"] and doc["classes"] == [1, 2, 3]


def test_baseline_and_kernel_pooling(dataset, tmp_path):
    d = dataset
    assert run("baseline", "--manifest", d / "manifest.csv", "--method", "max", "--out", tmp_path / "max.svmp") == 0
    assert io.read_descriptors(tmp_path / "max.svmp").descriptors.shape == (18, 12)
    # the kernel map needs nonnegative inputs; the synthetic bags are signed
    assert run("gen-negatives", "--from-manifest", d / "manifest.csv", "--count", 30, "--rectify",
               "--out", tmp_path / "neg.svmp") == 0
    assert run("pool", "--manifest", d / "manifest.csv", "--neg", tmp_path / "neg.svmp",
               "--kernel", "chi2", "--out", tmp_path / "k.svmp") == 1


def test_corpus_negatives(tmp_path):
    io.write_matrix(np.arange(20.0).reshape(10, 2), tmp_path / "corpus.svmp")
    assert run("gen-negatives", "--corpus", tmp_path / "corpus.svmp", "--count", 4, "--out", tmp_path / "n.svmp") == 0
    assert io.read_matrix(tmp_path / "n.svmp").shape == (4, 2)


def test_bench_writes_csv(dataset, tmp_path, capsys):
    run("gen-negatives", "--from-manifest", dataset / "manifest.csv", "--count", 40, "--out", tmp_path / "neg.svmp")
    assert run("bench", "--manifest", dataset / "manifest.csv", "--neg", tmp_path / "neg.svmp",
               "--eta", 0.2, "--limit", 3, "--out", tmp_path / "b.csv") == 0
    rows = (tmp_path / "b.csv").read_text().splitlines()
    assert rows[0].startswith("algorithm,bags") and rows[1].startswith("alternating,3")


def test_pipeline_runs_are_byte_identical(dataset, tmp_path):
    outs = []
    for k in range(2):
        w = tmp_path / f"run{k}"
        w.mkdir()
        run("gen-negatives", "--from-manifest", dataset / "manifest.csv", "--count", 40, "--seed", 5,
            "--out", w / "neg.svmp")
        run("pool", "--manifest", dataset / "manifest.csv", "--neg", w / "neg.svmp", "--eta", 0.2,
            "--out", w / "d.svmp")
        outs.append([(w / n).read_bytes() for n in ("neg.svmp", "d.svmp", "d.svmp.labels.csv", "d.svmp.report.csv")])
    assert outs[0] == outs[1]
