import hashlib
import json
import subprocess
import sys

import numpy as np
import pytest

from conftest import run_cli, run_pipeline
from graphret import dataset, graph, model


@pytest.fixture(scope="module")
def pipeline(tmp_path_factory):
    return run_pipeline(tmp_path_factory.mktemp("pipe"), epochs=15)


def sha(p):
    return hashlib.sha256(p.read_bytes()).hexdigest()


def test_pipeline_outputs(pipeline, capsys):
    rep = json.loads(pipeline["report"].read_text())
    assert 0 <= rep["map_k"] <= 1 and 0 <= rep["mmv_k"] <= 1
    assert rep["k"] == 5
    header = pipeline["losses"].read_text().splitlines()[0]
    assert header == "epoch,recon,kl,gen,disc,total"
    assert len(pipeline["losses"].read_text().splitlines()) == 16
    assert pipeline["csv"].read_text().startswith("metric,k,value\nmap,5,")


def test_synth_default_shape(tmp_path, capsys):
    assert run_cli("synth", "--seed", 1, "--out", tmp_path / "s.grfd") == 0
    ds = dataset.load_binary(tmp_path / "s.grfd")
    assert (ds.n, ds.d, ds.n_classes) == (400, 64, 4)
    assert ds.split_counts() == {"train": 280, "val": 40, "test": 80, "unassigned": 0}
    assert "n=400" in capsys.readouterr().out


def test_ingest_with_split(tmp_path, capsys):
    src = dataset.synth_clusters(20, 2, 3, 5.0, 1.0, seed=0)
    dataset.save_csv(src, tmp_path / "x.csv")
    assert run_cli("ingest", "--csv", tmp_path / "x.csv", "--out", tmp_path / "x.grfd",
                   "--split", "0.7,0.1,0.2", "--seed", 7) == 0
    ds = dataset.load_binary(tmp_path / "x.grfd")
    assert ds.split_counts() == {"train": 28, "val": 4, "test": 8, "unassigned": 0}
    assert "ingested" in capsys.readouterr().out


def test_missing_input_exit_2(tmp_path, capsys):
    missing = tmp_path / "nope.csv"
    assert run_cli("ingest", "--csv", missing, "--out", tmp_path / "o.grfd") == 2
    assert str(missing) in capsys.readouterr().err


def test_k_too_large_exit_2(tmp_path, capsys):
    run_cli("synth", "--classes", 2, "--per-class", 5, "--dim", 3, "--out", tmp_path / "d.grfd")
    code = run_cli("build-graph", "--dataset", tmp_path / "d.grfd", "--k", 10, "--out", tmp_path / "g.grfg")
    assert code == 2
    assert "k=10" in capsys.readouterr().err
    assert not (tmp_path / "g.grfg").exists()


def test_bad_magic_exit_3(pipeline, tmp_path):
    for key, flag in [("index", "--index"), ("ckpt", "--ckpt")]:
        bad = tmp_path / pipeline[key].name
        bad.write_bytes(b"XXXX" + pipeline[key].read_bytes()[4:])
        args = {"--index": pipeline["index"], "--ckpt": pipeline["ckpt"], flag: bad}
        code = run_cli("evaluate", "--index", args["--index"], "--ckpt", args["--ckpt"],
                       "--dataset", pipeline["data"], "--graph", pipeline["graph"])
        assert code == 3


def test_build_graph_idempotent_and_preset(tmp_path):
    run_cli("synth", "--classes", 2, "--per-class", 40, "--dim", 5, "--out", tmp_path / "d.grfd")
    for name in ("a", "b"):
        assert run_cli("build-graph", "--dataset", tmp_path / "d.grfd", "--preset", "breakhis",
                       "--out", tmp_path / f"{name}.grfg", "--tsv", tmp_path / f"{name}.tsv") == 0
    assert sha(tmp_path / "a.grfg") == sha(tmp_path / "b.grfg")
    g = graph.load_graph(tmp_path / "a.grfg")
    assert g.degrees().min() >= 25
    assert graph.is_symmetric(g)


def test_variant_flag_sets_ablation(tmp_path):
    run_cli("synth", "--classes", 2, "--per-class", 10, "--dim", 4, "--out", tmp_path / "d.grfd")
    run_cli("build-graph", "--dataset", tmp_path / "d.grfd", "--k", 3, "--out", tmp_path / "g.grfg")
    assert run_cli("train", "--dataset", tmp_path / "d.grfd", "--graph", tmp_path / "g.grfg",
                   "--out", tmp_path / "m.grfm", "--epochs", 2, "--variant", "gae", "--hidden", 4,
                   "--latent", 2) == 0
    ck = model.load_checkpoint(tmp_path / "m.grfm")
    assert ck.config.variant == "gae"
    assert "gcn_logvar.W" not in ck.params
    h = np.loadtxt(tmp_path / "m.grfm.losses.csv", delimiter=",", skiprows=1)
    assert np.all(h[:, 2] == 0) and np.all(h[:, 3] == 0)


def test_config_file_and_override(tmp_path):
    conf = tmp_path / "run.conf"
    conf.write_text("# synthetic\nclasses = 3\nper_class=7\ndim=2\n")
    assert run_cli("synth", "--config", conf, "--dim", 5, "--out", tmp_path / "d.grfd") == 0
    ds = dataset.load_binary(tmp_path / "d.grfd")
    assert (ds.n, ds.d, ds.n_classes) == (21, 5, 3)


def test_missing_config_exit_2(tmp_path):
    assert run_cli("synth", "--config", tmp_path / "none.conf", "--out", tmp_path / "d.grfd") == 2


def test_query_command(pipeline, tmp_path, capsys):
    ds = dataset.load_binary(pipeline["data"])
    qcsv = tmp_path / "q.csv"
    cols = ",".join(f"f{i}" for i in range(ds.d))
    rows = [f"q{i}," + ",".join(repr(float(v)) for v in ds.features[i]) for i in range(3)]
    qcsv.write_text(f"id,{cols}\n" + "\n".join(rows) + "\n")
    out = tmp_path / "res.csv"
    assert run_cli("query", "--index", pipeline["index"], "--ckpt", pipeline["ckpt"], "--dataset",
                   pipeline["data"], "--graph", pipeline["graph"], "--queries", qcsv, "--K", 4,
                   "--out", out) == 0
    lines = out.read_text().splitlines()
    assert lines[0] == "query_id,rank,id,label,distance" and len(lines) == 13
    assert run_cli("query", "--index", pipeline["index"], "--ckpt", pipeline["ckpt"], "--dataset",
                   pipeline["data"], "--graph", pipeline["graph"], "--queries", qcsv, "--K", 2) == 0
    assert len(capsys.readouterr().out.strip().splitlines()) >= 6


def test_usage_error_exit_2(capsys):
    assert run_cli("train") == 2
    assert run_cli("bogus") == 2


@pytest.mark.parametrize("cmd", ["ingest", "synth", "build-graph", "train", "embed", "query", "evaluate"])
def test_help_documents_globals(cmd):
    out = subprocess.run([sys.executable, "-m", "graphret", cmd, "--help"], capture_output=True,
                         text=True, check=True).stdout
    for flag in ("--seed", "--config", "--threads"):
        assert flag in out
    assert "default" in out


def test_threads_flag(tmp_path):
    assert run_cli("synth", "--threads", 1, "--per-class", 5, "--classes", 2, "--dim", 2,
                   "--out", tmp_path / "d.grfd") == 0
