import json

import numpy as np
import pytest

from wnnc.cli import EXIT_DATA, EXIT_NUMERIC, EXIT_USAGE, main
from wnnc.io import read_cloud, write_cloud
from wnnc.metrics import angular_error


def run(capsys, *argv):
    code = main([str(a) for a in argv])
    out = capsys.readouterr()
    return code, out.out, out.err


def kv(text):
    return dict(line.split(": ", 1) for line in text.strip().splitlines())


@pytest.fixture(scope="module")
def sphere_runs(tmp_path_factory):
    d = tmp_path_factory.mktemp("orient")
    outs = {}
    for backend in ("dense", "treecode"):
        path = d / f"{backend}.ply"
        code = main(["orient", "--shape", "sphere:2000", "--backend", backend, "--output", str(path),
                     "--gt-output", str(d / "gt.ply"), "--json", "--seed", "3"])
        assert code == 0
        outs[backend] = path
    return d, outs


def test_backends_agree(sphere_runs):
    d, outs = sphere_runs
    _, dense = read_cloud(outs["dense"])
    _, tree = read_cloud(outs["treecode"])
    assert angular_error(tree, dense).ae_pcd <= 5e-3


def test_orient_then_eval(sphere_runs, capsys):
    d, outs = sphere_runs
    code, out, _ = run(capsys, "eval", "--recon", outs["treecode"], "--gt", d / "gt.ply",
                       "--plot", d / "hist.png")
    assert code == 0
    rep = kv(out)
    assert float(rep["p_co"]) >= 99.9 and rep["n_points"] == "2000"
    assert (d / "hist.png").stat().st_size > 0
    code, out, _ = run(capsys, "eval", "--recon", outs["treecode"], "--gt", d / "gt.ply", "--json")
    assert set(json.loads(out)) == {"n_points", "ae_pcd", "p_co", "flipped_count"}


def test_orient_report_and_single_iteration(tmp_path, capsys):
    src = tmp_path / "in.xyz"
    rng = np.random.default_rng(0)
    p = rng.normal(size=(300, 3))
    write_cloud(src, p / np.linalg.norm(p, axis=1, keepdims=True) * 7 + 3)
    code, out, _ = run(capsys, "orient", "--input", src, "--output", tmp_path / "o.xyz", "--iters", 1,
                       "--report-dir", tmp_path / "rep")
    assert code == 0
    rep = kv(out)
    assert rep["iterations"] == "1" and float(rep["t_pre"]) >= 0 and float(rep["t_main"]) >= 0
    pos, nrm = read_cloud(tmp_path / "o.xyz")
    assert pos.shape == nrm.shape == (300, 3)
    np.testing.assert_allclose(pos, p / np.linalg.norm(p, axis=1, keepdims=True) * 7 + 3, rtol=1e-15)
    assert (tmp_path / "rep" / "convergence.png").stat().st_size > 0
    lines = (tmp_path / "rep" / "iterations.csv").read_text().splitlines()
    assert lines[0] == "iteration,width,alpha,energy,residual_norm" and len(lines) == 2


def test_dense_output_deterministic(tmp_path):
    for name in ("a.ply", "b.ply"):
        assert main(["orient", "--shape", "torus:500", "--backend", "dense", "--iters", "5",
                     "--output", str(tmp_path / name)]) == 0
    assert (tmp_path / "a.ply").read_bytes() == (tmp_path / "b.ply").read_bytes()


def test_bench_writes_table_and_figure(tmp_path, capsys):
    code, out, _ = run(capsys, "bench", "--sizes", "300,600", "--iters", 2, "--repeat", 2, "--backend", "treecode",
                       "--backend", "dense", "--out-dir", tmp_path)
    assert code == 0
    lines = out.strip().splitlines()
    assert lines[0].split("\t") == ["backend", "n", "t_pre", "t_main"]
    assert len(lines) == 5
    assert (tmp_path / "scaling.png").stat().st_size > 0
    assert (tmp_path / "bench.csv").read_text().count("\n") == 5


@pytest.mark.parametrize("argv", [
    ["orient", "--output", "x.ply"],
    ["orient", "--shape", "sphere:10", "--input", "a.xyz", "--output", "x.ply"],
    ["orient", "--shape", "sphere:10", "--w-min", "0.1", "--w-max", "0.01", "--output", "x.ply"],
    ["orient", "--shape", "sphere:10", "--w-min", "-1", "--output", "x.ply"],
    ["orient", "--shape", "cone:10", "--output", "x.ply"],
    ["bench", "--sizes", "1,a"],
    ["bench", "--sizes", "10", "--repeat", "0"],
])
def test_usage_errors(argv, capsys, tmp_path, monkeypatch):
    monkeypatch.chdir(tmp_path)
    assert main(argv) == EXIT_USAGE
    assert "error" in capsys.readouterr().err


def test_data_and_numeric_errors(tmp_path, capsys):
    bad = tmp_path / "bad.xyz"
    bad.write_text("1 2 3\n4 5\n")
    assert main(["orient", "--input", str(bad), "--output", str(tmp_path / "o.xyz")]) == EXIT_DATA
    assert "bad.xyz:2" in capsys.readouterr().err
    assert main(["orient", "--input", str(tmp_path / "missing.xyz"), "--output", "o.xyz"]) == EXIT_DATA
    same = tmp_path / "same.xyz"
    same.write_text("1 1 1\n1 1 1\n")
    assert main(["orient", "--input", str(same), "--output", str(tmp_path / "o.xyz")]) == EXIT_NUMERIC
    nonormals = tmp_path / "n.xyz"
    nonormals.write_text("0 0 0\n")
    assert main(["eval", "--recon", str(nonormals), "--gt", str(nonormals)]) == EXIT_DATA
