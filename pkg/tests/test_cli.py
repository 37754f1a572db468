import json

import numpy as np
import pytest

from wips.cli import main
from wips.spectral import classify_kernel
from wips.synth import read_matrix
from wips.trainer import load_checkpoint


@pytest.fixture
def synth_dir(tmp_path):
    out = tmp_path / "g"
    assert main(["synth", "--model", "wips", "--n", "40", "--dim", "4", "--neg-dims", "2", "--seed", "1", "--out", str(out)]) == 0
    return out


def _manifest(path):
    rows = [line.split("\t") for line in path.read_text().splitlines()[1:]]
    return {r[0]: r[1] for r in rows if r[0] != "file"}, [r for r in rows if r[0] == "file"]


def test_synth_outputs(synth_dir):
    for name in ("edges.txt", "features.txt", "truth.tsv", "manifest.tsv"):
        assert (synth_dir / name).is_file()
    with open(synth_dir / "truth.tsv") as fh:
        truth = read_matrix(fh)
    assert truth.shape == (40, 40)
    settings, files = _manifest(synth_dir / "manifest.tsv")
    assert settings["lambda_star"] == "1.0,1.0,-1.0,-1.0"
    assert {f[2].split("/")[-1] for f in files} >= {"edges.txt", "truth.tsv"}


def test_synth_pd_and_determinism(tmp_path):
    args = ["synth", "--n", "30", "--dim", "3", "--neg-dims", "0", "--offset", "0", "--seed", "4"]
    assert main(args + ["--out", str(tmp_path / "a")]) == 0
    assert main(args + ["--out", str(tmp_path / "b")]) == 0
    for name in ("edges.txt", "truth.tsv", "features.txt"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()
    with open(tmp_path / "a" / "truth.tsv") as fh:
        assert classify_kernel(read_matrix(fh)).verdict == "PD"


def test_synth_usage_error(tmp_path):
    assert main(["synth", "--n", "10", "--dim", "2", "--neg-dims", "3", "--out", str(tmp_path)]) == 2


def test_train_writes_contract_files(synth_dir, tmp_path):
    out = tmp_path / "t"
    rc = main(["train", "--edges", str(synth_dir / "edges.txt"), "--head", "wips", "--dim", "4", "--seed", "7",
               "--iters", "50", "--eval-interval", "25", "--hidden", "8", "--out", str(out)])
    assert rc == 0
    assert {p.name for p in out.iterdir()} == {"ckpt.txt", "curve.tsv", "manifest.tsv"}
    ckpt = load_checkpoint(out / "ckpt.txt")
    assert ckpt.model.encoder.layer_dims == [40, 8, 4]
    settings, files = _manifest(out / "manifest.tsv")
    assert settings["config.seed"] == "7"
    assert settings["seed.batches"] == "philox(7,2)"
    assert len(files) == 3


def test_train_ipds_defaults_to_five_point_grid(synth_dir, tmp_path):
    out = tmp_path / "t"
    rc = main(["train", "--edges", str(synth_dir / "edges.txt"), "--head", "ipds", "--dim", "4", "--iters", "20",
               "--eval-interval", "10", "--out", str(out)])
    assert rc == 0
    lines = (out / "grid.tsv").read_text().splitlines()
    assert len(lines) == 6
    assert [l.split("\t")[1] for l in lines[1:]] == ["0.01", "0.25", "0.5", "0.75", "0.99"]


def test_train_lr_grid_and_config_file(synth_dir, tmp_path):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"head": "sips", "dim": 3, "iters": 20, "eval_interval": 10, "lr_grid": "2e-4,1e-3"}))
    out = tmp_path / "t"
    assert main(["train", "--edges", str(synth_dir / "edges.txt"), "--config", str(cfg), "--out", str(out)]) == 0
    assert len((out / "grid.tsv").read_text().splitlines()) == 3
    cfg.write_text(json.dumps({"bogus": 1}))
    assert main(["train", "--edges", str(synth_dir / "edges.txt"), "--config", str(cfg), "--head", "ips", "--dim", "2"]) == 2


def test_train_usage_errors(synth_dir):
    edges = str(synth_dir / "edges.txt")
    assert main(["train", "--edges", edges, "--head", "cosine", "--dim", "4"]) == 2
    assert main(["train", "--edges", edges, "--head", "wips"]) == 2
    assert main(["train", "--edges", "/no/such/file", "--head", "wips", "--dim", "4"]) == 2
    assert main(["train", "--edges", edges, "--head", "wips", "--dim", "4", "--lr-grid", "fast"]) == 2
    assert main([]) == 2


def test_train_runtime_error_on_bad_graph(tmp_path):
    bad = tmp_path / "e.txt"
    bad.write_text("0 1\n0 1\n")
    assert main(["train", "--edges", str(bad), "--head", "ips", "--dim", "2", "--out", str(tmp_path)]) == 1


def test_train_is_reproducible(synth_dir, tmp_path):
    args = ["train", "--edges", str(synth_dir / "edges.txt"), "--head", "wips", "--dim", "4", "--iters", "40",
            "--eval-interval", "20", "--hidden", "-"]
    assert main(args + ["--out", str(tmp_path / "a")]) == 0
    assert main(args + ["--out", str(tmp_path / "b")]) == 0
    for name in ("ckpt.txt", "curve.tsv"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


def test_eval_reconstruction_and_repeats(synth_dir, tmp_path):
    edges = str(synth_dir / "edges.txt")
    main(["train", "--edges", edges, "--head", "wips", "--dim", "4", "--iters", "30", "--hidden", "-", "--out", str(tmp_path / "t")])
    assert main(["eval", "--task", "reconstruction", "--edges", edges, "--ckpt", str(tmp_path / "t" / "ckpt.txt"),
                 "--out", str(tmp_path / "e")]) == 0
    rows = (tmp_path / "e" / "report.tsv").read_text().splitlines()
    assert len(rows) == 2 and rows[1].startswith("reconstruction\twips\t4\t0\tauc\t")
    assert main(["eval", "--task", "reconstruction", "--edges", edges, "--head", "ips", "--dim", "2", "--iters", "20",
                 "--hidden", "-", "--repeats", "3", "--out", str(tmp_path / "r")]) == 0
    rows = [l.split("\t") for l in (tmp_path / "r" / "report.tsv").read_text().splitlines()[1:]]
    assert [r[3] for r in rows] == ["0", "1", "2", "mean", "std"]
    vals = np.array([float(r[5]) for r in rows[:3]])
    assert float(rows[3][5]) == pytest.approx(vals.mean())
    assert float(rows[4][5]) == pytest.approx(vals.std(ddof=1))


def test_eval_onehot_linkpred_is_explicit_error(synth_dir, tmp_path, capsys):
    edges = str(synth_dir / "edges.txt")
    rc = main(["eval", "--task", "linkpred", "--edges", edges, "--head", "wips", "--dim", "4", "--out", str(tmp_path)])
    assert rc == 1
    assert "impossible" in capsys.readouterr().err


def test_eval_linkpred_with_data_vectors(tmp_path):
    g = tmp_path / "g"
    main(["synth", "--n", "60", "--dim", "3", "--neg-dims", "1", "--data-vectors", "--seed", "2", "--out", str(g)])
    common = ["--edges", str(g / "edges.txt"), "--features", str(g / "features.txt")]
    assert main(["train", *common, "--head", "wips", "--dim", "3", "--hidden", "-", "--iters", "50",
                 "--split", "0.64,0.16,0.20", "--out", str(tmp_path / "t")]) == 0
    assert (tmp_path / "t" / "split.tsv").is_file()
    assert main(["eval", "--task", "linkpred", *common, "--ckpt", str(tmp_path / "t" / "ckpt.txt"),
                 "--split-file", str(tmp_path / "t" / "split.tsv"), "--out", str(tmp_path / "e")]) == 0
    # the split is also re-derivable from the seed
    assert main(["eval", "--task", "linkpred", *common, "--ckpt", str(tmp_path / "t" / "ckpt.txt"),
                 "--out", str(tmp_path / "e2")]) == 0
    r1 = (tmp_path / "e" / "report.tsv").read_text()
    assert r1 == (tmp_path / "e2" / "report.tsv").read_text()


def test_eval_dimension_mismatch(synth_dir, tmp_path):
    edges = str(synth_dir / "edges.txt")
    main(["train", "--edges", edges, "--head", "ips", "--dim", "2", "--iters", "10", "--hidden", "-", "--out", str(tmp_path / "t")])
    feats = tmp_path / "f.txt"
    feats.write_text("40 2\n" + "0.5 0.5\n" * 40)
    rc = main(["eval", "--task", "reconstruction", "--edges", edges, "--features", str(feats),
               "--ckpt", str(tmp_path / "t" / "ckpt.txt"), "--out", str(tmp_path / "e")])
    assert rc == 1


def test_eval_classification(synth_dir, tmp_path):
    labels = tmp_path / "lab.txt"
    labels.write_text("".join(f"{i} {'ab'[i % 2]}\n" for i in range(40)))
    rc = main(["eval", "--task", "classification", "--edges", str(synth_dir / "edges.txt"), "--labels", str(labels),
               "--head", "poincare", "--dim", "2", "--iters", "20", "--hyperbolic", "--out", str(tmp_path / "e")])
    assert rc == 0
    row = (tmp_path / "e" / "report.tsv").read_text().splitlines()[1].split("\t")
    assert row[4] == "accuracy" and 0 <= float(row[5]) <= 1


def test_spectral_default_table(tmp_path):
    assert main(["spectral", "--out", str(tmp_path)]) == 0
    rows = [l.split("\t") for l in (tmp_path / "hierarchy.tsv").read_text().splitlines()[1:]]
    assert len({r[0] for r in rows}) >= 4
    assert len({r[2] for r in rows}) >= 3


@pytest.mark.parametrize("kernel, verdict", [("neg_sq_dist", "CPD_not_PD"), ("gaussian", "PD")])
def test_spectral_single_kernel(tmp_path, kernel, verdict):
    assert main(["spectral", "--kernel", kernel, "--out", str(tmp_path)]) == 0
    rows = [l.split("\t") for l in (tmp_path / "hierarchy.tsv").read_text().splitlines()[1:]]
    assert {r[3] for r in rows} == {verdict}


def test_spectral_unknown_kernel(tmp_path):
    assert main(["spectral", "--kernel", "cosine", "--out", str(tmp_path)]) == 2
