import json
import os

import numpy as np
import pytest

from sumvc.cli import main
from sumvc.data import load_mvds


def run_cli(capsys, *argv):
    code = main(list(argv))
    captured = capsys.readouterr()
    doc = json.loads(captured.out) if captured.out.strip() else None
    return code, doc, captured.err


@pytest.fixture(scope="module")
def dataset(tmp_path_factory):
    path = tmp_path_factory.mktemp("data") / "toy.mvds"
    code = main([
        "gen", "--kind", "gmm", "--k", "2", "--views", "2", "--dims", "6,5",
        "--n", "60", "--sep", "6.0", "--noise", "1.0", "--seed", "0",
        "--out", str(path),
    ])
    assert code == 0
    return str(path)


@pytest.fixture(scope="module")
def run_dir(dataset, tmp_path_factory):
    out = tmp_path_factory.mktemp("runs") / "run1"
    code = main([
        "train", "--data", dataset, "--model", "sumvc", "--epochs", "3",
        "--batch", "20", "--latent-dim", "2", "--hidden", "10",
        "--seed", "1", "--out", str(out),
    ])
    assert code == 0
    return str(out)


class TestGen:
    def test_gmm_output(self, dataset, capsys):
        code, doc, _ = run_cli(
            capsys, "gen", "--kind", "gmm", "--k", "3", "--views", "2",
            "--dims", "4,4", "--n", "50", "--out", dataset + ".second",
        )
        assert code == 0
        assert doc == {
            "out": dataset + ".second", "n": 50, "views": 2,
            "dims": [4, 4], "classes": 3,
        }
        ds = load_mvds(dataset + ".second")
        assert ds.n == 50

    def test_csv_kind(self, tmp_path, capsys):
        a = tmp_path / "a.csv"
        a.write_text("1.0,2.0\n3.0,4.0\n5.0,6.0\n")
        lab = tmp_path / "l.csv"
        lab.write_text("0\n1\n1\n")
        out = tmp_path / "c.mvds"
        code, doc, _ = run_cli(
            capsys, "gen", "--kind", "csv", "--csv", str(a),
            "--labels", str(lab), "--out", str(out),
        )
        assert code == 0
        assert doc["dims"] == [2]
        assert load_mvds(out).n_classes == 2

    def test_pair_kind(self, tmp_path, capsys):
        rng = np.random.default_rng(0)
        feats = tmp_path / "f.csv"
        lines = [",".join(f"{x:.5f}" for x in row) for row in rng.standard_normal((12, 3))]
        feats.write_text("\n".join(lines) + "\n")
        lab = tmp_path / "l.csv"
        lab.write_text("\n".join(str(i % 2) for i in range(12)) + "\n")
        out = tmp_path / "p.mvds"
        code, doc, _ = run_cli(
            capsys, "gen", "--kind", "pair", "--csv", str(feats),
            "--labels", str(lab), "--views", "2", "--out", str(out),
        )
        assert code == 0
        assert doc["views"] == 2


class TestTrain:
    def test_run_directory_contents(self, run_dir):
        for name in ("config.json", "model.mvck", "report.json", "metrics.json"):
            assert os.path.exists(os.path.join(run_dir, name)), name
        assert not os.path.exists(os.path.join(run_dir, ".incomplete"))

    def test_stdout_document(self, dataset, tmp_path, capsys):
        code, doc, err = run_cli(
            capsys, "train", "--data", dataset, "--epochs", "2",
            "--batch", "20", "--latent-dim", "2", "--hidden", "8",
            "--out", str(tmp_path / "r"),
        )
        assert code == 0
        assert doc["epochs"] == 2
        assert set(doc["metrics"]) == {"acc", "nmi", "ari", "inertia"}
        assert "run complete" in err

    def test_scmvc_ignores_beta_with_warning(self, dataset, tmp_path, capsys):
        code, _, err = run_cli(
            capsys, "train", "--data", dataset, "--model", "scmvc",
            "--beta", "0.7", "--epochs", "2", "--batch", "20",
            "--latent-dim", "2", "--hidden", "8", "--out", str(tmp_path / "r"),
        )
        assert code == 0
        assert "ignoring" in err

    def test_init_from_previous_run(self, dataset, run_dir, tmp_path, capsys):
        code, doc, err = run_cli(
            capsys, "train", "--data", dataset, "--init-from", run_dir,
            "--epochs", "2", "--batch", "20", "--latent-dim", "2",
            "--hidden", "10", "--seed", "1", "--out", str(tmp_path / "r2"),
        )
        assert code == 0
        assert "initialized parameters" in err

    def test_numeric_abort_exit_code(self, dataset, tmp_path, capsys):
        with np.errstate(all="ignore"):
            code, _, err = run_cli(
                capsys, "train", "--data", dataset, "--epochs", "2",
                "--batch", "20", "--latent-dim", "2", "--hidden", "8",
                "--lambda-nce", "1.0", "--tau", "1e-320",
                "--pretrain-fraction", "0.0", "--out", str(tmp_path / "r"),
            )
        assert code == 3
        assert "numeric abort" in err

    def test_corrupt_dataset_exit_code(self, tmp_path, capsys):
        bad = tmp_path / "bad.mvds"
        bad.write_bytes(b"NOPE" + b"\x00" * 40)
        code, _, err = run_cli(
            capsys, "train", "--data", str(bad), "--epochs", "1",
            "--clusters", "2", "--out", str(tmp_path / "r"),
        )
        assert code == 4
        assert "bad input" in err

    def test_missing_dataset_exit_code(self, tmp_path, capsys):
        code, _, _ = run_cli(
            capsys, "train", "--data", str(tmp_path / "ghost.mvds"),
            "--clusters", "2", "--out", str(tmp_path / "r"),
        )
        assert code == 4

    def test_bad_flag_value_is_usage_error(self, dataset, tmp_path, capsys):
        code, _, _ = run_cli(
            capsys, "train", "--data", dataset, "--epochs", "0",
            "--out", str(tmp_path / "r"),
        )
        assert code == 2

    def test_unknown_flag_is_usage_error(self, capsys):
        assert main(["train", "--frobnicate"]) == 2
        capsys.readouterr()


class TestEval:
    def test_metrics_schema_exact(self, dataset, run_dir, capsys):
        code, doc, _ = run_cli(capsys, "eval", "--run", run_dir, "--data", dataset)
        assert code == 0
        assert set(doc) == {"acc", "nmi", "ari", "inertia", "n", "k"}
        assert doc["n"] == 60
        assert doc["k"] == 2

    def test_eval_deterministic(self, dataset, run_dir, capsys):
        _, doc1, _ = run_cli(capsys, "eval", "--run", run_dir, "--data", dataset)
        _, doc2, _ = run_cli(capsys, "eval", "--run", run_dir, "--data", dataset)
        assert doc1 == doc2

    def test_exports(self, dataset, run_dir, tmp_path, capsys):
        emb = tmp_path / "emb.mvds"
        proj = tmp_path / "proj.csv"
        code, _, _ = run_cli(
            capsys, "eval", "--run", run_dir, "--data", dataset,
            "--export-embeddings", str(emb), "--project2d", str(proj),
        )
        assert code == 0
        exported = load_mvds(emb)
        assert exported.n_views == 1
        assert exported.n == 60
        assert exported.dims == (4,)  # 2 views * latent 2
        rows = proj.read_text().strip().split("\n")
        assert len(rows) == 60
        assert all(len(r.split(",")) == 3 for r in rows)

    def test_incomplete_run_rejected(self, dataset, run_dir, tmp_path, capsys):
        import shutil

        broken = tmp_path / "broken"
        shutil.copytree(run_dir, broken)
        (broken / ".incomplete").write_text("x\n")
        code, _, err = run_cli(capsys, "eval", "--run", str(broken), "--data", dataset)
        assert code == 4
        assert "incomplete" in err

    def test_missing_run_rejected(self, dataset, tmp_path, capsys):
        code, _, _ = run_cli(
            capsys, "eval", "--run", str(tmp_path / "nope"), "--data", dataset
        )
        assert code == 4


class TestAblateCommand:
    def test_writes_grid(self, dataset, tmp_path, capsys):
        out = tmp_path / "abl"
        code, doc, _ = run_cli(
            capsys, "ablate", "--data", dataset, "--epochs", "2",
            "--batch", "20", "--latent-dim", "2", "--hidden", "8",
            "--out", str(out),
        )
        assert code == 0
        assert [r["mask"] for r in doc["rows"]] == [
            "rec", "rec+kl", "suf", "rec+kl+suf",
        ]
        csv_lines = (out / "ablation.csv").read_text().strip().split("\n")
        assert csv_lines[0] == "mask,acc,nmi,ari"
        assert len(csv_lines) == 5
        assert json.loads((out / "ablation.json").read_text())["rows"] == doc["rows"]


class TestDiagnose:
    def test_gradients_suite(self, capsys):
        code, doc, _ = run_cli(capsys, "diagnose", "--suite", "gradients",
                               "--seeds", "2")
        assert code == 0
        assert set(doc) == {"suite", "cases", "max_residual", "min_margin", "pass"}
        assert doc["pass"] is True
        assert doc["max_residual"] < 1e-5

    def test_infotheory_suite(self, capsys):
        code, doc, _ = run_cli(capsys, "diagnose", "--suite", "infotheory",
                               "--seeds", "25")
        assert code == 0
        assert doc["pass"] is True
        assert doc["max_residual"] < 1e-12
        assert doc["min_margin"] >= -1e-12

    def test_kl_mc_suite(self, capsys):
        code, doc, _ = run_cli(capsys, "diagnose", "--suite", "kl-mc",
                               "--seeds", "4", "--samples", "20000")
        assert code == 0
        assert doc["pass"] is True

    def test_infonce_suite(self, capsys):
        code, doc, _ = run_cli(capsys, "diagnose", "--suite", "infonce",
                               "--seeds", "8")
        assert code == 0
        assert doc["pass"] is True
