import json
import os

import numpy as np
import pytest

from mgnet.cli import main, write_pgm
from mgnet.imaging import save_image
from mgnet.models import ModelSpec, init_params, save_model


def write_config(path, doc):
    path.write_text(json.dumps(doc, indent=1))
    return str(path)


def gradfield_config(tmp_path, **train_overrides):
    train = {"batch_size": 256, "epochs": 1, "learning_rate": 1e-2,
             "loss": "mae", "seed": 5}
    train.update(train_overrides)
    return write_config(
        tmp_path / "gf.json",
        {
            "model": {"arch": "cmgn", "n": 2, "hidden": 2, "depth": 1},
            "train": train,
            "experiment": {"points_per_epoch": 512},
        },
    )


def coupling_config(tmp_path, d=2, **exp_overrides):
    exp = {"d": d, "data_seed": 12, "train_samples": 256, "test_samples": 500}
    exp.update(exp_overrides)
    return write_config(
        tmp_path / "cp.json",
        {
            "model": {"cmgn": {"hidden": 2, "depth": 1, "gamma": 0.2}},
            "train": {"batch_size": 64, "epochs": 1, "learning_rate": 5e-3,
                      "loss": "flow_nll", "seed": 5},
            "experiment": exp,
        },
    )


def adapt_setup(tmp_path, epochs=2):
    rng = np.random.default_rng(3)
    src = np.clip(0.3 + 0.05 * rng.standard_normal((24, 24, 3)), 0, 1)
    tgt = np.clip(0.6 + 0.08 * rng.standard_normal((24, 24, 3)), 0, 1)
    save_image(tmp_path / "src.png", src)
    save_image(tmp_path / "tgt.png", tgt)
    config = write_config(
        tmp_path / "ad.json",
        {
            "model": {"arch": "mmgn", "hidden": 2, "modules": 1, "gamma": 0.1},
            "train": {"batch_size": 256, "epochs": epochs, "learning_rate": 1e-2,
                      "loss": "flow_nll", "seed": 5},
            "experiment": {"source": "src.png", "target": "tgt.png"},
        },
    )
    return config


class TestGradfieldCommand:
    def test_run_writes_artifacts(self, tmp_path, capsys):
        config = gradfield_config(tmp_path)
        out = tmp_path / "run"
        assert main(["gradfield", "--config", config, "--out", str(out)]) == 0
        line = capsys.readouterr().out.strip()
        assert line.startswith("mse_db=") and line.endswith("params=12")
        for name in ("error_grid.csv", "error_grid.pgm", "quiver.csv",
                     "model.json", "train_report.json", "loss.csv"):
            assert (out / name).exists()
        grid = (out / "error_grid.csv").read_text().splitlines()
        assert grid[0] == "x1,x2,error"
        assert len(grid) == 1 + 101 * 101
        quiver = (out / "quiver.csv").read_text().splitlines()
        assert len(quiver) == 1 + 21 * 21

    def test_rerun_is_byte_identical(self, tmp_path):
        config = gradfield_config(tmp_path)
        out1, out2 = tmp_path / "a", tmp_path / "b"
        assert main(["gradfield", "--config", config, "--out", str(out1)]) == 0
        assert main(["gradfield", "--config", config, "--out", str(out2)]) == 0
        for name in ("error_grid.csv", "quiver.csv", "loss.csv", "model.json",
                     "error_grid.pgm"):
            assert (out1 / name).read_bytes() == (out2 / name).read_bytes()

    def test_seed_flag_changes_run(self, tmp_path):
        config = gradfield_config(tmp_path)
        out1, out2 = tmp_path / "a", tmp_path / "b"
        main(["gradfield", "--config", config, "--out", str(out1)])
        main(["gradfield", "--config", config, "--out", str(out2), "--seed", "9"])
        assert (out1 / "model.json").read_bytes() != (out2 / "model.json").read_bytes()

    def test_set_override(self, tmp_path):
        config = gradfield_config(tmp_path)
        out = tmp_path / "o"
        code = main(["gradfield", "--config", config, "--out", str(out),
                     "--set", "train.epochs=2"])
        assert code == 0
        report = json.loads((out / "train_report.json").read_text())
        assert report["config"]["epochs"] == 2

    def test_wrong_loss_rejected(self, tmp_path, capsys):
        config = gradfield_config(tmp_path, loss="flow_nll")
        assert main(["gradfield", "--config", config, "--out", str(tmp_path)]) == 2
        assert "error:" in capsys.readouterr().err

    def test_unknown_keys_rejected(self, tmp_path):
        config = write_config(
            tmp_path / "bad.json",
            {"model": {"arch": "cmgn", "n": 2, "hidden": 2, "depth": 1},
             "train": {"optimizer": "sgd"},
             "experiment": {}},
        )
        assert main(["gradfield", "--config", config, "--out", str(tmp_path)]) == 2
        config2 = write_config(
            tmp_path / "bad2.json",
            {"model": {"arch": "cmgn", "n": 2, "hidden": 2, "depth": 1},
             "train": {}, "extra": {}},
        )
        assert main(["gradfield", "--config", config2, "--out", str(tmp_path)]) == 2

    def test_wrong_dimension_rejected(self, tmp_path):
        config = write_config(
            tmp_path / "n3.json",
            {"model": {"arch": "cmgn", "n": 3, "hidden": 2, "depth": 1},
             "train": {"loss": "mae"}, "experiment": {}},
        )
        assert main(["gradfield", "--config", config, "--out", str(tmp_path)]) == 2

    def test_bad_set_syntax_rejected(self, tmp_path):
        config = gradfield_config(tmp_path)
        assert main(["gradfield", "--config", config, "--out", str(tmp_path),
                     "--set", "no_equals_sign"]) == 2

    def test_missing_config_rejected(self, tmp_path):
        assert main(["gradfield", "--config", str(tmp_path / "nope.json"),
                     "--out", str(tmp_path)]) == 2

    def test_invalid_json_rejected(self, tmp_path):
        path = tmp_path / "garbled.json"
        path.write_text("{not json")
        assert main(["gradfield", "--config", str(path),
                     "--out", str(tmp_path)]) == 2


class TestCouplingCommand:
    def test_run_writes_artifacts(self, tmp_path, capsys):
        config = coupling_config(tmp_path)
        out = tmp_path / "run"
        assert main(["coupling", "--config", config, "--out", str(out)]) == 0
        lines = capsys.readouterr().out.strip().splitlines()
        assert lines[0].startswith("whitening: nll=")
        assert lines[1].startswith("cmgn: nll=")
        table = (out / "coupling.csv").read_text().splitlines()
        assert table[0] == "method,d,nll,cost,optimal_cost,entropy_bound,seed"
        assert len(table) == 3
        assert table[1].startswith("whitening,2,")
        assert table[2].startswith("cmgn,2,")
        for name in ("scatter_whitening.csv", "scatter_cmgn.csv",
                     "model_cmgn.json", "train_report_cmgn.json", "loss_cmgn.csv"):
            assert (out / name).exists()
        scatter = (out / "scatter_cmgn.csv").read_text().splitlines()
        assert scatter[0] == "rank,x1,x2,y1,y2"
        assert len(scatter) == 1 + 200

    def test_rerun_is_byte_identical(self, tmp_path):
        config = coupling_config(tmp_path)
        out1, out2 = tmp_path / "a", tmp_path / "b"
        assert main(["coupling", "--config", config, "--out", str(out1)]) == 0
        assert main(["coupling", "--config", config, "--out", str(out2)]) == 0
        for name in ("coupling.csv", "scatter_cmgn.csv", "loss_cmgn.csv"):
            assert (out1 / name).read_bytes() == (out2 / name).read_bytes()

    def test_missing_d_rejected(self, tmp_path):
        config = write_config(
            tmp_path / "cp.json",
            {"model": {"cmgn": {"hidden": 2, "depth": 1, "gamma": 0.2}},
             "train": {"loss": "flow_nll"},
             "experiment": {"train_samples": 256, "test_samples": 500}},
        )
        assert main(["coupling", "--config", config, "--out", str(tmp_path)]) == 2

    def test_unknown_method_rejected(self, tmp_path):
        config = write_config(
            tmp_path / "cp.json",
            {"model": {"icnn": {"hidden": 2}},
             "train": {"loss": "flow_nll"},
             "experiment": {"d": 2}},
        )
        assert main(["coupling", "--config", config, "--out", str(tmp_path)]) == 2

    def test_gamma_zero_flow_rejected(self, tmp_path):
        config = write_config(
            tmp_path / "cp.json",
            {"model": {"cmgn": {"hidden": 2, "depth": 1, "gamma": 0.0}},
             "train": {"batch_size": 64, "epochs": 1, "loss": "flow_nll"},
             "experiment": {"d": 2, "train_samples": 256, "test_samples": 500}},
        )
        assert main(["coupling", "--config", config, "--out", str(tmp_path)]) == 2

    def test_model_n_conflicts_with_d(self, tmp_path):
        config = write_config(
            tmp_path / "cp.json",
            {"model": {"cmgn": {"n": 3, "hidden": 2, "depth": 1, "gamma": 0.2}},
             "train": {"batch_size": 64, "epochs": 1, "loss": "flow_nll"},
             "experiment": {"d": 2, "train_samples": 256, "test_samples": 500}},
        )
        assert main(["coupling", "--config", config, "--out", str(tmp_path)]) == 2


class TestAdaptCommand:
    def test_run_writes_artifacts(self, tmp_path, capsys):
        config = adapt_setup(tmp_path)
        out = tmp_path / "run"
        assert main(["adapt", "--config", config, "--out", str(out)]) == 0
        line = capsys.readouterr().out.strip()
        assert line.startswith("final_kl=") and "pixels=576" in line
        for name in ("adapted.png", "model.json", "kl.csv",
                     "train_report.json", "loss.csv"):
            assert (out / name).exists()
        kl = (out / "kl.csv").read_text().splitlines()
        assert kl[0] == "epoch,kl"
        assert len(kl) == 3

    def test_adapted_image_matches_source_shape(self, tmp_path):
        from mgnet.imaging import load_image

        config = adapt_setup(tmp_path, epochs=1)
        out = tmp_path / "run"
        main(["adapt", "--config", config, "--out", str(out)])
        assert load_image(out / "adapted.png").shape == (24, 24, 3)

    def test_missing_image_rejected(self, tmp_path):
        config = adapt_setup(tmp_path)
        doc = json.loads((tmp_path / "ad.json").read_text())
        doc["experiment"]["source"] = "absent.png"
        write_config(tmp_path / "ad.json", doc)
        assert main(["adapt", "--config", config, "--out", str(tmp_path)]) == 2

    def test_non_image_rejected(self, tmp_path):
        (tmp_path / "fake.png").write_text("this is not a png")
        config = adapt_setup(tmp_path)
        doc = json.loads((tmp_path / "ad.json").read_text())
        doc["experiment"]["target"] = "fake.png"
        write_config(tmp_path / "ad.json", doc)
        assert main(["adapt", "--config", config, "--out", str(tmp_path)]) == 2


class TestVerifyCommand:
    def test_fresh_model_passes(self, tmp_path, capsys):
        spec = ModelSpec(arch="mmgn", n=2, hidden=3, modules=2, gamma=0.3)
        path = tmp_path / "m.json"
        save_model(init_params(spec, 1), path)
        assert main(["verify", "--model", str(path)]) == 0
        lines = capsys.readouterr().out.strip().splitlines()
        assert "spec: 1/1 ok" in lines
        assert "symmetry: 10000/10000 ok" in lines
        assert "psd: 10000/10000 ok" in lines
        assert "psd_gamma_floor: 10000/10000 ok" in lines
        assert "monotonicity: 10000/10000 ok" in lines
        assert "jacobian_fd: 20/20 ok" in lines
        assert "conservativity: 1/1 ok" in lines

    def test_gamma_corruption_fails(self, tmp_path, capsys):
        spec = ModelSpec(arch="cmgn", n=2, hidden=2, depth=1, gamma=0.5)
        path = tmp_path / "m.json"
        save_model(init_params(spec, 1), path)
        doc = json.loads(path.read_text())
        doc["gamma"] = -0.5
        path.write_text(json.dumps(doc))
        assert main(["verify", "--model", str(path)]) == 1
        out = capsys.readouterr().out
        assert "spec: 0/1 ok" in out
        assert "FAIL" in out

    def test_truncated_model_rejected(self, tmp_path):
        spec = ModelSpec(arch="cmgn", n=2, hidden=2, depth=1)
        path = tmp_path / "m.json"
        save_model(init_params(spec, 1), path)
        path.write_text(path.read_text()[:40])
        assert main(["verify", "--model", str(path)]) == 2

    def test_missing_model_rejected(self, tmp_path):
        assert main(["verify", "--model", str(tmp_path / "none.json")]) == 2


class TestInfoCommand:
    def test_cmgn_summary(self, tmp_path, capsys):
        spec = ModelSpec(arch="cmgn", n=2, hidden=2, depth=2, v_rows=2)
        path = tmp_path / "m.json"
        save_model(init_params(spec, 0), path)
        assert main(["info", "--model", str(path)]) == 0
        out = capsys.readouterr().out
        assert "architecture: cmgn" in out
        assert "params: 14" in out
        assert "depth: 2" in out

    def test_mmgn_summary(self, tmp_path, capsys):
        spec = ModelSpec(arch="mmgn", n=2, hidden=3, modules=2, v_rows=1)
        path = tmp_path / "m.json"
        save_model(init_params(spec, 0), path)
        assert main(["info", "--model", str(path)]) == 0
        out = capsys.readouterr().out
        assert "architecture: mmgn" in out
        assert "params: 22" in out
        assert "widths: 3,3" in out


class TestWritePgm:
    def test_header_and_scaling(self, tmp_path):
        path = tmp_path / "g.pgm"
        write_pgm(path, np.array([[0.0, 1.0], [2.0, 4.0]]))
        raw = path.read_bytes()
        assert raw.startswith(b"P5\n2 2\n255\n")
        assert list(raw[-4:]) == [0, 64, 128, 255]

    def test_all_zero_grid(self, tmp_path):
        path = tmp_path / "z.pgm"
        write_pgm(path, np.zeros((2, 3)))
        raw = path.read_bytes()
        assert raw.startswith(b"P5\n3 2\n255\n")
        assert raw[-6:] == bytes(6)
