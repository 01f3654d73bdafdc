import json
import subprocess
import sys

import pytest

from ctxprop.cli import main, parse_proposals
from ctxprop.evaluation import read_curves_csv


@pytest.fixture(scope="module")
def workspace(tmp_path_factory):
    root = tmp_path_factory.mktemp("cli")
    data, models = root / "data", root / "models"
    assert main(["synth", "--out", str(data), "--num-scenes", "24", "--seed", "4"]) == 0
    for kind in ("pairwise_kde", "hor"):
        assert main(["fit", "--data", str(data), "--strategy", kind, "--models", str(models), "--iterations", "30"]) == 0
    return root, data, models


def _sample(workspace, name, *extra, kind="hor"):
    root, data, models = workspace
    out = root / name
    argv = ["sample", "--data", str(data), "--strategy", kind, "--models", str(models), "--out", str(out)]
    assert main([*argv, "--budget", "40", *extra]) == 0
    return out


class TestFit:
    def test_manifest_echoes_vocabulary(self, workspace):
        _, _, models = workspace
        m = json.loads((models / "cc_hor.manifest.json").read_text())
        nx = round((m["x_extent"][1] - m["x_extent"][0]) / m["cell"][0])
        nz = round((m["z_extent"][1] - m["z_extent"][0]) / m["cell"][1])
        assert m["V"] == nx * nz * m["theta_bins"]
        assert (m["T"], m["theta_bins"]) == (16, 8)
        assert m["cell"][0] == pytest.approx(m["W"] / 2)
        assert m["settings"]["iterations"] == 30

    def test_sliding_window_has_no_model(self, workspace, capsys):
        _, data, models = workspace
        with pytest.raises(SystemExit) as e:
            main(["fit", "--data", str(data), "--strategy", "sliding_window", "--models", str(models)])
        assert e.value.code == 2
        capsys.readouterr()

    def test_model_missing(self, workspace, tmp_path, capsys):
        _, data, _ = workspace
        argv = ["sample", "--data", str(data), "--strategy", "hor", "--models", str(tmp_path), "--out", str(tmp_path / "p")]
        assert main(argv) == 1
        assert "ModelMissing" in capsys.readouterr().err


class TestSample:
    def test_budget_cap_and_reruns(self, workspace):
        a = _sample(workspace, "a.txt")
        b = _sample(workspace, "b.txt")
        assert a.read_bytes() == b.read_bytes()
        label, by_image = parse_proposals(a.read_text())
        assert label == "cc_hor"
        assert by_image and all(len(v) <= 40 for v in by_image.values())

    def test_tau_above_all_scores_falls_back(self, workspace):
        out = _sample(workspace, "tau.txt", "--tau", "2.0", kind="pairwise_kde")
        tags = {line.split()[-1] for line in out.read_text().splitlines() if not line.startswith("#")}
        assert tags == {"fallback"}
        manifest = json.loads(out.with_name(out.name + ".manifest.json").read_text())
        assert manifest["fallback_images"] == manifest["images"]

    def test_seed_mode_top(self, workspace):
        out = _sample(workspace, "top.txt", "--seed-mode", "top", kind="pairwise_kde")
        assert parse_proposals(out.read_text())[1]

    def test_workers_match_serial(self, workspace):
        a = _sample(workspace, "w1.txt", kind="pairwise_kde")
        b = _sample(workspace, "w2.txt", "--workers", "2", kind="pairwise_kde")
        assert a.read_bytes() == b.read_bytes()


class TestEval:
    def test_two_thresholds_two_blocks(self, workspace):
        root, data, _ = workspace
        props = _sample(workspace, "e.txt")
        out = root / "curves.csv"
        argv = ["eval", "--data", str(data), "--proposals", str(props), "--budgets", "1", "10", "40", "--iou", "0.5", "0.75", "--out", str(out)]
        assert main(argv) == 0
        (l5, c5), (l7, c7) = read_curves_csv(out.read_text())
        assert l5 == l7 == "cc_hor"
        assert (c5.iou_threshold, c7.iou_threshold) == (0.5, 0.75)
        assert all(h <= l for h, l in zip(c7.recall, c5.recall))
        assert list(c5.recall) == sorted(c5.recall)
        manifest = json.loads(out.with_name(out.name + ".manifest.json").read_text())
        assert manifest["averaging"].startswith("micro")

    def test_missing_proposals(self, workspace, tmp_path, capsys):
        _, data, _ = workspace
        missing = tmp_path / "nothing.txt"
        assert main(["eval", "--data", str(data), "--proposals", str(missing)]) == 1
        err = capsys.readouterr().err
        assert str(missing) in err and err.count("\n") == 1


class TestConfig:
    def test_config_overrides_defaults(self, workspace, tmp_path):
        cfg = tmp_path / "c.json"
        cfg.write_text(json.dumps({"budget": 7}))
        out = _sample(workspace, "cfg.txt", "--config", str(cfg))
        # the explicit --budget 40 on the command line wins over the file
        assert max(len(v) for v in parse_proposals(out.read_text())[1].values()) > 7
        root, data, models = workspace
        out2 = root / "cfg2.txt"
        argv = ["sample", "--data", str(data), "--strategy", "hor", "--models", str(models), "--out", str(out2), "--config", str(cfg)]
        assert main(argv) == 0
        assert max(len(v) for v in parse_proposals(out2.read_text())[1].values()) == 7

    def test_unknown_key(self, workspace, tmp_path, capsys):
        _, data, _ = workspace
        cfg = tmp_path / "c.json"
        cfg.write_text(json.dumps({"bugdet": 7}))
        assert main(["eval", "--data", str(data), "--proposals", "x", "--config", str(cfg)]) == 1
        assert "bugdet" in capsys.readouterr().err


def test_module_entry_point():
    out = subprocess.run([sys.executable, "-m", "ctxprop", "--version"], capture_output=True, text=True)
    assert out.returncode == 0 and "ctxprop" in out.stdout
