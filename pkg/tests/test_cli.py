import json
import shutil
import subprocess
import sys
import textwrap
from importlib import resources

import numpy as np
import pytest

from gpsobol import config
from gpsobol.cli import main
from gpsobol.errors import ConfigError

SMALL = """
[run]
n_train = 20
n_test = 50
m_mc = 64
n_gp = 6
n_boot = 8
seed = 3
restarts = 2
block_size = 128
second_order = true
convergence = [10]
projection_bins = 4
projection_probes = 64
output_dir = "out"

[model]
builtin = "{selector}"
"""


def write_config(tmp_path, selector="builtin:ishigami?a=7&b=0.1", name="run.toml", **extra):
    text = SMALL.format(selector=selector)
    for key, value in extra.items():
        text = text.replace("[model]", f"{key} = {value}\n\n[model]", 1)
    path = tmp_path / name
    path.write_text(text)
    return path


def external_config(tmp_path, body, n_train=4):
    stub = tmp_path / "stub.py"
    stub.write_text(textwrap.dedent(body))
    path = tmp_path / "ext.toml"
    path.write_text(textwrap.dedent(f"""
        [run]
        n_train = {n_train}
        m_mc = 8
        n_gp = 2
        n_boot = 2
        restarts = 1
        output_dir = "out"

        [model]
        command = "{{python}} stub.py {{input}} {{output}}"
        timeout = 30

        [[parameters]]
        name = "a"
        lower = 0.0
        upper = 1.0

        [[parameters]]
        name = "b"
        lower = 1.0
        upper = 2.0
    """))
    return path


class TestConfig:
    def test_hash_ignores_paths_and_workers(self, tmp_path):
        a = config.load(write_config(tmp_path))
        b = config.load(write_config(tmp_path, name="other.toml", workers=4))
        assert a.hash == b.hash

    def test_hash_tracks_seed(self, tmp_path):
        a = config.load(write_config(tmp_path))
        path = write_config(tmp_path, name="b.toml")
        path.write_text(path.read_text().replace("seed = 3", "seed = 4"))
        assert config.load(path).hash != a.hash

    def test_unknown_key(self, tmp_path):
        with pytest.raises(ConfigError):
            config.load(write_config(tmp_path, n_tran=5))

    @pytest.mark.parametrize("key,value", [("n_gp", 1), ("n_boot", 1), ("m_mc", 1),
                                           ("level", 1.5), ("kernel", '"cubic"')])
    def test_invalid_values(self, tmp_path, key, value):
        path = write_config(tmp_path)
        lines = [ln for ln in path.read_text().splitlines() if not ln.startswith(f"{key} =")]
        path.write_text("\n".join(lines).replace("[model]", f"{key} = {value}\n[model]"))
        with pytest.raises(ConfigError):
            config.load(path)

    def test_bad_toml(self, tmp_path):
        path = tmp_path / "x.toml"
        path.write_text("[run\n")
        with pytest.raises(ConfigError):
            config.load(path)

    def test_shipped_example_loads(self):
        ref = resources.files("gpsobol") / "examples" / "tumor_table1.conf"
        with resources.as_file(ref) as path:
            cfg = config.load(path)
        assert cfg.space.dim == 6 and cfg.second_order and not cfg.is_builtin
        assert cfg.units["Lp_v"] == "mm/(Pa s)"


class TestExitCodes:
    def test_n_train_one_is_config_error_without_launches(self, tmp_path):
        marker = tmp_path / "launched"
        path = external_config(tmp_path, f"""
            open({str(marker)!r}, "w").write("x")
        """, n_train=1)
        assert main(["run", str(path)]) == 2
        assert not marker.exists()

    def test_missing_config_file(self, tmp_path):
        assert main(["run", str(tmp_path / "absent.toml")]) == 2

    def test_missing_artifact(self, tmp_path):
        assert main(["fit", str(write_config(tmp_path))]) == 2

    def test_failing_model(self, tmp_path):
        path = external_config(tmp_path, """
            import sys
            sys.exit(1)
        """)
        assert main(["run", str(path)]) == 3

    def test_constant_model_is_numerical(self, tmp_path):
        assert main(["run", str(write_config(tmp_path, "builtin:linear?w=0,0"))]) == 4

    def test_artifact_from_other_config_refused(self, tmp_path):
        path = write_config(tmp_path)
        assert main(["design", str(path)]) == 0
        assert main(["evaluate", str(path)]) == 0
        path.write_text(path.read_text().replace("seed = 3", "seed = 5"))
        assert main(["fit", str(path)]) == 2
        assert not (tmp_path / "out" / "gp.json").exists()


@pytest.fixture(scope="module")
def finished_run(tmp_path_factory):
    root = tmp_path_factory.mktemp("run")
    path = write_config(root)
    assert main(["run", str(path)]) == 0
    return root, path


class TestPipeline:
    def test_artifacts(self, finished_run):
        root, _ = finished_run
        out = root / "out"
        for name in ("design_train.csv", "design_test.csv", "design_mc.csv", "training.csv",
                     "test.csv", "gp.json", "validation.json", "indices.json", "indices.csv",
                     "projection.csv", "convergence.csv", "report.json", "report.csv",
                     "fig_indices.png", "fig_projection.png", "fig_convergence.png"):
            assert (out / name).stat().st_size > 0, name

    def test_report_content(self, finished_run):
        root, path = finished_run
        doc = json.loads((root / "out" / "report.json").read_text())
        meta = doc["metadata"]
        assert meta["config_hash"] == config.load(path).hash
        assert meta["design_rows"] == 64 * (2 * 3 + 2)
        assert set(doc["parameters"]) == {"x1", "x2", "x3"}
        assert len(doc["second_order"]) == 3
        assert -1.0 < meta["validation"]["q2_test"] <= 1.0

    def test_design_row_count_without_second_order(self, tmp_path):
        path = write_config(tmp_path)
        path.write_text(path.read_text().replace("second_order = true", "second_order = false"))
        assert main(["design", str(path)]) == 0
        lines = [ln for ln in (tmp_path / "out" / "design_mc.csv").read_text().splitlines()
                 if not ln.startswith("#")]
        assert len(lines) - 1 == 64 * (3 + 2)

    def test_rerun_skips(self, finished_run, capsys):
        root, path = finished_run
        before = (root / "out" / "gp.json").stat().st_mtime_ns
        assert main(["fit", str(path)]) == 0
        assert "skipped" in capsys.readouterr().out
        assert (root / "out" / "gp.json").stat().st_mtime_ns == before

    def test_byte_identical_across_runs_and_workers(self, finished_run, tmp_path):
        root, path = finished_run
        copy = tmp_path / "run.toml"
        shutil.copy(path, copy)
        assert main(["run", str(copy), "-j", "2"]) == 0
        for name in ("report.json", "report.csv", "gp.json", "projection.csv", "convergence.csv"):
            assert (tmp_path / "out" / name).read_bytes() == (root / "out" / name).read_bytes()

    def test_forced_rerun_identical(self, finished_run, tmp_path):
        root, path = finished_run
        copy = tmp_path / "run.toml"
        shutil.copy(path, copy)
        assert main(["run", str(copy)]) == 0
        first = (tmp_path / "out" / "report.json").read_bytes()
        assert main(["run", str(copy), "--force"]) == 0
        assert (tmp_path / "out" / "report.json").read_bytes() == first


class TestExternalModel:
    def test_cache_reused(self, tmp_path):
        counter = tmp_path / "count"
        path = external_config(tmp_path, f"""
            import csv, sys
            with open({str(counter)!r}, "a") as fh:
                fh.write("x")
            row = next(csv.DictReader(open(sys.argv[1])))
            open(sys.argv[2], "w").write(repr(float(row["a"]) + float(row["b"]) ** 2))
        """, n_train=6)
        assert main(["design", str(path)]) == 0
        assert main(["evaluate", str(path)]) == 0
        assert counter.read_text() == "x" * 6
        assert main(["evaluate", str(path), "--force"]) == 0
        assert counter.read_text() == "x" * 6


class TestBuiltinEval:
    def test_file_protocol(self, tmp_path):
        src = tmp_path / "in.csv"
        src.write_text("x1,x2,x3\n0.1,0.2,0.3\n")
        dst = tmp_path / "out.txt"
        assert main(["builtin-eval", "builtin:ishigami", str(src), str(dst)]) == 0
        expected = np.sin(0.1) + 7 * np.sin(0.2) ** 2 + 0.1 * 0.3**4 * np.sin(0.1)
        assert float(dst.read_text()) == pytest.approx(expected, rel=1e-12)

    def test_module_entry_point(self):
        out = subprocess.run([sys.executable, "-m", "gpsobol", "--version"],
                             capture_output=True, text=True, check=True)
        assert out.stdout.startswith("gpsobol ")
