import json
import os
import subprocess
import sys

import numpy as np
import pytest

from recogsheet import cli
from recogsheet import datasets as D
from recogsheet import model as M

SMALL = ["--num-classes", "6", "--num-categories", "3", "--dim", "12", "--frames", "25", "--num-days", "2"]


def run(*argv):
    return cli.main([str(a) for a in argv])


@pytest.fixture(scope="module")
def data_dir(tmp_path_factory):
    root = tmp_path_factory.mktemp("cli")
    assert run("synth", "--out-dir", root / "data", "--seed", 3, "--drift", 0.3, *SMALL) == 0
    return root


@pytest.fixture(scope="module")
def manifest(data_dir):
    return data_dir / "data" / "manifest.json"


@pytest.fixture(scope="module")
def checkpoint(data_dir, manifest):
    assert run("train", "--manifest", manifest, "--out-dir", data_dir / "train", "--days", 1) == 0
    return data_dir / "train" / "model.rls"


def command_lines(manifest, checkpoint):
    m, c = str(manifest), str(checkpoint)
    return {
        "synth": ["synth", *SMALL, "--seed", "9", "--encoding", "csv"],
        "train": ["train", "--manifest", m, "--lambda", "0.5"],
        "eval": ["eval", "--manifest", m, "--checkpoint", c, "--days", "2"],
        "xmatrix": ["xmatrix", "--manifest", m, "--train-k", "20"],
        "incremental": ["incremental", "--manifest", m, "--source-days", "1", "--test-day", "2", "--step", "5"],
        "reliability": ["reliability", "--manifest", m, "--trials", "12", "--no-dedupe", "--seed", "4"],
        "filter": ["filter", "--manifest", m, "--windows", "1,3,5", "--reliability", "--trials", "8", "--t-max", "3"],
        "datasheet": ["datasheet", "--manifest", m, "--trials", "10", "--target-acc", "0.9", "--levels", "90,50"],
    }


def read_tree(path):
    return {p.relative_to(path).as_posix(): p.read_bytes() for p in sorted(path.rglob("*")) if p.is_file()}


@pytest.mark.parametrize("name", ["synth", "train", "eval", "xmatrix", "incremental", "reliability", "filter", "datasheet"])
class TestCommands:
    def test_runs_twice_identically(self, name, manifest, checkpoint, tmp_path, capsys):
        argv = command_lines(manifest, checkpoint)[name]
        assert run(*argv, "--out-dir", tmp_path / "a") == 0
        assert run(*argv, "--out-dir", tmp_path / "b") == 0
        a, b = read_tree(tmp_path / "a"), read_tree(tmp_path / "b")
        assert len(a) >= 2 and a == b

    def test_rerun_from_echo(self, name, manifest, checkpoint, tmp_path, capsys):
        argv = command_lines(manifest, checkpoint)[name]
        assert run(*argv, "--out-dir", tmp_path / "a") == 0
        assert run("rerun", tmp_path / "a" / "config.json", "--out-dir", tmp_path / "b") == 0
        assert read_tree(tmp_path / "a") == read_tree(tmp_path / "b")
        echo = json.loads((tmp_path / "a" / "config.json").read_text())
        assert echo["command"] == name and "seed" in echo and "workers" in echo

    def test_workers_do_not_change_outputs(self, name, manifest, checkpoint, tmp_path, capsys):
        argv = command_lines(manifest, checkpoint)[name]
        assert run(*argv, "--out-dir", tmp_path / "a", "--workers", 1) == 0
        assert run(*argv, "--out-dir", tmp_path / "b", "--workers", 3) == 0
        a, b = read_tree(tmp_path / "a"), read_tree(tmp_path / "b")
        assert json.loads(a.pop("config.json"))["workers"] == 1
        b.pop("config.json")
        assert a == b


class TestOutputs:
    def test_synth_prints_manifest(self, tmp_path, capsys):
        assert run("synth", "--out-dir", tmp_path, *SMALL) == 0
        assert capsys.readouterr().out.strip() == str(tmp_path / "manifest.json")
        assert len(D.load_dataset(tmp_path / "manifest.json")) == 6 * 25 * 2 * 2

    def test_train_checkpoint_matches_fit(self, manifest, checkpoint):
        ds = D.select(D.load_dataset(manifest), days=1, split="train")
        ref = M.fit_batch(ds.features, ds.class_id, 1.0, ds.num_classes)
        model = M.load_checkpoint(checkpoint)
        np.testing.assert_array_equal(model.weights, ref.weights)

    def test_eval_json_stdout(self, manifest, checkpoint, capsys):
        assert run("eval", "--manifest", manifest, "--checkpoint", checkpoint) == 0
        out = json.loads(capsys.readouterr().out)
        assert 0 <= out["accuracy"] <= 1 and out["num_total"] == 6 * 25 * 2

    def test_filter_unit_window_equals_eval(self, manifest, checkpoint, tmp_path, capsys):
        assert run("eval", "--manifest", manifest, "--checkpoint", checkpoint, "--days", 2) == 0
        acc = json.loads(capsys.readouterr().out)["accuracy"]
        assert run("filter", "--manifest", manifest, "--checkpoint", checkpoint, "--days", 2,
                   "--windows", 1, "--out-dir", tmp_path) == 0
        row = (tmp_path / "sweep.csv").read_text().splitlines()[1].split(",")
        assert row[0] == "1" and float(row[2]) == pytest.approx(acc, abs=1e-10)

    def test_filter_default_windows(self, manifest, tmp_path, capsys):
        assert run("filter", "--manifest", manifest, "--out-dir", tmp_path) == 0
        lines = (tmp_path / "sweep.csv").read_text().splitlines()
        assert len(lines) == 51 and lines[-1].startswith("50,4.41,")

    def test_xmatrix_shape(self, manifest, tmp_path, capsys):
        assert run("xmatrix", "--manifest", manifest, "--out-dir", tmp_path) == 0
        lines = (tmp_path / "xmatrix.csv").read_text().splitlines()
        assert lines[0] == "train\\test,day1,day2,average"
        assert [ln.split(",")[0] for ln in lines[1:]] == ["day1", "day2", "all"]

    def test_reliability_files(self, manifest, tmp_path, capsys):
        assert run("reliability", "--manifest", manifest, "--out-dir", tmp_path, "--trials", 5) == 0
        summary = (tmp_path / "summary.csv").read_text().splitlines()
        assert summary[0] == "t,mean,std,num_trials"
        assert [ln.split(",")[0] for ln in summary[1:]] == ["2", "3", "4"]
        levels = (tmp_path / "levels.csv").read_text().splitlines()
        assert levels[0] == "C,t,A_star" and len(levels) == 1 + 5 * 3

    def test_datasheet_zero_noise(self, tmp_path, capsys):
        assert run("synth", "--out-dir", tmp_path / "d", "--noise", 0, *SMALL) == 0
        assert run("datasheet", "--manifest", tmp_path / "d" / "manifest.json", "--out-dir", tmp_path / "s",
                   "--lambda", 1e-3) == 0
        rows = (tmp_path / "s" / "datasheet.csv").read_text().splitlines()[1:]
        assert [r.split(",")[2] for r in rows] == ["6"] * 5
        assert (tmp_path / "s" / "datasheet.txt").read_text().splitlines()[2].split()[2:] == ["6"] * 5


class TestExitCodes:
    def test_invalid_argument(self, manifest, tmp_path, capsys):
        assert run("reliability", "--manifest", manifest, "--out-dir", tmp_path, "--t-min", 9) == cli.EXIT_INVALID_ARGUMENT
        assert "error" in capsys.readouterr().err

    def test_missing_manifest_flag(self, tmp_path, capsys):
        assert run("train", "--out-dir", tmp_path) == cli.EXIT_INVALID_ARGUMENT

    def test_empty_selection(self, manifest, tmp_path, capsys):
        assert run("train", "--manifest", manifest, "--out-dir", tmp_path, "--days", 7) == cli.EXIT_INVALID_ARGUMENT

    def test_invalid_data(self, tmp_path, capsys):
        (tmp_path / "manifest.json").write_text("{not json")
        assert run("train", "--manifest", tmp_path / "manifest.json", "--out-dir", tmp_path / "o") == cli.EXIT_INVALID_DATA

    def test_io_error(self, tmp_path, capsys):
        assert run("train", "--manifest", tmp_path / "nope.json", "--out-dir", tmp_path / "o") == cli.EXIT_IO

    def test_corrupt_checkpoint(self, manifest, tmp_path, capsys):
        (tmp_path / "bad.rls").write_bytes(b"XXXX" + bytes(40))
        assert run("eval", "--manifest", manifest, "--checkpoint", tmp_path / "bad.rls") == cli.EXIT_INVALID_DATA

    def test_codes_distinct(self):
        codes = {cli.EXIT_OK, cli.EXIT_INVALID_ARGUMENT, cli.EXIT_INVALID_DATA, cli.EXIT_IO}
        assert len(codes) == 4


def test_help_lists_commands(capsys):
    with pytest.raises(SystemExit):
        run("--help")
    out = capsys.readouterr().out
    for name in ("synth", "train", "eval", "xmatrix", "incremental", "reliability", "filter", "datasheet"):
        assert name in out


def test_numpy_fallback_matches(manifest, tmp_path):
    """The pure-numpy kernels give byte-identical reports."""
    argv = ["filter", "--manifest", str(manifest), "--windows", "1,4,9", "--reliability", "--trials", "6", "--t-max", "3"]
    outs = {}
    for flag in ("0", "1"):
        env = dict(os.environ, RECOGSHEET_DISABLE_NUMBA=flag)
        out = tmp_path / flag
        subprocess.run([sys.executable, "-m", "recogsheet", *argv, "--out-dir", str(out)], env=env, check=True,
                       capture_output=True)
        outs[flag] = read_tree(out)
    assert outs["0"] == outs["1"]
