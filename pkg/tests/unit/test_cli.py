from types import SimpleNamespace

import numpy as np
import orjson
import pandas as pd
import pytest
from pyprism import cli
from pyprism.cli import EXIT_OK, EXIT_USAGE, build_parser, default_jobs, main, resolve_jobs
from pyprism.formats import read_csv, read_manifest, write_matrix


@pytest.fixture
def config_path(tmp_path):
    path = tmp_path / "exp.json"
    path.write_bytes(orjson.dumps({
        "d": 4, "k": 2, "n_obs": [40], "snr_db": [20.0], "m_samples": [20], "seeds": [0],
        "em": {"total_iterations": 2, "switch_iteration": 1},
    }))
    return path


def test_requires_subcommand():
    with pytest.raises(SystemExit) as info:
        main([])
    assert info.value.code == 2


def test_fit_flags_parse():
    args = build_parser().parse_args(["fit", "m.json", "--method", "sisa", "--iters", "5", "--switch", "2"])
    assert (args.manifest, args.method, args.iters, args.switch) == ("m.json", "sisa", 5, 2)


def test_default_jobs_positive():
    assert default_jobs() >= 1


def test_generate_then_fit_vca(tmp_path, config_path, capsys):
    out = tmp_path / "data"
    assert main(["generate", "--config", str(config_path), "--seed", "3", "--out", str(out)]) == EXIT_OK
    manifest = read_manifest(out / "manifest.json")
    assert manifest["seed"] == 3
    assert (manifest["d"], manifest["k"], manifest["n_obs"]) == (4, 2, 40)
    assert str(out / "manifest.json") in capsys.readouterr().out

    assert main(["fit", str(out / "manifest.json"), "--method", "vca", "--jobs", "1"]) == EXIT_OK
    assert (out / "h_est.txt").exists()
    assert read_csv(out / "metrics.csv")["method"].tolist() == ["vca"]
    assert "permutation MSE" in capsys.readouterr().out


def test_eval(tmp_path, capsys):
    write_matrix(tmp_path / "a.txt", np.eye(3))
    write_matrix(tmp_path / "b.txt", np.eye(3)[:, [1, 2, 0]])
    code = main(["eval", "--truth", str(tmp_path / "a.txt"), "--estimate", str(tmp_path / "b.txt"),
                 "--out", str(tmp_path)])
    assert code == EXIT_OK
    output = capsys.readouterr().out
    assert "permutation MSE 0" in output
    assert "permutation 2 0 1" in output
    assert (tmp_path / "metrics.csv").exists()


def test_missing_file_is_usage_error(tmp_path):
    assert main(["eval", "--truth", str(tmp_path / "nope.txt"), "--estimate", str(tmp_path / "nope.txt")]) == EXIT_USAGE


def test_bad_config_is_usage_error(tmp_path):
    path = tmp_path / "exp.json"
    path.write_text("{\"k\": 3,}")
    assert main(["generate", "--config", str(path), "--out", str(tmp_path)]) == EXIT_USAGE


@pytest.mark.parametrize(
    "cli_jobs, configured, expected",
    [(5, 2, 5), (None, 2, 2), (None, None, 7), (1, None, 1)],
)
def test_resolve_jobs(monkeypatch, cli_jobs, configured, expected):
    monkeypatch.setattr(cli, "default_jobs", lambda: 7)
    assert resolve_jobs(cli_jobs, configured) == expected


@pytest.fixture
def captured_sweep_jobs(monkeypatch):
    seen = []

    def fake_sweep(config, master_seed, jobs=None):
        seen.append(jobs)
        empty = pd.DataFrame()
        return SimpleNamespace(summary=empty, failures=empty, paths={"results": "results.csv"})

    monkeypatch.setattr(cli, "cmd_sweep", fake_sweep)
    monkeypatch.setattr(cli, "format_summary", lambda summary: "")
    monkeypatch.setattr(cli, "default_jobs", lambda: 7)
    return seen


def _write_config(tmp_path, **values):
    path = tmp_path / "jobs.json"
    path.write_bytes(orjson.dumps({"d": 4, "k": 2, **values}))
    return str(path)


def test_sweep_uses_configured_jobs(tmp_path, captured_sweep_jobs):
    assert main(["sweep", "--config", _write_config(tmp_path, jobs=2)]) == EXIT_OK
    assert main(["sweep", "--config", _write_config(tmp_path, jobs=2), "--jobs", "3"]) == EXIT_OK
    assert main(["sweep", "--config", _write_config(tmp_path)]) == EXIT_OK
    assert captured_sweep_jobs == [2, 3, 7]


def test_fit_uses_configured_em_jobs(tmp_path, monkeypatch):
    seen = []

    def fake_fit(manifest, method, em, seed=None, out_dir=None):
        seen.append(em.jobs)
        return SimpleNamespace(method=method, record=None)

    monkeypatch.setattr(cli, "cmd_fit", fake_fit)
    monkeypatch.setattr(cli, "default_jobs", lambda: 7)
    config = _write_config(tmp_path, em={"jobs": 2})
    assert main(["fit", "m.json", "--config", config]) == EXIT_OK
    assert main(["fit", "m.json", "--config", config, "--jobs", "4"]) == EXIT_OK
    assert main(["fit", "m.json"]) == EXIT_OK
    assert seen == [2, 4, 7]
