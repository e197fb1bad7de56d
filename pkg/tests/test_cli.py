import json
import logging

import pytest

from lerconf import cli, pipeline
from lerconf.estimation import TrainingError

REFERENCE_CP = """method,edge,alpha,coverage_pct,avg_len_nm,n_test,degenerate_count
cp,left,0.1,90.22,0.135,5760,0
cp,right,0.1,89.22,0.186,5760,0
"""


def run(argv, capsys):
    code = cli.main(argv)
    out, err = capsys.readouterr()
    return code, out, err


@pytest.fixture(scope="module")
def desk_dir(tmp_path_factory):
    out = tmp_path_factory.mktemp("cli") / "desk"
    assert cli.main(["generate", "--preset", "desk", "--out", str(out)]) == 0
    return out


def test_generate_summary_and_rerun(tmp_path, capsys):
    out = tmp_path / "d"
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"dataset": {"sigmas": [1.0], "hursts": [0.5], "xis": [10, 20], "doses": [5, 50]}}))
    code, text, _ = run(["generate", "--config", str(cfg), "--out", str(out)], capsys)
    assert code == 0
    assert text.splitlines()[0] == "8 examples, 4 groups"
    assert "sha256" in text and "unchanged" not in text
    code, text2, _ = run(["generate", "--config", str(cfg), "--out", str(out)], capsys)
    assert code == 0 and "manifest hash unchanged" in text2
    assert text.splitlines()[1] == text2.splitlines()[1]


def test_desk_summary(desk_dir):
    m = pipeline.DatasetManifest.load(desk_dir)
    assert (len(m.examples), len(m.groups)) == (160, 32)


def test_invalid_sigma_names_key(tmp_path, capsys):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"dataset": {"sigmas": [0.0]}}))
    code, _, err = run(["generate", "--config", str(cfg), "--out", str(tmp_path / "d")], capsys)
    assert code == 1 and "sigmas" in err


@pytest.mark.parametrize("doc, key", [
    ({"bogus": 1}, "bogus"),
    ({"dataset": {"sigma": [1.0]}}, "sigma"),
    ({"split": {"holdout": [10]}}, "holdout"),
    ({"training": {"epochs": 3}}, "epochs"),
])
def test_unknown_keys_rejected(tmp_path, capsys, doc, key):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps(doc))
    code, _, err = run(["generate", "--config", str(cfg), "--out", str(tmp_path / "d")], capsys)
    assert code == 1 and key in err


def test_config_file_errors(tmp_path, capsys):
    code, _, err = run(["generate", "--config", str(tmp_path / "none.json"), "--out", str(tmp_path)], capsys)
    assert code == 1 and "none.json" in err
    bad = tmp_path / "bad.json"
    bad.write_text("{")
    assert run(["generate", "--config", str(bad), "--out", str(tmp_path)], capsys)[0] == 1
    assert run(["generate", "--jobs", "0", "--out", str(tmp_path)], capsys)[0] == 1
    assert run(["generate"], capsys)[0] == 1


def test_overrides_win_over_file(tmp_path):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"alpha": 0.2, "seed": 4, "method": "ncp"}))
    args = cli.build_parser().parse_args(["run", "--config", str(cfg), "--alpha", "0.05"])
    eff = cli.effective_config(args)
    assert (eff["alpha"], eff["seed"], eff["method"]) == (0.05, 4, "ncp")


def test_generate_io_error(tmp_path, capsys):
    blocker = tmp_path / "file"
    blocker.write_text("x")
    code, _, _ = run(["generate", "--preset", "desk", "--out", str(blocker / "sub")], capsys)
    assert code == 2


def test_run_all_methods(desk_dir, tmp_path, capsys, caplog):
    out = tmp_path / "r"
    with caplog.at_level(logging.INFO, logger="lerconf"):
        code, text, _ = run(["run", "--manifest", str(desk_dir), "--out", str(out), "--method", "all",
                             "--emit-plot-data"], capsys)
    assert code == 0
    rows = [line.split(",") for line in text.splitlines()]
    assert len(rows) == 8
    assert [r[0] for r in rows] == [m for m in pipeline.METHODS for _ in range(2)]
    for m in pipeline.METHODS:
        assert len(pipeline.read_csv(out / f"{m}.csv")) == 2
        assert (out / f"{m}_left_width_error.dat").exists()
        assert (out / f"{m}_right_dose_coverage.dat").exists()
    assert len(pipeline.load_reports(out / "report.json")) == 4
    eff = json.loads((out / "effective_config.json").read_text())
    assert eff["alpha"] == 0.1 and eff["method"] == "all"
    assert "effective config" in caplog.text


def test_run_single_method_near_nominal(desk_dir, tmp_path, capsys):
    code, text, _ = run(["run", "--manifest", str(desk_dir), "--out", str(tmp_path), "--method", "cp",
                         "--alpha", "0.1"], capsys)
    assert code == 0
    cov = [float(line.split(",")[3]) for line in text.splitlines()]
    assert all(75.0 <= c <= 100.0 for c in cov)


def test_run_is_deterministic(desk_dir, tmp_path, capsys):
    for name in ("a", "b"):
        assert run(["run", "--manifest", str(desk_dir), "--out", str(tmp_path / name), "--method", "all"],
                   capsys)[0] == 0
    for f in ("cp.csv", "ncp.csv", "cqr-2in.csv", "cqr-3in.csv", "report.json"):
        assert (tmp_path / "a" / f).read_bytes() == (tmp_path / "b" / f).read_bytes()


def test_run_missing_manifest(tmp_path, capsys):
    missing = tmp_path / "nowhere"
    code, _, err = run(["run", "--manifest", str(missing), "--out", str(tmp_path / "r")], capsys)
    assert code == 1 and str(missing) in err


def test_run_bad_alpha(desk_dir, tmp_path, capsys):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"alpha": 0.7}))
    code, _, err = run(["run", "--config", str(cfg), "--manifest", str(desk_dir), "--out", str(tmp_path)], capsys)
    assert code == 1 and "alpha" in err


def test_run_training_failure(desk_dir, tmp_path, capsys, monkeypatch):
    def fail(*a, **k):
        raise TrainingError("diverged")

    monkeypatch.setattr("lerconf.estimation.fit_difficulty", fail)
    code, _, err = run(["run", "--manifest", str(desk_dir), "--out", str(tmp_path / "r"), "--method", "ncp"],
                       capsys)
    assert code == 3 and "diverged" in err


def test_run_report_write_failure(desk_dir, tmp_path, capsys):
    blocker = tmp_path / "file"
    blocker.write_text("x")
    code, _, _ = run(["run", "--manifest", str(desk_dir), "--out", str(blocker), "--method", "cp"], capsys)
    assert code == 4


def test_report_reference_values(tmp_path, capsys):
    path = tmp_path / "ref_cp.csv"
    path.write_text(REFERENCE_CP)
    code, text, _ = run(["report", str(path)], capsys)
    assert code == 0
    rows = [line.split() for line in text.splitlines()[2:]]
    assert rows == [["ref_cp", "cp", "left", "90.22", "0.135"], ["ref_cp", "cp", "right", "89.22", "0.186"]]


def test_report_merges_runs(tmp_path, capsys):
    for name in ("run1", "run2"):
        (tmp_path / f"{name}.csv").write_text(REFERENCE_CP)
    code, text, _ = run(["report", str(tmp_path / "run1.csv"), str(tmp_path / "run2.csv")], capsys)
    assert code == 0
    body = text.splitlines()[2:]
    assert len(body) == 4
    assert [r.split()[0] for r in body] == ["run1", "run2", "run1", "run2"]


def test_report_reads_json(desk_dir, tmp_path, capsys):
    run(["run", "--manifest", str(desk_dir), "--out", str(tmp_path), "--method", "all"], capsys)
    code, text, _ = run(["report", str(tmp_path / "report.json")], capsys)
    assert code == 0 and len(text.splitlines()) == 2 + 8


@pytest.mark.parametrize("content, suffix", [
    ("method,edge\ncp,left\n", ".csv"),
    ("method,edge,alpha,coverage_pct,avg_len_nm,n_test,degenerate_count\ncp,top,0.1,90,0.1,5,0\n", ".csv"),
    ("method,edge,alpha,coverage_pct,avg_len_nm,n_test,degenerate_count\n", ".csv"),
    ('{"reports": [{"method": "cp"}]}', ".json"),
    ("not json", ".json"),
])
def test_report_malformed(tmp_path, capsys, content, suffix):
    path = tmp_path / f"bad{suffix}"
    path.write_text(content)
    assert run(["report", str(path)], capsys)[0] == 1


def test_report_missing_file(tmp_path, capsys):
    assert run(["report", str(tmp_path / "none.csv")], capsys)[0] == 1
