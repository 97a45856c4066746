import csv

import pytest

from cqms.cli import (
    EXIT_CONFIG,
    EXIT_NONCONVERGED,
    EXIT_OK,
    EXIT_STRICT,
    EXIT_VIOLATION,
    fmt,
    main,
    run_job,
)
from cqms.config import parse_config


def read_csv(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def test_fmt_seventeen_digits():
    assert fmt(0.1) == "0.10000000000000001"
    assert fmt(True) == "true" and fmt(3) == "3"


def test_validate_interval(tmp_path, configs_dir):
    cfg = parse_config((configs_dir / "validate_interval.ini").read_text())
    res = run_job(cfg, tmp_path)
    assert res.status == EXIT_OK
    rows = read_csv(tmp_path / "checks.csv")
    lip = [r for r in rows if r["check"] == "lipschitz_preserved"]
    assert lip and all(float(r["value"]) == 0.0 for r in lip)
    assert "lipschitz preservation max defect: 0.0" in (tmp_path / "summary.txt").read_text()


def test_validate_reports_broken_hom(tmp_path):
    text = """
[job]
kind = validate
[sequence]
builtin = custom
[stage.1]
blocks = 1 1
seminorm = metric
points = 0 1
[stage.2]
blocks = 1 1 1
seminorm = metric
points = 0 1 2
[hom.1]
multiplicities = 1 0 0 ; 0 1 0
"""
    res = run_job(parse_config(text), tmp_path)
    assert res.status == EXIT_VIOLATION
    rows = read_csv(tmp_path / "checks.csv")
    assert [r["check"] for r in rows if r["ok"] == "false"] == ["unitality"]


def test_verify_prop36_interval(tmp_path, configs_dir):
    cfg = parse_config((configs_dir / "prop36_interval.ini").read_text())
    assert cfg.pairs >= 200
    res = run_job(cfg, tmp_path, jobs=2)
    assert res.status == EXIT_OK and res.violations == 0
    rows = read_csv(tmp_path / "prop36.csv")
    assert all(float(r["lower"]) <= float(r["upper"]) + 1e-7 for r in rows)


def test_verify_section4_scaled(tmp_path, configs_dir):
    cfg = parse_config((configs_dir / "section4_scaled.ini").read_text())
    res = run_job(cfg, tmp_path)
    assert res.status == EXIT_OK
    for direction in ("forward", "backward"):
        rows = read_csv(tmp_path / f"section4_{direction}.csv")
        assert list(rows[0]) == ["stage", "element_id", "lhs_lower", "rhs", "margin", "status"]
        assert all(r["status"] == "ok" for r in rows)
    summary = (tmp_path / "summary.txt").read_text()
    assert "forward:" in summary and "backward:" in summary and "min margin" in summary


def test_metric_two_point(tmp_path, configs_dir):
    res = run_job(parse_config((configs_dir / "metric_two_point.ini").read_text()), tmp_path)
    assert res.status == EXIT_OK
    row = read_csv(tmp_path / "product_metric.csv")[0]
    assert float(row["partial"]) == 0.4375
    assert float(row["lower"]) == float(row["upper"]) == 0.5


def test_nonconvergence_exit(tmp_path):
    text = """
[job]
kind = metric
[states]
random = 2
[solver]
method = supergradient
max_iters = 1
[sequence]
builtin = constant_matrix
k = 3
depth = 1
"""
    res = run_job(parse_config(text), tmp_path)
    assert res.status == EXIT_NONCONVERGED
    assert read_csv(tmp_path / "metric.csv")[0]["converged"] == "false"


def test_strict_turns_warnings_into_failure(tmp_path):
    text = "[job]\nkind = validate\n[sequence]\nbuiltin = uhf_like\ndepth = 2\n"
    assert run_job(parse_config(text), tmp_path / "a").status == EXIT_OK
    assert run_job(parse_config(text), tmp_path / "b", strict=True).status == EXIT_STRICT


def test_main_config_error(tmp_path, capsys):
    bad = tmp_path / "bad.ini"
    bad.write_text("[job]\nkind = validate\nbogus = 1\n")
    assert main(["--config", str(bad), "--out", str(tmp_path / "o")]) == EXIT_CONFIG
    assert "bogus" in capsys.readouterr().err
    assert main(["--config", str(tmp_path / "missing.ini")]) == EXIT_CONFIG


def test_main_seed_override_and_determinism(tmp_path, configs_dir):
    cfg = str(configs_dir / "probe_m2.ini")
    for name in ("a", "b"):
        assert main(["--config", cfg, "--seed", "7", "--out", str(tmp_path / name), "--jobs", "2"]) == 0
    files = sorted(p.name for p in (tmp_path / "a").iterdir())
    assert "covering.csv" in files
    for f in files:
        assert (tmp_path / "a" / f).read_bytes() == (tmp_path / "b" / f).read_bytes()
    assert "seed: 7" in (tmp_path / "a" / "summary.txt").read_text()


def test_csv_line_endings(tmp_path, configs_dir):
    run_job(parse_config((configs_dir / "metric_two_point.ini").read_text()), tmp_path)
    data = (tmp_path / "metric.csv").read_bytes()
    assert b"\r" not in data and data.endswith(b"\n")


@pytest.mark.parametrize("name", ["distance_matrix_m2", "section4_dilated"])
def test_other_shipped_jobs_succeed(tmp_path, configs_dir, name):
    res = run_job(parse_config((configs_dir / f"{name}.ini").read_text()), tmp_path, jobs=2)
    assert res.status == EXIT_OK
