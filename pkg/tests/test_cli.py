import csv

import numpy as np
import pytest

from ldg_defect import cli
from ldg_defect import field as F
from ldg_defect.cli import EXIT_ANOMALY, EXIT_NOCONV, EXIT_OK, EXIT_USAGE, main


def write(path, text):
    path.write_text(text)
    return str(path)


def rows(path):
    with open(path) as fh:
        return list(csv.reader(fh))


@pytest.fixture(scope="module")
def solved(tmp_path_factory):
    d = tmp_path_factory.mktemp("solve")
    cfg = write(d / "run.cfg", "# coarse k=1 disk\nn = 48\neps = 0.125\n")
    rc = main(["solve", "--config", cfg, "--out", str(d / "out"), "--quiet"])
    return rc, d


def test_parse_config():
    cfg = cli.parse_config("n = 64  # grid\n\neps_list = 0.2, 0.1 0.05\nsigma_projection = yes\n"
                           "dt = auto\n")
    assert cfg.n == 64 and cfg.eps_list == (0.2, 0.1, 0.05)
    assert cfg.sigma_projection and cfg.dt is None
    for text, what in (("n = 64\nfoo = 1\n", "x.cfg:2: unknown key 'foo'"),
                       ("n = 64\nn = 32\n", "x.cfg:2: duplicate key"),
                       ("eps = small\n", "x.cfg:1: bad value"),
                       ("just words\n", "x.cfg:1: expected")):
        with pytest.raises(cli.ConfigError, match=what):
            cli.parse_config(text, "x.cfg")


def test_solve_writes_snapshot_and_trace(solved):
    rc, d = solved
    assert rc == EXIT_OK
    snap = rows(d / "out" / "snapshot.csv")
    assert snap[0] == F.SNAPSHOT_HEADER
    trace = rows(d / "out" / "trace.csv")
    assert trace[0] == cli.TRACE_HEADER and len(trace) > 2


def test_solve_is_byte_identical(solved, tmp_path):
    _, d = solved
    cfg = str(d / "run.cfg")
    assert main(["solve", "--config", cfg, "--out", str(tmp_path), "--quiet"]) == EXIT_OK
    for name in ("snapshot.csv", "trace.csv"):
        assert (tmp_path / name).read_bytes() == (d / "out" / name).read_bytes()


def test_malformed_key_names_line(tmp_path, capsys):
    cfg = write(tmp_path / "bad.cfg", "n = 32\nfoo = 1\n")
    assert main(["solve", "--config", cfg, "--out", str(tmp_path / "o")]) == EXIT_USAGE
    assert "bad.cfg:2" in capsys.readouterr().err


def test_usage_errors(tmp_path):
    assert main(["solve", "--config", str(tmp_path / "missing.cfg")]) == EXIT_USAGE
    assert main(["frobnicate"]) == EXIT_USAGE
    cfg = write(tmp_path / "even.cfg", "n = 32\nk = 2\n")
    assert main(["solve", "--config", cfg, "--out", str(tmp_path / "o")]) == EXIT_USAGE


def test_max_iters_one(tmp_path):
    cfg = write(tmp_path / "one.cfg", "n = 32\neps = 0.1\nmax_iters = 1\n")
    assert main(["solve", "--config", cfg, "--out", str(tmp_path), "--quiet"]) == EXIT_NOCONV
    assert len(rows(tmp_path / "trace.csv")) == 2
    assert (tmp_path / "snapshot.csv").exists()


def test_sweep_four_values(tmp_path):
    cfg = write(tmp_path / "s.cfg", "n = 48\neps_list = 0.25, 0.125, 0.0625, 0.03125\n")
    assert main(["sweep", "--config", cfg, "--out", str(tmp_path / "o"), "--quiet"]) == EXIT_OK
    files = sorted(p.name for p in (tmp_path / "o").iterdir())
    assert len([f for f in files if f.startswith("snapshot_eps_")]) == 4
    summary = rows(tmp_path / "o" / "scaling.csv")
    assert summary[0] == cli.SCALING_HEADER and len(summary) == 5
    assert summary[1][3] == "nan"
    assert 0.85 * np.pi / 2 <= float(summary[-1][3]) <= 1.15 * np.pi / 2


def test_sweep_needs_three_values(tmp_path):
    cfg = write(tmp_path / "s.cfg", "n = 32\neps_list = 0.25, 0.125\n")
    assert main(["sweep", "--config", cfg, "--out", str(tmp_path / "o")]) == EXIT_USAGE


def test_analyze_converged_snapshot(solved, tmp_path):
    _, d = solved
    cfg = str(d / "run.cfg")
    rc = main(["analyze", "--config", cfg, "--snapshot", str(d / "out" / "snapshot.csv"),
               "--out", str(tmp_path), "--quiet"])
    assert rc == EXIT_OK
    assert len(rows(tmp_path / "defect.csv")) > 1
    assert len(rows(tmp_path / "psi.csv")) == 2
    assert (tmp_path / "psi_field.csv").exists()


def test_analyze_constant_snapshot(tmp_path, capsys):
    _, mask = F.make_disk_domain(32)
    F.write_snapshot(tmp_path / "flat.csv", F.constant_field(mask, np.diag([1.0, 0, 0])))
    cfg = write(tmp_path / "a.cfg", "n = 32\n")
    rc = main(["analyze", "--config", cfg, "--snapshot", str(tmp_path / "flat.csv"),
               "--out", str(tmp_path / "o")])
    assert rc == EXIT_ANOMALY
    assert "NoDefect" in capsys.readouterr().err
    assert rows(tmp_path / "o" / "defect.csv") == [cli.D.DEFECT_CSV_HEADER]


def test_analyze_truncated_snapshot(solved, tmp_path):
    _, d = solved
    lines = (d / "out" / "snapshot.csv").read_text().splitlines()
    write(tmp_path / "cut.csv", "\n".join(lines[: len(lines) // 2]) + "\n")
    rc = main(["analyze", "--config", str(d / "run.cfg"), "--snapshot", str(tmp_path / "cut.csv"),
               "--out", str(tmp_path / "o")])
    assert rc == EXIT_USAGE


def test_selftest(capsys):
    assert main(["selftest"]) == EXIT_OK
    out = capsys.readouterr().out
    assert "selftest: all passed" in out and "FAIL " not in out
    assert main(["selftest", "--tol-scale", "0"]) != EXIT_OK
