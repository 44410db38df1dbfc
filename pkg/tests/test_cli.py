import csv

import pytest

from streamsvd import cli, experiment


def _run(*argv):
    return cli.main([str(a) for a in argv])


SMALL = ["--n", 10, "--r", 2, "--b", 4, "--T", 40, "--seeds", "0,1", "--pm-block", 8]


def test_run_writes_traces(tmp_path, capsys):
    assert _run("run", *SMALL, "--algorithms", "moses,offline", "--out", tmp_path) == 0
    assert (tmp_path / "moses.csv").read_text().startswith(experiment.TRACE_HEADER + "\n")
    assert "moses" in capsys.readouterr().out


def test_config_file_and_override(tmp_path):
    conf = tmp_path / "exp.cfg"
    conf.write_text("# small run\nn = 10\nr=2\nb=4\nT=40\nseeds=0..2\nalgorithms=offline\n"
                    "no-center=true\n")
    args = cli.make_parser().parse_args(["run", "--config", str(conf), "--r", "3"])
    cfg = cli.build_config(args)
    assert (cfg.n, cfg.r, cfg.seeds, cfg.algorithms, cfg.center) == \
        (10, 3, (0, 1, 2), ("offline",), False)


def test_config_errors_exit_1(tmp_path, capsys):
    assert _run("run", "--n", 10, "--r", 5, "--b", 4, "--out", tmp_path) == 1
    bad = tmp_path / "bad.cfg"
    bad.write_text("colour=blue\n")
    assert _run("run", "--config", bad, "--out", tmp_path) == 1
    assert _run("run", "--source", "csv", "--csv-path", tmp_path / "missing.csv",
                "--out", tmp_path) == 1
    assert _run("run", *SMALL, "--n", "ten", "--out", tmp_path) == 1
    assert "error:" in capsys.readouterr().err


def test_parse_error_exit_1(tmp_path):
    data = tmp_path / "d.csv"
    data.write_text("1,2,3\n4,x,6\n")
    assert _run("run", "--source", "csv", "--csv-path", data, "--r", 1, "--b", 1,
                "--out", tmp_path) == 1


def test_bound_check(tmp_path, capsys):
    assert _run("bound-check", *SMALL, "--out", tmp_path) == 0
    rows = list(csv.reader(open(tmp_path / "bound.csv")))
    assert rows[0] == experiment.BOUND_HEADER.split(",")
    assert len(rows) == 1 + 40 // 4 - 1
    assert capsys.readouterr().out.count("ok") == 2


def test_bound_check_degenerate_exit_2(tmp_path):
    # A rank-1 spectrum has sigma_2 = 0, so the growth factor is undefined for r = 2.
    assert _run("bound-check", *SMALL, "--spectrum", "explicit:1", "--out", tmp_path) == 2


def test_bench(tmp_path):
    assert _run("bench", "--r", 2, "--b", 4, "--ns", "8,16", "--updates", 5,
                "--seeds", 0, "--out", tmp_path) == 0
    rows = list(csv.DictReader(open(tmp_path / "bench.csv")))
    assert [int(r["n"]) for r in rows] == [8, 16]
    assert all(int(r["updates"]) == 5 for r in rows)


def test_bench_updates_counts():
    times, mem = cli.bench_updates(8, 2, 2, 10)
    assert len(times) == 10 and mem > 0


def test_seed_ranges():
    assert cli._int_tuple("3..5") == (3, 4, 5)
    assert cli._int_tuple("1, 4") == (1, 4)
