import csv
import json

import numpy as np
import pytest

from vecchia.cli import ConfigError, build_parser, ingest_csv, main


def write_csv(path, header, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        w.writerows(rows)
    return str(path)


def read_csv(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


@pytest.fixture
def points(tmp_path):
    rng = np.random.default_rng(0)
    X = rng.uniform(size=(100, 2))
    z = np.sin(6 * X[:, 0]) + 0.1 * rng.standard_normal(100)
    return write_csv(tmp_path / "obs.csv", ["x", "y", "z"], np.column_stack([X, z]))


def run(*argv):
    return main([str(a) for a in argv])


# ingestion -------------------------------------------------------------------


def test_ingest_three_rows(tmp_path):
    path = write_csv(tmp_path / "a.csv", ["x", "y"], [[0, 0], [1, 0], [0, 1]])
    ds = ingest_csv(path)
    assert ds.n == 3 and ds.locs.d == 2 and ds.y is None


def test_ingest_malformed_row(tmp_path):
    path = write_csv(tmp_path / "a.csv", ["x", "y", "z"],
                     [[0, 0, 1], [1, "oops", 2], [0, 1, 3], [2, 2]])
    with pytest.raises(ConfigError, match=":3:"):
        ingest_csv(path, response="z")
    ds = ingest_csv(path, response="z", skip_bad=True)
    assert ds.n == 2
    assert [line for line, _ in ds.rejected] == [3, 5]
    np.testing.assert_array_equal(ds.y, [1, 3])


def test_ingest_missing_values_rejected(tmp_path):
    path = write_csv(tmp_path / "a.csv", ["x", "z"], [[0, 1], [1, "NA"], [2, 3]])
    ds = ingest_csv(path, response="z", skip_bad=True)
    assert ds.n == 2 and "missing" in ds.rejected[0][1]


def test_ingest_sphere_time(tmp_path):
    path = write_csv(tmp_path / "s.csv", ["lon", "lat", "time", "z"],
                     [[0, 0, 1.0, 0.5], [90, 0, 2.0, 0.1]])
    ds = ingest_csv(path, response="z", sphere_time=True)
    np.testing.assert_allclose(ds.locs.coords[0], [1, 0, 0], atol=1e-15)
    np.testing.assert_allclose(ds.locs.coords[1], [0, 1, 0], atol=1e-15)
    np.testing.assert_array_equal(ds.locs.times, [1.0, 2.0])


def test_ingest_covariates_and_unknown_columns(tmp_path):
    path = write_csv(tmp_path / "c.csv", ["x", "y", "elev", "z"], [[0, 0, 5, 1], [1, 1, 6, 2]])
    ds = ingest_csv(path, coords="x,y", covariates="elev", response="z")
    np.testing.assert_array_equal(ds.X[:, 0], [5, 6])
    with pytest.raises(ConfigError):
        ingest_csv(path, coords="x,w")
    with pytest.raises(ConfigError):
        ingest_csv(path, response="q", require_response=True)


def test_ingest_empty_and_missing_file(tmp_path):
    (tmp_path / "e.csv").write_text("")
    with pytest.raises(ConfigError):
        ingest_csv(tmp_path / "e.csv")
    with pytest.raises(ConfigError):
        ingest_csv(tmp_path / "nope.csv")


# subcommands -----------------------------------------------------------------


def test_order_ammd(points, tmp_path):
    out = tmp_path / "order.csv"
    assert run("order", "--data", points, "--order", "ammd", "--out", out) == 0
    rows = read_csv(out)
    idx = [int(r["index"]) for r in rows]
    assert len(idx) == 100 and sorted(idx) == list(range(100))
    stamp = json.loads((tmp_path / "order.csv.stamp.json").read_text())
    assert {"seed", "config_hash", "version", "backend"} <= set(stamp)


def test_neighbors_with_check(points, tmp_path, capsys):
    out = tmp_path / "nn.csv"
    assert run("neighbors", "--data", points, "--neighbors", 7, "--nn-check", "--out", out) == 0
    rows = read_csv(out)
    assert len(rows[50]["neighbors"].split()) == 8
    assert "matches brute force" in capsys.readouterr().err


def test_group_stats(tmp_path):
    out = tmp_path / "g.csv"
    assert run("group", "--grid", "20x20", "--neighbors", 10, "--group-stats", "--out", out) == 0
    (row,) = read_csv(out)
    assert set(row) == {"K", "mean_U", "max_U", "mean_Jbar", "max_Jbar"}
    assert run("group", "--grid", "20x20", "--group", "off", "--group-stats", "--out", out) == 0
    assert read_csv(out)[0]["K"] == "400"


def test_group_listing(tmp_path):
    out = tmp_path / "g.csv"
    assert run("group", "--grid", "10x10", "--neighbors", 4, "--group-rule", "anchored",
               "--out", out) == 0
    members = sorted(int(v) for r in read_csv(out) for v in r["members"].split())
    assert members == list(range(100))


def test_loglik_exact_full_conditioning(points, tmp_path):
    out = tmp_path / "ll.json"
    assert run("loglik", "--data", points, "--neighbors", 99, "--nugget", 0.01, "--exact",
               "--out", out) == 0
    rec = json.loads(out.read_text())
    assert rec["loglik"] == pytest.approx(rec["exact_loglik"], rel=1e-10)


def test_loglik_with_covariates(tmp_path):
    rng = np.random.default_rng(1)
    X = rng.uniform(size=(50, 2))
    path = write_csv(tmp_path / "c.csv", ["x", "y", "elev", "z"],
                     np.column_stack([X, X[:, 0], 1 + X[:, 0] + 0.1 * rng.standard_normal(50)]))
    out = tmp_path / "ll.json"
    assert run("loglik", "--data", path, "--coords", "x,y", "--covariates", "elev",
               "--neighbors", 10, "--nugget", 0.01, "--out", out) == 0
    assert len(json.loads(out.read_text())["beta"]) == 1


def test_fit_json_lines(points, tmp_path):
    out = tmp_path / "fit.jsonl"
    assert run("fit", "--data", points, "--schedule", "5,10", "--fixed", "smoothness",
               "--window", 1e-9, "--out", out) == 0
    recs = [json.loads(line) for line in out.read_text().splitlines()]
    assert [r["m"] for r in recs] == [5, 10]
    assert {"m", "theta", "loglik", "seconds"} <= set(recs[0])


def test_predict_and_draws(points, tmp_path):
    pred = write_csv(tmp_path / "pred.csv", ["x", "y"], [[0.5, 0.5], [0.1, 0.9], [0.3, 0.2]])
    out, draws, corr = tmp_path / "p.csv", tmp_path / "d.csv", tmp_path / "r.csv"
    assert run("predict", "--data", points, "--pred", pred, "--nugget", 0.01, "--neighbors", 10,
               "--ensemble", 50, "--draws", draws, "--corr", corr, "--out", out) == 0
    rows = read_csv(out)
    assert len(rows) == 3 and all(float(r["sd"]) > 0 for r in rows)
    assert len(read_csv(draws)) == 3 and len(read_csv(draws)[0]) == 50
    C = np.array([[float(v) for v in r.values()] for r in read_csv(corr)])
    np.testing.assert_allclose(np.diag(C), 1.0)


def test_sim(tmp_path):
    out = tmp_path / "sim.csv"
    assert run("sim", "--grid", "6x6", "--ensemble", 3, "--seed", 4, "--out", out) == 0
    rows = read_csv(out)
    assert len(rows) == 36 and {"draw0", "draw2"} <= set(rows[0])


def test_benchmark_row_count(tmp_path):
    out = tmp_path / "b.csv"
    assert run("benchmark", "--grid", "20x20", "--orders", "coord,ammd", "--m-list", "5,10",
               "--grouped", "off,on", "--out", out) == 0
    rows = read_csv(out)
    assert len(rows) == 2 * 2 * 2
    assert {"ordering", "m", "grouped", "K", "mean_U", "kl", "seconds"} <= set(rows[0])
    assert all(float(r["kl"]) > 0 for r in rows)


def test_benchmark_releff(tmp_path):
    out = tmp_path / "b.csv"
    assert run("benchmark", "--grid", "8x8", "--orders", "ammd", "--m-list", 5,
               "--grouped", "off", "--releff", "--out", out) == 0
    (row,) = read_csv(out)
    assert 0 < float(row["releff_range"]) <= 1 + 1e-6


def test_timing_schema(tmp_path):
    out = tmp_path / "t.json"
    assert run("timing", "--grid", "100x100", "--neighbors", 30, "--out", out) == 0
    rec = json.loads(out.read_text())
    for key in ("order", "neighbors", "group", "loglik"):
        assert rec[key] >= 0


def test_reproducible_from_stamp(tmp_path):
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    assert run("sim", "--grid", "5x5", "--seed", 9, "--order", "random", "--out", a) == 0
    assert run("sim", "--grid", "5x5", "--seed", 9, "--order", "random", "--out", b) == 0
    assert a.read_text() == b.read_text()
    sa = json.loads((tmp_path / "a.csv.stamp.json").read_text())
    sb = json.loads((tmp_path / "b.csv.stamp.json").read_text())
    assert sa["config_hash"] == sb["config_hash"]
    assert run("sim", "--grid", "5x5", "--seed", 10, "--order", "random", "--out", b) == 0
    assert a.read_text() != b.read_text()


# configuration and errors ----------------------------------------------------


def test_config_file(tmp_path):
    cfg = tmp_path / "run.cfg"
    cfg.write_text("# neighbor search\nneighbors = 3\ngroup = off\norder = coord\n")
    out = tmp_path / "g.csv"
    assert run("group", "--grid", "5x5", "--config", cfg, "--group-stats", "--out", out) == 0
    assert read_csv(out)[0]["max_U"] == "4"


def test_config_unknown_key(tmp_path, capsys):
    cfg = tmp_path / "run.cfg"
    cfg.write_text("neighbours = 3\n")
    assert run("order", "--grid", "4x4", "--config", cfg) == 2
    assert "unknown config key" in capsys.readouterr().err


def test_config_bad_value(tmp_path):
    cfg = tmp_path / "run.cfg"
    cfg.write_text("order = hilbert\n")
    assert run("order", "--grid", "4x4", "--config", cfg) == 2


@pytest.mark.parametrize("argv", [
    ["order"],
    ["order", "--grid", "4x4", "--data", "x.csv"],
    ["order", "--data", "/nonexistent.csv"],
    ["order", "--grid", "axb"],
    ["loglik", "--grid", "4x4", "--range", "-1"],
    ["order", "--grid", "4x4", "--threads", "0"],
    ["bogus"],
])
def test_config_errors_exit_2(argv):
    assert main(argv) == 2


def test_numerical_failure_exit_3(tmp_path, capsys):
    path = write_csv(tmp_path / "dup.csv", ["x", "y", "z"],
                     [[0.1, 0.1, 1], [0.5, 0.5, 2], [0.5, 0.5, 3]])
    assert run("loglik", "--data", path, "--order", "coord", "--neighbors", 2) == 3
    assert "nugget" in capsys.readouterr().err
    assert run("loglik", "--data", path, "--neighbors", 2, "--nugget", 0.1) == 0


def test_parser_lists_all_subcommands():
    parser = build_parser()
    sub = next(a for a in parser._actions if a.dest == "command")
    assert set(sub.choices) == {"order", "neighbors", "group", "loglik", "fit", "predict", "sim",
                                "benchmark", "timing"}


def test_help_exits_zero(capsys):
    assert main(["--help"]) == 0
