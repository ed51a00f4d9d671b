import csv
import json
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from glshrink import cli
from glshrink.config import ConfigError, build_config, config_hash, env_overrides, parse_config
from glshrink.report import AGGREGATE, CSV_HEADER, RiskReport, RiskRow, derive_seed, read_risk_csv, write_risk_csv


def _write(path, text):
    path.write_text(text)
    return path


# --- configuration ------------------------------------------------------------

def test_minimal_config_defaults(tmp_path):
    cfg = parse_config(_write(tmp_path / "c.toml", 'data = "x.csv"\n'))
    e = cfg.experiment
    assert (e.c1, e.c2, e.prior) == (2.0, 1.0, "horseshoe")
    assert cfg.estimate_method == "eb" and cfg.data == "x.csv"


def test_c1_rejected(tmp_path):
    with pytest.raises(ConfigError) as info:
        parse_config(_write(tmp_path / "c.toml", "[eb]\nc1 = 1.5\n"))
    assert any("c1 must be >= 2" in p for p in info.value.problems)


def test_all_problems_reported(tmp_path):
    text = 'bogus = 1\n[eb]\nc1 = 1.5\nc2 = "x"\n[prior]\nname = "tpb"\n[test]\nrule = "bh"\n'
    with pytest.raises(ConfigError) as info:
        parse_config(_write(tmp_path / "c.toml", text))
    probs = info.value.problems
    assert len(probs) >= 5
    for needle in ("bogus", "c1", "eb.c2", "tpb needs", "test.rule"):
        assert any(needle in p for p in probs), needle


def test_duplicate_key_rejected(tmp_path):
    path = _write(tmp_path / "c.toml", "seed = 1\nseed = 2\n")
    for _ in range(2):
        with pytest.raises(ConfigError) as info:
            parse_config(path)
        assert "duplicate key" in info.value.problems[0] and "line 2" in info.value.problems[0]


def test_hash_stable_under_reordering_and_whitespace(tmp_path):
    a = parse_config(_write(tmp_path / "a.toml", 'seed = 3\n[eb]\nc1 = 2.5\nc2 = 1.0\n'))
    b = parse_config(_write(tmp_path / "b.toml", '\n  seed=3\n\n[eb]\nc2 = 1.0\n  c1   =   2.5\n'))
    c = parse_config(_write(tmp_path / "c.toml", 'seed = 4\n[eb]\nc1 = 2.5\nc2 = 1.0\n'))
    assert a.config_hash == b.config_hash != c.config_hash
    assert config_hash({"x": 1, "y": {"b": 2, "a": 1}}) == config_hash({"y": {"a": 1, "b": 2}, "x": 1})


def test_overrides_precedence():
    doc = {"seed": 1, "threads": 1}
    env = env_overrides({"HSHRINK_SEED": "5", "HSHRINK_THREADS": "", "OTHER": "x"})
    assert env == {"seed": "5"}
    assert build_config(doc, env).experiment.seed == 5
    assert build_config(doc, {**env, "seed": 9}).experiment.seed == 9
    with pytest.raises(ConfigError):
        build_config(doc, {"seed": "five"})


def test_prior_params_checked():
    cfg = build_config({"prior": {"name": "tpb", "a": 1.0, "b": 0.5}})
    assert cfg.experiment.spec().a == 1.0
    with pytest.raises(ConfigError):
        build_config({"prior": {"name": "horseshoe", "a": 1.0}})
    with pytest.raises(ConfigError):
        build_config({"prior": {"name": "tpb", "a": -1.0, "b": 0.5}})


def test_rule_requirements():
    with pytest.raises(ConfigError):
        build_config({"test": {"rule": "fixed_tau"}})
    with pytest.raises(ConfigError):
        build_config({"test": {"rule": "oracle", "p": 0.1}})
    assert build_config({"test": {"rule": "oracle", "p": 0.1, "psi2": 4.0}}).test_rule == "oracle"


# --- seeds --------------------------------------------------------------------

def test_seed_derivation():
    assert derive_seed(0, 500, 1) == derive_seed(0, 500, 1)
    assert len({derive_seed(0, 500, r) for r in range(100)}) == 100
    assert derive_seed(0, 500, 1) != derive_seed(1, 500, 1)
    assert 0 <= derive_seed(2**64 - 1, 3) < 2**64


# --- CSV ----------------------------------------------------------------------

finite = st.floats(allow_nan=False, allow_infinity=False)
opt_float = st.none() | finite
row = st.builds(RiskRow, scenario=st.sampled_from(["mse_eb", "abos"]), n=st.integers(2, 10**6),
                q_n=st.none() | st.integers(0, 1000), p=opt_float, psi2=opt_float, C=opt_float,
                replicate=st.integers(AGGREGATE, 100), seed=st.integers(0, 2**64 - 1),
                metric=st.sampled_from(["mse", "risk_ratio", "t1"]), value=finite)


@settings(max_examples=50, deadline=None)
@given(rows=st.lists(row, max_size=20))
def test_csv_round_trip(tmp_path_factory, rows):
    path = tmp_path_factory.mktemp("csv") / "r.csv"
    rep = RiskReport(rows)
    write_risk_csv(rep, path)
    assert read_risk_csv(path) == rep


def _sample_report():
    return RiskReport([RiskRow("mse_eb", 500, 13, None, None, None, 0, 17, "mse", 0.1),
                       RiskRow("abos", 10000, None, 0.01, 2.5, 4.0, AGGREGATE, 0, "risk_ratio", 1.0 / 3)])


def test_csv_header_and_empty_fields(tmp_path):
    path = tmp_path / "r.csv"
    write_risk_csv(_sample_report(), path)
    lines = path.read_text().splitlines()
    assert lines[0] == ",".join(CSV_HEADER)
    assert lines[1] == "mse_eb,500,13,,,,0,17,mse,0.10000000000000001"


def test_csv_permuted_columns(tmp_path):
    path = tmp_path / "r.csv"
    write_risk_csv(_sample_report(), path)
    with open(path) as fh:
        recs = list(csv.DictReader(fh))
    order = list(reversed(CSV_HEADER))
    other = tmp_path / "p.csv"
    with open(other, "w", newline="") as fh:
        w = csv.DictWriter(fh, order)
        w.writeheader()
        w.writerows(recs)
    assert read_risk_csv(other) == _sample_report()


def test_csv_rejects_nan(tmp_path):
    rep = RiskReport([RiskRow("mse_eb", 500, 13, None, None, None, 0, 1, "mse", math.nan)])
    with pytest.raises(ValueError, match="non-finite"):
        write_risk_csv(rep, tmp_path / "r.csv")
    assert not (tmp_path / "r.csv").exists()


def test_csv_malformed_rows_listed(tmp_path):
    path = tmp_path / "r.csv"
    write_risk_csv(_sample_report(), path)
    text = path.read_text() + "mse_eb,500,13,,,,0,17,mse,abc\nmse_eb,500\n"
    path.write_text(text)
    with pytest.raises(ValueError) as info:
        read_risk_csv(path)
    assert "line 4" in str(info.value) and "line 5" in str(info.value)


# --- subcommands --------------------------------------------------------------

@pytest.fixture
def data_file(tmp_path):
    rng = np.random.default_rng(0)
    X = rng.standard_normal(200)
    X[:5] += 9
    path = tmp_path / "x.csv"
    path.write_text("x\n" + "\n".join(repr(float(v)) for v in X) + "\n")
    return path, X


def _run(argv, capsys):
    code = cli.main([str(a) for a in argv])
    out, err = capsys.readouterr()
    return code, out, err


def test_estimate_eb(tmp_path, data_file, capsys):
    path, X = data_file
    code, out, _ = _run(["estimate", "--data", path, "--out", tmp_path / "o"], capsys)
    assert code == 0 and json.loads(out)["rows"] == 200
    with open(tmp_path / "o" / "estimates.csv") as fh:
        recs = list(csv.DictReader(fh))
    assert abs(float(recs[0]["estimate"]) - X[0]) < 1.5 and abs(float(recs[100]["estimate"])) < 0.5
    manifest = json.loads((tmp_path / "o" / "manifest.json").read_text())
    assert manifest["method"] == "eb" and len(manifest["config_hash"]) == 64


def test_estimate_fb_and_test_rules(tmp_path, data_file, capsys):
    path, _ = data_file
    cfg = _write(tmp_path / "c.toml", "[tau_prior]\ngrid = 20\ntest_grid = 12\n")
    code, _, err = _run(["estimate", "--config", cfg, "--data", path, "--method", "fb", "--out", tmp_path / "f"], capsys)
    assert code == 0, err
    for rule, extra in [("eb", []), ("fb", []), ("fixed_tau", ["--tau", "0.05"]),
                        ("oracle", ["--p", "0.05", "--psi2", "50"])]:
        code, out, err = _run(["test", "--config", cfg, "--data", path, "--rule", rule, "--out", tmp_path / rule, *extra],
                              capsys)
        assert code == 0, err
        with open(tmp_path / rule / "decisions.csv") as fh:
            recs = list(csv.DictReader(fh))
        assert len(recs) == 200 and {r["rule"] for r in recs} == {rule}
        assert all(recs[i]["reject"] == "1" for i in range(5))


def test_simulate_byte_identical(tmp_path, capsys):
    cfg = _write(tmp_path / "c.toml", 'scenario = "mse_eb"\nseed = 11\n[experiment]\nn_grid = [100, 200]\nreplicates = 2\n')
    for d in ("a", "b"):
        code, _, err = _run(["simulate", "--config", cfg, "--out", tmp_path / d], capsys)
        assert code == 0, err
    a = (tmp_path / "a" / "report.csv").read_bytes()
    assert a == (tmp_path / "b" / "report.csv").read_bytes()
    assert (tmp_path / "a" / "mse_eb.svg").read_bytes() == (tmp_path / "b" / "mse_eb.svg").read_bytes()
    manifest = json.loads((tmp_path / "a" / "manifest.json").read_text())
    assert manifest["root_seed"] == 11 and manifest["runtimes_seconds"]


def test_simulate_env_and_flag_precedence(tmp_path, capsys, monkeypatch):
    cfg = _write(tmp_path / "c.toml", 'scenario = "mse_eb"\nseed = 1\n[experiment]\nn_grid = [100]\nreplicates = 1\n')
    monkeypatch.setenv("HSHRINK_SEED", "2")
    _run(["simulate", "--config", cfg, "--out", tmp_path / "env"], capsys)
    _run(["simulate", "--config", cfg, "--out", tmp_path / "flag", "--seed", "3"], capsys)
    env = json.loads((tmp_path / "env" / "manifest.json").read_text())
    flag = json.loads((tmp_path / "flag" / "manifest.json").read_text())
    assert env["root_seed"] == 2 and flag["root_seed"] == 3
    # the hash covers the file only
    assert env["config_hash"] == flag["config_hash"]


def test_plot_from_csv(tmp_path, capsys):
    rep = RiskReport([RiskRow("mse_eb", n, 5, None, None, None, 0, 1, "mse_ratio", 0.2) for n in (100, 200)])
    write_risk_csv(rep, tmp_path / "r.csv")
    code, out, _ = _run(["plot", "--input", tmp_path / "r.csv", "--out", tmp_path / "figs"], capsys)
    assert code == 0
    svg = (tmp_path / "figs" / "mse_eb.svg").read_text()
    assert svg.lstrip().startswith("<?xml") and "<svg" in svg and "xlink:href=\"http" not in svg


def test_plot_empty_csv_fails_without_output(tmp_path, capsys):
    path = tmp_path / "r.csv"
    path.write_text(",".join(CSV_HEADER) + "\n")
    code, _, err = _run(["plot", "--input", path, "--out", tmp_path / "figs"], capsys)
    assert code == 1
    assert json.loads(err)["status"] == "error"
    assert not (tmp_path / "figs").exists() or not any((tmp_path / "figs").iterdir())


def test_errors_are_machine_readable(tmp_path, capsys):
    code, _, err = _run(["estimate", "--out", tmp_path], capsys)
    assert code == 2 and "needs input data" in json.loads(err)["problems"][0]
    code, _, err = _run(["simulate", "--bogus"], capsys)
    assert code == 2 and json.loads(err)["error"] == "UsageError"
    bad = _write(tmp_path / "bad.csv", "x\n1.0\nfoo\n")
    code, _, err = _run(["estimate", "--data", bad, "--out", tmp_path], capsys)
    assert code == 1 and "line 3" in json.loads(err)["message"]


def test_verify(tmp_path, capsys):
    code, out, _ = _run(["verify", "--out", tmp_path], capsys)
    assert code == 0
    assert out.count("PASS") == 7 and "FAIL" not in out
    assert all(s["passed"] for s in json.loads((tmp_path / "verify.json").read_text()))
