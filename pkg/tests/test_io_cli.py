import json
from dataclasses import asdict, fields

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from lassodebug import experiments
from lassodebug.cli import main
from lassodebug.errors import ConfigError, MissingLabelColumn, NonNumericCell, ParseError
from lassodebug.experiments import CONFIG_TYPES, config_from_dict, run_experiment
from lassodebug.io import RunReport, config_hash, load_csv, read_csv_table


def write(tmp_path, name, text):
    p = tmp_path / name
    p.write_text(text, encoding="utf-8")
    return p


def test_load_small_csv(tmp_path):
    p = write(tmp_path, "d.csv", "a,b,y\n1,2,3\n4,5,6\n7,8,9.5\n")
    pool = load_csv(p, "y")
    assert (pool.n, pool.p) == (3, 2)
    np.testing.assert_array_equal(pool.y, [3, 6, 9.5])
    tab = read_csv_table(p, "y")
    assert tab.feature_names == ["a", "b"] and tab.label_name == "y"
    # label in the middle, by index, no header
    p2 = write(tmp_path, "e.csv", "1,10,2\n3,30,4\n")
    tab = read_csv_table(p2, 1, header=False)
    np.testing.assert_array_equal(tab.y, [10, 30])
    np.testing.assert_array_equal(tab.X, [[1, 2], [3, 4]])


def test_quoted_cells_and_blank_lines(tmp_path):
    p = write(tmp_path, "q.csv", '"x 1","y"\n"1.5","2"\n\n3,4\n')
    pool = load_csv(p, "y")
    np.testing.assert_array_equal(pool.X[:, 0], [1.5, 3])


def test_csv_errors(tmp_path):
    p = write(tmp_path, "d.csv", "a,b,y\n1,2,3\n")
    with pytest.raises(MissingLabelColumn):
        load_csv(p, "label")
    with pytest.raises(MissingLabelColumn):
        load_csv(p, 7)
    bad = write(tmp_path, "bad.csv", "a,y\n1,2\n3,oops\n")
    with pytest.raises(NonNumericCell) as ei:
        load_csv(bad, "y")
    assert (ei.value.row, ei.value.column) == (3, 2)
    with pytest.raises(NonNumericCell):
        load_csv(write(tmp_path, "inf.csv", "a,y\n1,inf\n"), "y")
    ragged = write(tmp_path, "r.csv", "a,y\n1,2\n3\n")
    with pytest.raises(ParseError) as ei:
        load_csv(ragged, "y")
    assert ei.value.row == 3
    with pytest.raises(ParseError):
        load_csv(write(tmp_path, "empty.csv", ""), 0)
    (tmp_path / "latin.csv").write_bytes(b"a,y\n1,\xe9\n")
    with pytest.raises(ParseError):
        load_csv(tmp_path / "latin.csv", "y")


def _report(**kw):
    base = dict(command="tune", config={"a": 1}, config_hash="h", trials=[{"x": 1.5, "ok": True}],
                summary={"exact_success_rate": 0.5}, tables={"t": {"columns": ["c"], "rows": [[1.0]]}},
                errors=[], metadata={"version": "0"})
    base.update(kw)
    return RunReport(**base)


@settings(max_examples=50, deadline=None)
@given(vals=st.lists(st.floats(allow_nan=False, allow_infinity=False, width=64), max_size=5),
       rate=st.floats(0.0, 1.0), flag=st.booleans(), name=st.text(max_size=8))
def test_report_round_trip(vals, rate, flag, name):
    r = _report(trials=[{"vals": vals, "flag": flag, "name": name}], summary={"exact_success_rate": rate})
    back = RunReport.from_json(r.to_json())
    assert back == r
    assert asdict(back) == asdict(r)


def test_report_invariants():
    r = _report(trials=[{"v": np.float64(np.inf), "a": np.arange(3)}])
    assert r.trials[0]["v"] is None and r.trials[0]["a"] == [0, 1, 2]
    with pytest.raises(ValueError):
        _report(summary={"exact_success_rate": 1.2})
    # keys come out sorted
    text = _report().to_json(indent=None)
    assert text.index('"command"') < text.index('"trials"')


def test_report_writes_json_and_tables(tmp_path):
    paths = _report().write(tmp_path / "out" / "run.json")
    assert [p.name for p in paths] == ["run.json", "run_t.csv"]
    assert (tmp_path / "out" / "run_t.csv").read_text().splitlines() == ["c", "1.0"]


@pytest.mark.parametrize("command", sorted(CONFIG_TYPES))
def test_config_hash_tracks_semantic_fields(command):
    cls = CONFIG_TYPES[command]
    base = asdict(cls())
    h0 = config_hash(base)
    assert config_hash(dict(base, out="elsewhere.json", threads=8)) == h0
    for f in fields(cls):
        if f.name in ("out", "threads"):
            continue
        v = base[f.name]
        if isinstance(v, bool):
            new = not v
        elif isinstance(v, (int, float)):
            new = v + 1
        elif isinstance(v, list):
            new = v[:-1] if v else [1]
        elif v is None:
            new = 1
        else:
            new = v + "x"
        assert config_hash(dict(base, **{f.name: new})) != h0, f.name


def test_config_validation():
    with pytest.raises(ConfigError):
        config_from_dict("tune", {"nope": 1})
    with pytest.raises(ConfigError):
        config_from_dict("tune", {"trials": "3"})
    with pytest.raises(ConfigError):
        config_from_dict("tune", {"trials": True})
    with pytest.raises(ConfigError):
        config_from_dict("game", {"strategies": ["psychic"]})
    with pytest.raises(ConfigError):
        config_from_dict("debug", {"t": 2, "c_t": 0.1})
    with pytest.raises(ConfigError):
        config_from_dict("sweep", {"c_ts": [1.5]})
    with pytest.raises(ConfigError):
        config_from_dict("bogus", {})
    cfg = config_from_dict("tune", {"sigma_star": 1})
    assert cfg.sigma_star == 1


def test_zero_trials_gives_empty_report():
    for command in ("tune", "debug", "game", "sweep", "conditions"):
        r = run_experiment(command, config_from_dict(command, {"trials": 0}))
        assert r.trials == [] and r.errors == []


def test_fixed_lambda_rates_small_scale():
    cfg = config_from_dict("tune", {"n": 400, "p": 5, "trials": 5, "c_ts": [0.05], "multipliers": [1.0, 4.0]})
    r = run_experiment("tune", cfg)
    row = r.tables["success_rates"]["rows"][0]
    assert r.tables["success_rates"]["columns"][:3] == ["c_t", "exact@1", "exact@4"]
    assert row[1] == 0.0 and row[2] == 1.0


def test_failed_trial_is_isolated(monkeypatch):
    orig = experiments._debug_trial

    def flaky(cfg, k):
        if k == 1:
            raise ValueError("boom")
        return orig(cfg, k)

    monkeypatch.setattr(experiments, "_debug_trial", flaky)
    r = run_experiment("debug", config_from_dict("debug", {"trials": 3, "n": 60, "p": 3, "threads": 2}))
    assert [t["trial"] for t in r.trials] == [0, 2]
    assert len(r.errors) == 1 and r.errors[0]["error"] == "ValueError"


def test_threads_do_not_change_results():
    a = run_experiment("debug", config_from_dict("debug", {"trials": 4, "n": 80, "p": 3}))
    b = run_experiment("debug", config_from_dict("debug", {"trials": 4, "n": 80, "p": 3, "threads": 3}))
    assert a.trials == b.trials and a.config_hash == b.config_hash


def test_cli_end_to_end(tmp_path, capsys):
    cfg = write(tmp_path, "c.json", json.dumps({"n": 60, "p": 3, "trials": 2}))
    out = tmp_path / "r.json"
    assert main(["debug", "--config", str(cfg), "--out", str(out), "--seed", "4"]) == 0
    rep = json.loads(out.read_text())
    assert rep["config"]["seed"] == 4 and len(rep["trials"]) == 2

    assert main(["tune", "--config", str(write(tmp_path, "t.json", json.dumps(
        {"n": 200, "p": 3, "trials": 1, "c_ts": [0.05]})))]) == 0
    assert json.loads(capsys.readouterr().out)["command"] == "tune"

    data = write(tmp_path, "d.csv", "a,y\n1,1\n2,2\n3,3.1\n4,40\n5,5\n")
    dcfg = write(tmp_path, "dc.json", json.dumps({"csv": str(data), "label_column": "y", "lam": 0.1}))
    assert main(["debug", "--config", str(dcfg), "--out", str(tmp_path / "flag.json")]) == 0
    assert 3 in json.loads((tmp_path / "flag.json").read_text())["summary"]["flagged"]


def test_cli_errors(tmp_path):
    assert main(["tune", "--config", str(write(tmp_path, "b.json", '{"bogus": 1}'))]) != 0
    assert main(["tune", "--config", str(tmp_path / "missing.json")]) != 0
    assert main(["game", "--config", str(write(tmp_path, "n.json", "[1, 2]"))]) != 0
    data = write(tmp_path, "d.csv", "a,y\n1,x\n")
    cfg = write(tmp_path, "dc.json", json.dumps({"csv": str(data), "label_column": "y", "lam": 0.1}))
    assert main(["debug", "--config", str(cfg)]) != 0
    with pytest.raises(SystemExit):
        main(["unknown-verb"])
