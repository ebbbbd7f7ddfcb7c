import csv
import json
from pathlib import Path

import pytest

from rwndq import cli
from rwndq import config as cfgmod
from rwndq.config import SCHEMA, ConfigError, resolve
from rwndq.sim.network import InvariantViolation

ROOT = Path(__file__).resolve().parents[1]

SMALL = {
    "name": "small",
    "duration_s": 1.0,
    "topology": {"kind": "star", "sender_hosts": 8, "propagation_s": 50e-6},
    "aqm": {"kind": "rwndq"},
    "workload": {"incast": {"n_senders": 8, "blocks_per_request": 3}},
}


def write(tmp_path, name, doc):
    p = tmp_path / name
    p.write_text(json.dumps(doc))
    return str(p)


def rows(path):
    with open(path, newline="") as fh:
        return list(csv.reader(fh))


def test_unknown_key_is_named():
    with pytest.raises(ConfigError) as exc:
        resolve({**SMALL, "aqm": {"kind": "rwndq", "alfa": 0.3}})
    assert exc.value.key == "aqm.alfa" and "aqm.alfa" in str(exc.value)


def test_missing_required_key_is_named():
    doc = {k: v for k, v in SMALL.items() if k != "aqm"}
    with pytest.raises(ConfigError) as exc:
        resolve(doc)
    assert exc.value.key == "aqm" and "missing" in str(exc.value)
    with pytest.raises(ConfigError) as exc:
        resolve({**SMALL, "aqm": {"alpha": 0.2}})
    assert exc.value.key == "aqm.kind"


def test_bad_value_is_named():
    with pytest.raises(ConfigError) as exc:
        resolve({**SMALL, "aqm": {"kind": "rwndq", "alpha": 1.5}})
    assert exc.value.key == "aqm.alpha"


def test_resolved_config_is_explicit():
    r = resolve(SMALL)
    assert r["aqm"]["M"] == 10 and r["aqm"]["T_s"] == 100e-6 and r["seed"] == 1
    assert r["workload"]["incast"]["block_size_bytes"] == 11_500
    assert resolve(r) == r


def test_published_schema_is_current():
    assert json.loads((ROOT / "configs" / "schema.json").read_text()) == SCHEMA


@pytest.mark.parametrize("path", sorted((ROOT / "configs").glob("[!s]*.json")))
def test_example_configs_validate(path):
    cfgmod.load(path)


def test_cli_config_error_exit_code(tmp_path, capsys):
    bad = write(tmp_path, "bad.json", {**SMALL, "topology": {"kind": "star", "extra": 1}})
    assert cli.main(["run", "--config", bad, "--out", str(tmp_path / "o")]) == 2
    assert "topology.extra" in capsys.readouterr().err


def test_run_is_byte_identical(tmp_path):
    cfg = write(tmp_path, "c.json", SMALL)
    for d in ("a", "b"):
        assert cli.main(["run", "--config", cfg, "--out", str(tmp_path / d), "--seed", "42",
                         "--quiet", "--no-plots"]) == 0
    for name in ("flows.csv", "ports.csv", "summary.csv", "resolved_config.json"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


def test_artifacts_embed_config_and_seed(tmp_path):
    cfg = write(tmp_path, "c.json", SMALL)
    out = tmp_path / "o"
    assert cli.main(["run", "--config", cfg, "--out", str(out), "--seed", "9", "--quiet"]) == 0
    resolved = json.loads((out / "resolved_config.json").read_text())
    summary = dict(rows(out / "summary.csv")[1:])
    assert resolved["seed"] == 9 and summary["seed"] == "9"
    assert summary["config_sha256"] == cfgmod.digest(resolved)
    assert rows(out / "flows.csv")[0] == ["flow_id", "src", "dst", "class", "start_s", "fct_s",
                                          "bytes", "retransmissions"]
    assert rows(out / "ports.csv")[0] == ["port_id", "drops", "marks", "mean_q_bytes", "max_q_bytes"]
    assert (out / "queue.png").exists() and (out / "fct_cdf.png").exists()


def test_seed_changes_jitter_not_topology(tmp_path):
    cfg = write(tmp_path, "c.json", SMALL)
    for seed in ("1", "2"):
        cli.main(["run", "--config", cfg, "--out", str(tmp_path / seed), "--seed", seed,
                  "--quiet", "--no-plots"])
    f1, f2 = rows(tmp_path / "1" / "flows.csv"), rows(tmp_path / "2" / "flows.csv")
    assert [r[4] for r in f1[1:9]] != [r[4] for r in f2[1:9]]
    p1, p2 = rows(tmp_path / "1" / "ports.csv"), rows(tmp_path / "2" / "ports.csv")
    assert [r[0] for r in p1] == [r[0] for r in p2]


def test_trace_dump(tmp_path):
    cfg = write(tmp_path, "c.json", {**SMALL, "duration_s": 0.01})
    cli.main(["run", "--config", cfg, "--out", str(tmp_path / "o"), "--trace", "--quiet", "--no-plots"])
    line = (tmp_path / "o" / "trace.tsv").read_text().splitlines()[0]
    assert len(line.split("\t")) == 6


def test_deadlock_exit_code_keeps_partial_metrics(tmp_path):
    cfg = write(tmp_path, "c.json", {**SMALL, "duration_s": 1e-4})
    out = tmp_path / "o"
    assert cli.main(["run", "--config", cfg, "--out", str(out), "--quiet", "--no-plots"]) == 3
    summary = dict(rows(out / "summary.csv")[1:])
    assert summary["mice_completed"] == "0" and summary["mice_fct_avg_s"] == "nan"


def test_invariant_violation_exit_code(tmp_path, monkeypatch):
    def boom(cfg, trace=None):
        raise InvariantViolation("ACK window above stamping port rwnd")

    monkeypatch.setattr(cli, "run_scenario", boom)
    cfg = write(tmp_path, "c.json", SMALL)
    assert cli.main(["run", "--config", cfg, "--out", str(tmp_path / "o"), "--quiet"]) == 4


def test_compare_identical_configs_gives_unit_ratios(tmp_path):
    a = write(tmp_path, "a.json", SMALL)
    b = write(tmp_path, "b.json", SMALL)
    out = tmp_path / "cmp"
    assert cli.main(["compare", "--config", a, "--config", b, "--out", str(out), "--quiet"]) == 0
    table = rows(out / "comparison.csv")
    header = table[0]
    for r in table[1:]:
        rec = dict(zip(header, r))
        for col in ("drops_ratio", "fct_avg_ratio", "fct_std_ratio", "fct_max_ratio", "goodput_ratio"):
            assert rec[col] == "1"
        assert rec["drop_reduction_pct"] == "0"


def test_compare_three_way_rows_recomputable(tmp_path):
    paths = [
        write(tmp_path, "dt.json", {**SMALL, "name": "droptail", "aqm": {"kind": "droptail"}}),
        write(tmp_path, "rq.json", {**SMALL, "name": "rwndq"}),
        write(tmp_path, "dc.json", {**SMALL, "name": "dctcp", "aqm": {"kind": "ecn_dctcp"},
                                    "sender": {"type": "dctcp"}}),
    ]
    out = tmp_path / "cmp"
    args = ["compare", "--out", str(out), "--quiet", "--no-plots", "--jobs", "2"]
    for p in paths:
        args += ["--config", p]
    assert cli.main(args) == 0
    table = rows(out / "comparison.csv")
    assert [r[0] for r in table[1:]] == ["droptail", "rwndq", "dctcp"]
    assert [r[1] for r in table[1:]] == ["droptail", "rwndq", "ecn_dctcp"]
    header = table[0]
    base = dict(rows(out / "droptail" / "summary.csv")[1:])
    for r in table[1:]:
        rec = dict(zip(header, r))
        own = dict(rows(out / rec["label"] / "summary.csv")[1:])
        b, o = float(base["mice_fct_std_s"]), float(own["mice_fct_std_s"])
        assert float(rec["fct_std_ratio"]) == pytest.approx(o / b if o != b else 1.0, rel=1e-8)


def test_compare_rejects_different_workloads(tmp_path, capsys):
    a = write(tmp_path, "a.json", SMALL)
    b = write(tmp_path, "b.json", {**SMALL, "workload": {"incast": {"n_senders": 4}}})
    assert cli.main(["compare", "--config", a, "--config", b, "--out", str(tmp_path / "o")]) == 2
    assert "workload" in capsys.readouterr().err


def test_sweep_grid(tmp_path):
    cfg = write(tmp_path, "c.json", {**SMALL, "duration_s": 0.3})
    out = tmp_path / "sw"
    assert cli.main(["sweep", "--config", cfg, "--out", str(out), "--grid", "alpha=0.2,0.3",
                     "--grid", "M=5", "--quiet", "--no-plots"]) == 0
    table = rows(out / "sweep.csv")
    assert table[0][:3] == ["label", "alpha", "M"]
    assert [r[1:3] for r in table[1:]] == [["0.2", "5"], ["0.3", "5"]]
    assert json.loads((out / "alpha=0.2_M=5" / "resolved_config.json").read_text())["aqm"]["M"] == 5


def test_sweep_rejects_unknown_parameter(tmp_path):
    cfg = write(tmp_path, "c.json", SMALL)
    assert cli.main(["sweep", "--config", cfg, "--out", str(tmp_path / "o"), "--grid", "beta=1"]) == 2
