"""End-to-end tests for the command-line front end and report emission."""

import csv
import json
import os

import pytest

from treesplit.analytics import CriLengthTable, SplitParams
from treesplit.cli import entrypoint
from treesplit.config import (
    ConfigError,
    ExperimentConfig,
    config_from_mapping,
    load_config,
    parse_grid,
)
from treesplit.reports import config_digest, emit_report, render_csv, render_json

SCRIPT = ("1:0=l,2:0=l,3:0=l,4:0=r,1:1=r,2:1=r,3:1=r,"
          "1:2=l,2:2=l,3:2=r,1:3=l,2:3=r")


def run_cli(*argv):
    return entrypoint(list(argv))


def read_csv(path):
    with open(path, encoding="utf-8") as fh:
        header = fh.readline()
        rows = list(csv.DictReader(fh))
    return header, rows


class TestConfig:
    def test_defaults(self):
        cfg = ExperimentConfig().validate()
        assert cfg.p == 0.5 and cfg.packet_bits == 256 and cfg.budget == 100000
        assert cfg.seed is None

    def test_file_round_trip(self, tmp_path):
        path = tmp_path / "run.json"
        path.write_text(json.dumps({
            "protocols": ["sicta", "atic"], "policy": "windowed:5",
            "rates": [0.3, 0.5], "budget": 2000, "seed": 9}))
        cfg = load_config(str(path))
        assert cfg.protocols == ("sicta", "atic")
        assert cfg.policy == "windowed:5"
        assert cfg.rates == (0.3, 0.5)
        assert cfg.budget == 2000 and cfg.seed == 9
        # defaults fill the rest
        assert cfg.p == 0.5 and cfg.packet_bits == 256

    @pytest.mark.parametrize("payload,field", [
        ({"p": 1.2}, "p"),
        ({"p": "half"}, "p"),
        ({"protocols": ["aloha"]}, "protocols"),
        ({"policy": "windowed:0"}, "policy"),
        ({"policy": "free"}, "policy"),
        ({"budget": 0}, "budget"),
        ({"seed": -1}, "seed"),
        ({"packet_bits": 0}, "packet_bits"),
        ({"replications": 0}, "replications"),
        ({"mystery": 1}, "mystery"),
        ({"rates": [-0.5]}, "rates"),
    ])
    def test_validation_names_offending_field(self, payload, field):
        with pytest.raises(ConfigError) as err:
            config_from_mapping(payload)
        assert err.value.field == field
        assert field in str(err.value)

    def test_missing_file(self):
        with pytest.raises(ConfigError):
            load_config("/nonexistent/nope.json")

    def test_invalid_json(self, tmp_path):
        path = tmp_path / "bad.json"
        path.write_text("{not json")
        with pytest.raises(ConfigError):
            load_config(str(path))

    def test_grid_parsing(self):
        assert parse_grid("0.1:0.3:0.1") == pytest.approx((0.1, 0.2, 0.3))
        assert parse_grid("0.25,0.5") == (0.25, 0.5)
        with pytest.raises(ConfigError):
            parse_grid("0.1:0.3:0")
        with pytest.raises(ConfigError):
            parse_grid("0.3:0.1:0.1")
        with pytest.raises(ConfigError):
            parse_grid("a:b:c")

    def test_merged_override_wins(self):
        cfg = ExperimentConfig(p=0.3).merged(p=0.7)
        assert cfg.p == 0.7
        # None overrides are ignored
        assert ExperimentConfig(p=0.3).merged(p=None).p == 0.3

    def test_require_seed(self):
        with pytest.raises(ConfigError):
            ExperimentConfig().require_seed()
        assert ExperimentConfig(seed=5).require_seed() == 5


class TestReports:
    def test_csv_significant_digits(self):
        text = render_csv([{"x": 1.0 / 3.0}], seed=1, config={"a": 1})
        assert "0.333333333333" in text
        assert text.startswith("# seed=1 config_sha256=")

    def test_json_round_trip_idempotent(self):
        payload = {"value": 2.0 / 3.0, "nested": {"pi": 3.14159265358979}}
        once = render_json(payload, seed=3, config={"a": 1})
        again = render_json(json.loads(once)["data"], seed=3, config={"a": 1})
        assert once == again

    def test_digest_stable_under_key_order(self):
        assert config_digest({"a": 1, "b": 2}) == config_digest({"b": 2, "a": 1})

    def test_emit_unknown_format(self, tmp_path):
        with pytest.raises(ValueError):
            emit_report([], "xml", str(tmp_path / "x.xml"))

    def test_emit_creates_directories(self, tmp_path):
        path = tmp_path / "deep" / "dir" / "t.csv"
        emit_report([{"n": 1}], "csv", str(path), seed=0, config={})
        assert path.exists()


class TestCommands:
    def test_analytic_matches_recursion(self, tmp_path):
        assert run_cli("analytic", "--n-max", "6", "--protocols", "atic",
                       "--outdir", str(tmp_path)) == 0
        header, rows = read_csv(tmp_path / "analytic_atic.csv")
        assert header.startswith("# seed=none config_sha256=")
        assert [r["n"] for r in rows] == ["1", "2", "3", "4", "5", "6"]
        table = CriLengthTable(SplitParams(0.5), "atic")
        for row in rows:
            n = int(row["n"])
            assert float(row["L_n"]) == pytest.approx(table.expected(n), rel=1e-11)
            assert float(row["T_n"]) == pytest.approx(n / table.expected(n), rel=1e-11)

    def test_analytic_rejects_protocol_without_length_law(self, tmp_path, capsys):
        assert run_cli("analytic", "--protocols", "atic_left",
                       "--outdir", str(tmp_path)) == 1
        assert "protocols" in capsys.readouterr().err

    def test_asymptote_reports_argmax(self, tmp_path):
        assert run_cli("asymptote", "--p-grid", "0.45:0.55:0.01",
                       "--outdir", str(tmp_path)) == 0
        blob = json.loads((tmp_path / "asymptote.json").read_text())
        assert blob["data"]["argmax_p"] == pytest.approx(0.5)
        assert blob["data"]["throughput"] == pytest.approx(0.924196240747, abs=1e-9)

    def test_windowed_scan_schema(self, tmp_path):
        assert run_cli("windowed-scan", "--load-min", "0.5", "--load-max", "50",
                       "--points", "12", "--outdir", str(tmp_path)) == 0
        _, rows = read_csv(tmp_path / "windowed_scan.csv")
        assert len(rows) == 12
        assert set(rows[0]) == {"load", "stable_rate"}
        assert all(0.0 < float(r["stable_rate"]) < 1.0 for r in rows)

    def test_simulate_writes_report(self, tmp_path):
        assert run_cli("simulate", "--protocol", "atic", "--rate", "0.4",
                       "--budget", "4000", "--seed", "7",
                       "--outdir", str(tmp_path)) == 0
        blob = json.loads((tmp_path / "sim_atic_gated_0p4.json").read_text())
        data = blob["data"]
        assert data["protocol"] == "atic" and data["seed"] == 7
        assert data["arrivals_total"] == (
            data["packets_decoded"] + data["terminal_backlog"])

    def test_simulate_rate_list(self, tmp_path):
        assert run_cli("simulate", "--protocol", "atic", "--rates", "0.2,0.4",
                       "--budget", "2000", "--seed", "7",
                       "--outdir", str(tmp_path)) == 0
        assert sorted(os.listdir(tmp_path)) == [
            "sim_atic_gated_0p2.json", "sim_atic_gated_0p4.json"]

    def test_simulate_requires_seed(self, tmp_path, capsys):
        assert run_cli("simulate", "--protocol", "atic", "--rate", "0.4",
                       "--outdir", str(tmp_path)) == 1
        assert "seed" in capsys.readouterr().err

    def test_simulate_replications(self, tmp_path):
        assert run_cli("simulate", "--protocol", "sicta", "--rate", "0.3",
                       "--budget", "2000", "--seed", "5", "--replications", "3",
                       "--outdir", str(tmp_path)) == 0
        names = sorted(os.listdir(tmp_path))
        assert names == [f"sim_sicta_gated_0p3_r{i}.json" for i in range(3)]
        seeds = {json.loads((tmp_path / n).read_text())["data"]["seed"]
                 for n in names}
        assert len(seeds) == 3

    def test_sweep_delay_schema(self, tmp_path):
        assert run_cli("sweep", "--protocols", "sicta,atic", "--rates",
                       "0.2:0.4:0.2", "--budget", "3000", "--seed", "11",
                       "--outdir", str(tmp_path)) == 0
        header, rows = read_csv(tmp_path / "delay.csv")
        assert list(rows[0]) == ["lambda", "protocol", "mean", "var",
                                 "p50", "p95", "n_samples"]
        assert len(rows) == 4
        assert {r["protocol"] for r in rows} == {"sicta", "atic"}

    def test_tree_scripted_worked_example(self, tmp_path):
        assert run_cli("tree", "--protocol", "sicta", "--users", "4",
                       "--seed", "7", "--script", SCRIPT,
                       "--outdir", str(tmp_path)) == 0
        dot = (tmp_path / "tree_sicta_n4.dot").read_text()
        assert dot.count("dashed") == 4
        assert dot.count("slot ") == 5
        assert dot.startswith("// seed=7 config_sha256=")

    def test_compare_superset_of_simulate(self, tmp_path):
        assert run_cli("compare", "--protocols", "bta,atic", "--rates", "0.3",
                       "--budget", "3000", "--seed", "3",
                       "--outdir", str(tmp_path)) == 0
        _, rows = read_csv(tmp_path / "compare.csv")
        assert {r["protocol"] for r in rows} == {"bta", "atic"}
        # per-run JSON artifacts carry the full un-aggregated reports
        for proto in ("bta", "atic"):
            blob = json.loads(
                (tmp_path / f"sim_{proto}_gated_0p3.json").read_text())
            row = next(r for r in rows if r["protocol"] == proto)
            for key in ("slots_simulated", "packets_decoded", "cri_count"):
                assert int(row[key]) == blob["data"][key]

    def test_cli_overrides_config_file(self, tmp_path):
        path = tmp_path / "cfg.json"
        path.write_text(json.dumps({
            "protocols": ["bta"], "rates": [0.2], "budget": 1500, "seed": 2}))
        assert run_cli("simulate", "--config", str(path), "--protocol", "mta",
                       "--outdir", str(tmp_path)) == 0
        assert (tmp_path / "sim_mta_gated_0p2.json").exists()

    def test_byte_identical_reruns(self, tmp_path):
        d1, d2 = tmp_path / "a", tmp_path / "b"
        for d in (d1, d2):
            assert run_cli("sweep", "--protocols", "sicta", "--rates", "0.3",
                           "--budget", "2500", "--seed", "5",
                           "--outdir", str(d)) == 0
        assert (d1 / "delay.csv").read_bytes() == (d2 / "delay.csv").read_bytes()

    def test_bad_subcommand_exits_one(self, capsys):
        assert run_cli("bogus") == 1
        assert run_cli() == 1
        capsys.readouterr()

    def test_unwritable_outdir_exits_two(self, tmp_path, capsys):
        block = tmp_path / "blocker"
        block.write_text("file, not dir")
        assert run_cli("analytic", "--n-max", "3",
                       "--outdir", str(block / "sub")) == 2
        assert "cannot write" in capsys.readouterr().err

    def test_bad_script_entry(self, tmp_path, capsys):
        assert run_cli("tree", "--users", "2", "--seed", "1",
                       "--script", "1:0=sideways",
                       "--outdir", str(tmp_path)) == 1
        assert "script" in capsys.readouterr().err
