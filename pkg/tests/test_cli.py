import io
import json
import math
import os
from pathlib import Path

import pytest

import ivelox.validate as validation
from ivelox.cli import dispatch, emit_csv, format_value, resolve_seed, write_rows

SCENARIOS = Path(__file__).resolve().parent.parent / "scenarios"
GOLDEN = Path(__file__).resolve().parent / "data" / "fig4_p2000_seed0.csv"


def run(capsys, *argv):
    code = dispatch(list(argv))
    captured = capsys.readouterr()
    return code, captured.out, captured.err


def read_csv(path):
    lines = Path(path).read_text(encoding="utf-8").splitlines()
    header = lines[0].split(",")
    rows = [dict(zip(header, line.split(","))) for line in lines[1:]]
    return header, rows


class TestFormatting:
    def test_float_17_digits_round_trip(self):
        assert format_value(0.1) == "0.10000000000000001"
        assert float(format_value(math.pi)) == math.pi
        assert format_value(1.0) == "1"

    def test_ints_pass_through(self):
        assert format_value(12) == "12"
        assert format_value("label") == "label"

    def test_empty_rows_give_header_only(self, tmp_path):
        out = tmp_path / "empty.csv"
        emit_csv([], str(out), ["a", "b"])
        assert out.read_bytes() == b"a,b\n"

    def test_lf_endings(self):
        buf = io.StringIO()
        write_rows(buf, ["x"], [{"x": 1.5}, {"x": 2}])
        assert buf.getvalue() == "x\n1.5\n2\n"


class TestSeedResolution:
    def test_flag_beats_everything(self, monkeypatch):
        monkeypatch.setenv("IVELOX_SEED", "9")
        assert resolve_seed(3, {"seed": 5}) == 3

    def test_file_beats_env(self, monkeypatch):
        monkeypatch.setenv("IVELOX_SEED", "9")
        assert resolve_seed(None, {"seed": 5}) == 5

    def test_env_beats_default(self, monkeypatch):
        monkeypatch.setenv("IVELOX_SEED", "9")
        assert resolve_seed(None, {}) == 9
        monkeypatch.delenv("IVELOX_SEED")
        assert resolve_seed(None, {}) == 0

    def test_bad_env_value(self, monkeypatch, capsys, tmp_path):
        monkeypatch.setenv("IVELOX_SEED", "not-a-number")
        # a file seed outranks the environment, so the bad value is ignored
        code, _, _ = run(
            capsys, "simulate", "--scenario", str(SCENARIOS / "fig4.json"), "--packets", "20"
        )
        assert code == 0
        # without one, the unparseable override is a configuration error
        doc = json.loads((SCENARIOS / "fig4.json").read_text())
        del doc["seed"]
        path = tmp_path / "no_seed.json"
        path.write_text(json.dumps(doc))
        code, _, err = run(capsys, "simulate", "--scenario", str(path), "--packets", "20")
        assert code == 2
        assert "IVELOX_SEED" in err


class TestAnalyticCommands:
    def test_iv_homogeneous(self, capsys):
        code, out, _ = run(capsys, "iv", "--p", "0.01", "--r", "20", "--lambda", "0.5")
        assert code == 0
        assert abs(float(out) - 0.98) < 1e-12

    def test_iv_from_scenario(self, capsys):
        code, out, _ = run(capsys, "iv", "--scenario", str(SCENARIOS / "fig5a.json"))
        assert code == 0
        assert abs(float(out) - 0.881) < 5e-3

    def test_iv_instantaneous_flag(self, capsys):
        code, out, _ = run(capsys, "iv", "--p", "0.5", "--r", "4", "--mode", "instantaneous")
        assert code == 0
        assert float(out) == pytest.approx(1.0)

    def test_ee_forms_agree(self, capsys):
        code, out, _ = run(capsys, "ee", "--p", "0.2", "--r", "10", "--alpha", "0.5")
        assert code == 0
        fields = dict(line.split(None, 1) for line in out.splitlines())
        assert float(fields["ee_chernoff"]) == pytest.approx(float(fields["ee_types"]), rel=1e-9)
        assert float(fields["iv"]) == pytest.approx(0.8)

    def test_bounds_sandwich_row(self, capsys, tmp_path):
        out_file = tmp_path / "bounds.csv"
        code, out, _ = run(
            capsys, "bounds", "--r", "96", "--N", "100", "--p", "0.02", "--out", str(out_file)
        )
        assert code == 0
        header, rows = read_csv(out_file)
        assert header == ["r", "N", "p_eff", "pe_lower", "pe_exact", "pe_chernoff", "pe_sum"]
        row = {k: float(v) for k, v in rows[0].items()}
        assert row["pe_lower"] <= row["pe_exact"] <= min(row["pe_chernoff"], row["pe_sum"])

    def test_bounds_requires_budget(self, capsys):
        code, _, err = run(capsys, "bounds", "--r", "5", "--p", "0.1")
        assert code == 2
        assert "--N" in err


class TestUsageErrors:
    def test_unknown_flag(self, capsys):
        assert run(capsys, "iv", "--definitely-not-a-flag")[0] == 2

    def test_no_subcommand(self, capsys):
        assert run(capsys)[0] == 2

    def test_help_exits_zero(self, capsys):
        assert run(capsys, "--help")[0] == 0

    def test_missing_scenario_file(self, capsys):
        code, _, err = run(capsys, "iv", "--scenario", "/nonexistent/path.json")
        assert code == 2
        assert "path.json" in err

    def test_non_simplex_type_reported(self, capsys, tmp_path):
        bad = {
            "profile": {"kind": "fixed", "P": [0.1, 0.2], "Q": [0.9, 0.4], "r": 10},
            "arrivals": {"kind": "geometric", "lambda": 0.5},
            "sweep": {"variable": "alpha", "values": [0.5], "outputs": ["iv"]},
        }
        path = tmp_path / "bad.json"
        path.write_text(json.dumps(bad))
        code, _, err = run(capsys, "sweep", "--scenario", str(path))
        assert code == 2
        assert "NonSimplexType" in err

    def test_unknown_sweep_output(self, capsys, tmp_path):
        doc = json.loads((SCENARIOS / "fig3.json").read_text())
        path = tmp_path / "s.json"
        path.write_text(json.dumps(doc))
        code, _, err = run(capsys, "sweep", "--scenario", str(path), "--outputs", "pe_wrong")
        assert code == 2
        assert "pe_wrong" in err

    def test_alpha_above_velocity(self, capsys):
        code, _, err = run(capsys, "ee", "--p", "0.2", "--r", "10", "--alpha", "0.9")
        assert code == 2
        assert "velocity" in err


class TestSimulate:
    def test_trace_columns_and_invariants(self, capsys, tmp_path):
        trace = tmp_path / "trace.csv"
        code, out, _ = run(
            capsys,
            "simulate",
            "--scenario",
            str(SCENARIOS / "fig4.json"),
            "--packets",
            "500",
            "--out",
            str(trace),
        )
        assert code == 0
        assert "mean delay" in out
        header, rows = read_csv(trace)
        assert header == ["packet_index", "A", "B"]
        arrivals = [int(r["A"]) for r in rows]
        departures = [int(r["B"]) for r in rows]
        assert all(b - a >= 20 for a, b in zip(arrivals, departures))
        assert all(x < y for x, y in zip(arrivals, arrivals[1:]))
        assert all(x < y for x, y in zip(departures, departures[1:]))
        assert int(rows[0]["packet_index"]) == 50  # post-warmup indexing

    def test_simulate_needs_scenario(self, capsys):
        assert run(capsys, "simulate")[0] == 2


class TestSweep:
    def test_fig4_golden_bytes(self, capsys, tmp_path):
        out = tmp_path / "fig4.csv"
        code, _, _ = run(
            capsys,
            "sweep",
            "--scenario",
            str(SCENARIOS / "fig4.json"),
            "--packets",
            "2000",
            "--out",
            str(out),
        )
        assert code == 0
        assert out.read_bytes() == GOLDEN.read_bytes()

    def test_fig4_schema_and_budget_derivation(self):
        header, rows = read_csv(GOLDEN)
        assert header == ["alpha", "N", "r", "pe_empirical", "ci_lo", "ci_hi", "pe_exact"]
        for row in rows:
            assert int(row["N"]) == round(int(row["r"]) / float(row["alpha"]))
        assert sorted({int(r["r"]) for r in rows}) == [20, 100, 200, 1000]

    def test_fig3_schema_and_sandwich(self, capsys, tmp_path):
        out = tmp_path / "fig3.csv"
        code, _, _ = run(
            capsys, "sweep", "--scenario", str(SCENARIOS / "fig3.json"), "--out", str(out)
        )
        assert code == 0
        header, rows = read_csv(out)
        assert header == ["r", "N", "p_eff", "pe_lower", "pe_exact", "pe_chernoff", "pe_sum"]
        for raw in rows:
            row = {k: float(v) for k, v in raw.items()}
            assert row["pe_lower"] <= row["pe_exact"] <= min(row["pe_chernoff"], row["pe_sum"])
            assert int(raw["r"]) == round(0.96 * int(raw["N"]))

    def test_fig2_velocity_curves(self, capsys, tmp_path):
        out = tmp_path / "fig2.csv"
        code, _, _ = run(
            capsys, "sweep", "--scenario", str(SCENARIOS / "fig2.json"), "--out", str(out)
        )
        assert code == 0
        header, rows = read_csv(out)
        assert header == ["lambda", "p", "iv"]
        by_p: dict = {}
        for row in rows:
            by_p.setdefault(row["p"], []).append((float(row["lambda"]), float(row["iv"])))
        assert len(by_p) == 3
        for series in by_p.values():
            ivs = [iv for _, iv in sorted(series)]
            assert all(a > b for a, b in zip(ivs, ivs[1:]))
        # lambda = 0 rows reduce to the single-packet velocity 1 - p
        for p, series in by_p.items():
            iv0 = dict(series)[0.0]
            assert iv0 == pytest.approx(1.0 - float(p), rel=1e-12)

    def test_fig7_labeled_series(self, capsys, tmp_path):
        out = tmp_path / "fig7.csv"
        code, _, _ = run(
            capsys, "sweep", "--scenario", str(SCENARIOS / "fig7.json"), "--out", str(out)
        )
        assert code == 0
        header, rows = read_csv(out)
        assert header == ["series", "alpha", "N", "r", "ee_chernoff"]
        labels = {r["series"] for r in rows}
        assert labels == {
            "fixed-delayed",
            "fixed-instantaneous",
            "probabilistic-delayed",
            "probabilistic-instantaneous",
        }
        assert len(rows) == 4 * 24
        for label in labels:
            vals = [float(r["ee_chernoff"]) for r in rows if r["series"] == label]
            assert all(v > 0 for v in vals)
            assert all(a > b for a, b in zip(vals, vals[1:]))  # decreasing in alpha

    def test_outputs_override(self, capsys, tmp_path):
        out = tmp_path / "o.csv"
        code, _, _ = run(
            capsys,
            "sweep",
            "--scenario",
            str(SCENARIOS / "fig3.json"),
            "--outputs",
            "pe_exact",
            "--out",
            str(out),
        )
        assert code == 0
        header, _ = read_csv(out)
        assert header == ["r", "N", "p_eff", "pe_exact"]

    def test_stdout_csv_without_out_flag(self, capsys):
        code, out, _ = run(capsys, "sweep", "--scenario", str(SCENARIOS / "fig2.json"))
        assert code == 0
        assert out.startswith("lambda,p,iv\n")


class TestSeedPrecedenceEndToEnd:
    BASE = {
        "profile": {"kind": "homogeneous", "p": 0.2, "r": 3},
        "arrivals": {"kind": "geometric", "lambda": 0.3},
        "num_packets": 400,
        "warmup_packets": 50,
        "sweep": {"variable": "alpha", "values": [0.3, 0.5], "outputs": ["pe_empirical"]},
    }

    def _sweep_bytes(self, capsys, tmp_path, doc, *extra, env=None, monkeypatch=None):
        path = tmp_path / "sc.json"
        path.write_text(json.dumps(doc))
        out = tmp_path / "out.csv"
        if monkeypatch is not None:
            if env is None:
                monkeypatch.delenv("IVELOX_SEED", raising=False)
            else:
                monkeypatch.setenv("IVELOX_SEED", env)
        code, _, _ = run(
            capsys, "sweep", "--scenario", str(path), "--out", str(out), *extra
        )
        assert code == 0
        return out.read_bytes()

    def test_flag_file_env_chain(self, capsys, tmp_path, monkeypatch):
        with_seed = {**self.BASE, "seed": 7}
        ref7 = self._sweep_bytes(capsys, tmp_path, with_seed, monkeypatch=monkeypatch)
        ref5 = self._sweep_bytes(
            capsys, tmp_path, with_seed, "--seed", "5", monkeypatch=monkeypatch
        )
        assert ref5 != ref7  # the flag overrode the file seed
        # file seed beats the environment
        assert (
            self._sweep_bytes(capsys, tmp_path, with_seed, env="5", monkeypatch=monkeypatch)
            == ref7
        )
        # without a file seed the environment is used
        assert (
            self._sweep_bytes(capsys, tmp_path, self.BASE, env="7", monkeypatch=monkeypatch)
            == ref7
        )
        # and with neither, the default seed 0 applies
        assert (
            self._sweep_bytes(capsys, tmp_path, self.BASE, monkeypatch=monkeypatch)
            == self._sweep_bytes(
                capsys, tmp_path, {**self.BASE, "seed": 0}, monkeypatch=monkeypatch
            )
        )

    def test_same_seed_byte_identical(self, capsys, tmp_path, monkeypatch):
        a = self._sweep_bytes(capsys, tmp_path, {**self.BASE, "seed": 3}, monkeypatch=monkeypatch)
        b = self._sweep_bytes(capsys, tmp_path, {**self.BASE, "seed": 3}, monkeypatch=monkeypatch)
        assert a == b


class TestValidateCommand:
    def test_fault_injection_fails_suite(self, capsys, monkeypatch):
        def broken():
            return False, "deliberately broken"

        monkeypatch.setattr(
            validation, "FAST_CHECKS", [("broken_invariant", broken)], raising=True
        )
        code, out, _ = run(capsys, "validate", "--level", "fast")
        assert code == 1
        assert "FAIL  broken_invariant" in out

    def test_crashing_check_reports_failure(self, capsys, monkeypatch):
        def crashing():
            raise RuntimeError("boom")

        monkeypatch.setattr(
            validation, "FAST_CHECKS", [("crashing_check", crashing)], raising=True
        )
        code, out, _ = run(capsys, "validate", "--level", "fast")
        assert code == 1
        assert "RuntimeError" in out

    def test_level_names_are_checked(self, capsys):
        assert run(capsys, "validate", "--level", "banana")[0] == 2
