import csv
import hashlib
import json
import math

import pytest

from opecs.core import Interval
from opecs.experiments import (
    ConfigError,
    DataError,
    ExperimentConfig,
    emit_trace,
    ingest_jsonl,
    load_config,
    read_trace,
    run_experiment,
)


def write_jsonl(path, records):
    with open(path, "w") as fh:
        for rec in records:
            fh.write(json.dumps(rec) + "\n")
    return str(path)


class TestConfig:
    def test_defaults_validate(self):
        ExperimentConfig().validate()

    def test_unknown_experiment(self):
        with pytest.raises(ConfigError, match="unknown experiment"):
            ExperimentConfig(experiment="frobnicate").validate()

    def test_alpha_range(self):
        with pytest.raises(ConfigError, match="alpha"):
            ExperimentConfig(alpha=1.0).validate()

    def test_method_checked_per_experiment(self):
        with pytest.raises(ConfigError, match="unknown method 'gated'"):
            ExperimentConfig(experiment="coverage", methods=("gated",)).validate()

    def test_ci_needs_input(self):
        with pytest.raises(ConfigError, match="input"):
            ExperimentConfig(experiment="ci").validate()

    def test_default_methods_fill_in(self):
        cfg = ExperimentConfig(experiment="predictor")
        assert cfg.resolved_methods() == ("stream", "predictor", "doubly")

    def test_load_config_with_comments_and_overrides(self, tmp_path):
        p = tmp_path / "exp.cfg"
        p.write_text(
            "# gated check\n"
            "experiment = gated\n"
            "n = 4000   # short run\n"
            "alpha = 0.01\n"
            "\n"
            "methods = gated\n")
        cfg = load_config(str(p), {"n": "2000", "seed": "7"})
        assert cfg.experiment == "gated"
        assert cfg.n == 2000
        assert cfg.alpha == 0.01
        assert cfg.seed == 7
        assert cfg.methods == ("gated",)

    def test_load_config_rejects_unknown_key(self, tmp_path):
        p = tmp_path / "exp.cfg"
        p.write_text("experimnt = gated\n")
        with pytest.raises(ConfigError, match="unknown config key"):
            load_config(str(p))

    def test_load_config_rejects_bad_number(self, tmp_path):
        p = tmp_path / "exp.cfg"
        p.write_text("alpha = lots\n")
        with pytest.raises(ConfigError, match="expects a number"):
            load_config(str(p))

    def test_load_config_rejects_missing_equals(self, tmp_path):
        p = tmp_path / "exp.cfg"
        p.write_text("alpha 0.05\n")
        with pytest.raises(ConfigError, match="line 1"):
            load_config(str(p))


class TestIngest:
    def test_plain_and_variate_forms(self, tmp_path):
        path = write_jsonl(tmp_path / "d.jsonl", [
            {"w": 2.0, "r": 1.0},
            {"w": 0.0, "r": 0.25, "c": -0.5},
            {"w": 2.0, "r": 0.5, "q_taken": 0.4, "q_bar": 0.3},
        ])
        got = list(ingest_jsonl(path, w_max=2.0))
        assert [s.w for s in got] == [2.0, 0.0, 2.0]
        assert got[0].c is None
        assert got[1].c == -0.5
        assert got[2].c == pytest.approx(2.0 * 0.4 - 0.3)

    def test_line_number_in_errors(self, tmp_path):
        path = write_jsonl(tmp_path / "d.jsonl", [
            {"w": 1.0, "r": 0.5},
            {"w": 1.0, "r": 1.5},
        ])
        with pytest.raises(DataError, match="line 2.*outside"):
            list(ingest_jsonl(path))

    def test_weight_cap_enforced(self, tmp_path):
        path = write_jsonl(tmp_path / "d.jsonl", [{"w": 3.0, "r": 0.5}])
        with pytest.raises(DataError, match="exceeds w_max"):
            list(ingest_jsonl(path, w_max=2.0))
        assert list(ingest_jsonl(path))  # no cap, accepted

    def test_negative_weight_rejected(self, tmp_path):
        path = write_jsonl(tmp_path / "d.jsonl", [{"w": -1.0, "r": 0.5}])
        with pytest.raises(DataError, match="nonnegative"):
            list(ingest_jsonl(path))

    def test_malformed_json(self, tmp_path):
        path = tmp_path / "d.jsonl"
        path.write_text('{"w": 1.0, "r": 0.5}\n{"w": 1.0\n')
        with pytest.raises(DataError, match="line 2.*invalid JSON"):
            list(ingest_jsonl(str(path)))

    def test_missing_field(self, tmp_path):
        path = write_jsonl(tmp_path / "d.jsonl", [{"w": 1.0}])
        with pytest.raises(DataError, match="missing field 'r'"):
            list(ingest_jsonl(path))

    def test_c_and_pair_conflict(self, tmp_path):
        path = write_jsonl(
            tmp_path / "d.jsonl",
            [{"w": 1.0, "r": 0.5, "c": 0.0, "q_taken": 0.5, "q_bar": 0.5}])
        with pytest.raises(DataError, match="not both"):
            list(ingest_jsonl(path))

    def test_half_pair_rejected(self, tmp_path):
        path = write_jsonl(tmp_path / "d.jsonl", [{"w": 1.0, "r": 0.5, "q_taken": 0.5}])
        with pytest.raises(DataError, match="together"):
            list(ingest_jsonl(path))

    def test_predictor_value_range_checked(self, tmp_path):
        path = write_jsonl(
            tmp_path / "d.jsonl", [{"w": 1.0, "r": 0.5, "q_taken": 1.5, "q_bar": 0.5}])
        with pytest.raises(DataError, match="line 1"):
            list(ingest_jsonl(path))

    def test_variate_range_checked(self, tmp_path):
        path = write_jsonl(tmp_path / "d.jsonl", [{"w": 1.0, "r": 0.5, "c": -1.5}])
        with pytest.raises(DataError, match="achievable"):
            list(ingest_jsonl(path))


class TestTrace:
    def intervals(self):
        # widths shrink, lower endpoint wobbles so intersection differs
        return [
            Interval(0.1, 0.9),
            Interval(0.05, 0.8),
            Interval(0.2, 0.75),
            Interval(0.15, 0.7),
        ]

    def test_round_trip(self, tmp_path):
        path = str(tmp_path / "trace.csv")
        n = emit_trace(self.intervals(), path, method="stream", stride=1)
        assert n == 4
        rows = read_trace(path)
        assert [r.t for r in rows] == [1, 2, 3, 4]
        assert rows[2].v_lo == 0.2
        assert rows[2].v_lo_int == 0.2
        assert rows[3].v_lo == 0.15
        assert rows[3].v_lo_int == 0.2  # intersection keeps the tighter limit
        assert rows[3].v_hi_int == 0.7
        assert all(r.method == "stream" for r in rows)

    def test_stride_thins_rows(self, tmp_path):
        path = str(tmp_path / "trace.csv")
        ivs = [Interval(0.0, 1.0 - 0.0005 * t) for t in range(1000)]
        n = emit_trace(ivs, path, stride=100)
        assert n == 10
        rows = read_trace(path)
        assert [r.t for r in rows] == [100, 200, 300, 400, 500, 600, 700, 800, 900, 1000]

    def test_empty_stream_writes_header_only(self, tmp_path):
        path = str(tmp_path / "trace.csv")
        assert emit_trace([], path) == 0
        with open(path) as fh:
            assert fh.read() == "t,v_lo,v_hi,v_lo_int,v_hi_int,method\n"

    def test_bad_stride(self, tmp_path):
        with pytest.raises(ConfigError):
            emit_trace([], str(tmp_path / "t.csv"), stride=0)


def csv_rows(path):
    with open(path) as fh:
        return list(csv.DictReader(fh))


def file_hash(path):
    return hashlib.sha256(open(path, "rb").read()).hexdigest()


class TestRunners:
    def test_coverage_counts_and_report(self, tmp_path):
        cfg = ExperimentConfig(
            experiment="coverage", n=400, n_envs=3, out=str(tmp_path))
        rep = run_experiment(cfg)
        rows = csv_rows(rep.csv_paths["coverage"])
        assert len(rows) == rep.rows["coverage"] == 3 * 2
        for r in rows:
            assert r["method"] in ("stream", "scalar")
            assert (r["covered"] == "1") == (r["first_violation_t"] == "0")
        assert "coverage_stream" in rep.metrics

    def test_width_artifacts(self, tmp_path):
        cfg = ExperimentConfig(
            experiment="width", n=300, n_seeds=2, stride=150, out=str(tmp_path))
        rep = run_experiment(cfg)
        finals = csv_rows(rep.csv_paths["width_final"])
        assert len(finals) == rep.rows["width_final"] == 4 * 2 * 5
        curve = csv_rows(rep.csv_paths["width_curve"])
        assert len(curve) == rep.rows["width_curve"] == 4 * 5 * 2
        assert {r["pointwise_only"] for r in curve} == {"0", "1"}
        only_el = {r["method"] for r in curve if r["pointwise_only"] == "1"}
        assert only_el == {"el"}

    def test_gated_decision_and_trace(self, tmp_path):
        cfg = ExperimentConfig(
            experiment="gated", n=3000, n_seeds=2, out=str(tmp_path))
        rep = run_experiment(cfg)
        rows = csv_rows(rep.csv_paths["gated"])
        assert len(rows) == 2
        for r in rows:
            assert r["decision"] in ("deploy", "discard", "none")
            if r["decision"] == "deploy":
                assert int(r["decision_t"]) > 0
        trace = read_trace(rep.csv_paths["gated_trace"])
        assert len(trace) == rep.rows["gated_trace"]
        # difference streams live on [-1, 1]
        assert all(-1.0 <= r.v_lo <= 1.0 for r in trace)

    def test_timing_csv_has_no_seconds(self, tmp_path):
        cfg = ExperimentConfig(
            experiment="timing", n=300, methods=("stream", "scalar"),
            out=str(tmp_path))
        rep = run_experiment(cfg)
        with open(rep.csv_paths["timing"]) as fh:
            header = fh.readline().strip().split(",")
        assert "seconds" not in header
        assert rep.metrics["seconds_stream"] > 0.0
        assert any("stream" in line for line in rep.lines)

    def test_ci_runner_and_exit_categories(self, tmp_path):
        data = write_jsonl(tmp_path / "d.jsonl", [
            {"w": 1.6 if i % 2 else 0.4, "r": (i % 10) / 10.0} for i in range(200)
        ])
        cfg = ExperimentConfig(
            experiment="ci", input=data, w_max=2.0, stride=50, out=str(tmp_path))
        rep = run_experiment(cfg)
        assert rep.rows["trace"] == 4
        rows = read_trace(rep.csv_paths["trace"])
        assert rows[-1].t == 200
        assert rep.metrics["lo_stream"] <= rep.metrics["hi_stream"]

    def test_rerun_is_byte_identical(self, tmp_path):
        hashes = []
        for name in ("a", "b"):
            out = tmp_path / name
            cfg = ExperimentConfig(
                experiment="width", n=200, n_seeds=2, stride=100, out=str(out))
            rep = run_experiment(cfg)
            hashes.append(
                tuple(file_hash(p) for p in sorted(rep.csv_paths.values())))
        assert hashes[0] == hashes[1]

    def test_worker_fanout_matches_inline(self, tmp_path):
        outs = {}
        for workers in (1, 2):
            out = tmp_path / f"w{workers}"
            cfg = ExperimentConfig(
                experiment="coverage", n=200, n_envs=4, workers=workers,
                out=str(out))
            rep = run_experiment(cfg)
            outs[workers] = file_hash(rep.csv_paths["coverage"])
        assert outs[1] == outs[2]

    def test_coverage_violation_is_first_exit(self):
        # a deliberately wrong truth must get excluded, and the recorded time
        # must match the first step whose interval misses it
        from opecs.core import Config
        from opecs.environments import env_suite, sample_stream
        from opecs.experiments import _coverage_one, _make_engine

        ecfg = ExperimentConfig(experiment="coverage", n=2000, n_envs=1, seed=3)
        dist, truth = env_suite("coverage", seed=3, n_envs=1)[0]
        fake = 0.999 if truth < 0.5 else 0.001
        rows = _coverage_one((ecfg, 0, dist, fake))
        by_method = {r[2]: r for r in rows}
        assert set(by_method) == {"stream", "scalar"}
        for method, row in by_method.items():
            assert row[3] == 0 and row[4] > 0
            eng = _make_engine(method, Config(alpha=0.05, w_max=100.0), ecfg)
            first = 0
            stream_seed = ecfg.seed * 1_000_000
            for t, s in enumerate(
                    sample_stream(dist, seed=stream_seed, n=2000), start=1):
                iv = eng.update(s)
                if not (iv.lo - 1e-12 <= fake <= iv.hi + 1e-12):
                    first = t
                    break
            assert row[4] == first
