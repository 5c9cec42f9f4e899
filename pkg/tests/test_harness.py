"""Tests for the experiment harness: sweeps, metrics IO, online runs, CLI."""

import dataclasses
import json

import numpy as np
import pytest

import oracles
from conftest import LinearSoftmaxStub
from wavecp.data import Dataset
from wavecp.errors import ConfigError, DataFormatError
from wavecp.harness import cli
from wavecp.harness.experiments import (
    ExperimentConfig,
    MetricsRow,
    OnlineConfig,
    dataset_digest,
    derive_rng,
    derive_seed,
    read_metrics_csv,
    reliability_diagram,
    run_offline_trial,
    run_online_experiment,
    summarize,
    sweep_offline,
    write_metrics_csv,
    write_online_csv,
    _trial_data,
)
from wavecp.online import stretching

TINY = dict(
    scenario="demod",
    methods=("naive", "vb"),
    learners=("freq",),
    n_grid=(8,),
    n_test=10,
    trials=2,
    iterations=15,
    seed=1,
)


class TestExperimentConfig:
    def test_defaults_are_valid(self):
        ExperimentConfig()

    def test_scenario_and_subset_validation(self):
        with pytest.raises(ConfigError):
            ExperimentConfig(scenario="radar")
        with pytest.raises(ConfigError):
            ExperimentConfig(methods=("vb", "magic"))
        with pytest.raises(ConfigError):
            ExperimentConfig(methods=())
        with pytest.raises(ConfigError):
            ExperimentConfig(learners=("quantum",))

    def test_grid_constraints(self):
        with pytest.raises(ConfigError):
            ExperimentConfig(methods=("kcv",), folds=4, n_grid=(22,))
        with pytest.raises(ConfigError):
            ExperimentConfig(methods=("cv",), n_grid=(20,), max_cv_n=10)
        with pytest.raises(ConfigError):
            ExperimentConfig(n_grid=())
        with pytest.raises(ConfigError):
            ExperimentConfig(trials=0)
        with pytest.raises(ConfigError):
            ExperimentConfig(snr=0.0)

    def test_alpha_flows_through_cp_config(self):
        with pytest.raises(ConfigError):
            ExperimentConfig(alpha=1.5)

    def test_train_config_shapes(self):
        cfg = ExperimentConfig(**TINY)
        freq = cfg.train_config("freq", 3)
        assert freq.langevin is None and freq.iterations == 15
        bayes = cfg.train_config("bayes", 3)
        assert bayes.langevin is not None
        # The sampler budget wins over a smaller iteration setting.
        assert bayes.iterations == cfg.langevin_burn_in + cfg.langevin_ensemble

    def test_architectures(self):
        assert ExperimentConfig(**TINY).architecture().layers[-1].out_dim == 8
        mod = ExperimentConfig(**{**TINY, "scenario": "modclass"})
        assert mod.architecture().layers[-1].out_dim == 4


class TestSeedDerivation:
    def test_deterministic(self):
        assert derive_seed(3, 1, 2) == derive_seed(3, 1, 2)
        a = derive_rng(3, 1, 2).normal(size=4)
        b = derive_rng(3, 1, 2).normal(size=4)
        np.testing.assert_array_equal(a, b)

    def test_namespaced(self):
        seen = {
            derive_seed(0, 1, 2),
            derive_seed(0, 2, 1),
            derive_seed(0, 1, 2, 0),
            derive_seed(1, 1, 2),
        }
        assert len(seen) == 4


class TestTrialData:
    def test_shared_and_deterministic(self):
        cfg = ExperimentConfig(**TINY)
        a_train, a_test = _trial_data(cfg, 8, 0)
        b_train, b_test = _trial_data(cfg, 8, 0)
        assert dataset_digest(a_train, a_test) == dataset_digest(b_train, b_test)
        assert len(a_train) == 8 and len(a_test) == 10

    def test_trials_differ(self):
        cfg = ExperimentConfig(**TINY)
        a = dataset_digest(*_trial_data(cfg, 8, 0))
        b = dataset_digest(*_trial_data(cfg, 8, 1))
        assert a != b

    def test_modclass_corpus_resampling(self, tmp_path, rng):
        from wavecp import scenarios

        mc = scenarios.ModClassConfig(seq_len=8)
        corpus = scenarios.gen_modclass_dataset(mc, 30, rng)
        path = tmp_path / "c.bin"
        scenarios.save_modclass_corpus(path, corpus, mc)
        cfg = ExperimentConfig(
            scenario="modclass",
            methods=("naive",),
            n_grid=(8,),
            n_test=10,
            trials=1,
            seq_len=8,
            corpus=str(path),
            iterations=5,
        )
        train, test = _trial_data(cfg, 8, 0)
        assert len(train) == 8 and len(test) == 10
        cfg_big = dataclasses.replace(cfg, n_test=40)
        with pytest.raises(ConfigError):
            _trial_data(cfg_big, 8, 0)


class TestSweep:
    def test_row_grid(self):
        cfg = ExperimentConfig(**{**TINY, "n_grid": (8, 12), "trials": 3})
        rows = sweep_offline(cfg)
        assert len(rows) == 2 * 3 * 2  # sizes x trials x methods
        assert [r.n_train for r in rows[:6]] == [8] * 6
        assert {r.method for r in rows} == {"naive", "vb"}
        for r in rows:
            assert 0.0 <= r.empirical_coverage <= 1.0
            assert r.empirical_inefficiency >= 0.0

    def test_trial_rows_cover_method_learner_product(self):
        cfg = ExperimentConfig(
            **{**TINY, "methods": ("naive", "vb", "kcv"), "folds": 2}
        )
        rows = run_offline_trial(cfg, 8, 0)
        assert [(r.method, r.learner) for r in rows] == [
            ("naive", "freq"),
            ("vb", "freq"),
            ("kcv", "freq"),
        ]

    def test_repeat_sweeps_match_modulo_wall_time(self):
        cfg = ExperimentConfig(**TINY)
        a = [dataclasses.replace(r, wall_time=0.0) for r in sweep_offline(cfg)]
        b = [dataclasses.replace(r, wall_time=0.0) for r in sweep_offline(cfg)]
        assert a == b

    def test_progress_callback(self):
        cfg = ExperimentConfig(**TINY)
        seen = []
        sweep_offline(cfg, progress=lambda done, total: seen.append((done, total)))
        assert seen == [(1, 2), (2, 2)]


class TestMetricsCSV:
    def _rows(self):
        return [
            MetricsRow("demod", "vb", "freq", 20, 0, 0.91, 3.25, 0.5),
            MetricsRow("demod", "cv", "freq", 20, 0, 1.0 / 3.0, 2.0, 0.25),
        ]

    def test_roundtrip_exact(self, tmp_path):
        path = tmp_path / "m.csv"
        write_metrics_csv(path, self._rows())
        assert read_metrics_csv(path) == self._rows()

    def test_versioned_header_comment(self, tmp_path):
        path = tmp_path / "m.csv"
        write_metrics_csv(path, self._rows())
        first = path.read_text().splitlines()[0]
        assert first.startswith("# wavecp-metrics-v1 columns=scenario,")

    def test_identical_rows_identical_bytes(self, tmp_path):
        a, b = tmp_path / "a.csv", tmp_path / "b.csv"
        write_metrics_csv(a, self._rows())
        write_metrics_csv(b, self._rows())
        assert a.read_bytes() == b.read_bytes()

    def test_missing_marker_rejected(self, tmp_path):
        path = tmp_path / "m.csv"
        write_metrics_csv(path, self._rows())
        lines = path.read_text().splitlines(keepends=True)
        path.write_text("".join(lines[1:]))
        with pytest.raises(DataFormatError):
            read_metrics_csv(path)

    def test_wrong_columns_rejected(self, tmp_path):
        path = tmp_path / "m.csv"
        path.write_text("# wavecp-metrics-v1 columns=x\nx,y\n1,2\n")
        with pytest.raises(DataFormatError):
            read_metrics_csv(path)

    def test_bad_cell_rejected(self, tmp_path):
        path = tmp_path / "m.csv"
        write_metrics_csv(path, self._rows())
        path.write_text(path.read_text().replace("20", "twenty"))
        with pytest.raises(DataFormatError):
            read_metrics_csv(path)

    def test_missing_file_raises_file_not_found(self, tmp_path):
        with pytest.raises(FileNotFoundError):
            read_metrics_csv(tmp_path / "absent.csv")


class TestSummarize:
    def test_shape_and_values(self):
        rows = [
            MetricsRow("demod", "vb", "freq", 20, 0, 0.9, 4.0, 0.1),
            MetricsRow("demod", "vb", "freq", 20, 1, 0.8, 2.0, 0.1),
            MetricsRow("demod", "cv", "freq", 20, 0, 1.0, 1.0, 0.1),
        ]
        out = summarize(rows)
        assert out["vb"]["mean_coverage"] == pytest.approx(0.85)
        assert out["vb"]["mean_inefficiency"] == pytest.approx(3.0)
        assert out["cv"]["mean_coverage"] == 1.0
        groups = out["groups"]
        assert len(groups) == 2
        vb = next(g for g in groups if g["method"] == "vb")
        assert vb["trials"] == 2
        want_se = np.std([0.9, 0.8], ddof=1) / np.sqrt(2)
        assert vb["se_coverage"] == pytest.approx(want_se)
        cv = next(g for g in groups if g["method"] == "cv")
        assert cv["se_coverage"] == 0.0


class TestReliabilityDiagram:
    def test_matches_brute_force_oracle(self, rng):
        stub = LinearSoftmaxStub.random(rng, 3, 4, scale=2.0)
        data = Dataset(rng.normal(size=(60, 3)), rng.integers(0, 4, size=60))
        diagram = reliability_diagram(stub, data, bins=6)
        probs = stub.predict_proba(data.x)
        conf = probs.max(axis=1)
        correct = probs.argmax(axis=1) == data.y
        edges, stats = oracles.reliability_bins_ref(conf, correct, 1.0 / 4.0, 6)
        np.testing.assert_allclose(diagram.bin_lower, edges[:-1])
        np.testing.assert_allclose(diagram.bin_upper, edges[1:])
        for b in range(6):
            assert diagram.count[b] == len(stats[b])
            if stats[b]:
                assert diagram.accuracy[b] == pytest.approx(np.mean(stats[b]))

    def test_sharp_correct_predictor_fills_top_bin(self, rng):
        y = rng.integers(0, 4, size=30)

        class Sharp:
            def predict_proba(self, x):
                probs = np.full((len(x), 4), 1e-4)
                probs[np.arange(len(x)), y] = 1.0 - 3e-4
                return probs

        data = Dataset(rng.normal(size=(30, 2)), y)
        diagram = reliability_diagram(Sharp(), data, bins=5)
        assert diagram.count[-1] == 30 and diagram.count[:-1].sum() == 0
        assert diagram.accuracy[-1] == 1.0

    def test_flat_predictor_lands_in_bottom_bin_at_chance(self, rng):
        class Flat:
            def predict_proba(self, x):
                return np.full((len(x), 4), 0.25)

        data = Dataset(rng.normal(size=(400, 2)), rng.integers(0, 4, size=400))
        diagram = reliability_diagram(Flat(), data, bins=5)
        assert diagram.count[0] == 400 and diagram.count[1:].sum() == 0
        assert diagram.mean_confidence[0] == pytest.approx(0.25)
        # Ties resolve to label 0, so accuracy is the label-0 frequency.
        assert diagram.accuracy[0] == pytest.approx(np.mean(data.y == 0))
        assert abs(diagram.accuracy[0] - 0.25) < 0.1

    def test_empty_bins_report_zero(self, rng):
        stub = LinearSoftmaxStub.random(rng, 2, 2, scale=0.01)
        data = Dataset(rng.normal(size=(20, 2)), rng.integers(0, 2, size=20))
        # Near-uniform predictions leave the high-confidence bins empty.
        diagram = reliability_diagram(stub, data, bins=10)
        assert diagram.count[-1] == 0
        assert diagram.accuracy[-1] == 0.0 and diagram.mean_confidence[-1] == 0.0

    def test_bin_range_starts_at_chance(self, rng):
        stub = LinearSoftmaxStub.random(rng, 2, 5)
        data = Dataset(rng.normal(size=(8, 2)), rng.integers(0, 5, size=8))
        diagram = reliability_diagram(stub, data, bins=4)
        assert diagram.bin_lower[0] == pytest.approx(0.2)
        assert diagram.bin_upper[-1] == pytest.approx(1.0)

    def test_validation(self, rng):
        stub = LinearSoftmaxStub.random(rng, 2, 3)
        empty = Dataset(np.zeros((0, 2)), np.zeros(0, dtype=np.int64))
        with pytest.raises(ConfigError):
            reliability_diagram(stub, empty)
        data = Dataset(rng.normal(size=(4, 2)), rng.integers(0, 3, size=4))
        with pytest.raises(ConfigError):
            reliability_diagram(stub, data, bins=0)


class TestOnlineConfig:
    def test_validation(self):
        with pytest.raises(ConfigError):
            OnlineConfig(source="fm")
        with pytest.raises(ConfigError):
            OnlineConfig(source="csv")
        with pytest.raises(ConfigError):
            OnlineConfig(steps=1)
        with pytest.raises(ConfigError):
            OnlineConfig(steps=100, warmup=100)
        with pytest.raises(ConfigError):
            OnlineConfig(shifted_index=3)

    def test_series_sources(self, tmp_path):
        assert OnlineConfig(source="ar1", steps=50, warmup=0).series().x.shape == (50, 0)
        rss = OnlineConfig(source="rss", steps=50, warmup=0, channels=3).series()
        assert rss.x.shape == (50, 3)
        shifted = OnlineConfig(source="shifted", steps=50, warmup=0).series()
        assert len(shifted) == 50
        trace = tmp_path / "t.csv"
        trace.write_text("index,rss\n0,-70\n1,-71\n2,-69\n")
        csv_series = OnlineConfig(
            source="csv", csv_path=str(trace), steps=2, warmup=0
        ).series()
        assert len(csv_series) == 3 and csv_series.n_features == 0

    def test_shifted_index_selects_different_series(self):
        a = OnlineConfig(source="shifted", steps=60, warmup=0, shifted_index=0).series()
        b = OnlineConfig(source="shifted", steps=60, warmup=0, shifted_index=1).series()
        assert not np.array_equal(a.y, b.y)

    def test_rci_config_follows_series_width(self):
        cfg = OnlineConfig(source="rss", steps=30, warmup=0, channels=5)
        rci = cfg.rci_config(cfg.series())
        assert rci.net.exog_dim == 5
        assert cfg.rci_config(cfg.series(), gamma=0.0).gamma == 0.0


@pytest.fixture(scope="module")
def result():
    return run_online_experiment(OnlineConfig(source="ar1", steps=120, warmup=30))


class TestOnlineExperiment:
    def test_baseline_is_unpadded_twin(self, result):
        cal, base = result.calibrated, result.baseline
        assert np.all(base.theta == 0.0)
        pads = np.array([stretching(t) for t in cal.theta])
        np.testing.assert_allclose(cal.lo, base.lo - pads, atol=1e-12)
        np.testing.assert_allclose(cal.hi, base.hi + pads, atol=1e-12)

    def test_summary_fields(self, result):
        s = result.summary()
        for key in (
            "coverage",
            "baseline_coverage",
            "mean_width",
            "baseline_mean_width",
            "width_ratio",
            "width_overhead",
        ):
            assert key in s
        assert 0.0 <= s["coverage"] <= 1.0
        assert s["width_ratio"] == pytest.approx(
            s["mean_width"] / s["baseline_mean_width"]
        )

    def test_online_csv_layout(self, result, tmp_path):
        path = tmp_path / "steps.csv"
        write_online_csv(path, result)
        lines = path.read_text().splitlines()
        assert lines[0].startswith("# wavecp-online-v1 columns=step,")
        assert lines[1] == "step,lo,hi,y,err,theta,base_lo,base_hi,base_err"
        first = lines[2].split(",")
        assert first[0] == "1"
        assert float(first[3]) == result.calibrated.y[0]
        assert len(lines) == 2 + 120


class TestCLI:
    def test_demod_writes_outputs(self, tmp_path, capsys):
        out = tmp_path / "metrics.csv"
        code = cli.main(
            [
                "demod",
                "--n-train", "8",
                "--n-test", "10",
                "--trials", "1",
                "--method", "naive,vb",
                "--iterations", "10",
                "--out", str(out),
            ]
        )
        assert code == 0
        rows = read_metrics_csv(out)
        assert len(rows) == 2
        summary = json.loads((tmp_path / "metrics.summary.json").read_text())
        assert "vb" in summary and "groups" in summary
        assert "wrote" in capsys.readouterr().out

    def test_bad_alpha_exits_2(self, tmp_path, capsys):
        code = cli.main(
            ["demod", "--alpha", "2.0", "--out", str(tmp_path / "m.csv")]
        )
        assert code == 2
        assert "configuration error" in capsys.readouterr().err

    def test_bad_config_file_exits_3(self, tmp_path, capsys):
        bad = tmp_path / "cfg.json"
        bad.write_text("{nope")
        code = cli.main(
            ["demod", "--config", str(bad), "--out", str(tmp_path / "m.csv")]
        )
        assert code == 3
        assert "data error" in capsys.readouterr().err

    def test_unknown_config_key_exits_2(self, tmp_path, capsys):
        bad = tmp_path / "cfg.json"
        bad.write_text('{"speed": 11}')
        code = cli.main(
            ["demod", "--config", str(bad), "--out", str(tmp_path / "m.csv")]
        )
        assert code == 2
        capsys.readouterr()

    def test_config_file_with_overrides(self, tmp_path, capsys):
        cfg = tmp_path / "cfg.json"
        cfg.write_text(
            json.dumps(
                {"n_grid": [8], "n_test": 10, "trials": 1, "iterations": 8,
                 "methods": ["naive"], "snr_db": 5.0}
            )
        )
        out = tmp_path / "m.csv"
        code = cli.main(["demod", "--config", str(cfg), "--trials", "2",
                         "--out", str(out)])
        assert code == 0
        assert len(read_metrics_csv(out)) == 2  # the override wins
        capsys.readouterr()

    def test_missing_online_csv_exits_3(self, tmp_path, capsys):
        code = cli.main(
            [
                "rss-online",
                "--source", "csv",
                "--csv", str(tmp_path / "absent.csv"),
                "--steps", "10",
                "--warmup", "2",
            ]
        )
        assert code == 3
        capsys.readouterr()

    def test_rss_online_writes_outputs(self, tmp_path, capsys):
        out = tmp_path / "online.csv"
        code = cli.main(
            [
                "rss-online",
                "--steps", "60",
                "--warmup", "10",
                "--out", str(out),
            ]
        )
        assert code == 0
        summary = json.loads((tmp_path / "online.summary.json").read_text())
        assert "width_ratio" in summary
        assert out.read_text().splitlines()[0].startswith("# wavecp-online-v1")
        capsys.readouterr()

    def test_gen_corpus_then_sweep(self, tmp_path, capsys):
        corpus = tmp_path / "corpus.bin"
        code = cli.main(
            [
                "modclass",
                "--gen-corpus", str(corpus),
                "--corpus-size", "30",
                "--seq-len", "8",
                "--seed", "3",
            ]
        )
        assert code == 0 and corpus.exists()
        out = tmp_path / "m.csv"
        code = cli.main(
            [
                "modclass",
                "--corpus", str(corpus),
                "--seq-len", "8",
                "--n-train", "8",
                "--n-test", "10",
                "--trials", "1",
                "--method", "naive",
                "--iterations", "5",
                "--out", str(out),
            ]
        )
        assert code == 0
        assert len(read_metrics_csv(out)) == 1
        capsys.readouterr()
