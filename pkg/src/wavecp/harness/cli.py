"""Command line entry points.

``wavecp demod`` and ``wavecp modclass`` run offline sweeps and write a
per-trial metrics CSV plus an aggregated ``*.summary.json``. ``wavecp
rss-online`` runs the calibrated online predictor against its gamma=0
baseline on one series. ``wavecp selftest`` exercises every path on tiny
settings. Exit codes: 0 success, 2 bad configuration, 3 unreadable or
malformed data.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import sys
from pathlib import Path

from ..errors import ConfigError, DataFormatError
from . import experiments
from .experiments import (
    ExperimentConfig,
    OnlineConfig,
    run_online_experiment,
    summarize,
    sweep_offline,
    write_metrics_csv,
    write_online_csv,
)

log = logging.getLogger("wavecp.cli")


def _csv_ints(text: str):
    return tuple(int(v) for v in text.split(",") if v)


def _flatten_csv(values):
    if values is None:
        return None
    out = []
    for v in values:
        out.extend(p for p in v.split(",") if p)
    return tuple(out)


def _add_offline_args(p: argparse.ArgumentParser):
    p.add_argument("--config", help="JSON file with ExperimentConfig fields")
    p.add_argument("--alpha", type=float, help="target miss rate")
    p.add_argument(
        "--n-train", type=_csv_ints, dest="n_grid", help="training sizes, e.g. 20,40,60"
    )
    p.add_argument("--n-test", type=int, help="test points per trial")
    p.add_argument("--trials", type=int, help="independent trials per size")
    p.add_argument("--folds", type=int, help="fold count for the kcv method")
    p.add_argument(
        "--method",
        action="append",
        dest="methods",
        help="naive|vb|kcv|cv, repeatable or comma separated",
    )
    p.add_argument(
        "--learner",
        action="append",
        dest="learners",
        help="freq|bayes, repeatable or comma separated",
    )
    p.add_argument("--snr-db", type=float, help="signal to noise ratio in dB")
    p.add_argument("--seed", type=int, help="master seed")
    p.add_argument("--learning-rate", type=float)
    p.add_argument("--iterations", type=int)
    p.add_argument("--max-cv-n", type=int, help="largest size allowed for cv")
    p.add_argument("--cv-alpha-mode", choices=("alpha", "alpha_half"))
    p.add_argument("--out", default="metrics.csv", help="metrics CSV path")
    p.add_argument("--verbose", action="store_true")


_FIELD_NAMES = {f.name for f in dataclasses.fields(ExperimentConfig)}


def _offline_config(args, scenario: str) -> ExperimentConfig:
    base = {}
    if args.config:
        try:
            base = json.loads(Path(args.config).read_text())
        except json.JSONDecodeError as exc:
            raise DataFormatError(f"bad config file {args.config}: {exc}") from exc
        if not isinstance(base, dict):
            raise DataFormatError(f"config file {args.config} must hold an object")
        if "snr_db" in base:
            base["snr"] = 10.0 ** (float(base.pop("snr_db")) / 10.0)
        unknown = set(base) - _FIELD_NAMES
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
    overrides = {
        "alpha": args.alpha,
        "n_grid": args.n_grid,
        "n_test": args.n_test,
        "trials": args.trials,
        "folds": args.folds,
        "methods": _flatten_csv(args.methods),
        "learners": _flatten_csv(args.learners),
        "seed": args.seed,
        "learning_rate": args.learning_rate,
        "iterations": args.iterations,
        "max_cv_n": args.max_cv_n,
        "cv_alpha_mode": args.cv_alpha_mode,
    }
    if args.snr_db is not None:
        overrides["snr"] = 10.0 ** (args.snr_db / 10.0)
    if scenario == "modclass":
        overrides["seq_len"] = args.seq_len
        overrides["modulations"] = _flatten_csv(args.modulations)
        overrides["corpus"] = args.corpus
    merged = {**base, **{k: v for k, v in overrides.items() if v is not None}}
    merged["scenario"] = scenario
    try:
        return ExperimentConfig(**merged)
    except TypeError as exc:
        raise ConfigError(str(exc)) from exc


def _print_summary(summary: dict):
    header = (
        f"{'scenario':<9} {'method':<6} {'learner':<7} {'n':>5} {'trials':>6} "
        f"{'coverage':>9} {'se':>7} {'ineff':>7} {'se':>7}"
    )
    print(header)
    for g in summary["groups"]:
        print(
            f"{g['scenario']:<9} {g['method']:<6} {g['learner']:<7} "
            f"{g['n_train']:>5} {g['trials']:>6} {g['mean_coverage']:>9.4f} "
            f"{g['se_coverage']:>7.4f} {g['mean_inefficiency']:>7.3f} "
            f"{g['se_inefficiency']:>7.4f}"
        )


def _summary_path(out: str) -> Path:
    return Path(out).with_suffix(".summary.json")


def _run_offline(args, scenario: str) -> int:
    cfg = _offline_config(args, scenario)
    progress = None
    if args.verbose:

        def progress(done, total):
            print(f"trial {done}/{total}", file=sys.stderr)

    rows = sweep_offline(cfg, progress=progress)
    write_metrics_csv(args.out, rows)
    summary = summarize(rows)
    _summary_path(args.out).write_text(json.dumps(summary, indent=1))
    _print_summary(summary)
    print(f"wrote {args.out} and {_summary_path(args.out)}")
    return 0


def _cmd_demod(args) -> int:
    return _run_offline(args, "demod")


def _cmd_modclass(args) -> int:
    if args.gen_corpus:
        import numpy as np

        from .. import scenarios

        mc = scenarios.ModClassConfig(
            modulations=_flatten_csv(args.modulations)
            or ("bpsk", "qpsk", "8psk", "16qam"),
            seq_len=args.seq_len or 64,
            snr=10.0 ** ((args.snr_db if args.snr_db is not None else 5.0) / 10.0),
        )
        rng = np.random.default_rng(args.seed or 0)
        data = scenarios.gen_modclass_dataset(mc, args.corpus_size, rng)
        scenarios.save_modclass_corpus(args.gen_corpus, data, mc)
        print(f"wrote corpus {args.gen_corpus} (+.json), {len(data)} examples")
        return 0
    return _run_offline(args, "modclass")


def _cmd_rss_online(args) -> int:
    cfg = OnlineConfig(
        source=args.source,
        steps=args.steps,
        warmup=args.warmup,
        alpha=args.alpha,
        gamma=args.gamma,
        eta=args.eta,
        window=args.window,
        seed=args.seed,
        channels=args.channels,
        shifted_index=args.shifted_index,
        csv_path=args.csv,
    )
    result = run_online_experiment(cfg)
    summary = result.summary()
    if args.out:
        write_online_csv(args.out, result)
        _summary_path(args.out).write_text(json.dumps(summary, indent=1))
        print(f"wrote {args.out} and {_summary_path(args.out)}")
    print(json.dumps(summary, indent=1))
    return 0


def _cmd_selftest(args) -> int:
    import tempfile

    failures = []

    def check(name, fn):
        try:
            fn()
        except Exception as exc:  # selftest reports instead of crashing
            failures.append((name, exc))
            print(f"selftest {name}: FAIL ({exc})")
        else:
            print(f"selftest {name}: PASS")

    def offline_small():
        cfg = ExperimentConfig(
            scenario="demod",
            methods=("naive", "vb", "kcv", "cv"),
            learners=("freq", "bayes"),
            n_grid=(8,),
            n_test=20,
            trials=2,
            folds=2,
            iterations=30,
            langevin_ensemble=5,
            langevin_burn_in=20,
            seed=7,
        )
        rows = sweep_offline(cfg)
        expected = len(cfg.n_grid) * cfg.trials * len(cfg.methods) * len(cfg.learners)
        assert len(rows) == expected, f"expected {expected} rows, got {len(rows)}"
        assert all(0.0 <= r.empirical_coverage <= 1.0 for r in rows)
        rows2 = sweep_offline(cfg)
        for a, b in zip(rows, rows2):
            assert (
                a.empirical_coverage == b.empirical_coverage
                and a.empirical_inefficiency == b.empirical_inefficiency
            ), "sweep is not deterministic"
        with tempfile.TemporaryDirectory() as tmp:
            path = Path(tmp) / "m.csv"
            write_metrics_csv(path, rows)
            back = experiments.read_metrics_csv(path)
            assert [r.empirical_coverage for r in back] == [
                r.empirical_coverage for r in rows
            ]

    def modclass_small():
        cfg = ExperimentConfig(
            scenario="modclass",
            methods=("naive", "vb"),
            learners=("freq",),
            n_grid=(8,),
            n_test=10,
            trials=1,
            iterations=20,
            seq_len=16,
            seed=3,
        )
        rows = sweep_offline(cfg)
        assert len(rows) == 2
        assert all(0.0 <= r.empirical_coverage <= 1.0 for r in rows)

    def online_small():
        cfg = OnlineConfig(source="ar1", steps=300, warmup=100, seed=5)
        result = run_online_experiment(cfg)
        s = result.summary()
        assert 0.0 <= s["coverage"] <= 1.0
        assert len(result.calibrated) == 300

    check("offline-demod", offline_small)
    check("offline-modclass", modclass_small)
    check("online-ar1", online_small)
    if failures:
        print(f"selftest: {len(failures)} failure(s)")
        return 1
    print("selftest: all checks passed")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="wavecp",
        description="Calibrated set and interval prediction for radio tasks",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("demod", help="offline demodulation sweep")
    _add_offline_args(p)
    p.set_defaults(run=_cmd_demod)

    p = sub.add_parser("modclass", help="offline modulation classification sweep")
    _add_offline_args(p)
    p.add_argument("--seq-len", type=int, help="samples per example")
    p.add_argument(
        "--modulations", action="append", help="class names, comma separated"
    )
    p.add_argument("--corpus", help="load examples from this corpus file")
    p.add_argument("--gen-corpus", help="write a synthetic corpus here and exit")
    p.add_argument("--corpus-size", type=int, default=400)
    p.set_defaults(run=_cmd_modclass)

    p = sub.add_parser("rss-online", help="online interval prediction run")
    p.add_argument(
        "--source", choices=("ar1", "rss", "shifted", "csv"), default="ar1"
    )
    p.add_argument(
        "--csv", help="signal trace (columns index,channel_id,rss; channel_id optional)"
    )
    p.add_argument("--steps", type=int, default=20000)
    p.add_argument("--warmup", type=int, default=1000)
    p.add_argument("--alpha", type=float, default=0.1)
    p.add_argument("--gamma", type=float, default=0.03)
    p.add_argument("--eta", type=float, default=0.01)
    p.add_argument("--window", type=int, default=20)
    p.add_argument("--channels", type=int, default=4)
    p.add_argument("--shifted-index", type=int, default=0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", help="per-step records CSV path")
    p.add_argument("--verbose", action="store_true")
    p.set_defaults(run=_cmd_rss_online)

    p = sub.add_parser("selftest", help="run tiny end-to-end checks")
    p.add_argument("--verbose", action="store_true")
    p.set_defaults(run=_cmd_selftest)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if getattr(args, "verbose", False) else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        return args.run(args)
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 2
    except (DataFormatError, FileNotFoundError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
