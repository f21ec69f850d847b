"""Command-line entry point: ``sdtgcn <command> [flags]``.

Exit codes: 0 success, 2 input error, 3 dataset too small, 4 numerical failure.
"""
from __future__ import annotations

import argparse
import csv
import logging
import sys
from pathlib import Path

import numpy as np

from . import numeric as nm
from .baselines import MODEL_TYPES, HistoricalAverage
from .checkpoint import load_checkpoint, save_checkpoint
from .dataset import build_snapshots, build_vocabulary, load_bundle, make_windows, read_records, save_bundle
from .errors import ConfigError, DataError, DatasetTooSmallError, NumericalError
from .metrics import append_results, average_runs, fmt, result_row
from .model import NeuralForecaster, TrainConfig
from .synthetic import generate_synthetic
from .training import (PreparedData, build, evaluate_split, gradient_check, prepare, train,
                       write_history)

log = logging.getLogger("sdtgcn")

EXIT_OK, EXIT_INPUT, EXIT_TOO_SMALL, EXIT_NUMERICAL = 0, 2, 3, 4
GRADCHECK_TOL = 1e-4


def year_range(text: str) -> tuple[int, int]:
    try:
        a, b = (int(p) for p in text.split(":"))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected START:END, got {text!r}") from None
    if a > b:
        raise argparse.ArgumentTypeError(f"empty year range {text!r}")
    return a, b


def ratios(text: str) -> tuple[float, float, float]:
    parts = [float(p) for p in text.replace(":", ",").split(",")]
    if len(parts) != 3:
        raise argparse.ArgumentTypeError("split ratios need three values, e.g. 0.6,0.1,0.1")
    return tuple(parts)


def add_train_flags(p: argparse.ArgumentParser):
    d = TrainConfig()
    p.add_argument("--T", type=int, default=d.T, help="snapshots per window")
    p.add_argument("--hidden", type=int, default=d.hidden)
    p.add_argument("--k", type=int, default=d.k, help="temporal kernel size")
    p.add_argument("--dropout", type=float, default=d.dropout)
    p.add_argument("--lr", type=float, default=d.lr)
    p.add_argument("--max-epochs", type=int, default=d.max_epochs)
    p.add_argument("--patience", type=int, default=d.patience)
    p.add_argument("--patience-start", type=int, default=d.patience_start)
    p.add_argument("--ratios", type=ratios, default=d.ratios, help="train,val,test fractions of the windows")
    p.add_argument("--loss-norm", choices=("mse", "l2"), default=d.loss_norm)
    p.add_argument("--seed", type=int, default=0)


def config_from_args(args) -> TrainConfig:
    return TrainConfig(T=args.T, hidden=args.hidden, k=args.k, dropout=args.dropout, lr=args.lr,
                       max_epochs=args.max_epochs, patience=args.patience,
                       patience_start=args.patience_start, seed=args.seed, ratios=args.ratios,
                       loss_norm=args.loss_norm)


def make_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="sdtgcn", description="Research-topic popularity forecasting on dynamic citation graphs.")
    parser.add_argument("--config", help="flat key=value file of flag defaults (flags win)")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("build", help="build a snapshot bundle from JSON Lines paper records")
    p.add_argument("--input", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--top-k", type=int, default=20000)
    p.add_argument("--sample-n", type=int, default=500)
    p.add_argument("--w", type=int, default=4)
    p.add_argument("--years", type=year_range, default=(1970, 2019))
    p.add_argument("--cumulative", action="store_true", help="accumulate citations over the years")
    p.add_argument("--seed", type=int, default=0)

    p = sub.add_parser("synth", help="write a synthetic bundle with known dynamics")
    p.add_argument("--out", required=True)
    p.add_argument("--n-topics", type=int, default=20)
    p.add_argument("--n-years", type=int, default=40)
    p.add_argument("--spatial-strength", type=float, default=0.8)
    p.add_argument("--noise", type=float, default=0.1)
    p.add_argument("--w", type=int, default=4)
    p.add_argument("--T", type=int, default=8)
    p.add_argument("--seed", type=int, default=0)

    p = sub.add_parser("train", help="train a model and write a checkpoint")
    p.add_argument("--data", required=True)
    p.add_argument("--model", choices=sorted(MODEL_TYPES), default="sdtgcn")
    p.add_argument("--out", required=True)
    p.add_argument("--history")
    add_train_flags(p)

    p = sub.add_parser("eval", help="score checkpoints on a split and append result rows")
    p.add_argument("--data", required=True)
    p.add_argument("--ckpt", required=True, nargs="+", help="one or more checkpoints (one run each)")
    p.add_argument("--split", choices=("train", "val", "test"), default="test")
    p.add_argument("--runs", type=int, default=1, help="rows per checkpoint")
    p.add_argument("--space", choices=("normalized", "count"), default="normalized")
    p.add_argument("--out", required=True)

    p = sub.add_parser("predict", help="next-year forecast for the window ending in a given year")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--window-end", type=int, required=True)
    p.add_argument("--out", required=True)

    p = sub.add_parser("gradcheck", help="finite-difference check of the full model gradient")
    p.add_argument("--n", type=int, default=6)
    p.add_argument("--T", type=int, default=8)
    p.add_argument("--w", type=int, default=3)
    p.add_argument("--seed", type=int, default=0)

    p = sub.add_parser("plot-data", help="predicted vs actual counts for a seeded topic sample")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--topics", type=int, default=50)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    return parser


def read_config(path: str) -> list[str]:
    """Turn ``key=value`` lines into flag tokens; ``#`` starts a comment."""
    tokens = []
    try:
        lines = Path(path).read_text(encoding="utf-8").splitlines()
    except OSError as exc:
        raise DataError(f"cannot read config {path}: {exc}") from exc
    for i, line in enumerate(lines, 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise DataError(f"{path}:{i}: expected key=value, got {line!r}")
        key, value = (s.strip() for s in line.split("=", 1))
        flag = "--" + key.replace("_", "-")
        if value.lower() in ("true", "false"):
            tokens += [flag] if value.lower() == "true" else []
        else:
            tokens += [flag, value]
    return tokens


def expand_config(argv: list[str]) -> list[str]:
    """Splice config-file flags right after the subcommand so explicit flags override them."""
    pre = argparse.ArgumentParser(add_help=False)
    pre.add_argument("--config")
    known, rest = pre.parse_known_args(argv)
    if not known.config:
        return argv
    commands = ("build", "synth", "train", "eval", "predict", "gradcheck", "plot-data")
    idx = next((i for i, tok in enumerate(rest) if tok in commands), None)
    if idx is None:
        return rest
    return rest[:idx + 1] + read_config(known.config) + rest[idx + 1:]


def load_model(path: str):
    if not Path(path).is_file():
        raise FileNotFoundError(f"checkpoint not found: {path}")
    return load_checkpoint(path)


def prepared_for(model, seq) -> PreparedData:
    data = prepare(seq, model.config, model.norm, model.ref_stats)
    if data.seq.n_topics != model.n_topics or seq.w != model.w:
        raise DataError(f"checkpoint expects {model.n_topics} topics and w={model.w}; "
                        f"bundle has {seq.n_topics} topics and w={seq.w}")
    return data


def forecast(model, data: PreparedData, window) -> np.ndarray:
    if isinstance(model, NeuralForecaster):
        return model.norm.denormalize(model.predict_normalized(data.window_arrays(window)))
    return model.predict(window)


def cmd_build(args) -> int:
    records = read_records(args.input)
    vocab = build_vocabulary(records, args.top_k, args.sample_n, args.seed)
    seq = build_snapshots(records, vocab, args.years, args.w, cumulative=args.cumulative)
    save_bundle(seq, args.out)
    print(f"vocabulary size: {len(vocab)}")
    print(f"years: {seq.years[0]}-{seq.years[-1]} ({len(seq)} snapshots)")
    print(f"dangling references: {seq.dangling_references}")
    return EXIT_OK


def cmd_synth(args) -> int:
    seq, _ = generate_synthetic(args.n_topics, args.n_years, args.spatial_strength, args.noise,
                                seed=args.seed, w=args.w, T=args.T)
    save_bundle(seq, args.out)
    print(f"wrote {len(seq)} snapshots over {seq.n_topics} topics to {args.out}")
    return EXIT_OK


def cmd_train(args) -> int:
    config = config_from_args(args)
    seq = load_bundle(args.data)
    data = prepare(seq, config)
    model = build(args.model, data, config)
    result = train(model, data, config)
    save_checkpoint(result.model, args.out)
    if args.history:
        write_history(result.history, args.history)
    if isinstance(model, HistoricalAverage):
        print("historical average: marker checkpoint written, no training needed")
    else:
        print(f"stopped at epoch {result.stopped_epoch}; best epoch {result.best_epoch}")
    print(f"best validation MSE: {fmt(result.best_val)}")
    return EXIT_OK


def cmd_eval(args) -> int:
    if args.runs < 1:
        raise ConfigError("--runs must be >= 1")
    seq = load_bundle(args.data)
    models = [load_model(p) for p in args.ckpt]
    rows, reports = [], []
    for model in models:
        data = prepared_for(model, seq)
        report = evaluate_split(model, data, args.split)[args.space]
        for _ in range(args.runs):
            rows.append(result_row(model.kind, model.config.T, model.config.seed, report))
            reports.append(report)
    kinds = sorted({m.kind for m in models})
    mean = average_runs(reports)
    rows.append(result_row("+".join(kinds), models[0].config.T, "mean", mean))
    append_results(args.out, rows)
    print(f"{args.split} {args.space}: mae={fmt(mean.mae)} mse={fmt(mean.mse)} var={fmt(mean.var)}")
    return EXIT_OK


def cmd_predict(args) -> int:
    model = load_model(args.ckpt)
    seq = load_bundle(args.data)
    if seq.n_topics != model.n_topics:
        raise DataError(f"checkpoint expects {model.n_topics} topics, bundle has {seq.n_topics}")
    years = seq.years
    if args.window_end not in years:
        raise DataError(f"no snapshot for year {args.window_end}")
    end = years.index(args.window_end)
    T = model.config.T
    if end + 1 < T:
        raise DataError(f"a window of T={T} cannot end in {args.window_end} (first snapshot year is {years[0]})")
    snaps = seq.snapshots[end - T + 1:end + 1]
    pred = model.predict(snaps)
    actual = seq.snapshots[end + 1].targets if end + 1 < len(seq) else None
    with open(args.out, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["topic", "predicted", "actual"])
        for i, name in enumerate(seq.vocabulary.topics):
            writer.writerow([name, fmt(pred[i]), "" if actual is None else int(actual[i])])
    print(f"wrote forecasts for {args.window_end + 1} to {args.out}")
    return EXIT_OK


def cmd_gradcheck(args) -> int:
    err = gradient_check(args.n, args.T, args.w, args.seed)
    print(f"max relative error: {err:.3e}")
    return EXIT_OK if err < GRADCHECK_TOL else 1


def cmd_plot_data(args) -> int:
    model = load_model(args.ckpt)
    seq = load_bundle(args.data)
    if seq.n_topics != model.n_topics:
        raise DataError(f"checkpoint expects {model.n_topics} topics, bundle has {seq.n_topics}")
    windows = make_windows(seq, model.config.T)
    last = windows[-1]
    pred = model.predict(last)
    n = min(args.topics, seq.n_topics)
    picks = np.sort(nm.rng_stream(args.seed, "sample").choice(seq.n_topics, size=n, replace=False))
    with open(args.out, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["topic_id", "topic_name", "predicted", "actual"])
        for i in picks:
            writer.writerow([int(i), seq.vocabulary.topics[i], fmt(pred[i]), int(last.target[i])])
    print(f"wrote {n} topics for {last.target_year} to {args.out}")
    return EXIT_OK


COMMANDS = {
    "build": cmd_build,
    "synth": cmd_synth,
    "train": cmd_train,
    "eval": cmd_eval,
    "predict": cmd_predict,
    "gradcheck": cmd_gradcheck,
    "plot-data": cmd_plot_data,
}


def main(argv: list[str] | None = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    try:
        args = make_parser().parse_args(expand_config(argv))
    except DataError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return COMMANDS[args.command](args)
    except DatasetTooSmallError as exc:
        print(f"error: dataset too small: {exc}", file=sys.stderr)
        return EXIT_TOO_SMALL
    except NumericalError as exc:
        print(f"error: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except (DataError, ConfigError, FileNotFoundError, IsADirectoryError, PermissionError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
