"""Data preparation, the training loop with early stopping, and split evaluation."""
from __future__ import annotations

import csv
import logging
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import numeric as nm
from .baselines import HistoricalAverage, make_model
from .dataset import NormStats, SnapshotSequence, Window, fit_norm_stats, make_windows, split_windows
from .errors import DataError, NumericalError
from .gcn import fit_ref_stats
from .metrics import EvalReport, evaluate, fmt
from .model import NeuralForecaster, TrainConfig, WindowArrays, encode_snapshots, encode_snapshots_raw

log = logging.getLogger(__name__)

HISTORY_COLUMNS = ("epoch", "train_loss", "val_loss", "lr", "elapsed_ms")


@dataclass
class PreparedData:
    """A snapshot sequence cut into chronological splits, with model-space arrays cached."""

    seq: SnapshotSequence
    config: TrainConfig
    windows: list[Window]
    train: list[Window]
    val: list[Window]
    test: list[Window]
    norm: NormStats
    ref_stats: NormStats
    arrays: WindowArrays = field(repr=False)
    targets_norm: np.ndarray = field(repr=False)

    @property
    def train_end_index(self) -> int:
        return len(self.train) + self.config.T

    def window_arrays(self, window: Window) -> WindowArrays:
        sl = slice(window.start, window.start + self.config.T)
        return WindowArrays(self.arrays.P[sl], self.arrays.X[sl], self.arrays.ref[sl])

    def window_targets(self, window: Window) -> np.ndarray:
        """Normalized next-year counts for each of the window's T steps."""
        return self.targets_norm[window.start + 1:window.start + self.config.T + 1]

    def split(self, name: str) -> list[Window]:
        return {"train": self.train, "val": self.val, "validation": self.val, "test": self.test}[name]


def prepare(seq: SnapshotSequence, config: TrainConfig, norm: NormStats | None = None,
            ref_stats: NormStats | None = None) -> PreparedData:
    """Window and split ``seq``; statistics are fit on the training era unless supplied."""
    if norm is not None and norm.mean.shape != (seq.n_topics,):
        raise DataError(f"normalization covers {norm.mean.shape[0]} topics, data has {seq.n_topics}")
    windows = make_windows(seq, config.T)
    train, val, test = split_windows(windows, config.ratios)
    end = len(train) + config.T
    norm = norm or fit_norm_stats(seq, end, config.norm_scope)
    ref_stats = ref_stats or fit_ref_stats(seq.adjacency()[:end], config.norm_scope)
    arrays = encode_snapshots(seq.snapshots, norm, ref_stats)
    return PreparedData(seq, config, windows, train, val, test, norm, ref_stats,
                        arrays, norm.normalize(seq.targets()))


def build(kind: str, data: PreparedData, config: TrainConfig | None = None):
    config = config or data.config
    return make_model(kind, config, data.seq.n_topics, data.seq.w, data.norm, data.ref_stats)


def validation_loss(model, data: PreparedData, windows: list[Window] | None = None) -> float:
    """Unweighted final-step MSE averaged over windows (validation split by default)."""
    windows = data.val if windows is None else windows
    losses = []
    for win in windows:
        pred = model.predict_normalized(data.window_arrays(win) if isinstance(model, NeuralForecaster) else win)
        err = pred - data.targets_norm[win.start + data.config.T]
        losses.append(float(np.mean(err * err)))
    return float(np.mean(losses))


@dataclass
class TrainResult:
    model: object
    history: list[dict]
    best_epoch: int
    best_val: float
    stopped_epoch: int


def should_stop(epoch: int, best_epoch: int, patience: int, patience_start: int) -> bool:
    """Stop once ``patience`` epochs pass without improvement, counting from ``patience_start`` at the earliest."""
    return epoch - max(best_epoch, patience_start) >= patience


def train(model, data: PreparedData, config: TrainConfig | None = None) -> TrainResult:
    """Fit ``model`` with Adam, one step per training window, and keep the best validation state."""
    config = config or data.config
    if not data.train or not data.val:
        raise ValueError("training needs non-empty train and validation splits")
    if isinstance(model, HistoricalAverage):
        val = validation_loss(model, data)
        return TrainResult(model, [], 0, val, 0)

    opt = nm.Adam(model.params, lr=config.lr)
    drop_rng = nm.rng_stream(config.seed, "dropout")
    shuffle_rng = nm.rng_stream(config.seed, "shuffle")
    history: list[dict] = []
    best_val, best_epoch, best_state = np.inf, 0, model.state()
    t0 = time.perf_counter()
    epoch = 0
    for epoch in range(1, config.max_epochs + 1):
        total = 0.0
        for idx in shuffle_rng.permutation(len(data.train)):
            win = data.train[idx]
            try:
                opt.zero_grad()
                preds = model.forward(data.window_arrays(win), training=True, rng=drop_rng)
                loss, _ = model.loss(preds, data.window_targets(win))
                loss.backward()
                opt.step()
            except NumericalError as exc:
                raise NumericalError(f"epoch {epoch}, training window starting {win.inputs[0].year}: {exc}") from exc
            total += loss.item()
        val = validation_loss(model, data)
        if not np.isfinite(val):
            raise NumericalError(f"epoch {epoch}: validation loss is not finite")
        elapsed = (time.perf_counter() - t0) * 1000.0 if config.record_time else 0.0
        history.append({"epoch": epoch, "train_loss": total / len(data.train), "val_loss": val,
                        "lr": config.lr, "elapsed_ms": elapsed})
        if val < best_val:
            best_val, best_epoch, best_state = val, epoch, model.state()
        if should_stop(epoch, best_epoch, config.patience, config.patience_start):
            break
    model.load_state(best_state)
    log.info("stopped at epoch %d; best validation MSE %.6g at epoch %d", epoch, best_val, best_epoch)
    return TrainResult(model, history, best_epoch, float(best_val), epoch)


def fit(kind: str, seq: SnapshotSequence, config: TrainConfig) -> tuple[TrainResult, PreparedData]:
    data = prepare(seq, config)
    return train(build(kind, data, config), data, config), data


def write_history(history: list[dict], path: str | Path):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(HISTORY_COLUMNS)
        for row in history:
            writer.writerow([row["epoch"], fmt(row["train_loss"]), fmt(row["val_loss"]),
                             fmt(row["lr"]), fmt(row["elapsed_ms"])])


def split_predictions(model, data: PreparedData, windows: list[Window]):
    """Stacked (windows x topics) predictions and truths in both spaces."""
    is_neural = isinstance(model, NeuralForecaster)
    z_pred, c_pred = [], []
    for win in windows:
        z = model.predict_normalized(data.window_arrays(win) if is_neural else win)
        z_pred.append(z)
        c_pred.append(data.norm.denormalize(z) if is_neural else model.predict(win))
    c_true = np.stack([w.target for w in windows]).astype(np.float64)
    z_true = np.stack([data.targets_norm[w.start + data.config.T] for w in windows])
    return np.stack(z_pred), z_true, np.stack(c_pred), c_true


def evaluate_split(model, data: PreparedData, split: str = "test") -> dict[str, EvalReport]:
    z_pred, z_true, c_pred, c_true = split_predictions(model, data, data.split(split))
    return {"normalized": evaluate(z_pred, z_true, "normalized"),
            "count": evaluate(c_pred, c_true, "count")}


def gradient_check(n: int = 6, T: int = 8, w: int = 3, seed: int = 0, epsilon: float = 1e-5,
                   details: bool = False):
    """Compare tape gradients of the full SDTGCN loss with central differences.

    Builds a random ``n``-topic instance (graphs, counts and targets drawn from
    the ``data`` stream) and runs with dropout off so the loss is deterministic.
    """
    from .model import SdtgcnModel

    rng = nm.rng_stream(seed, "data")
    counts = rng.poisson(20.0, size=(T + w, n))
    A = rng.poisson(1.0, size=(T, n, n)) * (rng.random((T, n, n)) < 0.5)
    norm = NormStats.fit(counts)
    ref_stats = fit_ref_stats(A)
    feats = np.stack([counts[i:i + w].T for i in range(T)])
    arrays = encode_snapshots_raw(A, feats, norm, ref_stats)
    targets = norm.normalize(counts[w:w + T])
    config = TrainConfig(T=T, dropout=0.0, seed=seed)
    model = SdtgcnModel(config, n, w, norm, ref_stats)

    def loss():
        return model.loss(model.forward(arrays, training=False), targets)[0]

    return nm.finite_diff_check(loss, model.params, epsilon, details)


def compare_models(seq: SnapshotSequence, kinds, config: TrainConfig, split: str = "test",
                   space: str = "normalized") -> dict[str, EvalReport]:
    """Train each model kind on the same data and score it on ``split``."""
    data = prepare(seq, config)
    out = {}
    for kind in kinds:
        result = train(build(kind, data, config), data, config)
        out[kind] = evaluate_split(result.model, data, split)[space]
    return out
