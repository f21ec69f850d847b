"""SDTGCN: shared two-layer GCN per snapshot, citation enhancement, dilated causal TCN."""
from __future__ import annotations

from dataclasses import asdict, dataclass, fields
from typing import NamedTuple, Sequence

import numpy as np

from . import numeric as nm
from .dataset import GraphSnapshot, NormStats, Window
from .errors import ConfigError, ShapeError
from .gcn import GcnLayer, citation_counts, enhance, gcn_forward, propagation_matrix
from .numeric import Tensor
from .tcn import TcnStack, tcn_forward


@dataclass
class TrainConfig:
    T: int = 8
    hidden: int = 32
    k: int = 3
    dropout: float = 0.2
    lr: float = 1e-3
    max_epochs: int = 500
    patience: int = 50
    patience_start: int = 100
    seed: int = 0
    ratios: tuple[float, float, float] = (0.6, 0.1, 0.1)
    loss_norm: str = "mse"
    norm_scope: str = "topic"
    record_time: bool = False

    def __post_init__(self):
        self.ratios = tuple(float(r) for r in self.ratios)
        if self.T < 1 or self.hidden < 1 or self.k < 2:
            raise ConfigError(f"T, hidden must be >= 1 and k >= 2 (got T={self.T}, hidden={self.hidden}, k={self.k})")
        if not 0.0 <= self.dropout < 1.0:
            raise ConfigError(f"dropout must lie in [0, 1), got {self.dropout}")
        if self.lr < 0:
            raise ConfigError("learning rate must be non-negative")
        if self.max_epochs < 1 or self.patience < 1 or self.patience_start < 0:
            raise ConfigError("epoch and patience settings must be positive")
        if self.patience_start >= self.max_epochs:
            raise ConfigError("patience_start must be below max_epochs")
        if self.loss_norm not in ("mse", "l2"):
            raise ConfigError(f"loss_norm must be 'mse' or 'l2', got {self.loss_norm!r}")

    def to_json(self) -> dict:
        d = asdict(self)
        d["ratios"] = list(self.ratios)
        return d

    @classmethod
    def from_json(cls, obj: dict) -> "TrainConfig":
        names = {f.name for f in fields(cls)}
        return cls(**{k: v for k, v in obj.items() if k in names})


class WindowArrays(NamedTuple):
    """Model-space inputs for T consecutive snapshots."""

    P: np.ndarray      # (T, N, N) propagation matrices
    X: np.ndarray      # (T, N, w) normalized features
    ref: np.ndarray    # (T, N) normalized citation counts


def encode_snapshots_raw(A: np.ndarray, feats: np.ndarray, norm: NormStats, ref_stats: NormStats) -> WindowArrays:
    """Model-space arrays from stacked raw adjacency (T, N, N) and raw features (T, N, w)."""
    X = np.swapaxes(norm.normalize(np.swapaxes(feats, -1, -2)), -1, -2)
    return WindowArrays(propagation_matrix(A), X, ref_stats.normalize(citation_counts(A)))


def encode_snapshots(snaps: Sequence[GraphSnapshot], norm: NormStats, ref_stats: NormStats) -> WindowArrays:
    return encode_snapshots_raw(np.stack([s.adjacency for s in snaps]),
                                np.stack([s.features for s in snaps]), norm, ref_stats)


@dataclass
class LossReport:
    per_step: np.ndarray
    weights: np.ndarray
    total: float
    epoch: int | None = None
    split: str | None = None


def step_weights(t: int) -> np.ndarray:
    return np.arange(1, t + 1, dtype=np.float64) / t


def weighted_loss(preds: Tensor, targets, norm: str = "mse") -> tuple[Tensor, LossReport]:
    """Time-distance weighted loss: step ``i`` of ``t`` carries weight ``i/t``.

    ``norm="mse"`` scores each step by the node-mean squared error; ``"l2"``
    uses the plain Euclidean norm of the step's error vector instead.
    """
    preds = nm.as_tensor(preds)
    targets = np.asarray(targets, dtype=np.float64)
    if preds.shape != targets.shape or preds.ndim != 2:
        raise ShapeError(f"weighted_loss: predictions {preds.shape} and targets {targets.shape} differ")
    sq = nm.square(preds - targets)
    if norm == "mse":
        per_step = nm.mean(sq, axis=1)
    elif norm == "l2":
        per_step = nm.sqrt(nm.sum_(sq, axis=1))
    else:
        raise ConfigError(f"unknown loss norm {norm!r}")
    w = step_weights(preds.shape[0])
    total = nm.sum_(per_step * w)
    return total, LossReport(per_step.data.copy(), w, total.item())


class NeuralForecaster:
    """Shared plumbing for the trainable models: parameters, inference, denormalization."""

    kind = "base"

    def __init__(self, config: TrainConfig, n_topics: int, w: int, norm: NormStats, ref_stats: NormStats):
        self.config = config
        self.n_topics = n_topics
        self.w = w
        self.norm = norm
        self.ref_stats = ref_stats
        self.params: dict[str, Tensor] = {}

    def _register(self, tensors):
        for t in tensors:
            if t.name in self.params:
                raise ConfigError(f"duplicate parameter name {t.name}")
            self.params[t.name] = t

    def n_parameters(self) -> int:
        return int(sum(p.data.size for p in self.params.values()))

    def forward(self, arrays: WindowArrays, training: bool = False, rng=None) -> Tensor:
        raise NotImplementedError

    def loss(self, preds: Tensor, targets: np.ndarray) -> tuple[Tensor, LossReport]:
        """``targets`` holds the normalized next-year counts for every window step (T, N)."""
        return weighted_loss(preds, targets[-preds.shape[0]:], self.config.loss_norm)

    def encode(self, window: Window | Sequence[GraphSnapshot]) -> WindowArrays:
        snaps = window.inputs if isinstance(window, Window) else tuple(window)
        if len(snaps) != self.config.T:
            raise ShapeError(f"window has {len(snaps)} snapshots, model expects T={self.config.T}")
        return encode_snapshots(snaps, self.norm, self.ref_stats)

    def predict_normalized(self, window) -> np.ndarray:
        arrays = window if isinstance(window, WindowArrays) else self.encode(window)
        with nm.no_grad():
            out = self.forward(arrays, training=False)
        return out.data[-1].copy()

    def predict(self, window) -> np.ndarray:
        """Next-year paper counts per topic (denormalized, never negative)."""
        return self.norm.denormalize(self.predict_normalized(window))

    def state(self) -> dict[str, np.ndarray]:
        return {k: p.data.copy() for k, p in self.params.items()}

    def load_state(self, state: dict[str, np.ndarray]):
        for k, p in self.params.items():
            if state[k].shape != p.data.shape:
                raise ShapeError(f"parameter {k}: stored shape {state[k].shape} != {p.data.shape}")
            p.data = np.array(state[k], dtype=np.float64)


class SdtgcnModel(NeuralForecaster):
    kind = "sdtgcn"

    def __init__(self, config: TrainConfig, n_topics: int, w: int, norm: NormStats, ref_stats: NormStats):
        super().__init__(config, n_topics, w, norm, ref_stats)
        rng = nm.rng_stream(config.seed, "init")
        self.gcn_layers = [GcnLayer(w, config.hidden, rng, "gcn0"),
                           GcnLayer(config.hidden, config.hidden, rng, "gcn1")]
        self.tcn = TcnStack(config.hidden + 1, config.hidden, config.T, rng, config.k)
        for layer in self.gcn_layers:
            self._register(layer.parameters())
        self._register(self.tcn.parameters())

    def forward(self, arrays: WindowArrays, training: bool = False, rng=None) -> Tensor:
        p = self.config.dropout
        H = gcn_forward(arrays.P, arrays.X, self.gcn_layers, p, rng, training)
        Z = enhance(H, arrays.ref)
        return tcn_forward(Z, self.tcn, p, rng, training)


def forward(model: NeuralForecaster, window, training: bool = False, rng=None) -> Tensor:
    """Per-step normalized predictions for a window of T snapshots."""
    arrays = window if isinstance(window, WindowArrays) else model.encode(window)
    return model.forward(arrays, training, rng)


def predict(model, window) -> np.ndarray:
    return model.predict(window)
