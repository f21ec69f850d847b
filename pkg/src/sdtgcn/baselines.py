"""Reference predictors: historical average and the two single-module ablations."""
from __future__ import annotations

import enum
from typing import Sequence

import numpy as np

from . import numeric as nm
from .dataset import GraphSnapshot, NormStats, Window
from .gcn import GcnLayer, enhance, gcn_forward
from .model import NeuralForecaster, SdtgcnModel, TrainConfig, WindowArrays
from .numeric import Tensor
from .tcn import TcnStack, tcn_forward


class BaselineKind(str, enum.Enum):
    HA = "ha"
    TCN_ONLY = "tcn"
    GCN_ONLY = "gcn"


def ha_predict(window: Window | Sequence[GraphSnapshot]) -> np.ndarray:
    """Per-topic mean of the window's yearly counts."""
    snaps = window.inputs if isinstance(window, Window) else tuple(window)
    if not snaps:
        raise ValueError("historical average needs at least one snapshot")
    return np.mean(np.stack([s.targets for s in snaps]).astype(np.float64), axis=0)


class HistoricalAverage:
    """Training-free baseline; normalized predictions reuse the count statistics."""

    kind = "ha"

    def __init__(self, config: TrainConfig, n_topics: int, w: int, norm: NormStats, ref_stats: NormStats):
        self.config = config
        self.n_topics = n_topics
        self.w = w
        self.norm = norm
        self.ref_stats = ref_stats
        self.params: dict[str, Tensor] = {}

    def n_parameters(self) -> int:
        return 0

    def state(self) -> dict[str, np.ndarray]:
        return {}

    def load_state(self, state: dict[str, np.ndarray]):
        pass

    def predict(self, window) -> np.ndarray:
        return ha_predict(window)

    def predict_normalized(self, window) -> np.ndarray:
        return self.norm.normalize(ha_predict(window))


class TcnOnlyModel(NeuralForecaster):
    """The temporal stack fed directly with the normalized windowed counts."""

    kind = "tcn"

    def __init__(self, config: TrainConfig, n_topics: int, w: int, norm: NormStats, ref_stats: NormStats):
        super().__init__(config, n_topics, w, norm, ref_stats)
        rng = nm.rng_stream(config.seed, "init")
        self.tcn = TcnStack(w, config.hidden, config.T, rng, config.k)
        self._register(self.tcn.parameters())

    def forward(self, arrays: WindowArrays, training: bool = False, rng=None) -> Tensor:
        return tcn_forward(arrays.X, self.tcn, self.config.dropout, rng, training)


class GcnOnlyModel(NeuralForecaster):
    """Spatial encoder on the final snapshot followed by one linear layer.

    Returns a single-step (1, N) prediction, so the weighted loss reduces to
    the final-step MSE.
    """

    kind = "gcn"

    def __init__(self, config: TrainConfig, n_topics: int, w: int, norm: NormStats, ref_stats: NormStats):
        super().__init__(config, n_topics, w, norm, ref_stats)
        rng = nm.rng_stream(config.seed, "init")
        self.gcn_layers = [GcnLayer(w, config.hidden, rng, "gcn0"),
                           GcnLayer(config.hidden, config.hidden, rng, "gcn1")]
        self.out_weight = nm.parameter(nm.glorot_uniform(rng, (config.hidden + 1, 1)), "linear.weight")
        self.out_bias = nm.parameter(np.zeros(1), "linear.bias")
        for layer in self.gcn_layers:
            self._register(layer.parameters())
        self._register([self.out_weight, self.out_bias])

    def forward(self, arrays: WindowArrays, training: bool = False, rng=None) -> Tensor:
        H = gcn_forward(arrays.P[-1], arrays.X[-1], self.gcn_layers, self.config.dropout, rng, training)
        Z = enhance(H, arrays.ref[-1])
        y = nm.matmul(Z, self.out_weight) + self.out_bias
        return nm.reshape(y, (1, self.n_topics))


MODEL_TYPES = {
    "sdtgcn": SdtgcnModel,
    "ha": HistoricalAverage,
    "tcn": TcnOnlyModel,
    "gcn": GcnOnlyModel,
}


def make_model(kind: str, config: TrainConfig, n_topics: int, w: int, norm: NormStats, ref_stats: NormStats):
    try:
        cls = MODEL_TYPES[str(kind.value if isinstance(kind, BaselineKind) else kind)]
    except KeyError:
        raise ValueError(f"unknown model kind {kind!r}; choose from {sorted(MODEL_TYPES)}") from None
    return cls(config, n_topics, w, norm, ref_stats)


def tcn_only(config: TrainConfig, n_topics: int, w: int, norm: NormStats, ref_stats: NormStats) -> TcnOnlyModel:
    return TcnOnlyModel(config, n_topics, w, norm, ref_stats)


def gcn_only(config: TrainConfig, n_topics: int, w: int, norm: NormStats, ref_stats: NormStats) -> GcnOnlyModel:
    return GcnOnlyModel(config, n_topics, w, norm, ref_stats)
