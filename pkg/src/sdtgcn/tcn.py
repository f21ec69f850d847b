"""Temporal encoder: stacked dilated causal convolutions with a per-step linear head."""
from __future__ import annotations

import numpy as np

from . import numeric as nm
from .errors import ShapeError
from .numeric import Tensor


def receptive_field(n_layers: int, k: int = 3) -> int:
    return 1 + (k - 1) * (2 ** n_layers - 1)


def required_layers(T: int, k: int = 3) -> int:
    """Fewest layers (dilations 1, 2, 4, ...) whose receptive field spans ``T`` steps."""
    if T < 1 or k < 2:
        raise ValueError(f"need T >= 1 and k >= 2, got T={T}, k={k}")
    L = 1
    while receptive_field(L, k) < T:
        L += 1
    return L


class TcnLayer:
    def __init__(self, in_dim: int, out_dim: int, dilation: int, rng: np.random.Generator,
                 k: int = 3, name: str = "tcn"):
        self.in_dim, self.out_dim, self.k, self.dilation = in_dim, out_dim, k, dilation
        self.kernel = nm.parameter(nm.glorot_uniform(rng, (k, in_dim, out_dim)), f"{name}.kernel")
        self.bias = nm.parameter(np.zeros(out_dim), f"{name}.bias")
        self.projection = None
        if in_dim != out_dim:
            self.projection = nm.parameter(nm.glorot_uniform(rng, (in_dim, out_dim)), f"{name}.projection")

    def parameters(self) -> list[Tensor]:
        ps = [self.kernel, self.bias]
        if self.projection is not None:
            ps.append(self.projection)
        return ps


def causal_conv(seq, layer: TcnLayer, dropout_p: float = 0.0, rng=None, training: bool = False,
                raw: bool = False, normalize: bool = True, residual: bool = True) -> Tensor:
    """Dilated causal convolution over the second-to-last axis of ``seq`` (..., T, C_in).

    Tap ``i`` reads step ``t - dilation*i``; steps before the sequence start are
    zero. ``raw=True`` returns the convolution plus bias only.
    """
    seq = nm.as_tensor(seq)
    if seq.ndim < 2 or seq.shape[-1] != layer.in_dim:
        raise ShapeError(f"causal_conv expects (..., T, {layer.in_dim}), got {seq.shape}")
    taps = [nm.shift(seq, layer.dilation * i, axis=-2) for i in range(layer.k)]
    stacked = nm.concat_cols(taps) if layer.k > 1 else taps[0]
    kernel = nm.reshape(layer.kernel, (layer.k * layer.in_dim, layer.out_dim))
    out = nm.matmul(stacked, kernel) + layer.bias
    if raw:
        return out
    out = nm.relu(out)
    if normalize:
        out = nm.standardize(out)
    out = nm.dropout(out, dropout_p, rng, training)
    if residual:
        skip = seq if layer.projection is None else nm.matmul(seq, layer.projection)
        out = out + skip
    return out


class TcnStack:
    """Layers with dilation ``2**l`` sized so the receptive field covers ``T`` steps."""

    def __init__(self, in_dim: int, hidden: int, T: int, rng: np.random.Generator, k: int = 3,
                 n_layers: int | None = None):
        self.T, self.k = T, k
        self.n_layers = n_layers if n_layers is not None else required_layers(T, k)
        self.layers = []
        dim = in_dim
        for ell in range(self.n_layers):
            self.layers.append(TcnLayer(dim, hidden, 2 ** ell, rng, k, name=f"tcn{ell}"))
            dim = hidden
        self.head_weight = nm.parameter(nm.glorot_uniform(rng, (hidden, 1)), "head.weight")
        self.head_bias = nm.parameter(np.zeros(1), "head.bias")

    @property
    def in_dim(self) -> int:
        return self.layers[0].in_dim

    @property
    def receptive_field(self) -> int:
        return receptive_field(self.n_layers, self.k)

    def parameters(self) -> list[Tensor]:
        ps = [p for layer in self.layers for p in layer.parameters()]
        return ps + [self.head_weight, self.head_bias]


def tcn_forward(embeddings, stack: TcnStack, dropout_p: float = 0.0, rng=None,
                training: bool = False) -> Tensor:
    """Map (T, N, C) embeddings to (T, N) per-step predictions; nodes share the stack."""
    x = nm.as_tensor(embeddings)
    if x.ndim != 3 or x.shape[-1] != stack.in_dim:
        raise ShapeError(f"tcn_forward expects (T, N, {stack.in_dim}), got {x.shape}")
    T, N, _ = x.shape
    h = nm.swapaxes(x, 0, 1)
    for layer in stack.layers:
        h = causal_conv(h, layer, dropout_p, rng, training)
    y = nm.matmul(h, stack.head_weight) + stack.head_bias
    return nm.swapaxes(nm.reshape(y, (N, T)), 0, 1)
