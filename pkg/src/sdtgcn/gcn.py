"""Spatial encoder: graph propagation with shared weights plus citation-count enhancement."""
from __future__ import annotations

import numpy as np

from . import numeric as nm
from .dataset import NormStats
from .errors import DataError, ShapeError
from .numeric import Tensor


def propagation_matrix(A) -> np.ndarray:
    """``I + D^-1/2 A D^-1/2`` with ``D`` the out-degree (row sums) of ``A``.

    Works on a single N x N matrix or a stack (..., N, N). Zero-degree nodes get
    a zero scaling entry, so their rows and columns keep only the identity.
    """
    A = np.asarray(A, dtype=np.float64)
    if A.ndim < 2 or A.shape[-1] != A.shape[-2]:
        raise ShapeError(f"adjacency must be square, got shape {A.shape}")
    if np.any(A < 0):
        raise DataError("adjacency contains negative entries")
    deg = A.sum(axis=-1)
    with np.errstate(divide="ignore"):
        inv_sqrt = np.where(deg > 0, 1.0 / np.sqrt(deg), 0.0)
    scaled = inv_sqrt[..., :, None] * A * inv_sqrt[..., None, :]
    return np.eye(A.shape[-1]) + scaled


def citation_counts(A) -> np.ndarray:
    """Row sums: total citations made by each topic's papers."""
    A = np.asarray(A)
    if A.ndim < 2 or A.shape[-1] != A.shape[-2]:
        raise ShapeError(f"adjacency must be square, got shape {A.shape}")
    if np.any(A < 0):
        raise DataError("adjacency contains negative entries")
    return A.sum(axis=-1)


class GcnLayer:
    """One propagation layer. A learned projection carries the residual when widths differ."""

    def __init__(self, in_dim: int, out_dim: int, rng: np.random.Generator, name: str = "gcn"):
        self.in_dim, self.out_dim = in_dim, out_dim
        self.weight = nm.parameter(nm.glorot_uniform(rng, (in_dim, out_dim)), f"{name}.weight")
        self.bias = nm.parameter(np.zeros(out_dim), f"{name}.bias")
        self.projection = None
        if in_dim != out_dim:
            self.projection = nm.parameter(nm.glorot_uniform(rng, (in_dim, out_dim)), f"{name}.projection")

    def parameters(self) -> list[Tensor]:
        ps = [self.weight, self.bias]
        if self.projection is not None:
            ps.append(self.projection)
        return ps

    def __call__(self, P: Tensor, x: Tensor, dropout_p=0.0, rng=None, training=False,
                 normalize=True, residual=True) -> Tensor:
        if x.shape[-1] != self.in_dim:
            raise ShapeError(f"gcn layer expects {self.in_dim} input features, got shape {x.shape}")
        out = nm.relu(nm.matmul(nm.matmul(P, x), self.weight) + self.bias)
        if residual:
            skip = x if self.projection is None else nm.matmul(x, self.projection)
            out = out + skip
        if normalize:
            out = nm.standardize(out)
        return nm.dropout(out, dropout_p, rng, training)


def gcn_forward(P, X, layers, dropout_p: float = 0.0, rng=None, training: bool = False,
                normalize: bool = True, residual: bool = True) -> Tensor:
    """Run the shared layers over one snapshot (N x C) or a stack of them (T x N x C)."""
    P = nm.as_tensor(P)
    h = nm.as_tensor(X)
    if P.shape[-1] != h.shape[-2]:
        raise ShapeError(f"gcn_forward: propagation {P.shape} and features {h.shape} do not conform")
    for layer in layers:
        h = layer(P, h, dropout_p, rng, training, normalize, residual)
    return h


def fit_ref_stats(adjacency: np.ndarray, scope: str = "topic") -> NormStats:
    """log1p/z-score statistics of citation counts over a (time, N, N) block."""
    return NormStats.fit(citation_counts(adjacency), scope)


def enhance(H: Tensor, ref, stats: NormStats | None = None) -> Tensor:
    """Append the citation-count column to the spatial features.

    ``ref`` is the raw REF vector when ``stats`` is given, otherwise it is taken
    as already normalized.
    """
    ref = np.asarray(ref, dtype=np.float64)
    if stats is not None:
        ref = stats.normalize(ref)
    if ref.shape != H.shape[:-1]:
        raise ShapeError(f"enhance: REF shape {ref.shape} does not match features {H.shape}")
    return nm.concat_cols([H, Tensor(ref[..., None])])
