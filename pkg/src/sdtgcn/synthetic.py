"""Synthetic dynamic topic graphs with a known generating recurrence.

Counts evolve as::

    m_n(t+1) = a*y_n(t) + b*sum_v A_s[n, v] * y_v(s) / deg_s(n) + trend_n,   s = t - lag
    y_n(t+1) = round(max(0, m_n(t+1) * (1 + noise * xi)))

with ``b = spatial_strength``, ``a = 1 - b`` unless given, ``deg_s(n)`` the
row sum of ``A_s`` and ``xi`` standard normal. ``A_t`` keeps a fixed sparse
support and is resampled every year around fixed per-edge means. With the
default ``lag=1`` the neighbour term reads the previous year's graph, so it is
visible only through the history of snapshots, not through the last one alone.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .dataset import SnapshotSequence, TopicVocabulary, snapshots_from_counts
from .errors import ConfigError
from .numeric import rng_stream


@dataclass(frozen=True)
class SyntheticTruth:
    """Everything the generator drew, indexed by raw year (not snapshot)."""

    years: np.ndarray          # (Y,)
    counts: np.ndarray         # (Y, N) realised counts
    expected: np.ndarray       # (Y, N) noise-free conditional mean m(t); row 0 is the initial draw
    adjacency: np.ndarray      # (Y, N, N)
    edge_means: np.ndarray     # (N, N)
    trend: np.ndarray          # (N,)
    persistence: float
    spatial_strength: float

    def next_year_expected(self, year: int) -> np.ndarray:
        """Noise-free mean count for ``year + 1`` given everything up to ``year``."""
        i = int(np.searchsorted(self.years, year))
        return self.expected[i + 1]


def generate_synthetic(n_topics: int = 20, n_years: int = 40, spatial_strength: float = 0.8,
                       noise: float = 0.1, seed: int = 0, w: int = 4, T: int = 8,
                       persistence: float | None = None, lag: int = 1, out_degree: int = 3,
                       source_fraction: float = 0.0, start_year: int = 1980, initial=(5.0, 30.0),
                       trend=(2.0, 10.0), edge_mean=(1.0, 12.0)) -> tuple[SnapshotSequence, SyntheticTruth]:
    if n_topics < 2:
        raise ConfigError("need at least two topics")
    if n_years < w + T + 2:
        raise ConfigError(f"n_years={n_years} is too short for w={w}, T={T} (need >= {w + T + 2})")
    if not 0.0 <= spatial_strength <= 1.0 or noise < 0 or lag < 0:
        raise ConfigError("spatial_strength must lie in [0, 1]; noise and lag must be non-negative")
    a = 1.0 - spatial_strength if persistence is None else float(persistence)
    b = float(spatial_strength)
    rng = rng_stream(seed, "data")
    n = n_topics
    k = min(out_degree, n - 1)
    n_sources = int(round(source_fraction * n))

    means = np.zeros((n, n))
    for u in range(n_sources, n):
        others = np.delete(np.arange(n), u)
        targets = rng.choice(others, size=k, replace=False)
        means[u, targets] = rng.uniform(*edge_mean, size=k)
    support = means > 0
    slopes = rng.uniform(*trend, size=n)

    counts = np.zeros((n_years, n), dtype=np.int64)
    expected = np.zeros((n_years, n))
    adjacency = np.zeros((n_years, n, n), dtype=np.int64)
    y = np.round(rng.uniform(*initial, size=n))
    counts[0] = y
    expected[0] = y
    for t in range(n_years):
        adjacency[t] = np.where(support, rng.poisson(means), 0)
        if t + 1 == n_years:
            break
        src = max(t - lag, 0)
        A, y_src = adjacency[src], counts[src].astype(np.float64)
        deg = A.sum(axis=1)
        # topics without citations that year fall back on their own state
        neigh = np.where(deg > 0, (A @ y_src) / np.maximum(deg, 1), y)
        m = np.maximum(a * y + b * neigh + slopes, 0.0)
        expected[t + 1] = m
        xi = rng.standard_normal(n)
        y = np.round(np.maximum(0.0, m * (1.0 + noise * xi)))
        counts[t + 1] = y

    years = np.arange(start_year, start_year + n_years)
    vocab = TopicVocabulary(tuple(f"topic{i:03d}" for i in range(n)))
    snaps = snapshots_from_counts(years, counts, adjacency, w)
    truth = SyntheticTruth(years, counts, expected, adjacency, means, slopes, a, b)
    return SnapshotSequence(vocab, tuple(snaps), w), truth


def constant_sequence(n_topics: int = 6, n_years: int = 30, value: int = 10, w: int = 3,
                      start_year: int = 1990) -> SnapshotSequence:
    """Every topic has the same count every year and the graph never changes."""
    counts = np.full((n_years, n_topics), value, dtype=np.int64)
    A = np.ones((n_topics, n_topics), dtype=np.int64) - np.eye(n_topics, dtype=np.int64)
    adjacency = np.broadcast_to(A, (n_years, n_topics, n_topics))
    vocab = TopicVocabulary(tuple(f"topic{i:03d}" for i in range(n_topics)))
    years = range(start_year, start_year + n_years)
    return SnapshotSequence(vocab, tuple(snapshots_from_counts(years, counts, adjacency, w)), w)
