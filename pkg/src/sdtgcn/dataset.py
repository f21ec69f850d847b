"""Topic-citation snapshot construction from bibliographic records.

A snapshot for year ``t`` carries

* ``adjacency[u, v]``: number of (citing paper, cited paper) links where the
  citing paper appeared in ``t`` under topic ``u`` and the cited paper carries
  topic ``v``;
* ``features[n]``: paper counts of topic ``n`` for years ``t-w+1 .. t``;
* ``targets[n]``: paper counts of topic ``n`` in year ``t``.
"""
from __future__ import annotations

import json
import logging
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .errors import DataError, DatasetTooSmallError, RecordFormatError, SplitTooSmallError
from .numeric import rng_stream

log = logging.getLogger(__name__)

STD_FLOOR = 1e-8


def _frozen(a: np.ndarray) -> np.ndarray:
    a.flags.writeable = False
    return a


@dataclass(frozen=True)
class PaperRecord:
    id: str
    year: int
    topics: frozenset[str]
    references: frozenset[str] = frozenset()


def parse_record(obj, line: int = 0) -> PaperRecord:
    if not isinstance(obj, dict):
        raise RecordFormatError(line, "record must be a JSON object")
    try:
        pid, year, topics = obj["id"], obj["year"], obj["topics"]
    except KeyError as exc:
        raise RecordFormatError(line, f"missing field {exc.args[0]!r}") from None
    refs = obj.get("references", [])
    if not isinstance(pid, str):
        raise RecordFormatError(line, "id must be a string")
    if isinstance(year, bool) or not isinstance(year, int):
        raise RecordFormatError(line, "year must be an integer")
    if not isinstance(topics, list) or not topics or not all(isinstance(t, str) for t in topics):
        raise RecordFormatError(line, "topics must be a non-empty list of strings")
    if not isinstance(refs, list) or not all(isinstance(r, str) for r in refs):
        raise RecordFormatError(line, "references must be a list of strings")
    return PaperRecord(pid, year, frozenset(topics), frozenset(refs))


def read_records(path: str | Path) -> list[PaperRecord]:
    """Parse a JSON Lines corpus. Blank lines are skipped; unknown fields ignored."""
    records = []
    seen: set[str] = set()
    with open(path, encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            if not raw.strip():
                continue
            try:
                obj = json.loads(raw)
            except json.JSONDecodeError as exc:
                raise RecordFormatError(lineno, f"invalid JSON ({exc.msg})") from None
            rec = parse_record(obj, lineno)
            if rec.id in seen:
                raise RecordFormatError(lineno, f"duplicate paper id {rec.id!r}")
            seen.add(rec.id)
            records.append(rec)
    return records


@dataclass(frozen=True)
class TopicVocabulary:
    topics: tuple[str, ...]
    index: dict[str, int] = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if len(set(self.topics)) != len(self.topics):
            raise DataError("vocabulary topics must be unique")
        object.__setattr__(self, "index", {t: i for i, t in enumerate(self.topics)})

    def __len__(self):
        return len(self.topics)


def topic_counts(records: Iterable[PaperRecord]) -> Counter:
    counts: Counter = Counter()
    for rec in records:
        counts.update(rec.topics)
    return counts


def build_vocabulary(records: Iterable[PaperRecord], top_k: int, sample_n: int, seed: int) -> TopicVocabulary:
    """Sample ``sample_n`` topics uniformly from the ``top_k`` most frequent.

    The result is ordered by (paper count desc, topic name) so node ids do not
    depend on the sampling order.
    """
    if not top_k >= sample_n >= 1:
        raise DataError(f"need top_k >= sample_n >= 1, got top_k={top_k}, sample_n={sample_n}")
    counts = topic_counts(records)
    if len(counts) < sample_n:
        raise DatasetTooSmallError(f"corpus has {len(counts)} distinct topics, need {sample_n}")
    ranked = sorted(counts, key=lambda t: (-counts[t], t))[:top_k]
    rng = rng_stream(seed, "sample")
    picked = rng.choice(len(ranked), size=sample_n, replace=False)
    return TopicVocabulary(tuple(ranked[i] for i in sorted(picked)))


@dataclass(frozen=True)
class GraphSnapshot:
    year: int
    adjacency: np.ndarray
    features: np.ndarray
    targets: np.ndarray


@dataclass(frozen=True)
class NormStats:
    """Per-topic mean/std of ``log1p(count)``."""

    mean: np.ndarray
    std: np.ndarray

    def normalize(self, counts) -> np.ndarray:
        """Map raw counts to model space; topics run along the last axis."""
        counts = np.asarray(counts, dtype=np.float64)
        return (np.log1p(counts) - self.mean) / self.std

    def denormalize(self, z) -> np.ndarray:
        z = np.asarray(z, dtype=np.float64)
        return np.maximum(np.expm1(self.mean + self.std * z), 0.0)

    def to_json(self) -> dict:
        return {"mean": self.mean.tolist(), "std": self.std.tolist()}

    @classmethod
    def from_json(cls, obj) -> "NormStats":
        return cls(np.asarray(obj["mean"], dtype=np.float64), np.asarray(obj["std"], dtype=np.float64))

    @classmethod
    def fit(cls, counts: np.ndarray, scope: str = "topic") -> "NormStats":
        """Fit from a (time, topic) block of raw counts.

        ``scope="global"`` pools every topic into one mean/std (broadcast to all
        topics), which keeps relative topic sizes visible in model space.
        """
        logs = np.log1p(np.asarray(counts, dtype=np.float64))
        if scope == "topic":
            mean, std = logs.mean(axis=0), logs.std(axis=0)
        elif scope == "global":
            mean = np.full(logs.shape[1], logs.mean())
            std = np.full(logs.shape[1], logs.std())
        else:
            raise DataError(f"unknown normalization scope {scope!r}")
        return cls(mean, np.maximum(std, STD_FLOOR))


@dataclass(frozen=True)
class SnapshotSequence:
    vocabulary: TopicVocabulary
    snapshots: tuple[GraphSnapshot, ...]
    w: int
    normalization: NormStats | None = None
    dangling_references: int = 0

    def __post_init__(self):
        years = [s.year for s in self.snapshots]
        if any(b - a != 1 for a, b in zip(years, years[1:])):
            raise DataError("snapshot years must be consecutive")
        n = len(self.vocabulary)
        for s in self.snapshots:
            if s.adjacency.shape != (n, n) or s.targets.shape != (n,) or s.features.shape != (n, self.w):
                raise DataError(f"snapshot {s.year} does not match vocabulary size {n} and w={self.w}")

    def __len__(self):
        return len(self.snapshots)

    @property
    def years(self) -> list[int]:
        return [s.year for s in self.snapshots]

    @property
    def n_topics(self) -> int:
        return len(self.vocabulary)

    def targets(self) -> np.ndarray:
        return np.stack([s.targets for s in self.snapshots])

    def adjacency(self) -> np.ndarray:
        return np.stack([s.adjacency for s in self.snapshots])


def snapshots_from_counts(years: Sequence[int], counts: np.ndarray, adjacency: np.ndarray,
                          w: int) -> list[GraphSnapshot]:
    """Assemble snapshots from a dense (year, topic) count table.

    ``counts`` covers all of ``years``; ``adjacency`` is (year, N, N) aligned
    with it. Snapshots start at the first year with a full feature window.
    """
    counts = np.asarray(counts)
    out = []
    for i in range(w - 1, len(years)):
        feats = counts[i - w + 1:i + 1].T.copy()
        out.append(GraphSnapshot(
            year=int(years[i]),
            adjacency=_frozen(np.array(adjacency[i], copy=True)),
            features=_frozen(feats),
            targets=_frozen(counts[i].copy()),
        ))
    return out


def build_snapshots(records: Iterable[PaperRecord], vocab: TopicVocabulary, year_range: tuple[int, int],
                    w: int, cumulative: bool = False) -> SnapshotSequence:
    start, end = year_range
    if w < 1:
        raise DataError(f"window w must be >= 1, got {w}")
    if start + w - 1 > end:
        raise DatasetTooSmallError(f"years {start}..{end} cannot fill a window of {w}")

    n = len(vocab)
    n_years = end - start + 1
    # every corpus paper can be cited, whatever its year; only citing papers are windowed
    topic_ids: dict[str, list[int]] = {}
    citing = []
    dropped = 0
    for rec in records:
        ids = sorted(vocab.index[t] for t in rec.topics if t in vocab.index)
        topic_ids[rec.id] = ids
        if not start <= rec.year <= end:
            continue
        if not ids:
            dropped += 1
            continue
        citing.append((rec, ids))

    counts = np.zeros((n_years, n), dtype=np.int64)
    adjacency = np.zeros((n_years, n, n), dtype=np.int64)
    dangling = 0
    for rec, ids in citing:
        yi = rec.year - start
        counts[yi, ids] += 1
        for ref in rec.references:
            cited = topic_ids.get(ref)
            if cited is None:
                dangling += 1
            elif cited:
                adjacency[yi][np.ix_(ids, cited)] += 1
    if cumulative:
        adjacency = np.cumsum(adjacency, axis=0)

    log.info("built %d snapshots over %d topics; %d dangling references, %d records outside vocabulary",
             n_years - w + 1, n, dangling, dropped)
    snaps = snapshots_from_counts(range(start, end + 1), counts, adjacency, w)
    return SnapshotSequence(vocab, tuple(snaps), w, dangling_references=dangling)


def fit_norm_stats(seq: SnapshotSequence, train_end_index: int, scope: str = "topic") -> NormStats:
    """Statistics of log1p(count) over snapshots ``[0, train_end_index)``."""
    if train_end_index < 1:
        raise DataError("train_end_index must be >= 1")
    return NormStats.fit(seq.targets()[:train_end_index], scope)


@dataclass(frozen=True)
class Window:
    start: int
    inputs: tuple[GraphSnapshot, ...]
    target: np.ndarray

    @property
    def target_year(self) -> int:
        return self.inputs[-1].year + 1


def make_windows(seq: SnapshotSequence, T: int) -> list[Window]:
    if T < 1:
        raise DataError(f"T must be >= 1, got {T}")
    if len(seq) < T + 1:
        raise DatasetTooSmallError(f"{len(seq)} snapshots cannot form a window of {T} plus a target year")
    snaps = seq.snapshots
    return [Window(i, snaps[i:i + T], snaps[i + T].targets) for i in range(len(snaps) - T)]


def split_counts(n: int, ratios: Sequence[float]) -> tuple[int, int, int]:
    if len(ratios) != 3 or any(not 0 < r <= 1 for r in ratios) or sum(ratios) > 1 + 1e-12:
        raise DataError(f"split ratios must be three values in (0, 1] summing to <= 1, got {ratios}")
    # the epsilon keeps 0.6 * 10 from flooring to 5
    sizes = tuple(int(np.floor(r * n + 1e-9)) for r in ratios)
    if min(sizes) == 0:
        raise SplitTooSmallError(f"{n} windows with ratios {tuple(ratios)} give split sizes {sizes}")
    return sizes


def split_windows(windows: Sequence, ratios: Sequence[float] = (0.6, 0.1, 0.1)):
    """Chronological train/validation/test split; any remainder is left unused."""
    n_train, n_val, n_test = split_counts(len(windows), ratios)
    windows = list(windows)
    return (windows[:n_train],
            windows[n_train:n_train + n_val],
            windows[n_train + n_val:n_train + n_val + n_test])


# --------------------------------------------------------------------------
# bundle files


def bundle_dict(seq: SnapshotSequence) -> dict:
    return {
        "vocab": list(seq.vocabulary.topics),
        "years": seq.years,
        "w": seq.w,
        "snapshots": [
            {"year": s.year, "A": s.adjacency.tolist(), "X": s.features.tolist(), "Y": s.targets.tolist()}
            for s in seq.snapshots
        ],
    }


def dump_bundle(seq: SnapshotSequence) -> str:
    return json.dumps(bundle_dict(seq), separators=(",", ":")) + "\n"


def save_bundle(seq: SnapshotSequence, path: str | Path):
    Path(path).write_text(dump_bundle(seq), encoding="utf-8")


def load_bundle(path: str | Path) -> SnapshotSequence:
    try:
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
        vocab = TopicVocabulary(tuple(doc["vocab"]))
        w = int(doc["w"])
        snaps = []
        for s in doc["snapshots"]:
            snaps.append(GraphSnapshot(
                year=int(s["year"]),
                adjacency=_frozen(np.asarray(s["A"], dtype=np.int64).reshape(len(vocab), len(vocab))),
                features=_frozen(np.asarray(s["X"], dtype=np.int64).reshape(len(vocab), w)),
                targets=_frozen(np.asarray(s["Y"], dtype=np.int64).reshape(len(vocab))),
            ))
    except (KeyError, TypeError, ValueError) as exc:
        raise DataError(f"malformed snapshot bundle {path}: {exc}") from None
    if any(np.any(s.adjacency < 0) or np.any(s.targets < 0) for s in snaps):
        raise DataError(f"bundle {path} contains negative counts")
    return SnapshotSequence(vocab, tuple(snaps), w)
