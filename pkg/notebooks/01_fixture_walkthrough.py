# %% [markdown]
# # From paper records to snapshots
#
# Builds the snapshot bundle for the 30-paper fixture corpus shipped with the
# tests, then looks at one year's citation graph and the historical-average
# forecast for the last window.

# %%
from pathlib import Path

import numpy as np

from sdtgcn import build_snapshots, build_vocabulary, ha_predict, make_windows, read_records
from sdtgcn.gcn import citation_counts, propagation_matrix

root = Path(__file__).resolve().parents[1]
records = read_records(root / "tests" / "data" / "fixture_papers.jsonl")
vocab = build_vocabulary(records, top_k=20, sample_n=20, seed=0)
seq = build_snapshots(records, vocab, (2010, 2019), w=3)
print(f"{len(records)} papers, {seq.n_topics} topics, years {seq.years[0]}-{seq.years[-1]}")
print("dangling references:", seq.dangling_references)

# %% [markdown]
# Rows of the adjacency are citing topics, columns cited topics. The row sums
# are the per-topic citation counts appended to the spatial embedding.

# %%
snap = seq.snapshots[-1]
topics = np.array(vocab.topics)
active = np.flatnonzero(snap.adjacency.sum(axis=0) + snap.adjacency.sum(axis=1))
print("year", snap.year)
print("active topics:", ", ".join(topics[active]))
print(snap.adjacency[np.ix_(active, active)])
print("citations made:", dict(zip(topics[active].tolist(), citation_counts(snap.adjacency)[active].tolist())))
print("propagation rows sum to", np.round(propagation_matrix(snap.adjacency)[active].sum(axis=1), 3))

# %% [markdown]
# Historical average over the last three-snapshot window against the year
# that follows it.

# %%
last = make_windows(seq, 3)[-1]
pred = ha_predict(last)
for i in np.argsort(-last.target)[:5]:
    print(f"{topics[i]:>12}  predicted {pred[i]:.3f}  actual {last.target[i]}")
