"""
Hubs and global correction
==========================

A target near the centre of many queries shows up in most of their
neighbour lists. Global correction scores a target by where the query ranks
among all pivots from that target's point of view, which spreads the
retrieved targets out.
"""

import numpy as np

from wordmap import RetrievalConfig, TransformMatrix, from_arrays, gc_retrieve, hub_statistics

rng = np.random.default_rng(0)
d = 10
queries = np.eye(d)[0] + 0.3 * rng.standard_normal((50, d))
owners = rng.choice(50, 59)
targets = np.vstack([queries.mean(axis=0), queries[owners] + 0.2 * rng.standard_normal((59, d))])

X = from_arrays([f"q{i}" for i in range(50)], queries)
Y = from_arrays([f"t{i}" for i in range(60)], targets)
T = TransformMatrix(np.eye(d))

plain = hub_statistics(Y, T, range(50), X, k=5)
print("plain retrieval: centroid appears in", plain[0], "of 50 top-5 lists; max count", plain.max())

lists = gc_retrieve(T, list(range(50)), X, Y,
                    RetrievalConfig(correction="global-correction", top_k=5), pool_size=0)
corrected = np.bincount(np.concatenate(lists), minlength=Y.n)
print("global correction: centroid count", corrected[0], "; max count", corrected.max())
