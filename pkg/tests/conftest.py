import numpy as np
import pytest
import scipy.sparse as sp

from graphnc.graph import AttributedGraph, build_adjacency


def random_graph(n, m, p=0.2, seed=0, labels=True, labeled_frac=0.3):
    rng = np.random.default_rng(seed)
    upper = np.triu(rng.random((n, n)) < p, k=1)
    src, dst = np.nonzero(upper)
    adj = build_adjacency(src, dst, n)
    x = rng.normal(size=(n, m))
    y = None
    mask = None
    if labels:
        y = (rng.random(n) < 0.2).astype(np.int8)
        y[0] = 0
        mask = (y == 0) & (rng.random(n) < labeled_frac)
        mask[0] = True
    return AttributedGraph(adjacency=adj, attributes=x, labels=y, labeled_normal=mask)


@pytest.fixture
def small_graph():
    return random_graph(10, 4, p=0.3, seed=3)


def write_dataset(root, edges, features, labels=None):
    root.mkdir(parents=True, exist_ok=True)
    (root / "edges.tsv").write_text("".join(f"{a}\t{b}\n" for a, b in edges))
    (root / "features.tsv").write_text(
        "".join(f"{i}\t" + "\t".join(str(v) for v in row) + "\n" for i, row in enumerate(features))
    )
    if labels is not None:
        (root / "labels.tsv").write_text("".join(f"{i}\t{y}\n" for i, y in enumerate(labels)))
    return root


def dense(a):
    return a.toarray() if sp.issparse(a) else np.asarray(a)
