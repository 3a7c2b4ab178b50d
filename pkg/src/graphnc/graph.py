"""Attributed graph container, dataset I/O, adjacency normalization and masking.

Dataset directory layout::

    edges.tsv      src<TAB>dst, 0-based ids, treated as undirected
    features.tsv   node_id<TAB>x_0<TAB>...<TAB>x_{M-1}
    labels.tsv     node_id<TAB>{0|1}   (optional, omitted nodes are 0)
    meta.json      {"num_nodes": N, "attr_dim": M}   (optional, validation only)
"""

from __future__ import annotations

import dataclasses
import json
import logging
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

import numpy as np
import scipy.sparse as sp

from graphnc.errors import DatasetError

logger = logging.getLogger(__name__)

EDGES_FILE = "edges.tsv"
FEATURES_FILE = "features.tsv"
LABELS_FILE = "labels.tsv"
META_FILE = "meta.json"


def _frozen(a):
    a = np.array(a, copy=True)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class AttributedGraph:
    """Undirected attributed graph with optional anomaly labels.

    ``adjacency`` is a symmetric 0/1 CSR matrix without self-loops and with
    sorted column indices. ``labeled_normal`` marks the training nodes; all
    other nodes form the evaluation set.
    """

    adjacency: sp.csr_matrix
    attributes: np.ndarray
    labels: Optional[np.ndarray] = None
    labeled_normal: Optional[np.ndarray] = None

    def __post_init__(self):
        adj = sp.csr_matrix(self.adjacency, dtype=np.float64)
        adj.sum_duplicates()
        adj.sort_indices()
        x = np.asarray(self.attributes, dtype=np.float64)
        if x.ndim != 2:
            raise ValueError(f"attributes must be 2-D, got shape {x.shape}")
        n = x.shape[0]
        if adj.shape != (n, n):
            raise ValueError(f"adjacency shape {adj.shape} does not match {n} nodes")
        if not np.all(np.isfinite(x)):
            raise ValueError("attributes contain non-finite values")
        if adj.diagonal().any():
            raise ValueError("adjacency must not store self-loops")
        if (adj != adj.T).nnz:
            raise ValueError("adjacency must be symmetric")
        object.__setattr__(self, "adjacency", adj)
        object.__setattr__(self, "attributes", _frozen(x))

        labels = self.labels
        if labels is not None:
            labels = np.asarray(labels)
            if labels.shape != (n,) or not np.isin(labels, (0, 1)).all():
                raise ValueError("labels must be a length-N vector of 0/1")
            labels = _frozen(labels.astype(np.int8))
            object.__setattr__(self, "labels", labels)

        mask = self.labeled_normal
        mask = np.zeros(n, dtype=bool) if mask is None else np.asarray(mask, dtype=bool)
        if mask.shape != (n,):
            raise ValueError("labeled_normal must be a length-N boolean vector")
        if labels is not None and (mask & (labels == 1)).any():
            raise ValueError("labeled_normal contains anomalous nodes")
        object.__setattr__(self, "labeled_normal", _frozen(mask))

    @property
    def num_nodes(self) -> int:
        return self.attributes.shape[0]

    @property
    def attr_dim(self) -> int:
        return self.attributes.shape[1]

    @property
    def num_edges(self) -> int:
        """Number of undirected edges."""
        return self.adjacency.nnz // 2

    @property
    def has_labels(self) -> bool:
        return self.labels is not None

    def with_labeled_normal(self, mask) -> "AttributedGraph":
        return dataclasses.replace(self, labeled_normal=mask)


def build_adjacency(src, dst, num_nodes) -> sp.csr_matrix:
    """Symmetric 0/1 CSR adjacency from an edge list; drops self-loops and repeats."""
    src = np.asarray(src, dtype=np.int64)
    dst = np.asarray(dst, dtype=np.int64)
    keep = src != dst
    src, dst = src[keep], dst[keep]
    rows = np.concatenate([src, dst])
    cols = np.concatenate([dst, src])
    adj = sp.csr_matrix(
        (np.ones(rows.size, dtype=np.float64), (rows, cols)), shape=(num_nodes, num_nodes)
    )
    adj.sum_duplicates()
    adj.data[:] = 1.0
    adj.sort_indices()
    return adj


def _parse_int(token, path, lineno, what="node id"):
    try:
        return int(token)
    except ValueError:
        raise DatasetError(f"{what} {token!r} is not an integer", path, lineno) from None


def _read_features(path: Path):
    ids, rows = [], []
    width = None
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.rstrip("\n")
            if not line.strip():
                continue
            parts = line.split("\t")
            node = _parse_int(parts[0], path, lineno)
            try:
                values = [float(t) for t in parts[1:]]
            except ValueError:
                raise DatasetError("non-numeric attribute value", path, lineno) from None
            if not all(math.isfinite(v) for v in values):
                raise DatasetError("non-finite attribute value", path, lineno)
            if width is None:
                width = len(values)
            elif len(values) != width:
                raise DatasetError(
                    f"expected {width} attributes, found {len(values)}", path, lineno
                )
            ids.append((node, lineno))
            rows.append(values)
    if not rows:
        raise DatasetError("no feature rows", path)
    n = len(rows)
    x = np.empty((n, width), dtype=np.float64)
    seen = np.zeros(n, dtype=bool)
    for (node, lineno), values in zip(ids, rows):
        if not 0 <= node < n:
            raise DatasetError(f"node id {node} out of range [0, {n})", path, lineno)
        if seen[node]:
            raise DatasetError(f"duplicate node id {node}", path, lineno)
        seen[node] = True
        x[node] = values
    return x


def _read_edges(path: Path, n: int):
    src, dst = [], []
    seen = set()
    dropped = 0
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            parts = line.split()
            if len(parts) != 2:
                raise DatasetError("expected 'src<TAB>dst'", path, lineno)
            a = _parse_int(parts[0], path, lineno)
            b = _parse_int(parts[1], path, lineno)
            for v in (a, b):
                if not 0 <= v < n:
                    raise DatasetError(f"node id {v} out of range [0, {n})", path, lineno)
            if a == b or (a, b) in seen:
                dropped += 1
                continue
            seen.add((a, b))
            src.append(a)
            dst.append(b)
    return src, dst, dropped


def _read_labels(path: Path, n: int):
    labels = np.zeros(n, dtype=np.int8)
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            parts = line.split()
            if len(parts) != 2:
                raise DatasetError("expected 'node_id<TAB>label'", path, lineno)
            node = _parse_int(parts[0], path, lineno)
            if not 0 <= node < n:
                raise DatasetError(f"node id {node} out of range [0, {n})", path, lineno)
            if parts[1] not in ("0", "1"):
                raise DatasetError(f"label must be 0 or 1, got {parts[1]!r}", path, lineno)
            labels[node] = int(parts[1])
    return labels


def load_graph(dataset_dir) -> AttributedGraph:
    """Read a dataset directory into a validated :class:`AttributedGraph`.

    Edges are symmetrized; self-loops and repeated lines are dropped and
    reported through a single warning. ``labels.tsv`` is optional.
    """
    root = Path(dataset_dir)
    for name in (EDGES_FILE, FEATURES_FILE):
        if not (root / name).is_file():
            raise DatasetError(f"missing required file {name}", root / name)

    x = _read_features(root / FEATURES_FILE)
    n, m = x.shape
    meta_path = root / META_FILE
    if meta_path.is_file():
        meta = json.loads(meta_path.read_text(encoding="utf-8"))
        if meta.get("num_nodes", n) != n or meta.get("attr_dim", m) != m:
            raise DatasetError(
                f"meta.json declares {meta.get('num_nodes')}x{meta.get('attr_dim')}, "
                f"features are {n}x{m}",
                meta_path,
            )

    src, dst, dropped = _read_edges(root / EDGES_FILE, n)
    if dropped:
        logger.warning("dropped %d self-loop/duplicate edge lines from %s", dropped, root / EDGES_FILE)
    adj = build_adjacency(src, dst, n)

    labels = None
    if (root / LABELS_FILE).is_file():
        labels = _read_labels(root / LABELS_FILE, n)
    return AttributedGraph(adjacency=adj, attributes=x, labels=labels)


def save_graph(g: AttributedGraph, dataset_dir) -> None:
    """Write ``g`` in the dataset layout; floats use shortest round-trip repr."""
    root = Path(dataset_dir)
    root.mkdir(parents=True, exist_ok=True)
    upper = sp.triu(g.adjacency, k=1, format="coo")
    order = np.lexsort((upper.col, upper.row))
    with open(root / EDGES_FILE, "w", encoding="utf-8") as fh:
        for i, j in zip(upper.row[order], upper.col[order]):
            fh.write(f"{i}\t{j}\n")
    with open(root / FEATURES_FILE, "w", encoding="utf-8") as fh:
        for i, row in enumerate(g.attributes.tolist()):
            fh.write(str(i) + "\t" + "\t".join(repr(v) for v in row) + "\n")
    if g.labels is not None:
        with open(root / LABELS_FILE, "w", encoding="utf-8") as fh:
            for i, y in enumerate(g.labels.tolist()):
                fh.write(f"{i}\t{y}\n")
    meta = {"num_nodes": g.num_nodes, "attr_dim": g.attr_dim}
    (root / META_FILE).write_text(json.dumps(meta) + "\n", encoding="utf-8")


def normalize_adjacency(g: AttributedGraph) -> sp.csr_matrix:
    """Symmetrically normalized adjacency with self-loops, D^-1/2 (A+I) D^-1/2."""
    a = g.adjacency + sp.identity(g.num_nodes, dtype=np.float64, format="csr")
    a = sp.csr_matrix(a)
    a.sort_indices()
    deg = np.asarray(a.sum(axis=1)).ravel()
    inv_sqrt = 1.0 / np.sqrt(deg)
    rows = np.repeat(np.arange(g.num_nodes), np.diff(a.indptr))
    a.data = a.data * inv_sqrt[rows] * inv_sqrt[a.indices]
    return a


def split_labeled_normals(g: AttributedGraph, ratio: float, seed: int) -> AttributedGraph:
    """Mark floor(ratio * #normal) uniformly sampled normal nodes as labeled."""
    if g.labels is None:
        raise DatasetError("graph has no labels; cannot select labeled normal nodes")
    if not 0.0 < ratio <= 1.0:
        raise ValueError(f"ratio must be in (0, 1], got {ratio}")
    normals = np.flatnonzero(g.labels == 0)
    if normals.size == 0:
        raise DatasetError("graph has no normal nodes")
    k = math.floor(ratio * normals.size + 1e-9)
    rng = np.random.default_rng(seed)
    chosen = rng.choice(normals, size=k, replace=False)
    mask = np.zeros(g.num_nodes, dtype=bool)
    mask[chosen] = True
    return g.with_labeled_normal(mask)


def mask_attributes(g: AttributedGraph, omega: float, seed) -> np.ndarray:
    """Attribute matrix with floor(omega*M) random entries zeroed per labeled-normal row.

    Positions are drawn independently per node. Unlabeled rows are copied as is.
    """
    if not 0.0 <= omega <= 1.0:
        raise ValueError(f"omega must be in [0, 1], got {omega}")
    x = np.array(g.attributes, copy=True)
    rows = np.flatnonzero(g.labeled_normal)
    k = math.floor(omega * g.attr_dim + 1e-9)
    if k == 0 or rows.size == 0:
        return x
    rng = np.random.default_rng(seed)
    cols = np.argsort(rng.random((rows.size, g.attr_dim)), axis=1)[:, :k]
    x[rows[:, None], cols] = 0.0
    return x
