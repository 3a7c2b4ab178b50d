"""Clustered attributed graphs with planted contextual and structural anomalies.

Normal nodes belong to Gaussian attribute clusters and link mostly inside
their cluster. Contextual anomalies keep their edges but get new attributes:
by default copied from the most distant node in a random candidate pool, or,
with ``contextual_mode="far_center"``, drawn around one far-off center
(``contextual_scale`` times a standard normal vector).
Structural anomalies are grouped into fully connected cliques.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from graphnc.graph import AttributedGraph, build_adjacency


CONTEXTUAL_MODES = ("far_center", "farthest_copy")


@dataclass
class SyntheticConfig:
    num_nodes: int = 2000
    attr_dim: int = 64
    num_clusters: int = 5
    contextual_anomaly_rate: float = 0.025
    structural_anomaly_rate: float = 0.025
    clique_size: int = 10
    feature_noise_scale: float = 0.5
    avg_degree: float = 10.0
    cross_cluster_fraction: float = 0.1
    contextual_mode: str = "farthest_copy"
    contextual_scale: float = 3.0
    candidate_pool: int = 50

    def __post_init__(self):
        if self.num_nodes < 2:
            raise ValueError("num_nodes must be >= 2")
        if self.attr_dim < 1:
            raise ValueError("attr_dim must be >= 1")
        if self.num_clusters < 1:
            raise ValueError("num_clusters must be >= 1")
        for name in ("contextual_anomaly_rate", "structural_anomaly_rate"):
            rate = getattr(self, name)
            if not 0.0 <= rate < 0.5:
                raise ValueError(f"{name} must be in [0, 0.5), got {rate}")
        if self.clique_size < 2:
            raise ValueError("clique_size must be >= 2")
        if self.feature_noise_scale < 0:
            raise ValueError("feature_noise_scale must be >= 0")
        if self.contextual_mode not in CONTEXTUAL_MODES:
            raise ValueError(f"contextual_mode must be one of {CONTEXTUAL_MODES}")
        if self.contextual_scale <= 0:
            raise ValueError("contextual_scale must be positive")
        if self.candidate_pool < 2:
            raise ValueError("candidate_pool must be >= 2")
        if not 0.0 <= self.cross_cluster_fraction <= 1.0:
            raise ValueError("cross_cluster_fraction must be in [0, 1]")

    @property
    def num_contextual(self) -> int:
        return math.floor(self.num_nodes * self.contextual_anomaly_rate + 1e-9)

    @property
    def num_structural(self) -> int:
        return math.floor(self.num_nodes * self.structural_anomaly_rate + 1e-9)


def _cliques(members: np.ndarray, size: int):
    """Split ``members`` into round(len/size) groups of near-equal size (at least one group)."""
    count = max(1, int(round(members.size / size)))
    return np.array_split(members, count)


def generate_synthetic(cfg: SyntheticConfig, seed: int) -> AttributedGraph:
    """Draw a labeled graph from ``cfg``; deterministic per seed."""
    return generate_with_clusters(cfg, seed)[0]


def generate_with_clusters(cfg: SyntheticConfig, seed: int):
    """Like :func:`generate_synthetic` but also returns each node's cluster index."""
    n_ctx, n_str = cfg.num_contextual, cfg.num_structural
    if n_ctx + n_str == 0:
        raise ValueError(
            "configuration plants no anomalies; raise an anomaly rate or num_nodes"
        )
    if n_str == 1:
        raise ValueError("structural anomalies need at least 2 nodes to form a clique")
    if n_ctx + n_str >= cfg.num_nodes:
        raise ValueError("anomalies would exceed the number of nodes")

    rng = np.random.default_rng(seed)
    n, m = cfg.num_nodes, cfg.attr_dim
    cluster = rng.integers(0, cfg.num_clusters, size=n)
    centers = rng.normal(0.0, 1.0, size=(cfg.num_clusters, m))
    x = centers[cluster] + cfg.feature_noise_scale * rng.normal(0.0, 1.0, size=(n, m))

    # edges: each node draws avg_degree/2 partners, mostly from its own cluster
    per_node = max(1, int(round(cfg.avg_degree / 2)))
    members = [np.flatnonzero(cluster == c) for c in range(cfg.num_clusters)]
    src = np.repeat(np.arange(n), per_node)
    cross = rng.random(src.size) < cfg.cross_cluster_fraction
    dst = rng.integers(0, n, size=src.size)
    for c, idx in enumerate(members):
        sel = (~cross) & (cluster[src] == c)
        dst[sel] = idx[rng.integers(0, idx.size, size=int(sel.sum()))]

    labels = np.zeros(n, dtype=np.int8)
    anomalous = rng.choice(n, size=n_ctx + n_str, replace=False)
    ctx_nodes, str_nodes = anomalous[:n_ctx], anomalous[n_ctx:]

    # contextual anomalies keep their edges; only their attributes change
    if cfg.contextual_mode == "far_center":
        far = cfg.contextual_scale * rng.normal(0.0, 1.0, size=m)
        x[ctx_nodes] = far + cfg.feature_noise_scale * rng.normal(0.0, 1.0, size=(n_ctx, m))
    else:
        x_source = x.copy()
        for i in ctx_nodes:
            pool = rng.choice(n, size=min(cfg.candidate_pool, n), replace=False)
            dist = np.linalg.norm(x_source[pool] - x_source[i], axis=1)
            x[i] = x_source[pool[int(np.argmax(dist))]]
    labels[ctx_nodes] = 1

    extra_src, extra_dst = [], []
    for group in _cliques(str_nodes, cfg.clique_size):
        a, b = np.triu_indices(group.size, k=1)
        extra_src.append(group[a])
        extra_dst.append(group[b])
    labels[str_nodes] = 1
    if extra_src:
        src = np.concatenate([src] + extra_src)
        dst = np.concatenate([dst] + extra_dst)

    adj = build_adjacency(src, dst, n)
    return AttributedGraph(adjacency=adj, attributes=x, labels=labels), cluster
