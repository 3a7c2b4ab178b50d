"""Detection metrics and score-distribution diagnostics.

Higher scores mean more anomalous. Whenever an ordering is needed, ties are
broken by ascending node index.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass
from typing import Optional

import numpy as np
from scipy.stats import rankdata

from graphnc.errors import DatasetError


def _check(scores, labels):
    scores = np.asarray(scores, dtype=np.float64).ravel()
    labels = np.asarray(labels).ravel()
    if scores.shape != labels.shape:
        raise ValueError(f"{scores.size} scores for {labels.size} labels")
    pos = labels == 1
    n_pos = int(pos.sum())
    if n_pos == 0 or n_pos == labels.size:
        raise ValueError("metric needs both normal and anomalous nodes")
    return scores, pos


def auroc(scores, labels) -> float:
    """Probability that a random anomaly outranks a random normal node (ties count 1/2)."""
    scores, pos = _check(scores, labels)
    ranks = rankdata(scores, method="average")
    n_pos = pos.sum()
    n_neg = pos.size - n_pos
    u = ranks[pos].sum() - n_pos * (n_pos + 1) / 2.0
    return float(u / (n_pos * n_neg))


def ranking(scores) -> np.ndarray:
    """Node indices sorted by descending score, ties by ascending index."""
    scores = np.asarray(scores, dtype=np.float64).ravel()
    return np.lexsort((np.arange(scores.size), -scores))


def auprc(scores, labels) -> float:
    """Average precision: mean of precision@k over the ranks k of the anomalies."""
    scores, pos = _check(scores, labels)
    hits = pos[ranking(scores)]
    k = np.flatnonzero(hits) + 1
    precision_at_hit = np.arange(1, k.size + 1) / k
    return float(precision_at_hit.mean())


def fpr_fnr(scores, labels, tau: float):
    """Rates when nodes with score >= tau are flagged anomalous."""
    scores, pos = _check(scores, labels)
    flagged = scores >= tau
    fpr = (flagged & ~pos).sum() / (~pos).sum()
    fnr = (~flagged & pos).sum() / pos.sum()
    return float(fpr), float(fnr)


def contamination_threshold(scores, rate: float) -> float:
    """Score of the k-th highest node, k = ceil(rate * n), so about ``rate`` of nodes are flagged."""
    scores = np.asarray(scores, dtype=np.float64).ravel()
    k = min(max(1, math.ceil(rate * scores.size - 1e-9)), scores.size)
    return float(np.sort(scores)[::-1][k - 1])


def normal_variance(scores, labels) -> float:
    """Population variance of the scores of label-0 nodes."""
    scores = np.asarray(scores, dtype=np.float64).ravel()
    normal = scores[np.asarray(labels).ravel() == 0]
    if normal.size < 2:
        raise ValueError("need at least two normal nodes for a variance")
    if np.all(normal == normal[0]):
        return 0.0  # np.var can leave a rounding residue on equal values
    return float(np.var(normal))


def prototype_deviation(h, labeled) -> float:
    """Mean L2 distance of labeled rows of ``h`` to their mean (the normal prototype)."""
    h = np.asarray(h, dtype=np.float64)
    labeled = np.asarray(labeled, dtype=bool)
    if not labeled.any():
        raise ValueError("prototype deviation needs at least one labeled node")
    rows = h[labeled]
    proto = rows.mean(axis=0)
    return float(np.linalg.norm(rows - proto, axis=1).mean())


@dataclass
class EvalReport:
    auroc: float
    auprc: float
    fpr: float
    fnr: float
    threshold: float
    normal_score_mean: float
    normal_score_variance: float
    prototype_deviation: Optional[float]
    num_nodes: int
    num_evaluated: int
    num_anomalies: int
    num_labeled_normal: int
    seed: Optional[int] = None

    def to_dict(self) -> dict:
        return asdict(self)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=False) + "\n"

    def to_csv(self) -> str:
        lines = ["metric,value"]
        for key, value in self.to_dict().items():
            lines.append(f"{key},{'' if value is None else repr(value)}")
        return "\n".join(lines) + "\n"


def evaluate(scores, g, labels=None, embeddings=None, seed=None) -> EvalReport:
    """Metrics over the unlabeled nodes of ``g``; labeled normals are excluded.

    The FPR/FNR threshold is the contamination quantile of the evaluated
    scores at the true anomaly rate of the evaluated set. The prototype
    deviation, when embeddings are given, is computed over labeled normals.
    """
    labels = g.labels if labels is None else np.asarray(labels)
    if labels is None:
        raise DatasetError("dataset has no labels.tsv; evaluation needs ground truth")
    scores = np.asarray(scores, dtype=np.float64).ravel()
    if scores.size != g.num_nodes:
        raise ValueError(f"{scores.size} scores for {g.num_nodes} nodes")
    test = ~g.labeled_normal
    s, y = scores[test], labels[test]
    rate = float((y == 1).mean())
    tau = contamination_threshold(s, rate)
    fpr, fnr = fpr_fnr(s, y, tau)
    normal = s[y == 0]
    deviation = None
    if embeddings is not None and g.labeled_normal.any():
        deviation = prototype_deviation(embeddings, g.labeled_normal)
    return EvalReport(
        auroc=auroc(s, y),
        auprc=auprc(s, y),
        fpr=fpr,
        fnr=fnr,
        threshold=tau,
        normal_score_mean=float(normal.mean()),
        normal_score_variance=normal_variance(s, y),
        prototype_deviation=deviation,
        num_nodes=g.num_nodes,
        num_evaluated=int(test.sum()),
        num_anomalies=int((y == 1).sum()),
        num_labeled_normal=int(g.labeled_normal.sum()),
        seed=seed,
    )
