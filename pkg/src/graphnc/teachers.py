"""Teacher detectors producing the frozen score distribution for calibration.

Two built-in teachers are trained in the semi-supervised setting, i.e. their
losses only touch labeled normal nodes, while scores are produced for every
node:

* ``dominant``: GCN autoencoder reconstructing attributes and adjacency rows.
* ``ocgnn``: GCN encoder pulled toward a fixed one-class center.

External detectors plug in through :func:`load_teacher_scores`.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
import scipy.sparse as sp

from graphnc.errors import DatasetError, TrainingError
from graphnc.graph import AttributedGraph, normalize_adjacency
from graphnc.linalg import AdamState, adam_step, glorot_init, relu, relu_grad, sigmoid, spmm

TEACHERS = ("dominant", "ocgnn")


@dataclass
class TeacherConfig:
    hidden_dim: int = 64
    epochs: int = 100
    learning_rate: float = 5e-3
    structure_weight: float = 0.5
    seed: int = 0

    def __post_init__(self):
        if not 0.0 <= self.structure_weight <= 1.0:
            raise ValueError("structure_weight must be in [0, 1]")
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")
        if self.hidden_dim < 1:
            raise ValueError("hidden_dim must be >= 1")


@dataclass(frozen=True, eq=False)
class TeacherScores:
    """Normalized teacher scores; ``raw`` keeps the pre-normalization values."""

    scores: np.ndarray
    provenance: str
    raw_min: float
    raw_max: float
    raw: Optional[np.ndarray] = None
    params: dict = field(default_factory=dict)

    def __len__(self):
        return self.scores.shape[0]


def normalize_scores(raw) -> np.ndarray:
    """Min-max rescale to [0, 1]; a constant vector maps to all 0.5."""
    raw = np.asarray(raw, dtype=np.float64).ravel()
    if not np.all(np.isfinite(raw)):
        raise ValueError("scores must be finite")
    lo, hi = raw.min(), raw.max()
    if hi == lo:
        return np.full(raw.shape, 0.5)
    out = (raw - lo) / (hi - lo)
    # guard against 1 ulp overshoot
    return np.clip(out, 0.0, 1.0)


def _make_scores(raw, provenance, params=None) -> TeacherScores:
    raw = np.asarray(raw, dtype=np.float64)
    if not np.all(np.isfinite(raw)):
        raise TrainingError(f"{provenance} teacher produced non-finite scores")
    scores = normalize_scores(raw)
    scores.setflags(write=False)
    raw.setflags(write=False)
    return TeacherScores(
        scores=scores,
        provenance=provenance,
        raw_min=float(raw.min()),
        raw_max=float(raw.max()),
        raw=raw,
        params=params or {},
    )


def _labeled_rows(g: AttributedGraph) -> np.ndarray:
    rows = np.flatnonzero(g.labeled_normal)
    if rows.size == 0:
        raise TrainingError("teacher training needs at least one labeled normal node")
    return rows


def _encode(a_hat, ax, p):
    z1 = ax @ p["W1"]
    h1 = relu(z1)
    ah1 = spmm(a_hat, h1)
    return z1, ah1, ah1 @ p["W2"]


def _encoder_grads(a_hat, ax, z1, ah1, p, d_h):
    d_z1 = spmm(a_hat, d_h @ p["W2"].T) * relu_grad(z1)
    return {"W1": ax.T @ d_z1, "W2": ah1.T @ d_h}


def _structure_target_rows(adj_plus_i: sp.csr_matrix, rows) -> np.ndarray:
    return adj_plus_i[rows].toarray()


def _structure_errors(h, adj_plus_i, chunk=1024):
    n = h.shape[0]
    out = np.empty(n)
    for start in range(0, n, chunk):
        stop = min(start + chunk, n)
        rec = sigmoid(h[start:stop] @ h.T)
        target = adj_plus_i[start:stop].toarray()
        out[start:stop] = np.sqrt(((target - rec) ** 2).sum(axis=1))
    return out


def train_dominant(g: AttributedGraph, cfg: TeacherConfig) -> TeacherScores:
    """Reconstruction teacher trained on labeled normal rows only.

    Loss = lam * attribute MSE + (1 - lam) * adjacency-row BCE, both averaged
    over labeled rows. Raw score of node i is
    lam * ||x_i - xhat_i|| + (1 - lam) * ||a_i - ahat_i||.
    """
    lab = _labeled_rows(g)
    lam = cfg.structure_weight
    n, m = g.attributes.shape
    d = cfg.hidden_dim
    x = g.attributes
    a_hat = normalize_adjacency(g)
    ax = spmm(a_hat, x)
    adj_plus_i = sp.csr_matrix(g.adjacency + sp.identity(n, format="csr"))
    target_rows = _structure_target_rows(adj_plus_i, lab) if lam < 1.0 else None

    rng = np.random.default_rng(cfg.seed)
    params = {
        "W1": glorot_init(m, d, rng),
        "W2": glorot_init(d, d, rng),
        "W_dec": glorot_init(d, m, rng),
        "b_dec": np.zeros((1, m)),
    }
    state = AdamState(lr=cfg.learning_rate)
    x_lab = x[lab]
    for epoch in range(cfg.epochs):
        z1, ah1, h = _encode(a_hat, ax, params)
        h_lab = h[lab]
        x_rec = h_lab @ params["W_dec"] + params["b_dec"]
        d_xrec = lam * 2.0 * (x_rec - x_lab) / x_lab.size
        d_h = np.zeros_like(h)
        d_h[lab] = d_xrec @ params["W_dec"].T
        if lam < 1.0:
            logits = h_lab @ h.T
            d_logits = (1.0 - lam) * (sigmoid(logits) - target_rows) / logits.size
            d_h += d_logits.T @ h_lab
            d_h[lab] += d_logits @ h
        grads = _encoder_grads(a_hat, ax, z1, ah1, params, d_h)
        grads["W_dec"] = h_lab.T @ d_xrec
        grads["b_dec"] = d_xrec.sum(axis=0, keepdims=True)
        params = adam_step(params, grads, state)

    _, _, h = _encode(a_hat, ax, params)
    attr_err = np.sqrt((((h @ params["W_dec"] + params["b_dec"]) - x) ** 2).sum(axis=1))
    raw = lam * attr_err
    if lam < 1.0:
        raw = raw + (1.0 - lam) * _structure_errors(h, adj_plus_i)
    return _make_scores(raw, "dominant", params)


def train_ocgnn(g: AttributedGraph, cfg: TeacherConfig) -> TeacherScores:
    """One-class teacher: minimize squared distance of labeled normals to a frozen center.

    The center is the mean labeled-normal embedding at initialization.
    """
    lab = _labeled_rows(g)
    n, m = g.attributes.shape
    d = cfg.hidden_dim
    a_hat = normalize_adjacency(g)
    ax = spmm(a_hat, g.attributes)
    rng = np.random.default_rng(cfg.seed)
    params = {"W1": glorot_init(m, d, rng), "W2": glorot_init(d, d, rng)}
    _, _, h = _encode(a_hat, ax, params)
    center = h[lab].mean(axis=0)
    state = AdamState(lr=cfg.learning_rate)
    for epoch in range(cfg.epochs):
        z1, ah1, h = _encode(a_hat, ax, params)
        d_h = np.zeros_like(h)
        d_h[lab] = 2.0 * (h[lab] - center) / lab.size
        params = adam_step(params, _encoder_grads(a_hat, ax, z1, ah1, params, d_h), state)

    _, _, h = _encode(a_hat, ax, params)
    raw = ((h - center) ** 2).sum(axis=1)
    params = dict(params, center=center.reshape(1, -1))
    return _make_scores(raw, "ocgnn", params)


def train_teacher(name: str, g: AttributedGraph, cfg: TeacherConfig) -> TeacherScores:
    if name == "dominant":
        return train_dominant(g, cfg)
    if name == "ocgnn":
        return train_ocgnn(g, cfg)
    raise ValueError(f"unknown teacher {name!r}; choose from {', '.join(TEACHERS)}")


def load_teacher_scores(path, n: int) -> TeacherScores:
    """Read ``node_id<TAB>score`` lines (ids 0..n-1 exactly once) and normalize."""
    raw = np.full(n, np.nan)
    seen = np.zeros(n, dtype=bool)
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            parts = line.split()
            if len(parts) != 2:
                raise DatasetError("expected 'node_id<TAB>score'", path, lineno)
            try:
                node = int(parts[0])
            except ValueError:
                raise DatasetError(f"node id {parts[0]!r} is not an integer", path, lineno) from None
            try:
                value = float(parts[1])
            except ValueError:
                raise DatasetError(f"score {parts[1]!r} is not a number", path, lineno) from None
            if not 0 <= node < n:
                raise DatasetError(f"node id {node} out of range [0, {n})", path, lineno)
            if seen[node]:
                raise DatasetError(f"duplicate node id {node}", path, lineno)
            if not math.isfinite(value):
                raise DatasetError(f"non-finite score for node {node}", path, lineno)
            seen[node] = True
            raw[node] = value
    if not seen.all():
        missing = np.flatnonzero(~seen)
        shown = ", ".join(str(i) for i in missing[:10])
        raise DatasetError(f"missing scores for node id(s) {shown}", path)
    return _make_scores(raw, "file")


def write_scores(path, scores) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for i, s in enumerate(np.asarray(scores, dtype=np.float64).tolist()):
            fh.write(f"{i}\t{s!r}\n")
