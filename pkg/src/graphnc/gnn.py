"""Two-layer GCN encoder with a sigmoid scoring head; manual forward/backward.

    H1 = relu(A X W1)
    H2 = A H1 W2                  (node representations)
    s  = sigmoid(H2 w + b)        (anomaly scores)

``A`` is the symmetric normalized adjacency, so its transpose is itself.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from graphnc.errors import ContractError, DimensionError
from graphnc.linalg import glorot_init, matmul, relu, relu_grad, sigmoid, spmm

PARAM_NAMES = ("W1", "W2", "head_w", "head_b")


@dataclass(frozen=True, eq=False)
class StudentParams:
    W1: np.ndarray
    W2: np.ndarray
    head_w: np.ndarray
    head_b: float = 0.0
    version: int = 0

    @property
    def attr_dim(self) -> int:
        return self.W1.shape[0]

    @property
    def hidden_dim(self) -> int:
        return self.W1.shape[1]

    def as_dict(self) -> dict:
        return {
            "W1": self.W1,
            "W2": self.W2,
            "head_w": self.head_w,
            "head_b": np.array([[self.head_b]], dtype=np.float64),
        }

    @classmethod
    def from_dict(cls, blocks: dict, version: int = 0) -> "StudentParams":
        return cls(
            W1=np.asarray(blocks["W1"], dtype=np.float64),
            W2=np.asarray(blocks["W2"], dtype=np.float64),
            head_w=np.asarray(blocks["head_w"], dtype=np.float64).reshape(-1, 1),
            head_b=float(np.asarray(blocks["head_b"]).reshape(-1)[0]),
            version=version,
        )

    def updated(self, blocks: dict) -> "StudentParams":
        return StudentParams.from_dict(blocks, version=self.version + 1)


@dataclass(frozen=True, eq=False)
class ForwardCache:
    a_hat: sp.csr_matrix
    ax: np.ndarray
    z1: np.ndarray
    h1: np.ndarray
    ah1: np.ndarray
    embeddings: np.ndarray
    logits: np.ndarray
    scores: np.ndarray
    version: int


def init_student(attr_dim: int, hidden_dim: int, seed) -> StudentParams:
    if attr_dim < 1 or hidden_dim < 1:
        raise ValueError("attr_dim and hidden_dim must be >= 1")
    rng = np.random.default_rng(seed)
    return StudentParams(
        W1=glorot_init(attr_dim, hidden_dim, rng),
        W2=glorot_init(hidden_dim, hidden_dim, rng),
        head_w=glorot_init(hidden_dim, 1, rng),
        head_b=0.0,
    )


def forward(a_hat: sp.csr_matrix, x: np.ndarray, p: StudentParams) -> ForwardCache:
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2 or x.shape[1] != p.attr_dim:
        raise DimensionError(f"attributes {x.shape} do not match W1 {p.W1.shape}")
    ax = spmm(a_hat, x)
    z1 = matmul(ax, p.W1)
    h1 = relu(z1)
    ah1 = spmm(a_hat, h1)
    h2 = matmul(ah1, p.W2)
    logits = matmul(h2, p.head_w) + p.head_b
    return ForwardCache(
        a_hat=a_hat,
        ax=ax,
        z1=z1,
        h1=h1,
        ah1=ah1,
        embeddings=h2,
        logits=logits,
        scores=sigmoid(logits),
        version=p.version,
    )


def backward(cache: ForwardCache, p: StudentParams, d_scores=None, d_embed=None) -> dict:
    """Parameter gradients given upstream grads on scores (N x 1) and embeddings (N x d).

    Either upstream gradient may be None (treated as zero). Returns a dict keyed
    like :meth:`StudentParams.as_dict`.
    """
    if cache.version != p.version:
        raise ContractError(
            f"forward cache is from parameter version {cache.version}, params are at {p.version}"
        )
    n, d = cache.embeddings.shape
    if d_scores is None:
        d_logits = np.zeros((n, 1))
    else:
        d_scores = np.asarray(d_scores, dtype=np.float64).reshape(-1, 1)
        if d_scores.shape[0] != n:
            raise DimensionError(f"d_scores has {d_scores.shape[0]} rows, expected {n}")
        d_logits = d_scores * cache.scores * (1.0 - cache.scores)

    g_head_w = cache.embeddings.T @ d_logits
    g_head_b = np.array([[d_logits.sum()]])
    d_h2 = d_logits @ p.head_w.T
    if d_embed is not None:
        d_embed = np.asarray(d_embed, dtype=np.float64)
        if d_embed.shape != (n, d):
            raise DimensionError(f"d_embed has shape {d_embed.shape}, expected {(n, d)}")
        d_h2 = d_h2 + d_embed

    g_W2 = cache.ah1.T @ d_h2
    d_h1 = spmm(cache.a_hat, d_h2 @ p.W2.T)
    d_z1 = d_h1 * relu_grad(cache.z1)
    g_W1 = cache.ax.T @ d_z1
    return {"W1": g_W1, "W2": g_W2, "head_w": g_head_w, "head_b": g_head_b}


def add_grads(a: dict, b: dict) -> dict:
    return {k: a[k] + b[k] for k in a}
