"""Student calibration against a frozen teacher.

Per epoch the student is run on the original attributes and on a copy whose
labeled-normal rows have a fraction of entries zeroed. The objective is

    score_da + alpha * norm_reg

where ``score_da`` is the MSE between student and teacher scores over every
node and ``norm_reg`` is the mean squared distance between the two views'
embeddings over labeled normal nodes.
"""

from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from graphnc import checkpoint
from graphnc.errors import DimensionError, TrainingError
from graphnc.gnn import StudentParams, add_grads, backward, forward, init_student
from graphnc.graph import AttributedGraph, mask_attributes
from graphnc.linalg import AdamState, adam_step

HIGH_DIM_LR = 5e-3
LOW_DIM_LR = 5e-4
LR_DIM_THRESHOLD = 32


def default_learning_rate(attr_dim: int) -> float:
    """5e-3 for attribute dimension above 32, otherwise 5e-4."""
    return HIGH_DIM_LR if attr_dim > LR_DIM_THRESHOLD else LOW_DIM_LR


@dataclass
class TrainConfig:
    alpha: float = 0.01
    omega: float = 0.30
    learning_rate: Optional[float] = None
    epochs: int = 500
    hidden_dim: int = 64
    seed: int = 0
    resample_mask_each_epoch: bool = False

    def __post_init__(self):
        if self.alpha < 0:
            raise ValueError("alpha must be >= 0")
        if not 0.0 <= self.omega <= 1.0:
            raise ValueError("omega must be in [0, 1]")
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")
        if self.learning_rate is not None and self.learning_rate <= 0:
            raise ValueError("learning_rate must be positive")

    def resolved(self, attr_dim: int) -> "TrainConfig":
        if self.learning_rate is not None:
            return self
        return dataclasses.replace(self, learning_rate=default_learning_rate(attr_dim))


@dataclass(frozen=True, eq=False)
class TrainedStudent:
    params: StudentParams
    config: TrainConfig
    loss_trace: np.ndarray = field(repr=False)
    teacher_provenance: str = "unknown"

    @property
    def attr_dim(self) -> int:
        return self.params.attr_dim


def score_da_loss(y_s, y_t):
    """Mean squared score discrepancy over all nodes and its gradient w.r.t. ``y_s``."""
    y_s = np.asarray(y_s, dtype=np.float64).ravel()
    y_t = np.asarray(y_t, dtype=np.float64).ravel()
    if y_s.shape != y_t.shape:
        raise DimensionError(f"student has {y_s.size} scores, teacher has {y_t.size}")
    diff = y_s - y_t
    return float(np.mean(diff * diff)), 2.0 * diff / diff.size


def norm_reg_loss(h, h_tilde, labeled):
    """Mean over labeled rows of ||h_i - h_tilde_i||^2 plus gradients for both views."""
    h = np.asarray(h, dtype=np.float64)
    h_tilde = np.asarray(h_tilde, dtype=np.float64)
    labeled = np.asarray(labeled, dtype=bool)
    if h.shape != h_tilde.shape:
        raise DimensionError(f"view shapes differ: {h.shape} vs {h_tilde.shape}")
    count = int(labeled.sum())
    if count == 0:
        raise TrainingError("norm_reg_loss needs at least one labeled normal node")
    diff = np.where(labeled[:, None], h - h_tilde, 0.0)
    loss = float((diff * diff).sum() / count)
    grad = 2.0 * diff / count
    return loss, grad, -grad


def _prior_logit(y_t) -> float:
    p = min(max(float(np.mean(y_t)), 1e-3), 1 - 1e-3)
    return math.log(p / (1.0 - p))


def train_student(g: AttributedGraph, a_hat, teacher, cfg: TrainConfig, callback=None) -> TrainedStudent:
    """Fit the student to ``teacher`` scores; returns params and a per-epoch loss trace.

    ``teacher`` is a :class:`~graphnc.teachers.TeacherScores` or a plain score
    vector. The trace has columns (total, score_da, norm_reg) evaluated at the
    parameters before each epoch's update.
    """
    y_t = getattr(teacher, "scores", teacher)
    y_t = np.asarray(y_t, dtype=np.float64).ravel()
    provenance = getattr(teacher, "provenance", "array")
    if y_t.size != g.num_nodes:
        raise DimensionError(f"teacher provides {y_t.size} scores for {g.num_nodes} nodes")
    labeled = g.labeled_normal
    use_norm_reg = cfg.alpha > 0
    if use_norm_reg and not labeled.any():
        raise TrainingError("alpha > 0 requires at least one labeled normal node")

    cfg = cfg.resolved(g.attr_dim)
    init_seq, mask_seq = np.random.SeedSequence(cfg.seed).spawn(2)
    mask_rng = np.random.default_rng(mask_seq)
    params = init_student(g.attr_dim, cfg.hidden_dim, init_seq)
    # start the head at the teacher's mean score instead of 0.5
    params = dataclasses.replace(params, head_b=_prior_logit(y_t))
    state = AdamState(lr=cfg.learning_rate)
    x = g.attributes
    x_masked = mask_attributes(g, cfg.omega, mask_rng) if use_norm_reg else None
    trace = np.zeros((cfg.epochs, 3))

    for epoch in range(cfg.epochs):
        if use_norm_reg and cfg.resample_mask_each_epoch and epoch > 0:
            x_masked = mask_attributes(g, cfg.omega, mask_rng)
        cache = forward(a_hat, x, params)
        da, d_scores = score_da_loss(cache.scores, y_t)
        reg = 0.0
        if use_norm_reg:
            cache_m = forward(a_hat, x_masked, params)
            reg, d_h, d_h_masked = norm_reg_loss(cache.embeddings, cache_m.embeddings, labeled)
            grads = add_grads(
                backward(cache, params, d_scores, cfg.alpha * d_h),
                backward(cache_m, params, None, cfg.alpha * d_h_masked),
            )
        else:
            grads = backward(cache, params, d_scores, None)
        total = da + cfg.alpha * reg
        if not math.isfinite(total):
            raise TrainingError(f"non-finite loss at epoch {epoch}")
        trace[epoch] = (total, da, reg)
        try:
            params = params.updated(adam_step(params.as_dict(), grads, state))
        except TrainingError as exc:
            raise TrainingError(f"epoch {epoch}: {exc}") from None
        if callback is not None:
            callback(epoch, trace[epoch], params)

    trace.setflags(write=False)
    return TrainedStudent(params=params, config=cfg, loss_trace=trace, teacher_provenance=provenance)


def _check_dims(student, g):
    if g.attr_dim != student.attr_dim:
        raise DimensionError(f"graph has {g.attr_dim} attributes, student expects {student.attr_dim}")


def infer(student: TrainedStudent, g: AttributedGraph, a_hat) -> np.ndarray:
    """Anomaly score per node from the unmasked graph."""
    _check_dims(student, g)
    return forward(a_hat, g.attributes, student.params).scores.ravel()


def embed(student: TrainedStudent, g: AttributedGraph, a_hat) -> np.ndarray:
    """Final-layer node representations (N x d)."""
    _check_dims(student, g)
    return forward(a_hat, g.attributes, student.params).embeddings


def save_student(path, student: TrainedStudent) -> None:
    cfg = student.config
    meta = {
        "kind": "student",
        "attr_dim": student.params.attr_dim,
        "hidden_dim": student.params.hidden_dim,
        "alpha": repr(cfg.alpha),
        "omega": repr(cfg.omega),
        "learning_rate": repr(cfg.learning_rate),
        "epochs": cfg.epochs,
        "seed": cfg.seed,
        "resample_mask_each_epoch": int(cfg.resample_mask_each_epoch),
        "teacher": student.teacher_provenance,
    }
    checkpoint.save_checkpoint(path, student.params.as_dict(), meta)


def load_student(path) -> TrainedStudent:
    blocks, meta = checkpoint.load_checkpoint(path)
    if meta.get("kind") != "student":
        raise DimensionError(f"{path} is not a student checkpoint")
    cfg = TrainConfig(
        alpha=float(meta["alpha"]),
        omega=float(meta["omega"]),
        learning_rate=float(meta["learning_rate"]),
        epochs=int(meta["epochs"]),
        hidden_dim=int(meta["hidden_dim"]),
        seed=int(meta["seed"]),
        resample_mask_each_epoch=bool(int(meta.get("resample_mask_each_epoch", 0))),
    )
    return TrainedStudent(
        params=StudentParams.from_dict(blocks),
        config=cfg,
        loss_trace=np.zeros((0, 3)),
        teacher_provenance=meta.get("teacher", "unknown"),
    )


def write_loss_trace(path, student: TrainedStudent) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("epoch,total,score_da,norm_reg\n")
        for epoch, (total, da, reg) in enumerate(student.loss_trace.tolist()):
            fh.write(f"{epoch},{total!r},{da!r},{reg!r}\n")
