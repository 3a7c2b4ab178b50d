"""Normality calibration for semi-supervised graph anomaly detection.

A frozen teacher detector provides per-node anomaly scores; a two-layer GCN
student is trained to match those scores over all nodes while keeping the
representations of labeled normal nodes stable under attribute masking.
"""

from graphnc.calibration import TrainConfig, TrainedStudent, infer, train_student
from graphnc.graph import (
    AttributedGraph,
    load_graph,
    mask_attributes,
    normalize_adjacency,
    save_graph,
    split_labeled_normals,
)
from graphnc.metrics import EvalReport, auprc, auroc, evaluate
from graphnc.synthetic import SyntheticConfig, generate_synthetic
from graphnc.teachers import TeacherConfig, TeacherScores, load_teacher_scores, train_dominant, train_ocgnn

__version__ = "0.1.0"

__all__ = [
    "AttributedGraph",
    "EvalReport",
    "SyntheticConfig",
    "TeacherConfig",
    "TeacherScores",
    "TrainConfig",
    "TrainedStudent",
    "auprc",
    "auroc",
    "evaluate",
    "generate_synthetic",
    "infer",
    "load_graph",
    "load_teacher_scores",
    "mask_attributes",
    "normalize_adjacency",
    "save_graph",
    "split_labeled_normals",
    "train_dominant",
    "train_ocgnn",
    "train_student",
]
