"""Shared checks used by the unit tests and the acceptance suite."""

import numpy as np

from graphnc.calibration import TrainConfig, infer, norm_reg_loss, score_da_loss, train_student
from graphnc.gnn import StudentParams, add_grads, backward, forward, init_student
from graphnc.graph import mask_attributes, normalize_adjacency, split_labeled_normals
from graphnc.metrics import auroc
from graphnc.synthetic import SyntheticConfig, generate_synthetic

from conftest import random_graph


def full_objective(a_hat, x, x_masked, y_t, lab, alpha, p):
    c = forward(a_hat, x, p)
    da, d_s = score_da_loss(c.scores, y_t)
    cm = forward(a_hat, x_masked, p)
    reg, d_h, d_hm = norm_reg_loss(c.embeddings, cm.embeddings, lab)
    grads = add_grads(backward(c, p, d_s, alpha * d_h), backward(cm, p, None, alpha * d_hm))
    return da + alpha * reg, grads


def check_objective_gradients(alpha, seed=0):
    g = random_graph(10, 4, p=0.3, seed=seed, labeled_frac=0.6)
    a = normalize_adjacency(g)
    x_m = mask_attributes(g, 0.5, seed)
    y_t = np.random.default_rng(seed).random(10)
    p = init_student(4, 3, seed)
    _, grads = full_objective(a, g.attributes, x_m, y_t, g.labeled_normal, alpha, p)
    blocks = p.as_dict()
    step = 1e-6
    worst = 0.0
    for name, value in blocks.items():
        for idx in np.ndindex(value.shape):
            hi = {k: v.copy() for k, v in blocks.items()}
            lo = {k: v.copy() for k, v in blocks.items()}
            hi[name][idx] += step
            lo[name][idx] -= step
            f_hi = full_objective(a, g.attributes, x_m, y_t, g.labeled_normal, alpha, StudentParams.from_dict(hi))[0]
            f_lo = full_objective(a, g.attributes, x_m, y_t, g.labeled_normal, alpha, StudentParams.from_dict(lo))[0]
            num = (f_hi - f_lo) / (2 * step)
            ana = grads[name][idx]
            worst = max(worst, abs(num - ana) / max(abs(num), abs(ana), 1e-6))
    return worst


def oracle_distillation(seed, epochs=300):
    """Student trained on ground-truth labels as teacher; returns AUROC on the unlabeled set.

    Uses far-center contextual anomalies so the labels are separable by the student.
    """
    g = split_labeled_normals(generate_synthetic(SyntheticConfig(num_nodes=500, contextual_mode="far_center"), seed), 0.15, seed)
    a = normalize_adjacency(g)
    st = train_student(g, a, g.labels.astype(float), TrainConfig(epochs=epochs, seed=seed))
    unl = ~g.labeled_normal
    return auroc(infer(st, g, a)[unl], g.labels[unl])
