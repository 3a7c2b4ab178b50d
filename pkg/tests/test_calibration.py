import numpy as np
import pytest

from graphnc.calibration import (
    TrainConfig,
    default_learning_rate,
    embed,
    infer,
    load_student,
    norm_reg_loss,
    save_student,
    score_da_loss,
    train_student,
    write_loss_trace,
)
from graphnc.errors import DimensionError, TrainingError
from graphnc.gnn import forward, init_student
from graphnc.graph import normalize_adjacency
from graphnc.graph import split_labeled_normals
from graphnc.metrics import auroc
from graphnc.synthetic import SyntheticConfig, generate_synthetic
from graphnc.teachers import TeacherConfig, train_ocgnn

from checks import check_objective_gradients, oracle_distillation
from conftest import random_graph


def test_score_da_examples():
    loss, grad = score_da_loss([0.2, 0.7], [0.2, 0.7])
    assert loss == 0.0 and np.all(grad == 0)
    loss, grad = score_da_loss([1.0, 0.0], [0.0, 1.0])
    assert loss == 1.0 and grad.tolist() == [1.0, -1.0]


def test_score_da_length_mismatch():
    with pytest.raises(DimensionError):
        score_da_loss([0.1, 0.2], [0.1])


def test_score_da_finite_difference():
    rng = np.random.default_rng(0)
    ys, yt = rng.random(100), rng.random(100)
    _, grad = score_da_loss(ys, yt)
    step = 1e-6
    num = np.empty(100)
    for i in range(100):
        hi, lo = ys.copy(), ys.copy()
        hi[i] += step
        lo[i] -= step
        num[i] = (score_da_loss(hi, yt)[0] - score_da_loss(lo, yt)[0]) / (2 * step)
    assert np.max(np.abs(num - grad)) < 1e-8


def test_norm_reg_examples():
    h = np.random.default_rng(1).normal(size=(5, 3))
    assert norm_reg_loss(h, h, np.ones(5, dtype=bool))[0] == 0.0
    loss, _, _ = norm_reg_loss(np.array([[1.0, 0.0]]), np.zeros((1, 2)), [True])
    assert loss == 1.0


def test_norm_reg_empty_mask():
    with pytest.raises(TrainingError):
        norm_reg_loss(np.zeros((3, 2)), np.zeros((3, 2)), [False] * 3)


def test_norm_reg_finite_difference():
    rng = np.random.default_rng(2)
    h, ht = rng.normal(size=(20, 5)), rng.normal(size=(20, 5))
    lab = np.zeros(20, dtype=bool)
    lab[rng.choice(20, 6, replace=False)] = True
    loss, gh, ght = norm_reg_loss(h, ht, lab)
    ref = sum(((h[i] - ht[i]) ** 2).sum() for i in np.flatnonzero(lab)) / 6
    assert abs(loss - ref) < 1e-12
    assert np.all(gh[~lab] == 0) and np.all(ght[~lab] == 0)
    step = 1e-6
    for which, g in ((0, gh), (1, ght)):
        num = np.zeros_like(h)
        for idx in np.ndindex(h.shape):
            views = [h.copy(), ht.copy()], [h.copy(), ht.copy()]
            views[0][which][idx] += step
            views[1][which][idx] -= step
            num[idx] = (norm_reg_loss(*views[0], lab)[0] - norm_reg_loss(*views[1], lab)[0]) / (2 * step)
        assert np.max(np.abs(num - g)) < 1e-8


@pytest.mark.parametrize("alpha", [0.0, 0.01, 1.0])
def test_objective_gradient(alpha):
    assert check_objective_gradients(alpha) < 1e-4


def test_default_learning_rate_rule():
    assert default_learning_rate(64) == 5e-3
    assert default_learning_rate(33) == 5e-3
    assert default_learning_rate(32) == 5e-4
    assert TrainConfig().resolved(100).learning_rate == 5e-3


def test_config_guards():
    for kw in ({"alpha": -1}, {"omega": 1.5}, {"epochs": 0}, {"learning_rate": 0}):
        with pytest.raises(ValueError):
            TrainConfig(**kw)


def _setup(seed=0, n=40, m=5):
    g = random_graph(n, m, seed=seed)
    return g, normalize_adjacency(g), np.random.default_rng(seed).random(n)


def test_trace_shape_and_alpha_zero_column():
    g, a, y = _setup()
    st = train_student(g, a, y, TrainConfig(alpha=0.0, epochs=20, hidden_dim=4))
    assert st.loss_trace.shape == (20, 3)
    assert np.all(st.loss_trace[:, 2] == 0)
    assert np.all(np.isfinite(st.loss_trace))


def test_omega_zero_kills_norm_reg():
    g, a, y = _setup(1)
    runs = [train_student(g, a, y, TrainConfig(alpha=al, omega=0.0, epochs=15, hidden_dim=4)) for al in (0.01, 1.0)]
    for r in runs:
        assert np.all(r.loss_trace[:, 2] == 0)
    assert np.array_equal(runs[0].loss_trace[:, 1], runs[1].loss_trace[:, 1])
    for k in ("W1", "W2", "head_w"):
        assert np.array_equal(getattr(runs[0].params, k), getattr(runs[1].params, k))


def test_alpha_zero_invariant_to_omega():
    g, a, y = _setup(2)
    r = [train_student(g, a, y, TrainConfig(alpha=0.0, omega=om, epochs=15, hidden_dim=4)) for om in (0.0, 0.3, 0.9)]
    for other in r[1:]:
        assert np.array_equal(r[0].loss_trace, other.loss_trace)
        assert np.array_equal(r[0].params.W1, other.params.W1)


def test_teacher_never_modified():
    g, a, y = _setup(3)
    y = np.ascontiguousarray(y)
    before = y.copy()
    train_student(g, a, y, TrainConfig(epochs=10, hidden_dim=4))
    assert y.tobytes() == before.tobytes()


def test_training_deterministic():
    g, a, y = _setup(4)
    cfg = TrainConfig(epochs=12, hidden_dim=4, seed=7)
    r1, r2 = train_student(g, a, y, cfg), train_student(g, a, y, cfg)
    assert np.array_equal(r1.loss_trace, r2.loss_trace)
    assert np.array_equal(infer(r1, g, a), infer(r2, g, a))


def test_resample_mask_changes_run():
    g, a, y = _setup(5)
    fixed = train_student(g, a, y, TrainConfig(epochs=10, hidden_dim=4, alpha=1.0))
    fresh = train_student(g, a, y, TrainConfig(epochs=10, hidden_dim=4, alpha=1.0, resample_mask_each_epoch=True))
    assert np.array_equal(fixed.loss_trace[0], fresh.loss_trace[0])
    assert not np.array_equal(fixed.loss_trace, fresh.loss_trace)


def test_alpha_positive_needs_labeled():
    g = random_graph(10, 3, seed=0, labels=False)
    a = normalize_adjacency(g)
    with pytest.raises(TrainingError):
        train_student(g, a, np.zeros(10), TrainConfig(epochs=2))
    train_student(g, a, np.zeros(10), TrainConfig(alpha=0.0, epochs=2))


def test_teacher_length_mismatch():
    g, a, _ = _setup()
    with pytest.raises(DimensionError):
        train_student(g, a, np.zeros(3), TrainConfig(epochs=1))


def test_loss_decreases():
    g, a, y = _setup(6, n=60)
    st = train_student(g, a, y, TrainConfig(epochs=150, hidden_dim=8, learning_rate=5e-3))
    assert st.loss_trace[-1, 0] < st.loss_trace[0, 0]


def test_default_run_loss_trace():
    g = split_labeled_normals(generate_synthetic(SyntheticConfig(num_nodes=2000), 1), 0.15, 1)
    a = normalize_adjacency(g)
    st = train_student(g, a, train_ocgnn(g, TeacherConfig(seed=1)), TrainConfig(seed=1))
    trace = st.loss_trace
    assert trace[-1, 0] < trace[0, 0]
    windows = trace[:, 1].reshape(-1, 50).mean(axis=1)
    assert np.all(np.diff(windows) <= 0)


def test_oracle_teacher_is_learnable():
    assert oracle_distillation(1) >= 0.99


def test_untrained_student_near_chance():
    vals = []
    for seed in range(20):
        rng = np.random.default_rng(seed)
        g = random_graph(60, 6, seed=seed, labels=False)
        y = np.zeros(60, dtype=int)
        y[rng.permutation(60)[:30]] = 1
        s = forward(normalize_adjacency(g), g.attributes, init_student(6, 8, seed)).scores.ravel()
        assert np.all(np.abs(s - 0.5) < 0.5)
        vals.append(auroc(s, y))
    assert abs(np.mean(vals) - 0.5) < 0.1


def test_infer_dimension_check():
    g, a, y = _setup()
    st = train_student(g, a, y, TrainConfig(epochs=2, hidden_dim=4))
    other = random_graph(40, 3, seed=1)
    with pytest.raises(DimensionError):
        infer(st, other, normalize_adjacency(other))
    assert embed(st, g, a).shape == (40, 4)


def test_checkpoint_roundtrip(tmp_path):
    g, a, y = _setup()
    st = train_student(g, a, y, TrainConfig(epochs=5, hidden_dim=4, seed=3))
    save_student(tmp_path / "student.ckpt", st)
    back = load_student(tmp_path / "student.ckpt")
    assert np.array_equal(infer(back, g, a), infer(st, g, a))
    assert back.config.alpha == st.config.alpha and back.config.seed == 3
    assert back.config.learning_rate == st.config.learning_rate


def test_loss_trace_csv(tmp_path):
    g, a, y = _setup()
    st = train_student(g, a, y, TrainConfig(epochs=4, hidden_dim=4))
    write_loss_trace(tmp_path / "trace.csv", st)
    lines = (tmp_path / "trace.csv").read_text().splitlines()
    assert lines[0] == "epoch,total,score_da,norm_reg" and len(lines) == 5
    row = [float(v) for v in lines[2].split(",")]
    assert row[1:] == st.loss_trace[1].tolist()
