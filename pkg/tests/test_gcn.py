import numpy as np
import pytest
import scipy.sparse as sp

from lexicol.datasets import build_convolution_matrix
from lexicol.gcn import (
    GcnClassifier,
    TrainingError,
    backward,
    evaluate,
    forward,
    init_weights,
    load_model,
    loss,
    save_model,
)

from _synth import random_connected_graph, random_labeled_dataset


def identity_conv(n):
    return sp.eye(n, format="csr")


# --- initialization ----------------------------------------------------------


def test_init_deterministic_given_seed():
    a0, a1 = init_weights(20, 8, 3, seed=7)
    b0, b1 = init_weights(20, 8, 3, seed=7)
    assert a0.tobytes() == b0.tobytes()
    assert a1.tobytes() == b1.tobytes()
    c0, _ = init_weights(20, 8, 3, seed=8)
    assert a0.tobytes() != c0.tobytes()


def test_init_shapes_match_citation_scale_defaults():
    theta0, theta1 = init_weights(1433, 16, 7, seed=0)
    assert theta0.shape == (1433, 16)
    assert theta1.shape == (16, 7)
    bound = np.sqrt(6.0 / (1433 + 16))
    assert np.abs(theta0).max() <= bound


def test_init_mean_within_three_sigma():
    theta0, _ = init_weights(500, 200, 2, seed=3)  # 1e5 draws
    draws = theta0.size
    bound = np.sqrt(6.0 / (500 + 200))
    sigma_mean = bound / np.sqrt(3.0 * draws)
    assert abs(theta0.mean()) <= 3.0 * sigma_mean


# --- forward -----------------------------------------------------------------


def test_forward_single_node_hand_value():
    probs, cache = forward(np.asarray([[3.0]]), np.asarray([[5.0]]),
                           identity_conv(1), np.asarray([[2.0]]))
    assert cache["logits"][0, 0] == pytest.approx(30.0, abs=1e-12)
    assert probs[0, 0] == 1.0


def test_forward_zero_output_layer_is_uniform():
    theta0, _ = init_weights(4, 3, 5, seed=0)
    theta1 = np.zeros((3, 5))
    probs, _ = forward(theta0, theta1, identity_conv(6),
                       np.random.default_rng(0).random((6, 4)))
    assert np.allclose(probs, 1.0 / 5.0, atol=1e-12)


def test_forward_rows_sum_to_one():
    g = random_connected_graph(15, extra_edges=10, seed=0)
    conv = build_convolution_matrix(g)
    theta0, theta1 = init_weights(6, 4, 3, seed=1)
    x = np.random.default_rng(1).standard_normal((15, 6))
    probs, _ = forward(theta0, theta1, conv, x)
    assert np.max(np.abs(probs.sum(axis=1) - 1.0)) < 1e-9


def test_forward_dropout_zero_equals_eval_mode():
    theta0, theta1 = init_weights(5, 4, 2, seed=2)
    x = np.random.default_rng(2).random((8, 5))
    conv = identity_conv(8)
    train_probs, _ = forward(theta0, theta1, conv, x, dropout_rate=0.0,
                             train_mode=True, seed=1, epoch=3)
    eval_probs, _ = forward(theta0, theta1, conv, x)
    assert train_probs.tobytes() == eval_probs.tobytes()


def test_forward_dropout_masks_keyed_by_epoch():
    theta0, theta1 = init_weights(5, 4, 2, seed=2)
    x = np.random.default_rng(3).random((8, 5))
    conv = identity_conv(8)
    a, _ = forward(theta0, theta1, conv, x, 0.5, True, seed=1, epoch=0)
    b, _ = forward(theta0, theta1, conv, x, 0.5, True, seed=1, epoch=0)
    c, _ = forward(theta0, theta1, conv, x, 0.5, True, seed=1, epoch=1)
    assert a.tobytes() == b.tobytes()
    assert a.tobytes() != c.tobytes()


def test_forward_permutation_equivariance():
    g = random_connected_graph(12, extra_edges=8, seed=4)
    conv = build_convolution_matrix(g).matrix
    theta0, theta1 = init_weights(5, 4, 3, seed=5)
    x = np.random.default_rng(4).standard_normal((12, 5))
    probs, _ = forward(theta0, theta1, conv, x)
    perm = np.random.default_rng(5).permutation(12)
    conv_p = conv[perm][:, perm]
    probs_p, _ = forward(theta0, theta1, conv_p, x[perm])
    assert np.max(np.abs(probs_p - probs[perm])) < 1e-12


# --- loss --------------------------------------------------------------------


def test_loss_perfect_predictions_zero():
    probs = np.eye(3)
    labels = np.asarray([0, 1, 2])
    assert loss(probs, labels, [0, 1, 2], np.zeros((2, 2)), 0.0) == 0.0


def test_loss_uniform_predictions_log_k():
    k = 4
    probs = np.full((5, k), 1.0 / k)
    labels = np.asarray([0, 1, 2, 3, 0])
    val = loss(probs, labels, [0, 1, 2, 3, 4], np.zeros((2, 2)), 0.0)
    assert val == pytest.approx(np.log(k), abs=1e-12)


def test_loss_l2_term_value():
    probs = np.eye(2)
    labels = np.asarray([0, 1])
    val = loss(probs, labels, [0, 1], np.asarray([[2.0]]), 5e-4)
    assert val == pytest.approx(1e-3, abs=1e-15)


def test_loss_empty_mask_rejected():
    with pytest.raises(ValueError):
        loss(np.eye(2), np.asarray([0, 1]), [], np.zeros((1, 1)), 0.0)


# --- gradients ---------------------------------------------------------------


def _loss_at(theta0, theta1, conv, x, labels, mask, l2_weight):
    probs, cache = forward(theta0, theta1, conv, x)
    return loss(probs, labels, mask, theta0, l2_weight)


def test_gradients_match_finite_differences():
    rng = np.random.default_rng(11)
    for trial in range(6):
        n = int(rng.integers(3, 7))
        d = int(rng.integers(2, 6))
        h = int(rng.integers(2, 5))
        k = int(rng.integers(2, 4))
        g = random_connected_graph(n, extra_edges=2, seed=trial)
        conv = build_convolution_matrix(g)
        x = rng.standard_normal((n, d))
        labels = rng.integers(k, size=n)
        mask = np.arange(n)[: max(2, n - 1)]
        theta0, theta1 = init_weights(d, h, k, seed=trial)
        l2 = 5e-4
        probs, cache = forward(theta0, theta1, conv, x)
        g0, g1 = backward(cache, labels, mask, theta0, theta1, l2)
        eps = 1e-5
        for theta, grad in ((theta0, g0), (theta1, g1)):
            flat = theta.ravel()
            for idx in range(flat.size):
                orig = flat[idx]
                flat[idx] = orig + eps
                up = _loss_at(theta0, theta1, conv, x, labels, mask, l2)
                flat[idx] = orig - eps
                down = _loss_at(theta0, theta1, conv, x, labels, mask, l2)
                flat[idx] = orig
                numeric = (up - down) / (2 * eps)
                analytic = grad.ravel()[idx]
                rel = abs(analytic - numeric) / max(abs(analytic),
                                                    abs(numeric), 1e-6)
                assert rel <= 1e-4, (trial, idx, analytic, numeric)


# --- evaluate ----------------------------------------------------------------


def test_evaluate_perfect_and_tied_predictions():
    theta0 = np.asarray([[1.0]])
    theta1 = np.asarray([[2.0, 0.0]])
    x = np.asarray([[1.0], [1.0], [-1.0], [-1.0]])
    labels = np.asarray([0, 0, 0, 1])
    acc = evaluate(theta0, theta1, identity_conv(4), x, labels, [0, 1, 2, 3])
    assert acc == 0.75  # rows 2,3 have tied zero logits -> argmax class 0


def test_evaluate_zero_weights_predicts_class_zero():
    theta0 = np.zeros((3, 2))
    theta1 = np.zeros((2, 3))
    x = np.random.default_rng(6).random((6, 3))
    labels = np.asarray([0, 0, 1, 1, 2, 2])
    acc = evaluate(theta0, theta1, identity_conv(6), x, labels, np.arange(6))
    assert acc == pytest.approx(2.0 / 6.0)


def test_evaluate_empty_mask_rejected():
    with pytest.raises(ValueError):
        evaluate(np.zeros((2, 2)), np.zeros((2, 2)), identity_conv(3),
                 np.zeros((3, 2)), np.zeros(3, dtype=int), [])


# --- training ----------------------------------------------------------------


def small_problem(seed=0, n=14):
    ds = random_labeled_dataset(n=n, num_classes=2, d=4, seed=seed,
                                labels_per_class=3)
    conv = build_convolution_matrix(ds.graph)
    y = ds.train_label_vector()
    return ds, conv, y


def test_zero_learning_rate_keeps_weights():
    ds, conv, y = small_problem()
    model = GcnClassifier(hidden_units=4, learning_rate=0.0, max_epochs=5,
                          dropout_rate=0.0, seed=1, num_classes=2)
    model.fit(ds.features, y, conv=conv)
    theta0, theta1 = init_weights(ds.num_features, 4, 2, seed=1)
    assert model.theta0_.tobytes() == theta0.tobytes()
    assert model.theta1_.tobytes() == theta1.tobytes()


def test_training_reduces_loss():
    ds, conv, y = small_problem(seed=2)
    model = GcnClassifier(hidden_units=8, max_epochs=60, dropout_rate=0.0,
                          seed=2, num_classes=2)
    model.fit(ds.features, y, conv=conv)
    hist = model.history_.train_loss
    assert hist[-1] < hist[0]
    assert len(hist) == 60


def test_loss_decreases_on_separable_fixture():
    # two isolated cliques, one per class, distinct features: separable
    from lexicol.datasets import Graph

    edges = [(0, 1), (0, 2), (1, 2), (3, 4), (3, 5), (4, 5)]
    g = Graph.from_edges(6, edges)
    conv = build_convolution_matrix(g)
    x = np.zeros((6, 2), dtype=np.float64)
    x[:3, 0] = 1.0
    x[3:, 1] = 1.0
    y = np.asarray([0, 0, 0, 1, 1, 1])
    model = GcnClassifier(hidden_units=4, max_epochs=12, dropout_rate=0.0,
                          seed=0, num_classes=2)
    model.fit(x, y, conv=conv)
    losses = model.history_.train_loss
    assert losses[10] < losses[0]
    assert all(b <= a + 1e-9 for a, b in zip(losses[:10], losses[1:11]))


def test_single_node_two_class_training():
    conv = identity_conv(1)
    x = np.asarray([[1.0]], dtype=np.float64)
    y = np.asarray([1])
    model = GcnClassifier(hidden_units=2, max_epochs=200, dropout_rate=0.0,
                          seed=4, num_classes=2)
    model.fit(x, y, conv=conv)
    assert model.history_.train_loss[-1] < model.history_.train_loss[0]


def test_training_deterministic_with_dropout():
    ds, conv, y = small_problem(seed=3)
    runs = []
    for _ in range(2):
        model = GcnClassifier(hidden_units=4, max_epochs=25, dropout_rate=0.5,
                              seed=9, num_classes=2)
        model.fit(ds.features, y, conv=conv)
        runs.append((model.theta0_.tobytes(), model.history_.train_loss))
    assert runs[0] == runs[1]


def test_training_error_on_blowup():
    ds, conv, y = small_problem(seed=5)
    model = GcnClassifier(hidden_units=4, max_epochs=50, dropout_rate=0.0,
                          seed=5, num_classes=2, learning_rate=1e200)
    with pytest.raises(TrainingError), np.errstate(over="ignore"):
        model.fit(ds.features, y, conv=conv)


def test_validation_history_and_early_stopping():
    ds, conv, _ = small_problem(seed=6, n=20)
    y = ds.labels.copy()  # all labels known; val carved out below
    val_ids = np.asarray([10, 11, 12, 13])
    model = GcnClassifier(hidden_units=4, max_epochs=80, dropout_rate=0.0,
                          seed=6, num_classes=2, early_stopping=True,
                          patience=3)
    model.fit(ds.features, y, conv=conv, val_ids=val_ids)
    hist = model.history_
    assert len(hist.val_loss) == len(hist.train_loss) <= 80
    assert all(0.0 <= acc <= 1.0 for acc in hist.val_accuracy)


def test_fit_requires_conv_and_labels():
    ds, conv, y = small_problem(seed=7)
    model = GcnClassifier(num_classes=2)
    with pytest.raises(ValueError):
        model.fit(ds.features, y)
    with pytest.raises(ValueError):
        model.fit(ds.features, np.full(ds.num_nodes, -1), conv=conv)


def test_predict_and_score_roundtrip():
    ds, conv, y = small_problem(seed=8)
    model = GcnClassifier(hidden_units=4, max_epochs=40, dropout_rate=0.0,
                          seed=8, num_classes=2)
    model.fit(ds.features, y, conv=conv)
    proba = model.predict_proba(ds.features, conv=conv)
    assert proba.shape == (ds.num_nodes, 2)
    preds = model.predict(ds.features, conv=conv)
    acc = model.score(ds.features, ds.labels, conv=conv,
                      node_ids=np.arange(ds.num_nodes))
    assert acc == pytest.approx(np.mean(preds == ds.labels))


# --- checkpoints -------------------------------------------------------------


def test_model_checkpoint_round_trip(tmp_path):
    theta0, theta1 = init_weights(9, 4, 3, seed=12)
    path = tmp_path / "model.bin"
    save_model(path, theta0, theta1)
    assert path.read_bytes()[:4] == b"LXGM"
    back0, back1 = load_model(path)
    assert back0.tobytes() == theta0.tobytes()
    assert back1.tobytes() == theta1.tobytes()


def test_model_checkpoint_rejects_truncation(tmp_path):
    theta0, theta1 = init_weights(5, 3, 2, seed=13)
    path = tmp_path / "model.bin"
    save_model(path, theta0, theta1)
    path.write_bytes(path.read_bytes()[:-8])
    with pytest.raises(ValueError):
        load_model(path)
