"""Tests for the photonic classifier with pseudo photon-number readout."""

import numpy as np
import pytest
from _oracles import evolve_state_vector

from lopsim.fock import FockState
from lopsim.qnn import (
    ENCODING_MODES,
    INPUT_MODES,
    N_FEATURES,
    N_MODES,
    N_THETA,
    ClassifierModel,
    QnnConfig,
    classifier_circuit,
    load_iris_dataset,
    pattern_distribution,
    pattern_space,
    qnn_forward,
    qnn_predict,
    qnn_train,
    stratified_split,
)

RNG = np.random.default_rng(424)

TOY_FEATURES = np.array(
    [
        [0.0, 0.0, 0.1, 0.0],
        [0.1, 0.0, 0.0, 0.1],
        [0.0, 0.1, 0.1, 0.1],
        [0.1, 0.1, 0.0, 0.0],
        [1.0, 1.0, 0.9, 1.0],
        [0.9, 1.0, 1.0, 0.9],
        [1.0, 0.9, 0.9, 1.0],
        [0.9, 0.9, 1.0, 1.0],
    ]
)
TOY_LABELS = np.array([0, 0, 0, 0, 1, 1, 1, 1])


def unit_model(lambdas):
    """Model with identity feature scaling for direct phase control."""
    return ClassifierModel(
        theta=RNG.uniform(0.0, 2.0 * np.pi, N_THETA),
        lambdas=lambdas,
        feature_low=np.zeros(4),
        feature_span=np.ones(4),
    )


def merged_pattern_of(state):
    occ = state.occupations
    left = sum(occ[m] > 0 for m in (0, 1, 2))
    right = sum(occ[m] > 0 for m in (6, 7, 8))
    return (left, int(occ[3] > 0), int(occ[4] > 0), int(occ[5] > 0), right)


def test_pattern_space_structure():
    patterns = pattern_space()
    assert len(patterns) == 37
    assert len(set(patterns)) == 37
    assert list(patterns) == sorted(patterns)
    for left, b3, b4, b5, right in patterns:
        assert 0 <= left <= 3 and 0 <= right <= 3
        assert b3 in (0, 1) and b4 in (0, 1) and b5 in (0, 1)
        assert 1 <= left + b3 + b4 + b5 + right <= 3


def test_merge_preserves_total_probability():
    for _ in range(5):
        theta = RNG.uniform(0.0, 2.0 * np.pi, N_THETA)
        phases = RNG.uniform(0.0, np.pi, N_FEATURES)
        merged = pattern_distribution(theta, phases)
        assert merged.sum() == pytest.approx(1.0, abs=1e-12)
        assert np.all(merged >= 0.0)


def test_classifier_circuit_leaves_idle_modes_alone():
    theta = RNG.uniform(0.0, 2.0 * np.pi, N_THETA)
    phases = RNG.uniform(0.0, np.pi, N_FEATURES)
    circuit = classifier_circuit(theta, phases)
    assert circuit.m == N_MODES
    u = circuit.unitary().matrix
    assert np.allclose(u[9:, 9:], np.eye(3), atol=1e-12)
    assert np.allclose(u[9:, :9], 0.0, atol=1e-12)
    assert np.allclose(u[:9, 9:], 0.0, atol=1e-12)


def test_classifier_circuit_validation():
    with pytest.raises(ValueError, match="trainable"):
        classifier_circuit(np.zeros(16), np.zeros(4))
    with pytest.raises(ValueError, match="encoding"):
        classifier_circuit(np.zeros(N_THETA), np.zeros(3))


def test_forward_zero_weights_gives_zero():
    model = unit_model(np.zeros((3, len(pattern_space()))))
    x = RNG.uniform(0.0, 1.0, 4)
    assert np.array_equal(qnn_forward(model, x), np.zeros(3))


def test_forward_one_hot_weight_reads_pattern_probability():
    pattern_index = 11
    lambdas = np.zeros((2, len(pattern_space())))
    lambdas[1, pattern_index] = 1.0
    model = unit_model(lambdas)
    x = RNG.uniform(0.0, 1.0, 4)
    probs = pattern_distribution(model.theta, model.encode(x))
    values = qnn_forward(model, x)
    assert values[0] == 0.0
    assert values[1] == pytest.approx(probs[pattern_index], abs=1e-15)


def test_forward_matches_state_vector_oracle():
    theta = RNG.uniform(0.0, 2.0 * np.pi, N_THETA)
    phases = RNG.uniform(0.0, np.pi, N_FEATURES)
    u = classifier_circuit(theta, phases).unitary().matrix
    amplitudes = evolve_state_vector(u, FockState.from_modes(N_MODES, INPUT_MODES))
    expected = {}
    for state, amp in amplitudes.items():
        expected[merged_pattern_of(state)] = expected.get(
            merged_pattern_of(state), 0.0
        ) + abs(amp) ** 2
    merged = pattern_distribution(theta, phases)
    for k, pattern in enumerate(pattern_space()):
        assert merged[k] == pytest.approx(expected.get(pattern, 0.0), abs=1e-10)
    lambdas = RNG.normal(size=(3, len(pattern_space())))
    model = ClassifierModel(theta, lambdas, np.zeros(4), np.ones(4))
    reference = lambdas @ merged
    assert np.allclose(qnn_forward(model, phases / np.pi), reference, atol=1e-10)


def test_sampled_forward_within_shot_noise():
    lambdas = RNG.normal(size=(3, len(pattern_space())))
    model = unit_model(lambdas)
    x = RNG.uniform(0.0, 1.0, 4)
    exact = qnn_forward(model, x)
    probs = pattern_distribution(model.theta, model.encode(x))
    shots = 50000
    sampled = qnn_forward(model, x, shots=shots, rng=np.random.default_rng(8))
    sigma = np.sqrt((lambdas**2) @ probs / shots)
    assert np.all(np.abs(sampled - exact) <= 3.0 * sigma + 1e-12)


def test_sampled_distribution_is_seeded_and_normalized():
    theta = RNG.uniform(0.0, 2.0 * np.pi, N_THETA)
    phases = RNG.uniform(0.0, np.pi, N_FEATURES)
    a = pattern_distribution(theta, phases, shots=2000, rng=np.random.default_rng(5))
    b = pattern_distribution(theta, phases, shots=2000, rng=np.random.default_rng(5))
    assert np.array_equal(a, b)
    assert a.sum() == pytest.approx(1.0, abs=1e-12)
    with pytest.raises(ValueError, match="shots"):
        pattern_distribution(theta, phases, shots=0)


def test_encode_scales_and_clips():
    model = ClassifierModel(
        theta=np.zeros(N_THETA),
        lambdas=np.zeros((2, len(pattern_space()))),
        feature_low=np.array([0.0, 0.0, 1.0, -1.0]),
        feature_span=np.array([2.0, 1.0, 1.0, 2.0]),
    )
    phases = model.encode([1.0, 2.0, 0.5, -1.0])
    assert phases[0] == pytest.approx(np.pi / 2.0)
    assert phases[1] == pytest.approx(np.pi)
    assert phases[2] == 0.0
    assert phases[3] == 0.0


def test_model_validation():
    n_patterns = len(pattern_space())
    good = dict(
        theta=np.zeros(N_THETA),
        lambdas=np.zeros((3, n_patterns)),
        feature_low=np.zeros(4),
        feature_span=np.ones(4),
    )
    with pytest.raises(ValueError, match="theta"):
        ClassifierModel(**{**good, "theta": np.zeros(8)})
    with pytest.raises(ValueError, match="lambdas"):
        ClassifierModel(**{**good, "lambdas": np.zeros((3, 5))})
    with pytest.raises(ValueError, match="finite"):
        ClassifierModel(**{**good, "lambdas": np.full((3, n_patterns), np.nan)})
    with pytest.raises(ValueError, match="span"):
        ClassifierModel(**{**good, "feature_span": np.zeros(4)})
    with pytest.raises(ValueError, match="class name"):
        ClassifierModel(**good, class_names=("a", "b"))
    model = ClassifierModel(**good)
    with pytest.raises(ValueError, match="features"):
        model.encode([1.0, 2.0])


def test_load_iris_dataset():
    features, labels, names = load_iris_dataset()
    assert features.shape == (150, 4)
    assert np.array_equal(np.bincount(labels), [50, 50, 50])
    assert names == ("setosa", "versicolor", "virginica")
    assert features[:, 0].min() >= 4.0 and features[:, 0].max() <= 8.0


def test_stratified_split_is_proportional():
    labels = np.repeat([0, 1, 2], 50)
    train_idx, test_idx = stratified_split(labels, 38, np.random.default_rng(1))
    assert len(train_idx) == 112 and len(test_idx) == 38
    assert len(np.intersect1d(train_idx, test_idx)) == 0
    counts = np.bincount(labels[test_idx])
    assert sorted(counts) == [12, 13, 13]
    with pytest.raises(ValueError, match="n_test"):
        stratified_split(labels, 150, np.random.default_rng(1))


def test_toy_training_reaches_perfect_accuracy():
    config = QnnConfig(outer_iterations=8, seed=3, n_test=0)
    model, metrics = qnn_train(TOY_FEATURES, TOY_LABELS, config)
    assert metrics["train_accuracy"] == 1.0
    assert metrics["test_accuracy"] is None
    assert metrics["n_train"] == 8 and metrics["n_test"] == 0
    assert np.array_equal(qnn_predict(model, TOY_FEATURES), TOY_LABELS)
    confusion = np.array(metrics["confusion_train"])
    assert confusion.sum() == 8
    assert np.trace(confusion) == 8


def test_training_is_deterministic_given_seed():
    config = QnnConfig(
        outer_iterations=2, evaluations_per_iteration=2, pool_size=10, seed=7, n_test=2
    )
    model_a, metrics_a = qnn_train(TOY_FEATURES, TOY_LABELS, config)
    model_b, metrics_b = qnn_train(TOY_FEATURES, TOY_LABELS, config)
    assert np.array_equal(model_a.theta, model_b.theta)
    assert np.array_equal(model_a.lambdas, model_b.lambdas)
    assert metrics_a == metrics_b


def test_training_input_validation():
    config = QnnConfig(outer_iterations=1, n_test=0)
    with pytest.raises(ValueError, match="two classes"):
        qnn_train(TOY_FEATURES, np.zeros(8, dtype=int), config)
    with pytest.raises(ValueError, match="labels must be"):
        qnn_train(TOY_FEATURES, np.array([0, 0, 0, 0, 2, 2, 2, 2]), config)
    with pytest.raises(ValueError, match="features"):
        qnn_train(TOY_FEATURES[:, :3], TOY_LABELS, config)
    with pytest.raises(ValueError, match="one label"):
        qnn_train(TOY_FEATURES, TOY_LABELS[:5], config)
    with pytest.raises(ValueError, match="class name"):
        qnn_train(TOY_FEATURES, TOY_LABELS, config, class_names=("only",))


def test_small_iris_subset_trains_above_chance():
    features, labels, _ = load_iris_dataset()
    subset = np.concatenate([np.arange(0, 10), np.arange(50, 60), np.arange(100, 110)])
    config = QnnConfig(
        outer_iterations=3, evaluations_per_iteration=3, pool_size=12, seed=2, n_test=6
    )
    model, metrics = qnn_train(features[subset], labels[subset], config)
    assert metrics["n_train"] == 24 and metrics["n_test"] == 6
    assert metrics["train_accuracy"] >= 0.8
    assert model.n_classes == 3
