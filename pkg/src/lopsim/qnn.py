"""Photonic neural-network classifier with pseudo photon-number readout.

Three photons interfere in a five-mode region of a twelve-mode chip:
a trainable mesh block, four feature-encoding phases, and a second
trainable block (32 trainable phases in total).  A fixed final layer
redirects the outer modes of the region into two unused neighbor modes
each, so threshold detectors resolve up to three photons there; the
detected click patterns are merged into pseudo photon-number outcomes
and contracted with per-class weights to form the classifier output.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cache
from importlib import resources
from typing import Sequence

import numpy as np

from .fock import FockState, enumerate_basis, strong_simulate
from .mesh import DirectionalCoupler, PhaseShifter, PhotonicCircuit

__all__ = [
    "ENCODING_MODES",
    "INPUT_MODES",
    "N_FEATURES",
    "N_MODES",
    "N_THETA",
    "ClassifierModel",
    "QnnConfig",
    "classifier_circuit",
    "load_iris_dataset",
    "pattern_distribution",
    "pattern_space",
    "qnn_forward",
    "qnn_predict",
    "qnn_train",
    "stratified_split",
]

#: Chip size and photon input positions.
N_MODES = 12
INPUT_MODES = (2, 4, 6)
N_PHOTONS = 3

#: Trainable phases (two blocks of eight two-phase cells).
N_THETA = 32
N_FEATURES = 4

#: Cell pairs of one trainable block, column by column.
_BLOCK_PAIRS = ((2, 3), (4, 5), (3, 4), (5, 6), (2, 3), (4, 5), (3, 4), (5, 6))

#: Modes whose phase shifters carry the scaled features.
ENCODING_MODES = (3, 4, 5, 6)

#: Pseudo photon-number groups and the plain threshold modes between.
_LEFT_GROUP = (0, 1, 2)
_MIDDLE_MODES = (3, 4, 5)
_RIGHT_GROUP = (6, 7, 8)


@cache
def pattern_space() -> tuple[tuple[int, int, int, int, int], ...]:
    """Detected outcome patterns in canonical (lexicographic) order.

    A pattern is (left count, click on mode 3, click on mode 4, click on
    mode 5, right count) where the counts are pseudo photon numbers from
    the redirect groups.  Three photons produce one to three clicks.
    """
    patterns = []
    for left in range(4):
        for b3 in range(2):
            for b4 in range(2):
                for b5 in range(2):
                    for right in range(4):
                        total = left + b3 + b4 + b5 + right
                        if 1 <= total <= N_PHOTONS:
                            patterns.append((left, b3, b4, b5, right))
    return tuple(patterns)


def _merge_state(state: FockState) -> tuple[int, int, int, int, int]:
    """Threshold-detect a Fock state and merge the redirect groups."""
    occ = state.occupations
    left = sum(occ[mode] > 0 for mode in _LEFT_GROUP)
    right = sum(occ[mode] > 0 for mode in _RIGHT_GROUP)
    bits = tuple(int(occ[mode] > 0) for mode in _MIDDLE_MODES)
    return (left, *bits, right)


@cache
def _pattern_matrix() -> np.ndarray:
    """Aggregation matrix from the three-photon Fock basis to patterns.

    Basis states with photons beyond the detected region (the circuit
    never populates those modes) are left unassigned; they carry zero
    probability, so the merge preserves the total.
    """
    detected = set(_LEFT_GROUP) | set(_MIDDLE_MODES) | set(_RIGHT_GROUP)
    basis = enumerate_basis(N_MODES, N_PHOTONS)
    index = {pattern: i for i, pattern in enumerate(pattern_space())}
    matrix = np.zeros((len(index), len(basis)))
    for j, state in enumerate(basis):
        if all(mode in detected for mode in state.modes()):
            matrix[index[_merge_state(state)], j] = 1.0
    return matrix


def classifier_circuit(theta: Sequence[float], phases: Sequence[float]) -> PhotonicCircuit:
    """Full twelve-mode circuit for one data point.

    ``theta`` fills the two trainable blocks cell by cell (two phases
    per cell); ``phases`` are the four encoding phases applied between
    the blocks.  The fixed redirect layer follows the second block.
    """
    theta = np.asarray(theta, dtype=float)
    if theta.shape != (N_THETA,):
        raise ValueError(f"expected {N_THETA} trainable phases, got shape {theta.shape}")
    phases = np.asarray(phases, dtype=float)
    if phases.shape != (N_FEATURES,):
        raise ValueError(f"expected {N_FEATURES} encoding phases, got shape {phases.shape}")

    circuit = PhotonicCircuit(N_MODES)
    half = N_THETA // 2

    def add_block(block: np.ndarray) -> None:
        for cell, (a, b) in enumerate(_BLOCK_PAIRS):
            outer, inner = block[2 * cell], block[2 * cell + 1]
            circuit.add(PhaseShifter(a, outer))
            circuit.add(DirectionalCoupler(a, b))
            circuit.add(PhaseShifter(a, inner))
            circuit.add(DirectionalCoupler(a, b))

    add_block(theta[:half])
    for mode, phase in zip(ENCODING_MODES, phases):
        circuit.add(PhaseShifter(mode, phase))
    add_block(theta[half:])

    circuit.add(DirectionalCoupler(1, 2))
    circuit.add(DirectionalCoupler(0, 1))
    circuit.add(DirectionalCoupler(6, 7))
    circuit.add(DirectionalCoupler(7, 8))
    return circuit


def pattern_distribution(
    theta: Sequence[float],
    phases: Sequence[float],
    shots: int | None = None,
    rng: np.random.Generator | None = None,
) -> np.ndarray:
    """Probabilities of the merged outcome patterns for one data point.

    With ``shots`` the exact distribution is replaced by an empirical
    multinomial draw of that many detection events.
    """
    circuit = classifier_circuit(theta, phases)
    dist = strong_simulate(circuit.unitary(), FockState.from_modes(N_MODES, INPUT_MODES))
    merged = _pattern_matrix() @ dist.probabilities
    if shots is not None:
        if int(shots) <= 0:
            raise ValueError(f"shots must be positive, got {shots}")
        if rng is None:
            rng = np.random.default_rng()
        merged = rng.multinomial(int(shots), merged / merged.sum()) / float(shots)
    return merged


@dataclass(frozen=True, eq=False)
class ClassifierModel:
    """Trained classifier: chip phases, outcome weights and feature map.

    ``lambdas`` holds one weight row per class over the pattern space
    (disjoint per-class estimators, decision by argmax).  Features are
    scaled to encoding phases by ``(x - feature_low) / feature_span * pi``
    and clipped to [0, pi].
    """

    theta: np.ndarray
    lambdas: np.ndarray
    feature_low: np.ndarray
    feature_span: np.ndarray
    class_names: tuple[str, ...] | None = None

    def __post_init__(self) -> None:
        theta = np.asarray(self.theta, dtype=float)
        if theta.shape != (N_THETA,):
            raise ValueError(f"theta must have {N_THETA} entries, got shape {theta.shape}")
        lambdas = np.asarray(self.lambdas, dtype=float)
        n_patterns = len(pattern_space())
        if lambdas.ndim != 2 or lambdas.shape[1] != n_patterns:
            raise ValueError(
                f"lambdas must be (n_classes, {n_patterns}), got shape {lambdas.shape}"
            )
        if not np.all(np.isfinite(lambdas)):
            raise ValueError("lambdas must be finite")
        low = np.asarray(self.feature_low, dtype=float)
        span = np.asarray(self.feature_span, dtype=float)
        if low.shape != (N_FEATURES,) or span.shape != (N_FEATURES,):
            raise ValueError(f"feature map must have {N_FEATURES} entries per side")
        if np.any(span <= 0.0):
            raise ValueError("feature spans must be positive")
        for name, value in (
            ("theta", theta),
            ("lambdas", lambdas),
            ("feature_low", low),
            ("feature_span", span),
        ):
            value.setflags(write=False)
            object.__setattr__(self, name, value)
        if self.class_names is not None:
            names = tuple(str(n) for n in self.class_names)
            if len(names) != lambdas.shape[0]:
                raise ValueError("one class name per lambda row required")
            object.__setattr__(self, "class_names", names)

    @property
    def n_classes(self) -> int:
        return self.lambdas.shape[0]

    def encode(self, x: Sequence[float]) -> np.ndarray:
        """Scaled encoding phases for one feature vector, in [0, pi]."""
        x = np.asarray(x, dtype=float)
        if x.shape != (N_FEATURES,):
            raise ValueError(f"expected {N_FEATURES} features, got shape {x.shape}")
        scaled = (x - self.feature_low) / self.feature_span * np.pi
        return np.clip(scaled, 0.0, np.pi)


def qnn_forward(
    model: ClassifierModel,
    x: Sequence[float],
    shots: int | None = None,
    rng: np.random.Generator | None = None,
) -> np.ndarray:
    """Per-class estimator values for one feature vector."""
    probs = pattern_distribution(model.theta, model.encode(x), shots, rng)
    return model.lambdas @ probs


def qnn_predict(
    model: ClassifierModel,
    features: np.ndarray,
    shots: int | None = None,
    rng: np.random.Generator | None = None,
) -> np.ndarray:
    """Predicted class labels for a feature matrix."""
    features = np.atleast_2d(np.asarray(features, dtype=float))
    values = np.stack([qnn_forward(model, x, shots, rng) for x in features])
    return np.argmax(values, axis=1)


def load_iris_dataset() -> tuple[np.ndarray, np.ndarray, tuple[str, ...]]:
    """Bundled IRIS measurements: features, integer labels, class names."""
    text = (
        resources.files("lopsim").joinpath("data/iris.csv").read_text(encoding="utf-8")
    )
    lines = text.strip().splitlines()[1:]
    features = np.empty((len(lines), N_FEATURES))
    species = []
    for i, line in enumerate(lines):
        parts = line.split(",")
        features[i] = [float(v) for v in parts[:N_FEATURES]]
        species.append(parts[N_FEATURES])
    names = tuple(sorted(set(species)))
    label_of = {name: k for k, name in enumerate(names)}
    labels = np.array([label_of[s] for s in species], dtype=int)
    return features, labels, names


def stratified_split(
    labels: np.ndarray, n_test: int, rng: np.random.Generator
) -> tuple[np.ndarray, np.ndarray]:
    """Class-proportional train/test index split.

    Test counts per class follow the class proportions (largest
    remainder rounding), so every class appears in both halves.
    """
    labels = np.asarray(labels)
    if not 0 <= n_test < len(labels):
        raise ValueError(f"n_test must lie in [0, {len(labels)}), got {n_test}")
    classes, counts = np.unique(labels, return_counts=True)
    shares = counts * n_test / len(labels)
    base = np.floor(shares).astype(int)
    remainder = n_test - base.sum()
    order = np.argsort(shares - base)[::-1]
    base[order[:remainder]] += 1
    test_idx = []
    for cls, take in zip(classes, base):
        members = np.flatnonzero(labels == cls)
        test_idx.extend(rng.permutation(members)[:take])
    test_idx = np.sort(np.array(test_idx, dtype=int))
    train_idx = np.setdiff1d(np.arange(len(labels)), test_idx)
    return train_idx, test_idx


@dataclass
class QnnConfig:
    """Settings for classifier training.

    The outer loop proposes chip phases from a candidate pool (fresh
    uniform draws mixed with perturbations of the best phases), ranks
    the pool with a radial-basis surrogate fitted to all evaluated
    candidates, and fully evaluates only the top few per iteration.
    The inner step solves the outcome weights exactly per candidate by
    ridge regression onto one-hot targets.
    """

    outer_iterations: int = 15
    evaluations_per_iteration: int = 8
    pool_size: int = 40
    seed: int | None = None
    shots: int | None = None
    ridge: float = 1e-6
    n_test: int = 38
    perturbation: float = 1.0
    perturbation_decay: float = 0.85


def _solve_lambdas(
    probs: np.ndarray, labels: np.ndarray, n_classes: int, ridge: float
) -> tuple[np.ndarray, float, float]:
    """Ridge regression of one-hot targets; returns weights, accuracy, loss."""
    targets = np.zeros((len(labels), n_classes))
    targets[np.arange(len(labels)), labels] = 1.0
    gram = probs.T @ probs + ridge * np.eye(probs.shape[1])
    weights = np.linalg.solve(gram, probs.T @ targets)
    scores = probs @ weights
    accuracy = float(np.mean(np.argmax(scores, axis=1) == labels))
    loss = float(np.mean((scores - targets) ** 2))
    return weights.T, accuracy, loss


def _surrogate_scores(
    history_thetas: list[np.ndarray], history_scores: list[float], pool: np.ndarray
) -> np.ndarray:
    """Radial-basis estimate of candidate quality from evaluated points."""
    thetas = np.stack(history_thetas)
    scores = np.asarray(history_scores)
    diffs = pool[:, None, :] - thetas[None, :, :]
    distances = np.linalg.norm(diffs, axis=2)
    positive = distances[distances > 0.0]
    bandwidth = float(np.median(positive)) if positive.size else 1.0
    weights = np.exp(-((distances / bandwidth) ** 2))
    return (weights @ scores) / (weights.sum(axis=1) + 1e-12)


def qnn_train(
    features: np.ndarray,
    labels: np.ndarray,
    config: QnnConfig | None = None,
    class_names: Sequence[str] | None = None,
) -> tuple[ClassifierModel, dict]:
    """Train the classifier on a labeled feature set.

    Runs the see-saw scheme: an outer surrogate-assisted random search
    over the 32 chip phases, with the outcome weights re-solved exactly
    for every candidate, scored by training accuracy (mean squared
    error as tie-break).  Returns the best model and a metrics dict
    with accuracies and confusion matrices for both split halves.
    """
    if config is None:
        config = QnnConfig()
    features = np.asarray(features, dtype=float)
    labels = np.asarray(labels, dtype=int)
    if features.ndim != 2 or features.shape[1] != N_FEATURES:
        raise ValueError(f"features must be (n, {N_FEATURES}), got shape {features.shape}")
    if labels.shape != (features.shape[0],):
        raise ValueError("one label per feature row required")
    classes = np.unique(labels)
    n_classes = len(classes)
    if n_classes < 2:
        raise ValueError("training needs at least two classes")
    if not np.array_equal(classes, np.arange(n_classes)):
        raise ValueError(f"labels must be 0..{n_classes - 1}, got {classes}")
    if class_names is not None and len(class_names) != n_classes:
        raise ValueError("one class name per class required")

    rng = np.random.default_rng(config.seed)
    train_idx, test_idx = stratified_split(labels, config.n_test, rng)
    x_train, y_train = features[train_idx], labels[train_idx]
    x_test, y_test = features[test_idx], labels[test_idx]

    low = x_train.min(axis=0)
    span = x_train.max(axis=0) - low
    span[span <= 0.0] = 1.0
    train_phases = np.clip((x_train - low) / span * np.pi, 0.0, np.pi)

    def evaluate(theta: np.ndarray):
        probs = np.stack(
            [pattern_distribution(theta, p, config.shots, rng) for p in train_phases]
        )
        weights, accuracy, loss = _solve_lambdas(probs, y_train, n_classes, config.ridge)
        return weights, accuracy - 0.01 * loss, accuracy

    history_thetas: list[np.ndarray] = []
    history_scores: list[float] = []
    best = {"score": -np.inf, "theta": None, "lambdas": None, "accuracy": 0.0, "iteration": 0}
    history_best: list[float] = []
    step = config.perturbation

    for iteration in range(config.outer_iterations):
        fresh = rng.uniform(0.0, 2.0 * np.pi, (config.pool_size // 2, N_THETA))
        if best["theta"] is not None:
            local = np.mod(
                best["theta"]
                + rng.normal(0.0, step, (config.pool_size - len(fresh), N_THETA)),
                2.0 * np.pi,
            )
            pool = np.vstack([fresh, local])
        else:
            pool = rng.uniform(0.0, 2.0 * np.pi, (config.pool_size, N_THETA))
        if history_thetas:
            ranking = np.argsort(
                _surrogate_scores(history_thetas, history_scores, pool)
            )[::-1]
        else:
            ranking = rng.permutation(len(pool))
        for pick in ranking[: config.evaluations_per_iteration]:
            theta = pool[pick]
            weights, score, accuracy = evaluate(theta)
            history_thetas.append(theta)
            history_scores.append(score)
            if score > best["score"]:
                best.update(
                    score=score,
                    theta=theta,
                    lambdas=weights,
                    accuracy=accuracy,
                    iteration=iteration + 1,
                )
        history_best.append(best["accuracy"])
        step *= config.perturbation_decay

    model = ClassifierModel(
        theta=best["theta"],
        lambdas=best["lambdas"],
        feature_low=low,
        feature_span=span,
        class_names=tuple(class_names) if class_names is not None else None,
    )

    def confusion(x: np.ndarray, y: np.ndarray) -> np.ndarray:
        matrix = np.zeros((n_classes, n_classes), dtype=int)
        if len(y):
            predicted = qnn_predict(model, x)
            for truth, guess in zip(y, predicted):
                matrix[truth, guess] += 1
        return matrix

    confusion_train = confusion(x_train, y_train)
    confusion_test = confusion(x_test, y_test)
    test_accuracy = (
        float(np.trace(confusion_test) / len(y_test)) if len(y_test) else None
    )
    metrics = {
        "n_train": int(len(y_train)),
        "n_test": int(len(y_test)),
        "train_accuracy": float(np.trace(confusion_train) / len(y_train)),
        "test_accuracy": test_accuracy,
        "confusion_train": confusion_train.tolist(),
        "confusion_test": confusion_test.tolist(),
        "outer_iterations": int(config.outer_iterations),
        "objective_evaluations": int(len(history_scores)),
        "best_iteration": int(best["iteration"]),
        "accuracy_history": [float(v) for v in history_best],
    }
    return model, metrics
