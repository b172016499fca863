"""Imperfect single-photon sources and noisy multiphoton interference.

Phenomenological per-trigger noise model with three ingredients:

* loss: each emitted photon survives with probability ``efficiency``;
* partial distinguishability: a surviving photon carries the shared
  interference label with probability ``m_i``, otherwise a label of its
  own (photons interfere only within a label class);
* residual multiphoton emission: with probability ``g2`` the trigger is
  accompanied by an extra, fully distinguishable photon in the same
  input mode (also subject to loss).

Inputs built from this model are mixtures over label assignments.  Each
branch evolves with coherent interference inside every label class and
classical addition across classes.  Detection throughout this module is
click-based (threshold detectors): an occupied mode counts as one click
regardless of photon number.

The module also provides the two standard source characterization
experiments: the two-photon Hong-Ou-Mandel visibility (with its purity
correction), and the cyclic multiport interferometer measuring genuine
n-photon indistinguishability.
"""

from __future__ import annotations

import itertools
import json
import warnings
from dataclasses import dataclass
from functools import lru_cache
from importlib import resources
from math import comb
from pathlib import Path
from typing import Iterator, Mapping, Sequence

import numpy as np
from scipy.optimize import curve_fit

from .fock import (
    FockState,
    ModeUnitary,
    enumerate_basis,
    strong_simulate,
)
from .mesh import DirectionalCoupler, PhaseShifter, PhotonicCircuit

__all__ = [
    "SourceModel",
    "LabeledPhoton",
    "InputBranch",
    "LabeledInput",
    "NoisyDistribution",
    "build_input",
    "noisy_simulate",
    "coincidence_probability",
    "hom_experiment",
    "ms_correction",
    "cyclic_interferometer",
    "cyclic_input_modes",
    "genuine_indistinguishability",
    "measure_genuine_indistinguishability",
    "indistinguishability_fringe",
    "FringeFit",
    "fit_fringe",
    "load_indistinguishability_matrix",
    "fit_product_model",
]

SCHEMA = "lopsim-source-v1"

SHARED_LABEL = 0


@dataclass(frozen=True)
class SourceModel:
    """Noise parameters of a triggered single-photon source.

    Attributes:
        indistinguishability: probability that a photon carries the
            shared interference label.  Either one scalar for all
            photons or a per-photon sequence ``m_i``.  The pairwise
            two-photon indistinguishability implied by the model is
            ``M_ij = m_i * m_j``.
        g2: second-order correlation at zero delay; probability that a
            trigger emits an extra distinguishable photon.
        efficiency: per-photon survival probability (source brightness,
            setup transmission and detection folded together).
    """

    indistinguishability: float | tuple[float, ...] = 1.0
    g2: float = 0.0
    efficiency: float = 1.0

    def __post_init__(self) -> None:
        ind = self.indistinguishability
        if np.ndim(ind) > 0:
            ind = tuple(float(v) for v in np.asarray(ind, dtype=float))
            object.__setattr__(self, "indistinguishability", ind)
            values = ind
        else:
            object.__setattr__(self, "indistinguishability", float(ind))
            values = (float(ind),)
        if any(not 0.0 <= v <= 1.0 for v in values):
            raise ValueError("indistinguishability values must lie in [0, 1]")
        if not 0.0 <= self.g2 < 1.0:
            raise ValueError(f"g2 must lie in [0, 1), got {self.g2}")
        if not 0.0 < self.efficiency <= 1.0:
            raise ValueError(f"efficiency must lie in (0, 1], got {self.efficiency}")

    def m_values(self, n: int) -> np.ndarray:
        """Per-photon shared-label probabilities for ``n`` photons."""
        ind = self.indistinguishability
        if isinstance(ind, tuple):
            if len(ind) != n:
                raise ValueError(
                    f"source defines {len(ind)} photons, {n} requested"
                )
            return np.array(ind)
        return np.full(n, ind)

    @classmethod
    def from_pairwise_matrix(
        cls,
        matrix: np.ndarray,
        g2: float = 0.0,
        efficiency: float = 1.0,
    ) -> "SourceModel":
        """Source with per-photon ``m_i`` fitted from a pairwise matrix."""
        m_fit, _ = fit_product_model(matrix)
        return cls(indistinguishability=tuple(m_fit), g2=g2, efficiency=efficiency)

    def to_dict(self) -> dict:
        ind = self.indistinguishability
        return {
            "schema": SCHEMA,
            "indistinguishability": list(ind) if isinstance(ind, tuple) else ind,
            "g2": self.g2,
            "efficiency": self.efficiency,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "SourceModel":
        if data.get("schema") != SCHEMA:
            raise ValueError(f"unexpected schema {data.get('schema')!r}")
        ind = data["indistinguishability"]
        if isinstance(ind, list):
            ind = tuple(ind)
        return cls(
            indistinguishability=ind,
            g2=float(data["g2"]),
            efficiency=float(data["efficiency"]),
        )

    def save(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2) + "\n")

    @classmethod
    def load(cls, path: str | Path) -> "SourceModel":
        return cls.from_dict(json.loads(Path(path).read_text()))


@dataclass(frozen=True)
class LabeledPhoton:
    """A photon in ``mode`` carrying an interference label.

    Photons with equal labels interfere coherently; photons with
    different labels are mutually distinguishable.  Label 0 is the
    shared label.
    """

    mode: int
    label: int


@dataclass(frozen=True)
class InputBranch:
    """One term of a labeled-input mixture."""

    weight: float
    photons: tuple[LabeledPhoton, ...]

    @property
    def n(self) -> int:
        return len(self.photons)


@dataclass(frozen=True)
class LabeledInput:
    """Mixture of labeled Fock inputs produced by a noisy source."""

    branches: tuple[InputBranch, ...]

    def total_weight(self) -> float:
        return float(sum(b.weight for b in self.branches))

    def __len__(self) -> int:
        return len(self.branches)

    def __iter__(self) -> Iterator[InputBranch]:
        return iter(self.branches)

    def restrict_photon_number(self, n: int) -> "LabeledInput":
        """Keep only branches with exactly ``n`` photons.

        The result is unnormalized: weights keep their original values,
        so conditioned quantities can be formed as ratios.
        """
        kept = tuple(b for b in self.branches if b.n == n)
        return LabeledInput(branches=kept)


def build_input(
    n: int,
    src: SourceModel,
    seed: int | None = None,
    modes: Sequence[int] | None = None,
    min_weight: float = 0.0,
) -> LabeledInput:
    """Labeled-input ensemble for ``n`` triggered photons.

    Each trigger independently loses its photon with probability
    ``1 - efficiency``; a surviving photon takes the shared label with
    probability ``m_i`` and a unique label otherwise; and an extra
    distinguishable photon accompanies the trigger with probability
    ``g2`` (the extra is subject to the same loss).  The expansion is
    exact, so ``seed`` is unused; it is accepted so that input
    construction has a uniform seeded signature.

    Args:
        n: number of triggers.
        src: source noise parameters.
        seed: ignored (the ensemble is deterministic).
        modes: input mode per trigger; defaults to ``0..n-1``.
        min_weight: drop branches lighter than this (0 keeps the exact
            mixture, whose weights sum to 1).
    """
    del seed
    if modes is None:
        modes = tuple(range(n))
    else:
        modes = tuple(int(q) for q in modes)
        if len(modes) != n:
            raise ValueError(f"expected {n} input modes, got {len(modes)}")
    ms = src.m_values(n)
    eta = src.efficiency
    extra_p = src.g2 * eta

    cases: list[list[tuple[float, str | None, bool]]] = []
    for i in range(n):
        per_photon = []
        for main, w_main in (
            ("shared", eta * ms[i]),
            ("unique", eta * (1.0 - ms[i])),
            (None, 1.0 - eta),
        ):
            if w_main == 0.0:
                continue
            for extra, w_extra in ((True, extra_p), (False, 1.0 - extra_p)):
                if w_extra == 0.0:
                    continue
                per_photon.append((w_main * w_extra, main, extra))
        cases.append(per_photon)

    branches = []
    for combo in itertools.product(*cases):
        weight = 1.0
        photons = []
        for i, (w, main, extra) in enumerate(combo):
            weight *= w
            if main == "shared":
                photons.append(LabeledPhoton(modes[i], SHARED_LABEL))
            elif main == "unique":
                photons.append(LabeledPhoton(modes[i], 1 + i))
            if extra:
                photons.append(LabeledPhoton(modes[i], 1 + n + i))
        if weight < min_weight or weight == 0.0:
            continue
        branches.append(InputBranch(weight=weight, photons=tuple(photons)))
    return LabeledInput(branches=tuple(branches))


class NoisyDistribution(Mapping[FockState, float]):
    """Output probabilities of a mixed input, across photon-number sectors."""

    def __init__(self, probs: dict[FockState, float]):
        self._probs = dict(probs)

    def prob(self, state: FockState) -> float:
        return self._probs.get(state, 0.0)

    def __getitem__(self, state: FockState) -> float:
        return self.prob(state)

    def __iter__(self) -> Iterator[FockState]:
        return iter(self._probs)

    def __len__(self) -> int:
        return len(self._probs)

    def total(self) -> float:
        return float(sum(self._probs.values()))

    def sector_weights(self) -> dict[int, float]:
        """Total probability per photon number."""
        weights: dict[int, float] = {}
        for state, p in self._probs.items():
            weights[state.n] = weights.get(state.n, 0.0) + p
        return weights

    def postselect_photon_number(self, n: int) -> tuple["NoisyDistribution", float]:
        """Distribution conditioned on ``n`` detected photons, and its weight."""
        kept = {s: p for s, p in self._probs.items() if s.n == n}
        weight = float(sum(kept.values()))
        if weight <= 0.0:
            raise ValueError(f"no probability mass in the {n}-photon sector")
        return NoisyDistribution({s: p / weight for s, p in kept.items()}), weight

    def top(self, k: int = 5) -> list[tuple[FockState, float]]:
        ranked = sorted(self._probs.items(), key=lambda kv: -kv[1])
        return ranked[:k]


@lru_cache(maxsize=None)
def _successor_indices(m: int, n: int) -> np.ndarray:
    """Index of ``occ + e_j`` in the (n+1)-photon basis, per mode j."""
    basis_n = enumerate_basis(m, n)
    basis_next = enumerate_basis(m, n + 1)
    out = np.empty((m, len(basis_n)), dtype=np.intp)
    for i, state in enumerate(basis_n):
        occ = state.occupations
        for j in range(m):
            lifted = FockState(occ[:j] + (occ[j] + 1,) + occ[j + 1 :])
            out[j, i] = basis_next.index(lifted)
    return out


def _convolve_single_photon(vec: np.ndarray, n: int, col_probs: np.ndarray) -> np.ndarray:
    """Add one classically routed photon with output law ``col_probs``."""
    m = len(col_probs)
    succ = _successor_indices(m, n)
    out = np.zeros(len(enumerate_basis(m, n + 1)))
    for j in range(m):
        c = col_probs[j]
        if c > 0.0:
            out[succ[j]] += vec * c
    return out


def _convolve_distributions(
    m: int,
    vec_a: np.ndarray,
    n_a: int,
    vec_b: np.ndarray,
    n_b: int,
) -> np.ndarray:
    """Classical convolution of two photon-number-definite distributions."""
    basis_a = enumerate_basis(m, n_a)
    basis_b = enumerate_basis(m, n_b)
    basis_out = enumerate_basis(m, n_a + n_b)
    out = np.zeros(len(basis_out))
    for ib in vec_b.nonzero()[0]:
        occ_b = basis_b[int(ib)].occupations
        pb = vec_b[ib]
        for ia in vec_a.nonzero()[0]:
            occ = tuple(a + b for a, b in zip(basis_a[int(ia)].occupations, occ_b))
            out[basis_out.index(FockState(occ))] += vec_a[ia] * pb
    return out


def _class_partition(photons: tuple[LabeledPhoton, ...]) -> tuple[tuple[int, ...], ...]:
    """Sorted mode tuples of the interference classes of one branch."""
    classes: dict[int, list[int]] = {}
    for ph in photons:
        classes.setdefault(ph.label, []).append(ph.mode)
    parts = [tuple(sorted(modes)) for modes in classes.values()]
    parts.sort(key=lambda t: (-len(t), t))
    return tuple(parts)


def _branch_distribution(
    unitary: ModeUnitary,
    parts: tuple[tuple[int, ...], ...],
    col_power: np.ndarray,
    class_cache: dict[tuple[int, ...], np.ndarray],
) -> tuple[np.ndarray, int]:
    """Output distribution of one label partition, as (vector, photons)."""
    m = unitary.m
    vec = np.ones(1)
    n = 0
    for part in parts:
        if len(part) == 1:
            vec = _convolve_single_photon(vec, n, col_power[:, part[0]])
            n += 1
            continue
        if part not in class_cache:
            dist = strong_simulate(unitary, FockState.from_modes(m, part))
            class_cache[part] = dist.probabilities
        if n == 0:
            vec = class_cache[part].copy()
        else:
            vec = _convolve_distributions(m, vec, n, class_cache[part], len(part))
        n += len(part)
    return vec, n


def _thin_outputs(
    sectors: dict[int, np.ndarray], m: int, keep: np.ndarray
) -> dict[tuple[int, ...], float]:
    """Per-mode binomial thinning of photon-number-sector distributions."""
    out: dict[tuple[int, ...], float] = {}
    for n, vec in sectors.items():
        basis = enumerate_basis(m, n)
        for i in vec.nonzero()[0]:
            occ = basis[int(i)].occupations
            p = float(vec[i])
            choices = []
            for j, s in enumerate(occ):
                if s == 0:
                    continue
                kj = keep[j]
                choices.append(
                    (
                        j,
                        [
                            (k, comb(s, k) * kj**k * (1.0 - kj) ** (s - k))
                            for k in range(s + 1)
                        ],
                    )
                )
            for combo in itertools.product(*(opts for _, opts in choices)):
                w = p
                surviving = [0] * m
                for (j, _), (k, wk) in zip(choices, combo):
                    w *= wk
                    surviving[j] = k
                if w == 0.0:
                    continue
                key = tuple(surviving)
                out[key] = out.get(key, 0.0) + w
    return out


def noisy_simulate(
    unitary: ModeUnitary | np.ndarray,
    labeled: LabeledInput,
    output_losses: np.ndarray | None = None,
    min_branch_weight: float = 0.0,
) -> NoisyDistribution:
    """Exact output distribution of a labeled-input mixture.

    Each branch factors into interference classes (one per label); every
    class evolves coherently through ``unitary`` and the class outputs
    add classically.  Branch results are weighted by branch probability.

    Args:
        unitary: the interferometer.
        labeled: input mixture from :func:`build_input`.
        output_losses: per-mode survival probabilities applied to the
            output by binomial thinning, or None for lossless readout.
        min_branch_weight: skip branches lighter than this.  The default
            keeps every branch; pass a small cutoff (say 1e-9) to trade
            a bounded amount of probability mass for speed.

    Returns:
        Probabilities for every reachable output occupation, spanning
        all photon-number sectors the mixture populates.
    """
    if not isinstance(unitary, ModeUnitary):
        unitary = ModeUnitary(np.asarray(unitary))
    m = unitary.m
    col_power = np.abs(unitary.matrix) ** 2

    grouped: dict[tuple[tuple[int, ...], ...], float] = {}
    for branch in labeled.branches:
        if branch.weight < min_branch_weight:
            continue
        for ph in branch.photons:
            if not 0 <= ph.mode < m:
                raise ValueError(f"photon mode {ph.mode} out of range for m={m}")
        parts = _class_partition(branch.photons)
        grouped[parts] = grouped.get(parts, 0.0) + branch.weight

    class_cache: dict[tuple[int, ...], np.ndarray] = {}
    sectors: dict[int, np.ndarray] = {}
    for parts, weight in grouped.items():
        vec, n = _branch_distribution(unitary, parts, col_power, class_cache)
        if n in sectors:
            sectors[n] += weight * vec
        else:
            sectors[n] = weight * vec

    if output_losses is not None:
        keep = np.asarray(output_losses, dtype=float)
        if keep.shape != (m,):
            raise ValueError(f"output_losses must have shape ({m},)")
        if np.any(keep < 0.0) or np.any(keep > 1.0):
            raise ValueError("output losses must lie in [0, 1]")
        thinned = _thin_outputs(sectors, m, keep)
        probs = {FockState(occ): p for occ, p in thinned.items()}
        return NoisyDistribution(probs)

    probs = {}
    for n, vec in sectors.items():
        basis = enumerate_basis(m, n)
        for i in vec.nonzero()[0]:
            probs[basis[int(i)]] = float(vec[i])
    return NoisyDistribution(probs)


def coincidence_probability(
    dist: Mapping[FockState, float], modes: Sequence[int]
) -> float:
    """Probability that every listed mode clicks (threshold detectors)."""
    total = 0.0
    for state, p in dist.items():
        occ = state.occupations
        if all(occ[q] > 0 for q in modes):
            total += p
    return float(total)


def _mzi_unitary(internal_phase: float) -> ModeUnitary:
    """Two-mode Mach-Zehnder: coupler, phase on mode 0, coupler."""
    circuit = PhotonicCircuit(2)
    circuit.add(DirectionalCoupler(0, 1))
    circuit.add(PhaseShifter(0, internal_phase))
    circuit.add(DirectionalCoupler(0, 1))
    return circuit.unitary()


def hom_experiment(src: SourceModel) -> float:
    """Two-photon Hong-Ou-Mandel visibility of a source pair.

    Sends two photons into a Mach-Zehnder interferometer and compares
    the two-detector coincidence rate at the interfering internal phase
    (pi/2) against the non-interfering reference (pi):
    ``V = 1 - 2 C(pi/2) / C(pi)``.

    The model's pairwise indistinguishability is ``m_0 * m_1``, so the
    visibility is reduced from that value by the g2 contribution.
    """
    labeled = build_input(2, src)
    rates = {}
    for phase in (np.pi / 2.0, np.pi):
        dist = noisy_simulate(_mzi_unitary(phase), labeled)
        rates[phase] = coincidence_probability(dist, (0, 1))
    reference = rates[np.pi]
    if reference <= 0.0:
        raise ValueError("no reference coincidences; cannot form a visibility")
    return float(1.0 - 2.0 * rates[np.pi / 2.0] / reference)


def ms_correction(v_hom: float, g2: float) -> float:
    """Purity-corrected two-photon indistinguishability.

    Removes the g2-induced visibility reduction:
    ``M_s = (V_HOM + g2) / (1 - g2)``.  Values above 1 (possible with
    noisy estimates) are clamped with a warning.
    """
    if not 0.0 <= v_hom < 1.0:
        raise ValueError(f"visibility must lie in [0, 1), got {v_hom}")
    if not 0.0 <= g2 < 1.0:
        raise ValueError(f"g2 must lie in [0, 1), got {g2}")
    m_s = (v_hom + g2) / (1.0 - g2)
    if m_s > 1.0:
        warnings.warn(
            f"corrected indistinguishability {m_s:.6f} exceeds 1; clamping",
            stacklevel=2,
        )
        m_s = 1.0
    return float(m_s)


def cyclic_input_modes(n_photons: int) -> tuple[int, ...]:
    """Input modes fed with photons in the cyclic interferometer."""
    return tuple(range(1, 2 * n_photons, 2))


def _cyclic_circuit(n_photons: int, alpha: float) -> PhotonicCircuit:
    """Cyclic 2n-mode interferometer with one internal phase.

    A first coupler layer splits each photon between its own pair and
    the next pair; the single phase ``alpha`` sits on the closing arm;
    a second coupler layer recombines neighbors within each output pair
    (2k, 2k+1).  Every photon interferes with both cyclic neighbors,
    which makes the one-click-per-pair fringe sensitive to the
    coherence of all n photons at once.
    """
    m = 2 * n_photons
    circuit = PhotonicCircuit(m)
    for k in range(n_photons):
        circuit.add(DirectionalCoupler(2 * k + 1, (2 * k + 2) % m))
    circuit.add(PhaseShifter(0, alpha))
    for k in range(n_photons):
        circuit.add(DirectionalCoupler(2 * k, 2 * k + 1))
    return circuit


def cyclic_interferometer(n_photons: int, alpha: float) -> ModeUnitary:
    """Unitary of the cyclic interferometer on ``2 * n_photons`` modes.

    Photons enter on the odd modes (:func:`cyclic_input_modes`) and the
    one-click-per-output-pair events split into two parity classes
    whose rates oscillate as ``1 +- p_N cos(alpha)``.
    """
    if n_photons not in (4, 6):
        raise ValueError(f"unsupported photon number {n_photons}; expected 4 or 6")
    return _cyclic_circuit(n_photons, alpha).unitary()


def _pair_click_pattern(occ: tuple[int, ...], n_pairs: int) -> tuple[int, ...] | None:
    """Clicked side per output pair, or None unless exactly one side clicks."""
    bits = []
    for k in range(n_pairs):
        left = occ[2 * k] > 0
        right = occ[2 * k + 1] > 0
        if left == right:
            return None
        bits.append(1 if right else 0)
    return tuple(bits)


@lru_cache(maxsize=None)
def _constructive_patterns(n_photons: int) -> frozenset[tuple[int, ...]]:
    """Pair-click patterns bright at alpha = 0 for perfect photons."""
    m = 2 * n_photons
    unitary = _cyclic_circuit(n_photons, 0.0).unitary()
    dist = strong_simulate(unitary, FockState.from_modes(m, cyclic_input_modes(n_photons)))
    best = float(dist.probabilities.max())
    bright = set()
    for state, p in zip(dist.basis, dist.probabilities):
        pattern = _pair_click_pattern(state.occupations, n_photons)
        if pattern is not None and p > 1e-9 * best:
            bright.add(pattern)
    return frozenset(bright)


def genuine_indistinguishability(
    dist: Mapping[FockState, float],
    n_photons: int,
) -> float:
    """Genuine n-photon indistinguishability from cyclic-circuit statistics.

    Restricts ``dist`` (probabilities or counts from the interferometer
    at alpha = 0) to events with exactly one click per output pair and
    contrasts the constructive class against the destructive one:
    ``p_N = (C - D) / (C + D)``.  For the independent-label model with
    perfect purity this equals the product of the ``m_i``.
    """
    constructive = _constructive_patterns(n_photons)
    c_sum = 0.0
    d_sum = 0.0
    for state, value in dist.items():
        occ = state.occupations if isinstance(state, FockState) else tuple(state)
        pattern = _pair_click_pattern(occ, n_photons)
        if pattern is None:
            continue
        if pattern in constructive:
            c_sum += value
        else:
            d_sum += value
    total = c_sum + d_sum
    if total <= 0.0:
        raise ValueError("no one-click-per-pair events; p_N is undefined")
    return float((c_sum - d_sum) / total)


def measure_genuine_indistinguishability(
    n_photons: int,
    src: SourceModel,
    alpha: float = 0.0,
    min_branch_weight: float = 1e-9,
) -> float:
    """Simulate the cyclic experiment and estimate ``p_N``."""
    unitary = cyclic_interferometer(n_photons, alpha)
    labeled = build_input(n_photons, src, modes=cyclic_input_modes(n_photons))
    dist = noisy_simulate(unitary, labeled, min_branch_weight=min_branch_weight)
    return genuine_indistinguishability(dist, n_photons)


def indistinguishability_fringe(
    n_photons: int,
    src: SourceModel,
    alphas: Sequence[float],
    min_branch_weight: float = 1e-9,
) -> np.ndarray:
    """``p_N`` estimates over a scan of the internal phase."""
    return np.array(
        [
            measure_genuine_indistinguishability(
                n_photons, src, alpha=a, min_branch_weight=min_branch_weight
            )
            for a in alphas
        ]
    )


@dataclass(frozen=True)
class FringeFit:
    """Cosine fit ``amplitude * cos(frequency * alpha + phase)``."""

    amplitude: float
    frequency: float
    phase: float


def fit_fringe(alphas: Sequence[float], values: Sequence[float]) -> FringeFit:
    """Least-squares cosine fit of a fringe scan."""
    alphas = np.asarray(alphas, dtype=float)
    values = np.asarray(values, dtype=float)

    def model(a, c1, freq, phase):
        return c1 * np.cos(freq * a + phase)

    start = (float(np.max(np.abs(values))) or 1.0, 1.0, 0.0)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        popt, _ = curve_fit(model, alphas, values, p0=start)
    amplitude, frequency, phase = (float(v) for v in popt)
    if amplitude < 0.0:
        amplitude = -amplitude
        phase += np.pi
    if frequency < 0.0:
        frequency = -frequency
        phase = -phase
    phase = float((phase + np.pi) % (2.0 * np.pi) - np.pi)
    return FringeFit(amplitude=amplitude, frequency=frequency, phase=phase)


def load_indistinguishability_matrix(path: str | Path | None = None) -> np.ndarray:
    """Pairwise indistinguishability matrix from an upper-triangular CSV.

    Line ``i`` of the file lists the entries above the diagonal of row
    ``i``; the diagonal is 1 and the matrix is symmetric.  With no path
    the measured six-photon matrix bundled with the package is loaded.
    """
    if path is None:
        text = (
            resources.files("lopsim")
            .joinpath("data/indistinguishability_matrix.csv")
            .read_text()
        )
    else:
        text = Path(path).read_text()
    rows = [line.strip() for line in text.splitlines() if line.strip()]
    n = len(rows) + 1
    matrix = np.eye(n)
    for i, row in enumerate(rows):
        entries = [float(v) for v in row.split(",") if v.strip()]
        if len(entries) != n - 1 - i:
            raise ValueError(
                f"row {i} has {len(entries)} entries, expected {n - 1 - i}"
            )
        for k, value in enumerate(entries):
            j = i + 1 + k
            matrix[i, j] = matrix[j, i] = value
    return matrix


def fit_product_model(matrix: np.ndarray) -> tuple[np.ndarray, float]:
    """Fit per-photon ``m_i`` so that ``M_ij ~ m_i * m_j``.

    The fit is linear least squares in log space over the above-diagonal
    entries.  A pairwise-measured matrix is over-determined for the
    product model, so the returned residual (root-mean-square deviation
    of ``m_i * m_j`` from ``M_ij``) reports the model mismatch.
    """
    matrix = np.asarray(matrix, dtype=float)
    n = matrix.shape[0]
    if matrix.shape != (n, n):
        raise ValueError("matrix must be square")
    if not np.allclose(matrix, matrix.T, atol=1e-9):
        raise ValueError("matrix must be symmetric")
    if not np.allclose(np.diag(matrix), 1.0, atol=1e-9):
        raise ValueError("diagonal entries must be 1")
    pairs = [(i, j) for i in range(n) for j in range(i + 1, n)]
    values = np.array([matrix[i, j] for i, j in pairs])
    if np.any(values <= 0.0) or np.any(values > 1.0):
        raise ValueError("off-diagonal entries must lie in (0, 1]")
    design = np.zeros((len(pairs), n))
    for r, (i, j) in enumerate(pairs):
        design[r, i] = design[r, j] = 1.0
    solution, *_ = np.linalg.lstsq(design, np.log(values), rcond=None)
    m_fit = np.exp(solution)
    residual = float(
        np.sqrt(np.mean([(matrix[i, j] - m_fit[i] * m_fit[j]) ** 2 for i, j in pairs]))
    )
    return m_fit, residual
