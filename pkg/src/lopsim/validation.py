"""Statistical validation of multiphoton sampling experiments.

Two running counters discriminate a stream of collision-free detection
events against rival samplers, stepping by +1 or -1 per event:

* the uniform-sampler counter compares the ideal interference
  probability of each outcome against the uniform distribution over
  collision-free patterns;
* the distinguishable-sampler counter compares the ideal (permanent
  squared) probability against the classical routing probability
  (permanent of the squared moduli).

Both are likelihood-ratio tests conditioned on the collision-free
sector: an event increments its counter when the outcome is at least as
likely under coherent interference as under the rival hypothesis, so a
positive long-run slope favors genuine multiphoton interference.  The
raw row-mass product statistic is retained as a diagnostic
(:func:`row_mass_product`) but is not powerful enough at mode counts
comparable to the photon number squared to drive a counter.

The module also provides distribution-level comparisons (fidelity,
total variation distance, residuals), lossy marginals for samples that
lost a known number of photons, and plain-text sample-log round
tripping.
"""

from __future__ import annotations

import itertools
import logging
from dataclasses import dataclass, field, replace
from typing import Iterable, Mapping, Sequence

import numpy as np

from .fock import (
    FockBasis,
    FockState,
    ModeUnitary,
    OutputDistribution,
    distinguishable_probability,
    enumerate_basis,
    output_amplitude,
    permanent,
    strong_simulate,
)
from .sources import SourceModel, build_input, noisy_simulate

__all__ = [
    "CounterState",
    "DistributionComparison",
    "CollisionFreeReference",
    "collision_free_reference",
    "row_mass_product",
    "aa_counter_update",
    "lr_counter_update",
    "sample_outcomes",
    "run_validation",
    "counter_trajectory_csv",
    "format_sample_log",
    "parse_sample_log",
    "compare_distributions",
    "collision_free_probabilities",
    "threshold_projection",
    "lossy_marginals",
]

_LOGGER = logging.getLogger(__name__)

HYPOTHESES = ("ideal", "uniform", "distinguishable")


@dataclass(frozen=True)
class CounterState:
    """Running +/-1 counter with periodic checkpoints.

    Attributes:
        value: current counter value.
        samples: number of events consumed.
        checkpoint_every: cadence, in events, at which (samples, value)
            pairs are appended to the history.
        checkpoints: recorded (sample index, value) pairs.
    """

    value: int = 0
    samples: int = 0
    checkpoint_every: int = 20
    checkpoints: tuple[tuple[int, int], ...] = field(default=())

    def __post_init__(self) -> None:
        if self.checkpoint_every < 1:
            raise ValueError("checkpoint cadence must be at least 1 event")

    def advanced(self, step: int) -> "CounterState":
        """State after one event moving the counter by ``step``."""
        if step not in (1, -1):
            raise ValueError(f"counter steps must be +1 or -1, got {step}")
        samples = self.samples + 1
        value = self.value + step
        checkpoints = self.checkpoints
        if samples % self.checkpoint_every == 0:
            checkpoints = checkpoints + ((samples, value),)
        return replace(self, value=value, samples=samples, checkpoints=checkpoints)


@dataclass(frozen=True)
class DistributionComparison:
    """Fidelity, total variation distance, and per-outcome residuals.

    ``residuals`` is experimental minus ideal, outcome by outcome.
    """

    fidelity: float
    tvd: float
    residuals: np.ndarray

    def __post_init__(self) -> None:
        if not 0.0 <= self.fidelity <= 1.0 + 1e-12:
            raise ValueError("fidelity must lie in [0, 1]")
        if not 0.0 <= self.tvd <= 1.0 + 1e-12:
            raise ValueError("total variation distance must lie in [0, 1]")
        self.residuals.setflags(write=False)


@dataclass(frozen=True)
class CollisionFreeReference:
    """Collision-free sector constants of one sampling experiment.

    Attributes:
        ideal_mass: total ideal probability of collision-free outcomes.
        classical_mass: same total under classical (distinguishable)
            routing.
        n_outcomes: number of collision-free patterns, C(m, n).
    """

    ideal_mass: float
    classical_mass: float
    n_outcomes: int

    def __post_init__(self) -> None:
        if not 0.0 < self.ideal_mass <= 1.0 + 1e-9:
            raise ValueError("ideal collision-free mass must lie in (0, 1]")
        if not 0.0 < self.classical_mass <= 1.0 + 1e-9:
            raise ValueError("classical collision-free mass must lie in (0, 1]")
        if self.n_outcomes < 1:
            raise ValueError("need at least one collision-free outcome")


def _check_modes(unitary: ModeUnitary, detected: Sequence[int], inputs: Sequence[int]):
    detected = tuple(int(i) for i in detected)
    inputs = tuple(int(j) for j in inputs)
    if len(detected) != len(inputs):
        raise ValueError(
            f"{len(detected)} detected modes for {len(inputs)} input photons"
        )
    for group, name in ((detected, "detected"), (inputs, "input")):
        if len(set(group)) != len(group):
            raise ValueError(f"{name} modes must be distinct")
        if any(not 0 <= mode < unitary.m for mode in group):
            raise ValueError(f"{name} modes out of range for m={unitary.m}")
    return detected, inputs


def collision_free_reference(
    unitary: ModeUnitary, input_state: FockState
) -> CollisionFreeReference:
    """Precompute the sector constants the counters normalize by."""
    if not input_state.is_collision_free():
        raise ValueError("reference requires a collision-free input state")
    inputs = input_state.modes()
    cf = enumerate_basis(unitary.m, input_state.n, collision_free=True)
    ideal_mass = 0.0
    classical_mass = 0.0
    for state in cf:
        sub = unitary.matrix[np.ix_(state.modes(), inputs)]
        ideal_mass += abs(permanent(sub)) ** 2
        classical_mass += float(np.real(permanent(np.abs(sub) ** 2)))
    return CollisionFreeReference(
        ideal_mass=ideal_mass, classical_mass=classical_mass, n_outcomes=len(cf)
    )


def row_mass_product(
    unitary: ModeUnitary, detected: Sequence[int], inputs: Sequence[int]
) -> float:
    """Product over detected modes of the input-column mass.

    For a unitary with uniform moduli the product equals (n/m)**n
    exactly.  The statistic is cheap to evaluate but carries little
    discrimination power when m is small compared to n**2, so the
    counters use exact likelihood ratios instead; this remains as a
    diagnostic.
    """
    detected, inputs = _check_modes(unitary, detected, inputs)
    mass = np.abs(unitary.matrix[np.ix_(detected, inputs)]) ** 2
    return float(np.prod(mass.sum(axis=1)))


def aa_counter_update(
    state: CounterState,
    unitary: ModeUnitary,
    detected: Sequence[int],
    inputs: Sequence[int],
    reference: CollisionFreeReference | None = None,
) -> CounterState:
    """Advance the counter that discriminates against uniform sampling.

    The statistic is the event's ideal probability, conditioned on the
    collision-free sector, times the number of collision-free patterns;
    values >= 1 mean the outcome is at least as likely under coherent
    interference as under uniform sampling and increment the counter.

    Args:
        state: counter to advance.
        unitary: interferometer under test.
        detected: modes that clicked (one photon each).
        inputs: occupied input modes.
        reference: precomputed sector constants; computed on the fly
            when omitted (costly, prefer :func:`collision_free_reference`
            once per experiment).
    """
    detected, inputs = _check_modes(unitary, detected, inputs)
    if reference is None:
        reference = collision_free_reference(
            unitary, FockState.from_modes(unitary.m, inputs)
        )
    sub = unitary.matrix[np.ix_(detected, inputs)]
    ideal = abs(permanent(sub)) ** 2 / reference.ideal_mass
    return state.advanced(1 if ideal * reference.n_outcomes >= 1.0 else -1)


def lr_counter_update(
    state: CounterState,
    unitary: ModeUnitary,
    detected: Sequence[int],
    inputs: Sequence[int],
    reference: CollisionFreeReference | None = None,
) -> CounterState:
    """Advance the counter that discriminates against classical routing.

    The statistic is the ratio of the ideal outcome probability
    |Perm(U_sub)|^2 to the classical routing probability
    Perm(|U_sub|^2), each conditioned on the collision-free sector;
    ratios >= 1 increment the counter.  A doubly vanishing ratio (both
    permanents zero, possible only for block-structured unitaries) is
    logged and counted as a decrement.
    """
    detected, inputs = _check_modes(unitary, detected, inputs)
    if reference is None:
        reference = collision_free_reference(
            unitary, FockState.from_modes(unitary.m, inputs)
        )
    sub = unitary.matrix[np.ix_(detected, inputs)]
    q = abs(permanent(sub)) ** 2
    p = float(np.real(permanent(np.abs(sub) ** 2)))
    if p <= 0.0:
        if q <= 0.0:
            _LOGGER.warning(
                "outcome %s unreachable under both hypotheses; counting it against",
                detected,
            )
            return state.advanced(-1)
        return state.advanced(1)
    ratio = (q / reference.ideal_mass) / (p / reference.classical_mass)
    return state.advanced(1 if ratio >= 1.0 else -1)


def _collision_free_weights(
    unitary: ModeUnitary, input_state: FockState, hypothesis: str
) -> np.ndarray:
    cf = enumerate_basis(unitary.m, input_state.n, collision_free=True)
    if hypothesis == "uniform":
        return np.full(len(cf), 1.0 / len(cf))
    if hypothesis == "ideal":
        weights = np.array(
            [abs(output_amplitude(unitary, input_state, s)) ** 2 for s in cf]
        )
    elif hypothesis == "distinguishable":
        weights = np.array(
            [distinguishable_probability(unitary, input_state, s) for s in cf]
        )
    else:
        raise ValueError(f"unknown hypothesis {hypothesis!r}; expected {HYPOTHESES}")
    return weights / weights.sum()


def sample_outcomes(
    unitary: ModeUnitary,
    input_state: FockState,
    n_events: int,
    rng: np.random.Generator,
    hypothesis: str = "ideal",
) -> tuple[FockState, ...]:
    """Draw collision-free detection events from a chosen sampler.

    Args:
        unitary: interferometer.
        input_state: collision-free multi-photon input.
        n_events: number of events to draw.
        rng: random generator.
        hypothesis: "ideal" (coherent interference), "uniform", or
            "distinguishable" (classical routing), each renormalized
            over collision-free patterns.
    """
    if n_events < 1:
        raise ValueError("n_events must be positive")
    if not input_state.is_collision_free():
        raise ValueError("sampling requires a collision-free input state")
    weights = _collision_free_weights(unitary, input_state, hypothesis)
    cf = enumerate_basis(unitary.m, input_state.n, collision_free=True)
    picks = rng.choice(len(cf), size=n_events, p=weights)
    return tuple(cf[int(i)] for i in picks)


def run_validation(
    unitary: ModeUnitary,
    input_state: FockState,
    events: Iterable[FockState],
    checkpoint_every: int = 20,
) -> tuple[CounterState, CounterState]:
    """Run both counters over an event stream.

    Returns the (uniform-sampler, distinguishable-sampler) counter
    states after all events.  Replaying the same stream reproduces the
    trajectories bit-exactly.
    """
    reference = collision_free_reference(unitary, input_state)
    inputs = input_state.modes()
    aa = CounterState(checkpoint_every=checkpoint_every)
    lr = CounterState(checkpoint_every=checkpoint_every)
    for event in events:
        if not event.is_collision_free():
            raise ValueError(f"event {event} is not collision-free")
        detected = event.modes()
        aa = aa_counter_update(aa, unitary, detected, inputs, reference)
        lr = lr_counter_update(lr, unitary, detected, inputs, reference)
    return aa, lr


def counter_trajectory_csv(aa: CounterState, lr: CounterState) -> str:
    """Merge two counter histories into CSV rows (sample_index, A, C).

    The counters must have been advanced in lockstep (same cadence and
    event count).  A leading zero row and, when the stream did not end
    on a checkpoint boundary, a final row are included.
    """
    if aa.checkpoint_every != lr.checkpoint_every or aa.samples != lr.samples:
        raise ValueError("counters were not advanced in lockstep")
    rows = ["sample_index,A,C"]
    rows.append("0,0,0")
    for (idx_a, val_a), (idx_c, val_c) in zip(aa.checkpoints, lr.checkpoints):
        if idx_a != idx_c:
            raise ValueError("checkpoint histories are not aligned")
        rows.append(f"{idx_a},{val_a},{val_c}")
    if aa.samples % aa.checkpoint_every != 0:
        rows.append(f"{aa.samples},{aa.value},{lr.value}")
    return "\n".join(rows) + "\n"


def format_sample_log(events: Iterable[FockState]) -> str:
    """Newline-delimited occupation strings, one event per line."""
    return "\n".join(event.to_string() for event in events) + "\n"


def parse_sample_log(text: str) -> tuple[FockState, ...]:
    """Parse a sample log produced by :func:`format_sample_log`."""
    events = []
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.strip()
        if not line:
            continue
        try:
            events.append(FockState.from_string(line))
        except ValueError as exc:
            raise ValueError(f"sample log line {lineno}: {exc}") from exc
    return tuple(events)


def compare_distributions(
    ideal: np.ndarray, experimental: np.ndarray
) -> DistributionComparison:
    """Fidelity and total variation distance between aligned distributions.

    Fidelity is the Bhattacharyya overlap sum(sqrt(p*q)); the distance
    is half the L1 norm of the difference.  Both inputs must be
    probability vectors over the same outcome ordering.
    """
    p = np.asarray(ideal, dtype=float)
    q = np.asarray(experimental, dtype=float)
    if p.shape != q.shape or p.ndim != 1 or p.size == 0:
        raise ValueError("distributions must be equal-length 1-d vectors")
    for name, vec in (("ideal", p), ("experimental", q)):
        if np.any(vec < -1e-12):
            raise ValueError(f"{name} distribution has negative entries")
        if abs(vec.sum() - 1.0) > 1e-6:
            raise ValueError(f"{name} distribution must sum to 1")
    fidelity = float(np.sqrt(np.clip(p, 0.0, None) * np.clip(q, 0.0, None)).sum())
    tvd = float(0.5 * np.abs(p - q).sum())
    return DistributionComparison(
        fidelity=min(fidelity, 1.0), tvd=min(tvd, 1.0), residuals=q - p
    )


def collision_free_probabilities(
    dist: Mapping[FockState, float], m: int, n: int
) -> tuple[np.ndarray, float]:
    """Restrict a distribution to collision-free n-photon patterns.

    Returns the renormalized probability vector aligned on the
    collision-free basis ordering, and the weight that the sector
    carried before renormalization.

    Args:
        dist: mapping from output states to probabilities (an
            :class:`OutputDistribution`, a noisy distribution, or a
            click-pattern dictionary).
        m: number of modes.
        n: photon (click) number of the sector to keep.
    """
    cf = enumerate_basis(m, n, collision_free=True)
    vec = np.array([float(dist.get(state, 0.0)) for state in cf])
    weight = float(vec.sum())
    if weight <= 0.0:
        raise ValueError(f"no probability mass on collision-free {n}-photon patterns")
    return vec / weight, weight


def threshold_projection(dist: Mapping[FockState, float]) -> dict[FockState, float]:
    """Collapse occupation probabilities onto threshold click patterns.

    Every occupied mode registers one click regardless of its photon
    number, so bunched outcomes merge with their click pattern.  The
    total probability is preserved.
    """
    clicks: dict[FockState, float] = {}
    for state, p in dist.items():
        pattern = FockState(tuple(1 if occ > 0 else 0 for occ in state.occupations))
        clicks[pattern] = clicks.get(pattern, 0.0) + float(p)
    return clicks


def lossy_marginals(
    unitary: ModeUnitary,
    input_state: FockState,
    k_lost: int,
    source: SourceModel | None = None,
    min_branch_weight: float = 0.0,
) -> OutputDistribution:
    """Output distribution for events that lost ``k_lost`` photons.

    Without a source model, loss is uniform: conditioned on losing
    exactly ``k_lost`` of the n input photons, every surviving subset
    is equally likely, and the result is the uniform mixture of the
    subset interference patterns.  (Uniform loss commutes with the
    interferometer, so input thinning equals output thinning.)

    With a source model, the full noise model runs (loss from the
    source's efficiency, partial distinguishability, multiphoton
    emission) and the (n - k_lost)-photon sector is returned, its
    pre-normalization weight recorded on the distribution.

    Args:
        unitary: interferometer.
        input_state: collision-free n-photon input.
        k_lost: number of photons lost, 0 <= k_lost < n.
        source: optional noise model; its ``efficiency`` drives the loss.
        min_branch_weight: branch pruning cutoff for the noisy path.
    """
    if not input_state.is_collision_free():
        raise ValueError("lossy marginals require a collision-free input state")
    n = input_state.n
    if not 0 <= k_lost < n:
        raise ValueError(f"k_lost must lie in [0, {n - 1}], got {k_lost}")
    m = unitary.m
    survivors = n - k_lost

    if source is not None:
        labeled = build_input(
            n, source, modes=input_state.modes(), min_weight=min_branch_weight
        )
        noisy = noisy_simulate(unitary, labeled, min_branch_weight=min_branch_weight)
        sector, weight = noisy.postselect_photon_number(survivors)
        basis = enumerate_basis(m, survivors)
        vec = np.zeros(len(basis))
        for state, p in sector.items():
            vec[basis.index(state)] = p
        return OutputDistribution(basis, vec, subspace_weight=weight)

    basis = enumerate_basis(m, survivors)
    vec = np.zeros(len(basis))
    subsets = list(itertools.combinations(input_state.modes(), survivors))
    for keep in subsets:
        sub = strong_simulate(unitary, FockState.from_modes(m, keep))
        vec += sub.probabilities / len(subsets)
    return OutputDistribution(basis, vec)
