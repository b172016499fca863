"""Dual-rail qubit circuits compiled onto linear-optical mode circuits.

Each logical qubit owns an ordered pair of modes (rail 0, rail 1) and the
photon's position encodes the bit: a photon in rail 1 means logical 1.
Single-qubit gates are exact two-mode unitaries on the rail pair and
therefore deterministic.  Entangling gates are probabilistic and heralded
by postselection:

* CNOT uses the three-coupler controlled-phase core with two vacuum
  ancilla modes.  All three couplers have reflectivity 1/3; the rail-1
  modes of control and target interfere directly while each rail-0 mode
  leaks into an ancilla, giving a uniform 1/3 amplitude per photon and a
  success probability of 1/9.
* Toffoli applies a direct postselected controlled-controlled-phase: a
  three-mode contraction W = t(I + 2^(1/3) e^{i pi/3} P) on the rail-1
  triple (P a cyclic permutation) has permanents t, t^2, -t^3 on the one,
  two and three photon subsets, which is exactly the doubly-controlled
  sign flip.  W is embedded as a unitary with one extra mode and t is
  pushed to the largest value with all singular values <= 1, giving a
  success probability of (2^(1/3) - 1)^3, roughly 1/57.

Postselection keeps outcomes with exactly one photon per rail pair and no
photon in any ancilla mode.  The same rule type also carries herald
patterns for the GHZ factory, where part of the photons are detected to
signal that the surviving qubits carry entanglement.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Mapping, Sequence

import numpy as np
from scipy.linalg import null_space

from lopsim.fock import FockState, output_amplitude
from lopsim.mesh import (
    CircuitElement,
    DirectionalCoupler,
    ModePermutation,
    PhotonicCircuit,
    two_mode_gate_elements,
    unitary_to_elements,
)
from lopsim.sources import SourceModel, build_input, noisy_simulate

__all__ = [
    "CompilationError",
    "QubitEncoding",
    "Gate",
    "GateCircuit",
    "PostselectionRule",
    "HeraldPattern",
    "CNOT_SUCCESS",
    "TOFFOLI_SUCCESS",
    "GHZ_INPUT_MODES",
    "GHZ_HERALD_MODES",
    "GHZ_MEASUREMENT_SETTINGS",
    "compile_gate_circuit",
    "logical_matrix",
    "encoding_input_state",
    "preparation_elements",
    "pauli_measurement_setting",
    "logical_distribution",
    "pauli_expectation",
    "ghz_factory",
    "ghz_input_state",
    "ghz_postselection",
    "ghz_stabilizer_expectations",
    "ghz_fidelity",
    "ghz_noisy_fidelity",
]


class CompilationError(ValueError):
    """Raised when a gate circuit cannot be mapped onto the mode budget."""


CNOT_SUCCESS = 1.0 / 9.0
TOFFOLI_SUCCESS = (2.0 ** (1.0 / 3.0) - 1.0) ** 3

_SQRT2 = np.sqrt(2.0)
_ID2 = np.eye(2, dtype=complex)
_X = np.array([[0.0, 1.0], [1.0, 0.0]], dtype=complex)
_H = np.array([[1.0, 1.0], [1.0, -1.0]], dtype=complex) / _SQRT2
_T = np.diag([1.0, np.exp(1j * np.pi / 4.0)])
_S = np.diag([1.0, 1j])

#: Basis-change matrices V with V P V^dagger = Z for each measured Pauli.
_MEASUREMENT_ROTATIONS: dict[str, np.ndarray | None] = {
    "I": None,
    "Z": None,
    "X": _H,
    "Y": _H @ _S.conj().T,
}

#: Single-qubit preparations from logical |0>.
PREPARATIONS: dict[str, np.ndarray] = {
    "0": _ID2,
    "1": _X,
    "+": _H,
    "+i": _S @ _H,
}


# ---------------------------------------------------------------------------
# Encodings and gate circuits


@dataclass(frozen=True)
class QubitEncoding:
    """Assignment of rail pairs and ancilla modes on a mode circuit.

    ``qubit_pairs[q]`` is the ordered (rail 0, rail 1) pair of qubit q.
    Ancilla modes form the pool that entangling gates draw from; they
    start and must end in vacuum.
    """

    qubit_pairs: tuple[tuple[int, int], ...]
    ancilla_modes: tuple[int, ...] = ()
    n_modes: int = 0

    def __post_init__(self) -> None:
        pairs = tuple((int(a), int(b)) for a, b in self.qubit_pairs)
        ancillas = tuple(int(a) for a in self.ancilla_modes)
        object.__setattr__(self, "qubit_pairs", pairs)
        object.__setattr__(self, "ancilla_modes", ancillas)
        used = [mode for pair in pairs for mode in pair] + list(ancillas)
        if len(set(used)) != len(used):
            raise ValueError("rail and ancilla modes must be disjoint")
        n_modes = self.n_modes if self.n_modes else (max(used) + 1 if used else 0)
        object.__setattr__(self, "n_modes", int(n_modes))
        if used and not 0 <= min(used) <= max(used) < self.n_modes:
            raise ValueError("encoding uses modes outside the circuit")

    @property
    def n_qubits(self) -> int:
        return len(self.qubit_pairs)

    def rail(self, qubit: int, bit: int) -> int:
        return self.qubit_pairs[qubit][bit]

    @classmethod
    def default(cls, n_qubits: int) -> "QubitEncoding":
        """Standard layouts: 2, 6 and 12 modes for 1, 2 and 3 qubits.

        The two-qubit layout keeps the interfering rail-1 modes adjacent
        in the middle and puts the ancillas on the outer modes 0 and 5,
        next to the rail-0 modes they attenuate.
        """
        if n_qubits == 1:
            return cls(((0, 1),), (), 2)
        if n_qubits == 2:
            return cls(((1, 2), (4, 3)), (0, 5), 6)
        if n_qubits == 3:
            return cls(((0, 1), (2, 3), (4, 5)), (6, 7, 8, 9, 10, 11), 12)
        raise CompilationError(f"no default encoding for {n_qubits} qubits")


_GATE_ARITY = {"RX": 1, "RY": 1, "RZ": 1, "H": 1, "T": 1, "CNOT": 2, "TOFFOLI": 3}
_ROTATION_GATES = {"RX", "RY", "RZ"}


@dataclass(frozen=True)
class Gate:
    """One gate application: a name, target qubits and an optional angle."""

    name: str
    qubits: tuple[int, ...]
    angle: float | None = None

    def __post_init__(self) -> None:
        name = self.name.upper()
        object.__setattr__(self, "name", name)
        object.__setattr__(self, "qubits", tuple(int(q) for q in self.qubits))
        if name not in _GATE_ARITY:
            raise ValueError(f"unknown gate {self.name!r}")
        if len(self.qubits) != _GATE_ARITY[name]:
            raise ValueError(
                f"{name} takes {_GATE_ARITY[name]} qubit(s), got {self.qubits}"
            )
        if len(set(self.qubits)) != len(self.qubits):
            raise ValueError(f"{name} targets must be distinct, got {self.qubits}")
        if name in _ROTATION_GATES:
            if self.angle is None:
                raise ValueError(f"{name} needs an angle")
            object.__setattr__(self, "angle", float(self.angle))
        elif self.angle is not None:
            raise ValueError(f"{name} takes no angle")


def _single_qubit_matrix(gate: Gate) -> np.ndarray:
    if gate.name == "H":
        return _H
    if gate.name == "T":
        return _T
    half = gate.angle / 2.0
    if gate.name == "RX":
        return np.array(
            [[np.cos(half), -1j * np.sin(half)], [-1j * np.sin(half), np.cos(half)]]
        )
    if gate.name == "RY":
        return np.array([[np.cos(half), -np.sin(half)], [np.sin(half), np.cos(half)]])
    return np.diag([np.exp(-1j * half), np.exp(1j * half)])


@dataclass(frozen=True)
class GateCircuit:
    """Qubit-level circuit: gate list plus an optional Pauli measurement."""

    n_qubits: int
    gates: tuple[Gate, ...] = ()
    measurement: str | None = None

    def __post_init__(self) -> None:
        object.__setattr__(self, "gates", tuple(self.gates))
        if not 1 <= self.n_qubits <= 3:
            raise ValueError(f"supported qubit counts are 1..3, got {self.n_qubits}")
        for gate in self.gates:
            if max(gate.qubits) >= self.n_qubits:
                raise ValueError(f"{gate.name} targets {gate.qubits} out of range")
        if self.measurement is not None:
            word = self.measurement.upper()
            object.__setattr__(self, "measurement", word)
            if len(word) != self.n_qubits or any(c not in "IXYZ" for c in word):
                raise ValueError(f"bad measurement word {self.measurement!r}")

    def logical_unitary(self) -> np.ndarray:
        """The 2^n x 2^n unitary of the gate list (qubit 0 = leftmost bit)."""
        dim = 1 << self.n_qubits
        u = np.eye(dim, dtype=complex)
        for gate in self.gates:
            u = self._gate_unitary(gate) @ u
        return u

    def _gate_unitary(self, gate: Gate) -> np.ndarray:
        if gate.name in ("CNOT", "TOFFOLI"):
            dim = 1 << self.n_qubits
            full = np.zeros((dim, dim), dtype=complex)
            controls, target = gate.qubits[:-1], gate.qubits[-1]
            for col in range(dim):
                bits = [(col >> (self.n_qubits - 1 - q)) & 1 for q in range(self.n_qubits)]
                if all(bits[c] for c in controls):
                    bits[target] ^= 1
                row = 0
                for bit in bits:
                    row = (row << 1) | bit
                full[row, col] = 1.0
            return full
        mat = _single_qubit_matrix(gate)
        full = np.ones((1, 1), dtype=complex)
        for q in range(self.n_qubits):
            full = np.kron(full, mat if q == gate.qubits[0] else _ID2)
        return full

    @classmethod
    def from_text(cls, text: str, n_qubits: int | None = None) -> "GateCircuit":
        """Parse the one-gate-per-line format.

        Example::

            H 0
            RY 1 0.7853981634
            CNOT 0 1
            MEASURE ZZ

        Lines starting with ``#`` and blank lines are skipped.  The qubit
        count defaults to the smallest one fitting all targets and the
        measurement word.
        """
        gates: list[Gate] = []
        measurement: str | None = None
        max_target = -1
        for lineno, raw in enumerate(text.splitlines(), start=1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            tokens = line.split()
            name = tokens[0].upper()
            try:
                if name == "MEASURE":
                    if measurement is not None:
                        raise ValueError("duplicate MEASURE line")
                    if len(tokens) != 2:
                        raise ValueError("MEASURE takes one Pauli word")
                    measurement = tokens[1].upper()
                    continue
                arity = _GATE_ARITY.get(name)
                if arity is None:
                    raise ValueError(f"unknown gate {tokens[0]!r}")
                wants_angle = name in _ROTATION_GATES
                if len(tokens) != 1 + arity + int(wants_angle):
                    raise ValueError(f"{name} line has wrong number of fields")
                qubits = tuple(int(t) for t in tokens[1 : 1 + arity])
                angle = float(tokens[1 + arity]) if wants_angle else None
                gates.append(Gate(name, qubits, angle))
                max_target = max(max_target, *qubits)
            except ValueError as exc:
                raise ValueError(f"line {lineno}: {exc}") from None
        if n_qubits is None:
            n_qubits = max(max_target + 1, len(measurement or ""), 1)
        return cls(n_qubits, tuple(gates), measurement)

    def to_text(self) -> str:
        lines = []
        for gate in self.gates:
            fields = [gate.name, *map(str, gate.qubits)]
            if gate.angle is not None:
                fields.append(repr(gate.angle))
            lines.append(" ".join(fields))
        if self.measurement is not None:
            lines.append(f"MEASURE {self.measurement}")
        return "\n".join(lines) + "\n"


# ---------------------------------------------------------------------------
# Postselection


@dataclass(frozen=True)
class PostselectionRule:
    """Accepts output states with one photon per rail pair.

    ``vacuum_modes`` must carry no photon.  ``heralds``, when present, is
    a tuple of alternative herald patterns; each pattern fixes the exact
    photon count on a set of modes and the state must match one of them.
    With ``threshold`` the rule only distinguishes click from no-click on
    every mode, which is what threshold detectors resolve.
    """

    qubit_pairs: tuple[tuple[int, int], ...]
    vacuum_modes: tuple[int, ...] = ()
    heralds: tuple[tuple[tuple[int, int], ...], ...] = ()
    threshold: bool = False

    def logical_bits(self, state: FockState) -> tuple[int, ...] | None:
        """Logical readout of an accepted state, or None if rejected."""
        occ = state.occupations
        bits = []
        for r0, r1 in self.qubit_pairs:
            if self.threshold:
                c0, c1 = occ[r0] > 0, occ[r1] > 0
                if c0 == c1:
                    return None
                bits.append(1 if c1 else 0)
            else:
                if occ[r0] + occ[r1] != 1:
                    return None
                bits.append(occ[r1])
        if any(occ[mode] > 0 for mode in self.vacuum_modes):
            return None
        if self.heralds and not any(
            self._matches(occ, pattern) for pattern in self.heralds
        ):
            return None
        return tuple(bits)

    def _matches(self, occ: tuple[int, ...], pattern: tuple[tuple[int, int], ...]) -> bool:
        if self.threshold:
            return all((occ[mode] > 0) == (count > 0) for mode, count in pattern)
        return all(occ[mode] == count for mode, count in pattern)

    def accepts(self, state: FockState) -> bool:
        return self.logical_bits(state) is not None

    def with_threshold(self, threshold: bool = True) -> "PostselectionRule":
        return replace(self, threshold=threshold)


def logical_distribution(
    distribution: Mapping[FockState, float], rule: PostselectionRule
) -> tuple[dict[tuple[int, ...], float], float]:
    """Postselected logical distribution and its total weight.

    The returned probabilities are normalized over the accepted outcomes;
    the weight is the unnormalized probability of acceptance.
    """
    raw: dict[tuple[int, ...], float] = {}
    for state, prob in distribution.items():
        bits = rule.logical_bits(state)
        if bits is None:
            continue
        raw[bits] = raw.get(bits, 0.0) + prob
    weight = sum(raw.values())
    if weight <= 0.0:
        raise ValueError("no outcomes pass the postselection rule")
    return {bits: prob / weight for bits, prob in raw.items()}, weight


def pauli_expectation(
    distribution: Mapping[FockState, float], rule: PostselectionRule, word: str
) -> float:
    """Expectation of a Pauli word over the postselected logical outcomes.

    The distribution must already include the basis-change rotations for
    the word (see ``pauli_measurement_setting``); identity positions are
    ignored when accumulating the eigenvalue product.
    """
    logical, _ = logical_distribution(distribution, rule)
    total = 0.0
    for bits, prob in logical.items():
        value = 1
        for q, pauli in enumerate(word.upper()):
            if pauli != "I" and bits[q]:
                value = -value
        total += value * prob
    return total


# ---------------------------------------------------------------------------
# Compilation


def _allocate_ancillas(pool: list[int], count: int, gate: Gate) -> list[int]:
    if len(pool) < count:
        raise CompilationError(
            f"mode budget exceeded: {gate.name} needs {count} fresh ancilla"
            f" modes, {len(pool)} left"
        )
    taken, pool[:] = pool[:count], pool[count:]
    return taken


def _cnot_elements(
    control: tuple[int, int], target: tuple[int, int], ancillas: Sequence[int]
) -> list[CircuitElement]:
    """Postselected CNOT: H on target, three 1/3 couplers, H on target."""
    elements = list(two_mode_gate_elements(_H, *target))
    elements.append(DirectionalCoupler(control[0], ancillas[0], 1.0 / 3.0))
    elements.append(DirectionalCoupler(target[0], ancillas[1], 1.0 / 3.0))
    elements.append(DirectionalCoupler(control[1], target[1], 1.0 / 3.0))
    elements.extend(two_mode_gate_elements(_H, *target))
    return elements


def _dilate_contraction(w: np.ndarray, atol: float = 1e-12) -> np.ndarray:
    """Smallest unitary with ``w`` as its top-left block.

    One extra mode is added per singular value of ``w`` below one; the
    extra columns (vacuum inputs) are an arbitrary orthonormal completion.
    """
    k = w.shape[0]
    gram = np.eye(k) - w.conj().T @ w
    vals, vecs = np.linalg.eigh(gram)
    vals = np.clip(vals, 0.0, None)
    keep = vals > atol
    bottom = (vecs[:, keep] * np.sqrt(vals[keep])).conj().T
    isometry = np.vstack([w, bottom])
    completion = null_space(isometry.conj().T)
    return np.hstack([isometry, completion])


def _ccz_elements(
    pairs: Sequence[tuple[int, int]], ancillas: Sequence[int]
) -> list[CircuitElement]:
    """Postselected doubly-controlled phase flip on three rail-1 modes."""
    t = 1.0 / np.sqrt(1.0 + 2.0 ** (1.0 / 3.0) + 2.0 ** (2.0 / 3.0))
    kappa = 2.0 ** (1.0 / 3.0) * np.exp(1j * np.pi / 3.0)
    cycle = np.array([[0.0, 1.0, 0.0], [0.0, 0.0, 1.0], [1.0, 0.0, 0.0]])
    core = _dilate_contraction(t * (np.eye(3) + kappa * cycle))
    elements: list[CircuitElement] = [
        DirectionalCoupler(pair[0], ancilla, t * t)
        for pair, ancilla in zip(pairs, ancillas[:3])
    ]
    rail1 = [pair[1] for pair in pairs]
    elements.extend(unitary_to_elements(core, [*rail1, ancillas[3]]))
    return elements


def logical_matrix(circuit: PhotonicCircuit, enc: QubitEncoding) -> np.ndarray:
    """Postselected transfer amplitudes between computational basis states.

    Entry (row, col) is the amplitude from the Fock state with photons on
    the rails of basis state col (all other modes empty) to the rails of
    basis state row.  For a correctly compiled gate this equals the gate
    unitary times a constant whose squared magnitude is the success
    probability.
    """
    n = enc.n_qubits
    unitary = circuit.unitary()

    def basis_state(index: int) -> FockState:
        modes = tuple(
            enc.rail(q, (index >> (n - 1 - q)) & 1) for q in range(n)
        )
        return FockState.from_modes(enc.n_modes, modes)

    dim = 1 << n
    states = [basis_state(i) for i in range(dim)]
    mat = np.empty((dim, dim), dtype=complex)
    for col in range(dim):
        for row in range(dim):
            mat[row, col] = output_amplitude(unitary, states[col], states[row])
    return mat


def encoding_input_state(
    enc: QubitEncoding, bits: Sequence[int] | None = None
) -> FockState:
    """Fock input with one photon per qubit on the rail of its bit."""
    if bits is None:
        bits = (0,) * enc.n_qubits
    if len(bits) != enc.n_qubits:
        raise ValueError("one bit per qubit required")
    modes = tuple(enc.rail(q, bit) for q, bit in enumerate(bits))
    return FockState.from_modes(enc.n_modes, modes)


def preparation_elements(
    labels: Sequence[str], enc: QubitEncoding
) -> list[CircuitElement]:
    """Per-qubit preparation rotations from |0> (labels 0, 1, +, +i)."""
    if len(labels) != enc.n_qubits:
        raise ValueError("one preparation label per qubit required")
    elements: list[CircuitElement] = []
    for q, label in enumerate(labels):
        if label not in PREPARATIONS:
            raise ValueError(f"unknown preparation {label!r}")
        if label != "0":
            elements.extend(
                two_mode_gate_elements(PREPARATIONS[label], *enc.qubit_pairs[q])
            )
    return elements


def pauli_measurement_setting(word: str, enc: QubitEncoding) -> PhotonicCircuit:
    """Basis-change rotations so rail detection measures the Pauli word."""
    word = word.upper()
    if len(word) != enc.n_qubits:
        raise ValueError(f"word {word!r} does not match {enc.n_qubits} qubits")
    circuit = PhotonicCircuit(enc.n_modes)
    for q, pauli in enumerate(word):
        if pauli not in _MEASUREMENT_ROTATIONS:
            raise ValueError(f"bad Pauli letter {pauli!r}")
        rotation = _MEASUREMENT_ROTATIONS[pauli]
        if rotation is not None:
            circuit.extend(two_mode_gate_elements(rotation, *enc.qubit_pairs[q]))
    return circuit


def compile_gate_circuit(
    gc: GateCircuit, enc: QubitEncoding | None = None
) -> tuple[PhotonicCircuit, PostselectionRule, float]:
    """Compile a gate circuit to mode elements plus its postselection rule.

    Entangling gates draw fresh ancilla modes from the encoding pool so
    their postselected actions compose exactly; running out of ancillas
    raises ``CompilationError``.  The compiled circuit is verified against
    the circuit's logical unitary before returning.  The returned success
    probability is the postselection weight, independent of the input
    state (1/9 per CNOT, (2^(1/3)-1)^3 per Toffoli).
    """
    if enc is None:
        enc = QubitEncoding.default(gc.n_qubits)
    if enc.n_qubits != gc.n_qubits:
        raise CompilationError(
            f"encoding has {enc.n_qubits} qubits, circuit needs {gc.n_qubits}"
        )
    circuit = PhotonicCircuit(enc.n_modes)
    pool = list(enc.ancilla_modes)
    success = 1.0
    for gate in gc.gates:
        if gate.name == "CNOT":
            ancillas = _allocate_ancillas(pool, 2, gate)
            control, target = (enc.qubit_pairs[q] for q in gate.qubits)
            circuit.extend(_cnot_elements(control, target, ancillas))
            success *= CNOT_SUCCESS
        elif gate.name == "TOFFOLI":
            ancillas = _allocate_ancillas(pool, 4, gate)
            pairs = [enc.qubit_pairs[q] for q in gate.qubits]
            circuit.extend(two_mode_gate_elements(_H, *pairs[2]))
            circuit.extend(_ccz_elements(pairs, ancillas))
            circuit.extend(two_mode_gate_elements(_H, *pairs[2]))
            success *= TOFFOLI_SUCCESS
        else:
            mat = _single_qubit_matrix(gate)
            circuit.extend(two_mode_gate_elements(mat, *enc.qubit_pairs[gate.qubits[0]]))
    rule = PostselectionRule(enc.qubit_pairs, vacuum_modes=enc.ancilla_modes)

    target = gc.logical_unitary()
    realized = logical_matrix(circuit, enc)
    anchor = np.unravel_index(np.argmax(np.abs(target)), target.shape)
    scale = realized[anchor] / target[anchor]
    deviation = float(np.max(np.abs(realized - scale * target)))
    if deviation > 1e-9 or abs(abs(scale) ** 2 - success) > 1e-9:
        raise CompilationError(
            f"compiled circuit deviates from the logical unitary by {deviation:.2e}"
        )

    if gc.measurement is not None:
        circuit.extend(pauli_measurement_setting(gc.measurement, enc).elements)
    return circuit, rule, success


# ---------------------------------------------------------------------------
# GHZ factory

#: Input modes of the six photons feeding the factory.
GHZ_INPUT_MODES = (1, 2, 5, 6, 9, 10)

#: Detector modes whose click pattern heralds the generated state.
GHZ_HERALD_MODES = (2, 3, 4, 7, 8, 9)

#: Rail pairs of the measured (fused) qubits inside the herald modes.
_GHZ_MEASURED_PAIRS = ((2, 3), (4, 7), (8, 9))

#: Paper-style names of the plus-sign heralds by fusion click pattern.
_GHZ_PLUS_NAMES = {(0, 0, 0): "h5", (0, 1, 1): "h3", (1, 0, 1): "h8", (1, 1, 0): "h2"}

#: Measurement settings from which all eight stabilizers are available.
GHZ_MEASUREMENT_SETTINGS = ("XXX", "ZZZ", "YYX", "XYY", "YXY")

_GHZ_STABILIZER_SIGNS = {
    "III": 1.0,
    "XXX": 1.0,
    "ZZI": 1.0,
    "IZZ": 1.0,
    "ZIZ": 1.0,
    "YYX": -1.0,
    "XYY": -1.0,
    "YXY": -1.0,
}


@dataclass(frozen=True)
class HeraldPattern:
    """One herald: exact occupations on the detector modes and the sign
    (+1 or -1) of the three-qubit state |000> + sign |111> it flags."""

    name: str
    occupations: tuple[tuple[int, int], ...]
    sign: int

    def rule(self, threshold: bool = False) -> PostselectionRule:
        return PostselectionRule(
            qubit_pairs=((0, 1), (5, 6), (10, 11)),
            heralds=(self.occupations,),
            threshold=threshold,
        )


def ghz_input_state() -> FockState:
    return FockState.from_modes(12, GHZ_INPUT_MODES)


def _ghz_elements() -> list[CircuitElement]:
    """Six-photon GHZ factory built from a cyclic parity filter.

    The twelve modes form six adjacent rail pairs.  Every photon is
    rotated to an equal superposition of its pair, the rail-1 modes are
    cyclically shifted by one pair (five swaps), and postselecting one
    photon per pair then only keeps the all-0 and all-1 terms: a six-qubit
    GHZ state.  Fusion rotations on the three odd pairs convert them into
    heralds, and the sign of each herald is the parity of its rail-1
    clicks.  A final routing layer moves the surviving qubits onto the
    output pairs (0,1), (5,6), (10,11).
    """
    elements: list[CircuitElement] = []
    for q in range(6):
        rail0, rail1 = 2 * q, 2 * q + 1
        # photons enter rail 1 on even pairs, rail 0 on odd pairs
        prep = _H @ _X if q % 2 == 0 else _H
        elements.extend(two_mode_gate_elements(prep, rail0, rail1))
    for j in range(5):
        targets = list(range(12))
        a, b = 2 * j + 1, 2 * j + 3
        targets[a], targets[b] = b, a
        elements.append(ModePermutation(tuple(targets)))
    for q in (1, 3, 5):
        elements.extend(two_mode_gate_elements(_H, 2 * q, 2 * q + 1))
    targets = list(range(12))
    for src, dst in ((4, 5), (5, 6), (6, 4), (8, 10), (9, 11), (10, 8), (11, 9)):
        targets[src] = dst
    elements.append(ModePermutation(tuple(targets)))
    return elements


def ghz_factory() -> tuple[PhotonicCircuit, tuple[HeraldPattern, ...], QubitEncoding]:
    """Heralded three-photon GHZ generation on twelve modes.

    Six photons enter on ``GHZ_INPUT_MODES``; three are detected on the
    herald modes and the other three leave as dual-rail qubits on pairs
    (0,1), (5,6) and (10,11).  Each of the eight herald patterns occurs
    with probability 1/256 and flags (|000> + sign |111>)/sqrt(2); the
    plus-sign heralds are h2, h3, h5 and h8.
    """
    circuit = PhotonicCircuit(12).extend(_ghz_elements())
    encoding = QubitEncoding(((0, 1), (5, 6), (10, 11)), (), 12)

    plus: list[HeraldPattern] = []
    minus: list[tuple[tuple[int, int], ...]] = []
    for clicks in np.ndindex(2, 2, 2):
        occ = {}
        for (r0, r1), click in zip(_GHZ_MEASURED_PAIRS, clicks):
            occ[r0] = 1 - click
            occ[r1] = click
        occupations = tuple((mode, occ[mode]) for mode in GHZ_HERALD_MODES)
        if sum(clicks) % 2 == 0:
            plus.append(HeraldPattern(_GHZ_PLUS_NAMES[tuple(clicks)], occupations, 1))
        else:
            minus.append(occupations)

    # the minus-sign heralds take the remaining names in ascending order
    # of their occupation tuples
    minus.sort(key=lambda occs: tuple(count for _, count in occs))
    plus.extend(
        HeraldPattern(name, occupations, -1)
        for name, occupations in zip(("h1", "h4", "h6", "h7"), minus)
    )
    heralds = tuple(sorted(plus, key=lambda h: int(h.name[1:])))
    return circuit, heralds, encoding


def ghz_postselection(
    heralds: Sequence[HeraldPattern], sign: int = 1, threshold: bool = False
) -> PostselectionRule:
    """Pooled rule accepting every herald of the given sign."""
    selected = tuple(h.occupations for h in heralds if h.sign == sign)
    if not selected:
        raise ValueError(f"no herald with sign {sign}")
    return PostselectionRule(
        qubit_pairs=((0, 1), (5, 6), (10, 11)),
        heralds=selected,
        threshold=threshold,
    )


def ghz_stabilizer_expectations(
    distributions: Mapping[str, Mapping[FockState, float]], rule: PostselectionRule
) -> dict[str, float]:
    """All eight stabilizer expectations from the five measurement settings.

    ``distributions`` maps each setting in ``GHZ_MEASUREMENT_SETTINGS`` to
    the output distribution taken with that setting's rotations.  The
    two-qubit Z words are marginals of the ZZZ data.
    """
    missing = [w for w in GHZ_MEASUREMENT_SETTINGS if w not in distributions]
    if missing:
        raise ValueError(f"missing measurement settings: {missing}")
    expectations = {"III": 1.0}
    expectations["XXX"] = pauli_expectation(distributions["XXX"], rule, "XXX")
    for word in ("ZZI", "IZZ", "ZIZ"):
        expectations[word] = pauli_expectation(distributions["ZZZ"], rule, word)
    for word in ("YYX", "XYY", "YXY"):
        expectations[word] = pauli_expectation(distributions[word], rule, word)
    return expectations


def ghz_fidelity(expectations: Mapping[str, float]) -> float:
    """Fidelity to (|000> + |111>)/sqrt(2) as the stabilizer average.

    Requires all eight expectations, keyed by the unsigned words; the
    three Y-containing stabilizers enter with a minus sign.
    """
    missing = [word for word in _GHZ_STABILIZER_SIGNS if word not in expectations]
    if missing:
        raise ValueError(f"missing stabilizer expectations: {missing}")
    return sum(
        sign * expectations[word] for word, sign in _GHZ_STABILIZER_SIGNS.items()
    ) / len(_GHZ_STABILIZER_SIGNS)


def ghz_noisy_fidelity(
    source: SourceModel, *, min_branch_weight: float = 1e-8
) -> tuple[float, dict[str, float]]:
    """GHZ fidelity with an imperfect source, pooled over the h+ heralds.

    Runs the five measurement settings through the full noisy simulation
    with threshold detection and returns the stabilizer-average fidelity
    together with the individual expectations.
    """
    circuit, heralds, encoding = ghz_factory()
    rule = ghz_postselection(heralds, sign=1, threshold=True)
    labeled = build_input(
        6, source, modes=GHZ_INPUT_MODES, min_weight=min_branch_weight
    )
    distributions = {}
    for word in GHZ_MEASUREMENT_SETTINGS:
        setting = PhotonicCircuit(12).extend(circuit.elements)
        setting.extend(pauli_measurement_setting(word, encoding).elements)
        distributions[word] = noisy_simulate(
            setting.unitary(), labeled, min_branch_weight=min_branch_weight
        )
    expectations = ghz_stabilizer_expectations(distributions, rule)
    return ghz_fidelity(expectations), expectations
