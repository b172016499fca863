"""Fock-space linear algebra for multi-photon interferometry.

Occupation-number states, basis enumeration, matrix permanents, exact
transition amplitudes and strong simulation of linear-optical circuits.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from math import comb, factorial, sqrt
from typing import Iterable, Iterator, Mapping

import numpy as np

__all__ = [
    "FockState",
    "FockBasis",
    "ModeUnitary",
    "OutputDistribution",
    "SampleCounts",
    "permanent",
    "enumerate_basis",
    "output_amplitude",
    "distinguishable_probability",
    "strong_simulate",
    "sample",
]

PERMANENT_MAX_SIZE = 16
UNITARITY_ATOL = 1e-10


@dataclass(frozen=True)
class FockState:
    """Occupation numbers of ``m`` optical modes, mode 0 first."""

    occupations: tuple[int, ...]

    def __post_init__(self) -> None:
        if any(o < 0 for o in self.occupations):
            raise ValueError(f"negative occupation in {self.occupations}")

    @property
    def m(self) -> int:
        return len(self.occupations)

    @property
    def n(self) -> int:
        return sum(self.occupations)

    @classmethod
    def from_string(cls, text: str) -> "FockState":
        """Parse a digit string such as ``"010010"`` (one digit per mode)."""
        if not text or not text.isdigit():
            raise ValueError(f"not a valid occupation string: {text!r}")
        return cls(tuple(int(c) for c in text))

    @classmethod
    def from_modes(cls, m: int, modes: Iterable[int]) -> "FockState":
        """State with one photon added per entry of ``modes``."""
        occ = [0] * m
        for mode in modes:
            if not 0 <= mode < m:
                raise ValueError(f"mode {mode} out of range for m={m}")
            occ[mode] += 1
        return cls(tuple(occ))

    def to_string(self) -> str:
        if any(o > 9 for o in self.occupations):
            raise ValueError("occupation > 9 has no single-digit form")
        return "".join(str(o) for o in self.occupations)

    def modes(self) -> tuple[int, ...]:
        """Mode index of each photon, repeated by occupation, sorted."""
        out: list[int] = []
        for mode, occ in enumerate(self.occupations):
            out.extend([mode] * occ)
        return tuple(out)

    def is_collision_free(self) -> bool:
        return all(o <= 1 for o in self.occupations)

    def __str__(self) -> str:
        return self.to_string()


class FockBasis:
    """Canonically ordered basis of n-photon states on m modes.

    Ordering is ascending lexicographic on occupation tuples, so for
    m=12, n=6 the collision-free basis runs from |000000111111> up to
    |111111000000>.
    """

    def __init__(self, m: int, n: int, collision_free: bool = False):
        if m < 1:
            raise ValueError("need at least one mode")
        if n < 0:
            raise ValueError("photon number must be non-negative")
        if collision_free and n > m:
            raise ValueError(f"cannot place {n} photons collision-free in {m} modes")
        self.m = m
        self.n = n
        self.collision_free = collision_free
        self._states = tuple(_enumerate_occupations(m, n, collision_free))
        self._index = {s: i for i, s in enumerate(self._states)}

    def __len__(self) -> int:
        return len(self._states)

    def __iter__(self) -> Iterator[FockState]:
        return iter(self._states)

    def __getitem__(self, i: int) -> FockState:
        return self._states[i]

    def __contains__(self, state: FockState) -> bool:
        return state in self._index

    def index(self, state: FockState) -> int:
        try:
            return self._index[state]
        except KeyError:
            raise KeyError(f"{state} is not in this basis") from None

    @property
    def size(self) -> int:
        return len(self._states)


def _enumerate_occupations(m: int, n: int, collision_free: bool) -> Iterator[FockState]:
    cap = 1 if collision_free else n

    def rec(prefix: list[int], remaining: int, slots: int) -> Iterator[tuple[int, ...]]:
        if slots == 0:
            if remaining == 0:
                yield tuple(prefix)
            return
        for occ in range(min(cap, remaining) + 1):
            if remaining - occ > cap * (slots - 1):
                continue
            prefix.append(occ)
            yield from rec(prefix, remaining - occ, slots - 1)
            prefix.pop()

    for occ_tuple in rec([], n, m):
        yield FockState(occ_tuple)


def expected_basis_size(m: int, n: int, collision_free: bool) -> int:
    """Closed-form cardinality: C(m, n) collision-free, C(n+m-1, n) full."""
    return comb(m, n) if collision_free else comb(n + m - 1, n)


class ModeUnitary:
    """An m-mode linear-optical transfer matrix, validated as unitary."""

    def __init__(self, matrix: np.ndarray):
        matrix = np.asarray(matrix, dtype=complex)
        if matrix.ndim != 2 or matrix.shape[0] != matrix.shape[1]:
            raise ValueError(f"expected a square matrix, got shape {matrix.shape}")
        deviation = np.max(np.abs(matrix.conj().T @ matrix - np.eye(matrix.shape[0])))
        if deviation > UNITARITY_ATOL * max(1.0, matrix.shape[0]):
            raise ValueError(f"matrix is not unitary (max deviation {deviation:.3e})")
        matrix = matrix.copy()
        matrix.setflags(write=False)
        self.matrix = matrix

    @property
    def m(self) -> int:
        return self.matrix.shape[0]

    @classmethod
    def haar_random(cls, m: int, rng: np.random.Generator) -> "ModeUnitary":
        """Haar-distributed random unitary via QR with phase correction."""
        z = rng.normal(size=(m, m)) + 1j * rng.normal(size=(m, m))
        q, r = np.linalg.qr(z)
        phases = np.diag(r).copy()
        phases /= np.abs(phases)
        return cls(q * phases)

    def __matmul__(self, other: "ModeUnitary") -> "ModeUnitary":
        if self.m != other.m:
            raise ValueError("mode count mismatch")
        return ModeUnitary(self.matrix @ other.matrix)


@lru_cache(maxsize=32)
def _glynn_deltas(k: int) -> tuple[np.ndarray, np.ndarray]:
    """All delta vectors (first entry fixed +1) and their sign products."""
    count = 1 << (k - 1)
    idx = np.arange(count, dtype=np.uint32)
    bits = (idx[:, None] >> np.arange(k - 1, dtype=np.uint32)[None, :]) & 1
    deltas = np.empty((count, k), dtype=np.float64)
    deltas[:, 0] = 1.0
    deltas[:, 1:] = 1.0 - 2.0 * bits
    parity = bits.sum(axis=1) & 1
    signs = 1.0 - 2.0 * parity.astype(np.float64)
    return deltas, signs


def permanent(matrix: np.ndarray, extended_precision: bool | None = None) -> complex:
    """Permanent of a square matrix by Glynn's formula.

    Cost is O(2^k k) for a k x k matrix; k is capped at 16. With
    ``extended_precision`` unset, accumulation switches to extended
    precision from k >= 12 to limit cancellation error.
    """
    a = np.asarray(matrix)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {a.shape}")
    k = a.shape[0]
    if k == 0:
        return 1.0 + 0.0j
    if k > PERMANENT_MAX_SIZE:
        raise ValueError(f"permanent size {k} exceeds cap {PERMANENT_MAX_SIZE}")
    if k == 1:
        return complex(a[0, 0])
    if extended_precision is None:
        extended_precision = k >= 12
    dtype = np.clongdouble if extended_precision else np.complex128
    deltas, signs = _glynn_deltas(k)
    rows = deltas.astype(dtype) @ a.astype(dtype)
    terms = np.prod(rows, axis=1)
    total = np.dot(signs.astype(dtype), terms)
    return complex(total / dtype(1 << (k - 1)))


@lru_cache(maxsize=None)
def enumerate_basis(m: int, n: int, collision_free: bool = False) -> FockBasis:
    """Canonical n-photon basis on m modes (see :class:`FockBasis`).

    Bases are cached: repeated simulations at the same (m, n) share one
    index table instead of re-enumerating the occupation lists.
    """
    return FockBasis(m, n, collision_free)


def _submatrix(u: np.ndarray, input_state: FockState, output_state: FockState) -> np.ndarray:
    cols = input_state.modes()
    rows = output_state.modes()
    return u[np.ix_(rows, cols)]


def output_amplitude(
    unitary: ModeUnitary, input_state: FockState, output_state: FockState
) -> complex:
    """Transition amplitude <t|U|s> = Perm(U_st) / sqrt(prod s_i! prod t_j!)."""
    _check_states(unitary, input_state, output_state)
    if input_state.n == 0:
        return 1.0 + 0.0j
    perm = permanent(_submatrix(unitary.matrix, input_state, output_state))
    norm = 1.0
    for occ in input_state.occupations:
        norm *= factorial(occ)
    for occ in output_state.occupations:
        norm *= factorial(occ)
    return perm / sqrt(norm)


def distinguishable_probability(
    unitary: ModeUnitary, input_state: FockState, output_state: FockState
) -> float:
    """Outcome probability for fully distinguishable photons.

    Classical routing: Perm(|U_st|^2) / prod t_j!.
    """
    _check_states(unitary, input_state, output_state)
    if input_state.n == 0:
        return 1.0
    sub = np.abs(_submatrix(unitary.matrix, input_state, output_state)) ** 2
    norm = 1.0
    for occ in output_state.occupations:
        norm *= factorial(occ)
    return float(np.real(permanent(sub)) / norm)


def _check_states(unitary: ModeUnitary, *states: FockState) -> None:
    n = states[0].n
    for s in states:
        if s.m != unitary.m:
            raise ValueError(f"state has {s.m} modes, unitary has {unitary.m}")
        if s.n != n:
            raise ValueError("photon number mismatch between states")


class OutputDistribution(Mapping[FockState, float]):
    """Probabilities over a Fock basis.

    For a collision-free restriction the probabilities are renormalized
    within the subspace and ``subspace_weight`` records the total mass
    the subspace carried before renormalization.
    """

    def __init__(self, basis: FockBasis, probabilities: np.ndarray, subspace_weight: float = 1.0):
        probabilities = np.asarray(probabilities, dtype=float)
        if probabilities.shape != (len(basis),):
            raise ValueError("probability vector does not match basis size")
        if np.any(probabilities < -1e-12):
            raise ValueError("negative probability")
        self.basis = basis
        self.probabilities = np.clip(probabilities, 0.0, None)
        self.subspace_weight = float(subspace_weight)

    def prob(self, state: FockState) -> float:
        idx = self.basis._index.get(state)
        return 0.0 if idx is None else float(self.probabilities[idx])

    def __getitem__(self, state: FockState) -> float:
        return self.prob(state)

    def __iter__(self) -> Iterator[FockState]:
        return iter(self.basis)

    def __len__(self) -> int:
        return len(self.basis)

    def total(self) -> float:
        return float(self.probabilities.sum())

    def top(self, k: int = 5) -> list[tuple[FockState, float]]:
        order = np.argsort(self.probabilities)[::-1][:k]
        return [(self.basis[i], float(self.probabilities[i])) for i in order]


SampleCounts = dict[FockState, int]


def strong_simulate(
    unitary: ModeUnitary,
    input_state: FockState,
    collision_free: bool = False,
) -> OutputDistribution:
    """Exact output distribution of ``input_state`` through ``unitary``.

    Amplitudes are evaluated as permanents of submatrices; with
    ``collision_free`` the distribution is renormalized over the
    collision-free outcomes (threshold-detector view).
    """
    _check_states(unitary, input_state)
    m, n = input_state.m, input_state.n
    basis = enumerate_basis(m, n, collision_free)
    cols = input_state.modes()
    u_cols = unitary.matrix[:, cols]
    in_norm = 1.0
    for occ in input_state.occupations:
        in_norm *= factorial(occ)

    probs = np.empty(len(basis))
    if n == 0:
        probs[:] = 1.0
        return OutputDistribution(basis, probs)
    deltas, signs = _glynn_deltas(n) if n > 1 else (None, None)
    for i, state in enumerate(basis):
        rows = state.modes()
        sub = u_cols[rows, :]
        if n == 1:
            perm = sub[0, 0]
        else:
            terms = np.prod(deltas @ sub, axis=1)
            perm = np.dot(signs, terms) / (1 << (n - 1))
        norm = in_norm
        for occ in state.occupations:
            norm *= factorial(occ)
        probs[i] = abs(perm) ** 2 / norm

    weight = probs.sum()
    if collision_free:
        if weight <= 0.0:
            raise ValueError("no probability mass in the collision-free subspace")
        return OutputDistribution(basis, probs / weight, subspace_weight=weight)
    return OutputDistribution(basis, probs, subspace_weight=1.0)


def sample(
    unitary: ModeUnitary,
    input_state: FockState,
    shots: int,
    rng: np.random.Generator | int,
    collision_free: bool = False,
) -> SampleCounts:
    """Draw ``shots`` outcomes by inverse-CDF sampling of the exact distribution."""
    if shots < 0:
        raise ValueError("shots must be non-negative")
    if isinstance(rng, (int, np.integer)):
        rng = np.random.default_rng(int(rng))
    dist = strong_simulate(unitary, input_state, collision_free=collision_free)
    p = dist.probabilities / dist.probabilities.sum()
    draws = rng.choice(len(p), size=shots, p=p)
    tallies = np.bincount(draws, minlength=len(p))
    counts: SampleCounts = {}
    for idx in tallies.nonzero()[0]:
        counts[dist.basis[int(idx)]] = int(tallies[idx])
    return counts
