"""Circuit elements, rectangular interferometer meshes and compilation.

A circuit is an ordered list of phase shifters, directional couplers and
mode permutations. The rectangular mesh follows the nulling scheme of
rectangular decompositions: every unitary factors exactly into one
two-phase cell per mode pair plus a diagonal layer of output phases.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.optimize import minimize

from lopsim.fock import ModeUnitary

__all__ = [
    "PhaseShifter",
    "DirectionalCoupler",
    "ModePermutation",
    "PhotonicCircuit",
    "MeshLayout",
    "MeshPhases",
    "CompilationResult",
    "element_unitary",
    "compose",
    "clements_decompose",
    "compile_with_imperfections",
    "fidelity",
    "gauge_fidelity",
    "input_permutation",
    "two_mode_gate_elements",
    "unitary_to_elements",
]

RECONSTRUCTION_ATOL = 1e-10


@dataclass(frozen=True)
class PhaseShifter:
    mode: int
    phase: float


@dataclass(frozen=True)
class DirectionalCoupler:
    """Coupler with transfer matrix [[sqrt(r), i sqrt(1-r)], [i sqrt(1-r), sqrt(r)]]."""

    mode_a: int
    mode_b: int
    reflectivity: float = 0.5

    def __post_init__(self) -> None:
        if self.mode_a == self.mode_b:
            raise ValueError("coupler needs two distinct modes")
        if not 0.0 <= self.reflectivity <= 1.0:
            raise ValueError(f"reflectivity {self.reflectivity} outside [0, 1]")


@dataclass(frozen=True)
class ModePermutation:
    """Routing element: a photon entering mode i exits mode ``targets[i]``."""

    targets: tuple[int, ...]

    def __post_init__(self) -> None:
        if sorted(self.targets) != list(range(len(self.targets))):
            raise ValueError(f"not a permutation of modes: {self.targets}")


CircuitElement = PhaseShifter | DirectionalCoupler | ModePermutation


def _apply_element(u: np.ndarray, element: CircuitElement) -> None:
    """In-place left-multiplication of ``u`` by the element transfer matrix."""
    if isinstance(element, PhaseShifter):
        u[element.mode, :] *= np.exp(1j * element.phase)
    elif isinstance(element, DirectionalCoupler):
        a, b = element.mode_a, element.mode_b
        t = np.sqrt(element.reflectivity)
        k = 1j * np.sqrt(1.0 - element.reflectivity)
        ra = t * u[a, :] + k * u[b, :]
        rb = k * u[a, :] + t * u[b, :]
        u[a, :] = ra
        u[b, :] = rb
    elif isinstance(element, ModePermutation):
        u[list(element.targets), :] = u.copy()
    else:
        raise TypeError(f"unknown circuit element {element!r}")


def element_unitary(element: CircuitElement, m: int) -> ModeUnitary:
    """Full m-mode transfer matrix of a single element."""
    _check_element_modes(element, m)
    u = np.eye(m, dtype=complex)
    _apply_element(u, element)
    return ModeUnitary(u)


def _check_element_modes(element: CircuitElement, m: int) -> None:
    if isinstance(element, PhaseShifter):
        modes = [element.mode]
    elif isinstance(element, DirectionalCoupler):
        modes = [element.mode_a, element.mode_b]
    else:
        modes = list(element.targets)
        if len(element.targets) != m:
            raise ValueError(f"permutation over {len(element.targets)} modes, circuit has {m}")
    for mode in modes:
        if not 0 <= mode < m:
            raise ValueError(f"mode {mode} out of range for m={m}")


@dataclass
class PhotonicCircuit:
    """Ordered element list; the first element acts on the input first."""

    m: int
    elements: list[CircuitElement] = field(default_factory=list)

    def add(self, element: CircuitElement) -> "PhotonicCircuit":
        _check_element_modes(element, self.m)
        self.elements.append(element)
        return self

    def extend(self, elements: Sequence[CircuitElement]) -> "PhotonicCircuit":
        for element in elements:
            self.add(element)
        return self

    def unitary(self) -> ModeUnitary:
        u = np.eye(self.m, dtype=complex)
        for element in self.elements:
            _apply_element(u, element)
        return ModeUnitary(u)


def compose(circuit: PhotonicCircuit) -> ModeUnitary:
    """Transfer matrix of the whole circuit."""
    return circuit.unitary()


def input_permutation(m: int, targets: Sequence[int]) -> ModePermutation:
    """Permutation routing the n feed modes 0..n-1 onto ``targets``.

    Unused modes fill the remaining slots in ascending order, so the
    element is a full permutation of all m modes.
    """
    targets = list(targets)
    if len(set(targets)) != len(targets):
        raise ValueError("target modes must be distinct")
    if any(not 0 <= t < m for t in targets):
        raise ValueError("target mode out of range")
    if len(targets) > m:
        raise ValueError("more targets than modes")
    spare = [mode for mode in range(m) if mode not in targets]
    full = targets + spare
    mapping = [0] * m
    for src, dst in enumerate(full):
        mapping[src] = dst
    return ModePermutation(tuple(mapping))


# ---------------------------------------------------------------------------
# Rectangular mesh


def _cell_matrix(theta: float, phi: float, r1: float = 0.5, r2: float = 0.5) -> np.ndarray:
    """2x2 block of one cell: coupler(r2) @ phase(theta) @ coupler(r1) @ phase(phi)."""
    c1 = _coupler_matrix(r1)
    c2 = _coupler_matrix(r2)
    pt = np.diag([np.exp(1j * theta), 1.0])
    pf = np.diag([np.exp(1j * phi), 1.0])
    return c2 @ pt @ c1 @ pf


def _coupler_matrix(r: float) -> np.ndarray:
    t = np.sqrt(r)
    k = 1j * np.sqrt(1.0 - r)
    return np.array([[t, k], [k, t]])


class MeshLayout:
    """Rectangular cell arrangement for an m-mode mesh.

    ``cells[c]`` is the top mode of cell c; cells are stored in
    application order. The flat logical phase vector stores
    ``[theta_0, phi_0, theta_1, phi_1, ...]``. For the 12-mode reference
    geometry the six external phases that sit directly on untouched
    input modes are not actuated in hardware and are pinned to zero,
    leaving 126 actuated phases.
    """

    def __init__(self, m: int, pin_input_phases: bool | None = None):
        if m < 2:
            raise ValueError("mesh needs at least 2 modes")
        self.m = m
        self.cells = tuple(_mesh_cell_sequence(m))
        self.n_cells = len(self.cells)
        self.n_logical = 2 * self.n_cells
        if pin_input_phases is None:
            pin_input_phases = m == 12
        pinned: list[int] = []
        if pin_input_phases:
            touched = [False] * m
            for c, p in enumerate(self.cells):
                if not touched[p]:
                    pinned.append(2 * c + 1)
                touched[p] = True
                touched[p + 1] = True
        self.pinned_indices = tuple(pinned)
        self.actuated_indices = tuple(
            i for i in range(self.n_logical) if i not in set(pinned)
        )
        self.n_actuated = len(self.actuated_indices)

    def phases_from_actuated(self, actuated: np.ndarray) -> np.ndarray:
        actuated = np.asarray(actuated, dtype=float)
        if actuated.shape != (self.n_actuated,):
            raise ValueError(
                f"expected {self.n_actuated} actuated phases, got {actuated.shape}"
            )
        full = np.zeros(self.n_logical)
        full[list(self.actuated_indices)] = actuated
        return full

    def actuated_from_phases(self, full: np.ndarray) -> np.ndarray:
        full = np.asarray(full, dtype=float)
        if full.shape != (self.n_logical,):
            raise ValueError(f"expected {self.n_logical} logical phases, got {full.shape}")
        return full[list(self.actuated_indices)]

    def unitary(
        self,
        phases: np.ndarray,
        reflectivities: np.ndarray | None = None,
        output_phases: np.ndarray | None = None,
    ) -> ModeUnitary:
        return ModeUnitary(self._matrix(phases, reflectivities, output_phases))

    def _matrix(
        self,
        phases: np.ndarray,
        reflectivities: np.ndarray | None = None,
        output_phases: np.ndarray | None = None,
    ) -> np.ndarray:
        phases = np.asarray(phases, dtype=float)
        if phases.shape != (self.n_logical,):
            raise ValueError(f"expected {self.n_logical} logical phases, got {phases.shape}")
        refl = self._reflectivity_table(reflectivities)
        u = np.eye(self.m, dtype=complex)
        for c, p in enumerate(self.cells):
            block = _cell_matrix(phases[2 * c], phases[2 * c + 1], refl[c, 0], refl[c, 1])
            u[p : p + 2, :] = block @ u[p : p + 2, :]
        if output_phases is not None:
            output_phases = np.asarray(output_phases, dtype=float)
            if output_phases.shape != (self.m,):
                raise ValueError("output phase layer must have one phase per mode")
            u = np.exp(1j * output_phases)[:, None] * u
        return u

    def _reflectivity_table(self, reflectivities: np.ndarray | None) -> np.ndarray:
        if reflectivities is None:
            return np.full((self.n_cells, 2), 0.5)
        refl = np.asarray(reflectivities, dtype=float)
        if refl.shape != (self.n_cells, 2):
            raise ValueError(
                f"expected reflectivities of shape {(self.n_cells, 2)}, got {refl.shape}"
            )
        return refl

    def circuit(
        self,
        phases: np.ndarray,
        reflectivities: np.ndarray | None = None,
        output_phases: np.ndarray | None = None,
    ) -> PhotonicCircuit:
        """Element-level expansion of the mesh (phi, coupler, theta, coupler per cell)."""
        phases = np.asarray(phases, dtype=float)
        refl = self._reflectivity_table(reflectivities)
        circuit = PhotonicCircuit(self.m)
        for c, p in enumerate(self.cells):
            circuit.add(PhaseShifter(p, float(phases[2 * c + 1])))
            circuit.add(DirectionalCoupler(p, p + 1, float(refl[c, 0])))
            circuit.add(PhaseShifter(p, float(phases[2 * c])))
            circuit.add(DirectionalCoupler(p, p + 1, float(refl[c, 1])))
        if output_phases is not None:
            for mode in range(self.m):
                circuit.add(PhaseShifter(mode, float(output_phases[mode])))
        return circuit


def _mesh_cell_sequence(m: int) -> list[int]:
    """Top-mode sequence of the rectangular nulling scheme (application order)."""
    right: list[int] = []
    left: list[int] = []
    for i in range(m - 1):
        if i % 2 == 0:
            for j in range(i + 1):
                right.append(i - j)
        else:
            for j in range(i + 1):
                left.append(m - 2 - i + j)
    return right + left[::-1]


@dataclass
class MeshPhases:
    """Exact mesh realization of a unitary: cell phases plus output phases."""

    layout: MeshLayout
    phases: np.ndarray
    output_phases: np.ndarray

    def unitary(self, reflectivities: np.ndarray | None = None) -> ModeUnitary:
        return self.layout.unitary(self.phases, reflectivities, self.output_phases)


def clements_decompose(unitary: ModeUnitary, layout: MeshLayout | None = None) -> MeshPhases:
    """Exact rectangular decomposition of ``unitary``.

    Returns cell phases in layout order plus the residual output phase
    layer; the round trip reconstructs the matrix to about 1e-12.
    """
    m = unitary.m
    if layout is None:
        layout = MeshLayout(m)
    if layout.m != m:
        raise ValueError("layout size does not match unitary")
    u = unitary.matrix.astype(complex).copy()

    right_ops: list[tuple[int, float, float]] = []
    left_ops: list[tuple[int, float, float]] = []
    for i in range(m - 1):
        if i % 2 == 0:
            for j in range(i + 1):
                row, col = m - 1 - j, i - j
                theta, phi = _null_with_columns(u, row, col)
                right_ops.append((col, theta, phi))
        else:
            for j in range(i + 1):
                row, col = m - 1 - i + j, j
                theta, phi = _null_with_rows(u, row, col)
                left_ops.append((row - 1, theta, phi))

    diag = np.diag(u).copy()
    converted: list[tuple[int, float, float]] = []
    for p, theta, phi in reversed(left_ops):
        diag, op = _push_diagonal_through(p, theta, phi, diag)
        converted.append(op)

    ordered = right_ops + converted
    phases = np.zeros(layout.n_logical)
    for c, (p, theta, phi) in enumerate(ordered):
        if p != layout.cells[c]:
            raise RuntimeError("cell ordering mismatch in decomposition")
        phases[2 * c] = theta
        phases[2 * c + 1] = phi
    output_phases = np.angle(diag)

    result = MeshPhases(layout, phases, output_phases)
    check = result.unitary().matrix
    err = np.max(np.abs(check - unitary.matrix))
    if err > RECONSTRUCTION_ATOL:
        raise RuntimeError(f"decomposition round trip failed (error {err:.3e})")
    return result


def _null_with_columns(u: np.ndarray, row: int, col: int) -> tuple[float, float]:
    """Right-multiply by a cell inverse on columns (col, col+1) to zero u[row, col]."""
    a, b = u[row, col], u[row, col + 1]
    theta = 2.0 * np.arctan2(np.abs(b), np.abs(a))
    phi = float(np.angle(-a * np.conj(b))) if abs(a) > 0 and abs(b) > 0 else 0.0
    block = _cell_matrix(theta, phi).conj().T
    u[:, col : col + 2] = u[:, col : col + 2] @ block
    return theta, phi


def _null_with_rows(u: np.ndarray, row: int, col: int) -> tuple[float, float]:
    """Left-multiply by a cell on rows (row-1, row) to zero u[row, col]."""
    x, y = u[row - 1, col], u[row, col]
    theta = 2.0 * np.arctan2(np.abs(x), np.abs(y))
    phi = float(np.angle(y * np.conj(x))) if abs(x) > 0 and abs(y) > 0 else 0.0
    block = _cell_matrix(theta, phi)
    u[row - 1 : row + 1, :] = block @ u[row - 1 : row + 1, :]
    return theta, phi


def _push_diagonal_through(
    p: int, theta: float, phi: float, diag: np.ndarray
) -> tuple[np.ndarray, tuple[int, float, float]]:
    """Rewrite cell(theta, phi)^dagger @ diag as diag' @ cell(theta', phi') on pair p."""
    d = np.diag(diag[p : p + 2].astype(complex))
    m2 = _cell_matrix(theta, phi).conj().T @ d
    s, c = np.abs(m2[0, 0]), np.abs(m2[0, 1])
    theta_new = 2.0 * np.arctan2(s, c)
    half = 1j * np.exp(1j * theta_new / 2.0)
    if s > 1e-14 and c > 1e-14:
        phi_new = float(np.angle(m2[0, 0] * np.conj(m2[0, 1])))
        g1 = m2[0, 1] / (half * c)
        g2 = -m2[1, 1] / (half * s)
    elif s <= 1e-14:
        phi_new = 0.0
        g1 = m2[0, 1] / half
        g2 = m2[1, 0] / half
    else:
        phi_new = 0.0
        g1 = -m2[0, 0]
        g2 = m2[1, 1]
    new_diag = diag.copy()
    new_diag[p] = g1
    new_diag[p + 1] = g2
    block = np.diag([g1, g2]) @ _cell_matrix(theta_new, phi_new)
    if np.max(np.abs(block - m2)) > 1e-9:
        raise RuntimeError("diagonal commutation failed")
    return new_diag, (p, theta_new, phi_new)


# ---------------------------------------------------------------------------
# Fidelity and imperfection-aware compilation


def fidelity(target: ModeUnitary | np.ndarray, implemented: ModeUnitary | np.ndarray) -> float:
    """|Tr(U_target^dag U_impl)|^2 / (m Tr(U_impl^dag U_impl))."""
    u = target.matrix if isinstance(target, ModeUnitary) else np.asarray(target)
    v = implemented.matrix if isinstance(implemented, ModeUnitary) else np.asarray(implemented)
    if u.shape != v.shape:
        raise ValueError("shape mismatch")
    m = u.shape[0]
    num = np.abs(np.trace(u.conj().T @ v)) ** 2
    den = m * np.real(np.trace(v.conj().T @ v))
    return float(num / den)


def _optimal_gauges(
    target: np.ndarray, implemented: np.ndarray, iterations: int = 40
) -> tuple[np.ndarray, np.ndarray]:
    """Input/output phase layers maximizing fidelity to the target.

    Per-mode phases at the chip boundary are unobservable in photon
    counting, so compilation is free to choose them. Alternating phase
    updates are run from both update orders and the better result wins.
    """
    best: tuple[float, np.ndarray, np.ndarray] | None = None
    for out_first in (True, False):
        score, d_out, d_in = _alternate_gauges(target, implemented, out_first, iterations)
        if best is None or score > best[0]:
            best = (score, d_out, d_in)
    return np.angle(best[1]), np.angle(best[2])


def _alternate_gauges(
    target: np.ndarray, implemented: np.ndarray, out_first: bool, iterations: int
) -> tuple[float, np.ndarray, np.ndarray]:
    m = target.shape[0]
    d_in = np.ones(m, dtype=complex)
    d_out = np.ones(m, dtype=complex)
    score = -1.0
    for step in range(iterations):
        update_out = (step % 2 == 0) == out_first
        if update_out:
            diag_out = np.einsum("ij,ij->i", implemented * d_in[None, :], target.conj())
            d_out = np.where(
                np.abs(diag_out) > 1e-15, np.conj(diag_out) / np.abs(diag_out), 1.0
            )
        else:
            diag_in = np.einsum("ij,ij->j", d_out[:, None] * implemented, target.conj())
            d_in = np.where(
                np.abs(diag_in) > 1e-15, np.conj(diag_in) / np.abs(diag_in), 1.0
            )
        new_score = float(
            np.abs(
                np.sum(
                    np.einsum(
                        "ij,ij->i",
                        d_out[:, None] * implemented * d_in[None, :],
                        target.conj(),
                    )
                )
            )
        )
        if step > 2 and new_score - score < 1e-14:
            score = new_score
            break
        score = new_score
    return score, d_out, d_in


def gauge_fidelity(target: ModeUnitary | np.ndarray, implemented: ModeUnitary | np.ndarray) -> float:
    """Fidelity maximized over free input/output phase layers."""
    u = target.matrix if isinstance(target, ModeUnitary) else np.asarray(target)
    v = implemented.matrix if isinstance(implemented, ModeUnitary) else np.asarray(implemented)
    out, inn = _optimal_gauges(u, v)
    dressed = np.exp(1j * out)[:, None] * v * np.exp(1j * inn)[None, :]
    return fidelity(u, dressed)


@dataclass
class CompilationResult:
    layout: MeshLayout
    phases: np.ndarray
    output_phases: np.ndarray
    input_phases: np.ndarray
    reflectivities: np.ndarray
    fidelity: float
    implemented: ModeUnitary
    restarts_used: int

    @property
    def actuated_phases(self) -> np.ndarray:
        return self.layout.actuated_from_phases(self.phases)


def _gauge_objective_and_grad(
    layout: MeshLayout, actuated: np.ndarray, refl: np.ndarray, target: np.ndarray
) -> tuple[float, np.ndarray]:
    """Negative gauge fidelity and its gradient over actuated phases.

    The boundary phase layers solve an inner maximization, so at their
    optimum the fidelity gradient reduces to the partial derivative
    through the cell chain (envelope argument). Prefix and suffix
    products make that a single backward sweep.
    """
    m = layout.m
    phases = layout.phases_from_actuated(actuated)
    n = layout.n_cells
    blocks = np.empty((n, 2, 2), dtype=complex)
    dtheta = np.empty((n, 2, 2), dtype=complex)
    dphi = np.empty((n, 2, 2), dtype=complex)
    for c in range(n):
        theta, phi = phases[2 * c], phases[2 * c + 1]
        c1 = _coupler_matrix(refl[c, 0])
        c2 = _coupler_matrix(refl[c, 1])
        pt = np.diag([np.exp(1j * theta), 1.0])
        pf = np.diag([np.exp(1j * phi), 1.0])
        left = c2 @ pt @ c1
        blocks[c] = left @ pf
        dtheta[c] = c2 @ np.diag([1j * np.exp(1j * theta), 0.0]) @ c1 @ pf
        dphi[c] = left @ np.diag([1j * np.exp(1j * phi), 0.0])

    prefixes = np.empty((n + 1, m, m), dtype=complex)
    prefixes[0] = np.eye(m)
    u = np.eye(m, dtype=complex)
    for c, p in enumerate(layout.cells):
        u = u.copy()
        u[p : p + 2, :] = blocks[c] @ u[p : p + 2, :]
        prefixes[c + 1] = u

    out, inn = _optimal_gauges(target, u)
    d_out = np.exp(1j * out)
    d_in = np.exp(1j * inn)
    z = np.sum((d_in[:, None] * target.conj().T * d_out[None, :]).T * u)
    weight = d_in[:, None] * target.conj().T * d_out[None, :]

    grad = np.zeros(layout.n_logical)
    suffix_w = weight.copy()
    for c in range(n - 1, -1, -1):
        p = layout.cells[c]
        g_block = prefixes[c][[p, p + 1], :] @ suffix_w[:, [p, p + 1]]
        dz_theta = np.sum(dtheta[c] * g_block.T)
        dz_phi = np.sum(dphi[c] * g_block.T)
        grad[2 * c] = 2.0 * np.real(np.conj(z) * dz_theta) / m**2
        grad[2 * c + 1] = 2.0 * np.real(np.conj(z) * dz_phi) / m**2
        suffix_w[:, p : p + 2] = suffix_w[:, p : p + 2] @ blocks[c]

    value = float(np.abs(z) ** 2) / m**2
    return -value, -layout.actuated_from_phases(grad)


def compile_with_imperfections(
    target: ModeUnitary,
    reflectivities: np.ndarray,
    layout: MeshLayout | None = None,
    max_restarts: int = 20,
    stop_fidelity: float = 1.0 - 1e-6,
    patience: int = 2,
    rng: np.random.Generator | int | None = None,
    maxiter: int = 500,
) -> CompilationResult:
    """Fit mesh phases so the imperfect mesh implements ``target``.

    Seeds a quasi-Newton refinement from the ideal rectangular solution
    and retries from perturbed seeds until ``stop_fidelity`` is reached,
    ``patience`` consecutive restarts stop improving, or ``max_restarts``
    seeds are exhausted. Boundary phase layers are chosen in closed form
    at every step.
    """
    if layout is None:
        layout = MeshLayout(target.m)
    refl = layout._reflectivity_table(np.asarray(reflectivities, dtype=float))
    if isinstance(rng, (int, np.integer)) or rng is None:
        rng = np.random.default_rng(0 if rng is None else int(rng))

    ideal = clements_decompose(target, layout)
    seed = layout.actuated_from_phases(ideal.phases)
    tmat = target.matrix

    def objective(actuated: np.ndarray) -> tuple[float, np.ndarray]:
        return _gauge_objective_and_grad(layout, actuated, refl, tmat)

    best_x = None
    best_f = np.inf
    restarts = 0
    stale = 0
    for attempt in range(max_restarts):
        restarts = attempt + 1
        x0 = seed if attempt == 0 else seed + rng.normal(0.0, 0.05 * attempt, size=seed.shape)
        res = minimize(objective, x0, jac=True, method="L-BFGS-B", options={"maxiter": maxiter})
        if res.fun < best_f - 1e-7:
            stale = 0
        else:
            stale += 1
        if res.fun < best_f:
            best_f = res.fun
            best_x = res.x
        if -best_f >= stop_fidelity or stale >= patience:
            break

    phases = layout.phases_from_actuated(np.mod(best_x, 2.0 * np.pi))
    v = layout._matrix(phases, refl)
    out, inn = _optimal_gauges(tmat, v)
    dressed = np.exp(1j * out)[:, None] * v * np.exp(1j * inn)[None, :]
    return CompilationResult(
        layout=layout,
        phases=phases,
        output_phases=out,
        input_phases=inn,
        reflectivities=refl,
        fidelity=fidelity(tmat, dressed),
        implemented=ModeUnitary(dressed),
        restarts_used=restarts,
    )


def two_mode_gate_elements(
    v: np.ndarray, mode_a: int, mode_b: int
) -> list[CircuitElement]:
    """Element sequence realizing an arbitrary 2x2 unitary on two modes.

    Layout: input phase, balanced coupler, internal phase, balanced
    coupler, then an output phase on each mode.
    """
    v = np.asarray(v, dtype=complex)
    if v.shape != (2, 2):
        raise ValueError("expected a 2x2 matrix")
    if np.max(np.abs(v.conj().T @ v - np.eye(2))) > 1e-10:
        raise ValueError("matrix is not unitary")
    s, c = np.abs(v[0, 0]), np.abs(v[0, 1])
    theta = 2.0 * np.arctan2(s, c)
    half = 1j * np.exp(1j * theta / 2.0)
    if s > 1e-14 and c > 1e-14:
        phi = float(np.angle(v[0, 0] * np.conj(v[0, 1])))
        psi = float(np.angle(v[0, 1] / (half * c)))
        chi = float(np.angle(-v[1, 1] / (half * s)))
    elif s <= 1e-14:
        phi = 0.0
        psi = float(np.angle(v[0, 1] / half))
        chi = float(np.angle(v[1, 0] / half))
    else:
        phi = 0.0
        psi = float(np.angle(v[0, 0] / (half * s)))
        chi = float(np.angle(-v[1, 1] / half))
    elements: list[CircuitElement] = [
        PhaseShifter(mode_a, phi),
        DirectionalCoupler(mode_a, mode_b, 0.5),
        PhaseShifter(mode_a, theta),
        DirectionalCoupler(mode_a, mode_b, 0.5),
        PhaseShifter(mode_a, psi),
        PhaseShifter(mode_b, chi),
    ]
    return elements


def unitary_to_elements(
    unitary: ModeUnitary | np.ndarray, modes: Sequence[int]
) -> list[CircuitElement]:
    """Element sequence embedding a k-mode unitary on the given modes.

    Triangular nulling: Givens-style two-mode rotations clear the lower
    triangle column by column, leaving a diagonal of phases.  Emitting the
    diagonal first and the inverse rotations in reverse order reproduces
    the matrix exactly on ``modes`` while leaving all other modes alone.
    The modes need not be adjacent or sorted.
    """
    u = unitary.matrix if isinstance(unitary, ModeUnitary) else np.asarray(unitary)
    u = np.array(u, dtype=complex)
    if u.ndim != 2 or u.shape[0] != u.shape[1]:
        raise ValueError("expected a square matrix")
    k = u.shape[0]
    if np.max(np.abs(u.conj().T @ u - np.eye(k))) > RECONSTRUCTION_ATOL:
        raise ValueError("matrix is not unitary")
    modes = [int(mode) for mode in modes]
    if len(modes) != k or len(set(modes)) != k:
        raise ValueError(f"need {k} distinct modes, got {modes}")

    rotations: list[tuple[int, int, np.ndarray]] = []
    for col in range(k - 1):
        for row in range(k - 1, col, -1):
            a, b = u[row - 1, col], u[row, col]
            norm = np.hypot(abs(a), abs(b))
            if norm < 1e-14:
                continue
            givens = np.array([[a.conj(), b.conj()], [-b, a]]) / norm
            u[[row - 1, row], :] = givens @ u[[row - 1, row], :]
            rotations.append((row - 1, row, givens))

    elements: list[CircuitElement] = [
        PhaseShifter(modes[i], float(np.angle(u[i, i]))) for i in range(k)
    ]
    for i, j, givens in reversed(rotations):
        elements.extend(two_mode_gate_elements(givens.conj().T, modes[i], modes[j]))
    return elements
