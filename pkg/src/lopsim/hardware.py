"""Electrical layer: voltage-phase model, transpilation and calibration.

The chip maps voltages to phases through phi = A V^2 + b where A couples
every heater to every phase (thermal crosstalk) and b collects static
offsets. Calibration fits A, b, coupler reflectivities and relative
output losses from intensity measurements alone.
"""

from __future__ import annotations

import json
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import minimize

from lopsim.fock import ModeUnitary
from lopsim.mesh import MeshLayout, _coupler_matrix

__all__ = [
    "HardwareModel",
    "IntensityMeasurement",
    "TranspilationError",
    "phases_from_voltages",
    "voltages_from_phases",
    "unitary_at_voltages",
    "predicted_intensities",
    "generate_measurements",
    "calibrate",
    "crosstalk_free_baseline",
    "held_out_tvd",
    "benchmark_tvd",
    "TvdStatistics",
]

SCHEMA = "lopsim-hardware-v1"
DEFAULT_SELF_HEATING = 0.034
DEFAULT_V_MAX = 14.0


class TranspilationError(ValueError):
    """No feasible voltage branch exists for the requested phases."""


@dataclass
class HardwareModel:
    """Crosstalk model of one chip.

    ``a`` has units rad/V^2 and shape (P, P) over actuated phases,
    ``b`` is the static offset in rad, ``reflectivities`` holds the two
    coupler values of every cell and ``output_losses`` the relative
    output transmissions (scaled so the best mode is 1).
    """

    m: int
    a: np.ndarray
    b: np.ndarray
    reflectivities: np.ndarray
    output_losses: np.ndarray
    v_max: float = DEFAULT_V_MAX
    pin_input_phases: bool | None = None

    def __post_init__(self) -> None:
        self.a = np.asarray(self.a, dtype=float)
        self.b = np.asarray(self.b, dtype=float)
        self.reflectivities = np.asarray(self.reflectivities, dtype=float)
        self.output_losses = np.asarray(self.output_losses, dtype=float)
        layout = self.layout()
        p = layout.n_actuated
        if self.a.shape != (p, p):
            raise ValueError(f"expected A of shape {(p, p)}, got {self.a.shape}")
        if self.b.shape != (p,):
            raise ValueError(f"expected b of shape {(p,)}, got {self.b.shape}")
        if self.reflectivities.shape != (layout.n_cells, 2):
            raise ValueError("reflectivity table does not match the layout")
        if self.output_losses.shape != (self.m,):
            raise ValueError("need one output loss per mode")
        if np.any(np.diag(self.a) <= 0):
            raise ValueError("self-heating coefficients must be positive")
        if np.any(self.output_losses <= 0) or np.any(self.output_losses > 1 + 1e-9):
            raise ValueError("output losses must lie in (0, 1]")

    def layout(self) -> MeshLayout:
        return MeshLayout(self.m, self.pin_input_phases)

    @classmethod
    def prior(cls, m: int, pin_input_phases: bool | None = None) -> "HardwareModel":
        """Nominal pre-calibration model: no crosstalk, balanced couplers."""
        layout = MeshLayout(m, pin_input_phases)
        p = layout.n_actuated
        return cls(
            m=m,
            a=np.eye(p) * DEFAULT_SELF_HEATING,
            b=np.zeros(p),
            reflectivities=np.full((layout.n_cells, 2), 0.5),
            output_losses=np.ones(m),
            pin_input_phases=pin_input_phases,
        )

    @classmethod
    def synthetic(
        cls,
        m: int,
        rng: np.random.Generator | int,
        crosstalk_std: float = 5e-4,
        self_heating_std: float = 0.001,
        offset_mean: float = 0.1,
        offset_std: float = 1.2,
        reflectivity_mean: float = 0.567,
        reflectivity_std: float = 0.006,
        loss_spread: float = 0.15,
        pin_input_phases: bool | None = None,
    ) -> "HardwareModel":
        """Random ground-truth chip for simulation studies."""
        if isinstance(rng, (int, np.integer)):
            rng = np.random.default_rng(int(rng))
        layout = MeshLayout(m, pin_input_phases)
        p = layout.n_actuated
        a = rng.normal(0.0, crosstalk_std, size=(p, p))
        np.fill_diagonal(a, rng.normal(DEFAULT_SELF_HEATING, self_heating_std, size=p))
        b = np.mod(rng.normal(offset_mean, offset_std, size=p), 2.0 * np.pi)
        refl = np.clip(
            rng.normal(reflectivity_mean, reflectivity_std, size=(layout.n_cells, 2)),
            0.05,
            0.95,
        )
        losses = 1.0 - rng.uniform(0.0, loss_spread, size=m)
        losses = losses / losses.max()
        return cls(
            m=m,
            a=a,
            b=b,
            reflectivities=refl,
            output_losses=losses,
            pin_input_phases=pin_input_phases,
        )

    def to_dict(self) -> dict:
        return {
            "schema": SCHEMA,
            "m": self.m,
            "pin_input_phases": self.pin_input_phases,
            "v_max": self.v_max,
            "a": self.a.tolist(),
            "b": self.b.tolist(),
            "reflectivities": self.reflectivities.tolist(),
            "output_losses": self.output_losses.tolist(),
        }

    @classmethod
    def from_dict(cls, payload: dict) -> "HardwareModel":
        if payload.get("schema") != SCHEMA:
            raise ValueError(f"unsupported hardware schema {payload.get('schema')!r}")
        return cls(
            m=int(payload["m"]),
            a=np.array(payload["a"]),
            b=np.array(payload["b"]),
            reflectivities=np.array(payload["reflectivities"]),
            output_losses=np.array(payload["output_losses"]),
            v_max=float(payload["v_max"]),
            pin_input_phases=payload.get("pin_input_phases"),
        )

    def save(self, path: str) -> None:
        with open(path, "w", encoding="utf-8") as handle:
            json.dump(self.to_dict(), handle, indent=2, sort_keys=True)
            handle.write("\n")

    @classmethod
    def load(cls, path: str) -> "HardwareModel":
        with open(path, encoding="utf-8") as handle:
            return cls.from_dict(json.load(handle))


@dataclass(frozen=True)
class IntensityMeasurement:
    """Applied voltages plus the normalized intensities seen at the outputs."""

    voltages: tuple[float, ...]
    input_mode: int
    intensities: tuple[float, ...]


def phases_from_voltages(voltages: np.ndarray, hw: HardwareModel) -> np.ndarray:
    voltages = np.asarray(voltages, dtype=float)
    if voltages.shape != hw.b.shape:
        raise ValueError(f"expected {hw.b.shape[0]} voltages, got {voltages.shape}")
    if np.any(voltages < 0) or np.any(voltages > hw.v_max + 1e-9):
        raise ValueError("voltages outside [0, v_max]")
    return hw.a @ (voltages * voltages) + hw.b


def voltages_from_phases(
    phi_target: np.ndarray, hw: HardwareModel, max_rounds: int = 200
) -> np.ndarray:
    """Voltages realizing ``phi_target`` modulo 2 pi on every shifter.

    Solves A w + b = phi + 2 pi k for w = V^2, raising the integer
    branch of any shifter whose square landed negative until the whole
    vector is feasible.
    """
    phi_target = np.asarray(phi_target, dtype=float)
    if phi_target.shape != hw.b.shape:
        raise ValueError("phase vector does not match the model size")
    w_cap = hw.v_max**2
    k = np.ceil((hw.b - phi_target) / (2.0 * np.pi))
    flips = np.zeros_like(k)
    for _ in range(max_rounds):
        w = np.linalg.solve(hw.a, phi_target + 2.0 * np.pi * k - hw.b)
        negative = w < -1e-12
        over = w > w_cap + 1e-9
        if not negative.any() and not over.any():
            break
        stuck = np.flatnonzero(flips > 8)
        if stuck.size:
            raise TranspilationError(
                f"no feasible voltage branch for shifters {stuck.tolist()} "
                f"(2 pi window exceeds the {w_cap:.0f} V^2 range)"
            )
        k[negative] += 1.0
        k[over & ~negative] -= 1.0
        flips[negative | over] += 1.0
    else:
        bad = np.flatnonzero((w < -1e-12) | (w > w_cap + 1e-9))
        raise TranspilationError(
            f"branch search did not converge for shifters {bad.tolist()}"
        )
    voltages = np.sqrt(np.clip(w, 0.0, w_cap))
    residual = phases_from_voltages(voltages, hw) - phi_target
    residual = np.abs((residual + np.pi) % (2.0 * np.pi) - np.pi)
    if residual.max() > 1e-6:
        raise TranspilationError(f"transpilation residual {residual.max():.2e} rad")
    return voltages


def unitary_at_voltages(
    hw: HardwareModel, layout: MeshLayout, voltages: np.ndarray
) -> ModeUnitary:
    """Transfer matrix the chip implements at the given drive voltages."""
    _check_layout(hw, layout)
    actuated = phases_from_voltages(voltages, hw)
    return layout.unitary(layout.phases_from_actuated(actuated), hw.reflectivities)


def predicted_intensities(
    hw: HardwareModel,
    layout: MeshLayout,
    voltages: np.ndarray,
    input_mode: int,
    scale: float = 1.0,
) -> np.ndarray:
    """Relative output powers for classical or single-photon input light."""
    u = unitary_at_voltages(hw, layout, voltages).matrix
    return scale * hw.output_losses * np.abs(u[:, input_mode]) ** 2


def _check_layout(hw: HardwareModel, layout: MeshLayout) -> None:
    if layout.m != hw.m or layout.n_actuated != hw.b.shape[0]:
        raise ValueError("hardware model does not match the layout")


def generate_measurements(
    hw: HardwareModel,
    layout: MeshLayout,
    n: int,
    rng: np.random.Generator | int,
    noise: float = 0.01,
    scale: float = 1.0,
) -> list[IntensityMeasurement]:
    """Random-drive intensity data with multiplicative detection noise."""
    _check_layout(hw, layout)
    if isinstance(rng, (int, np.integer)):
        rng = np.random.default_rng(int(rng))
    measurements = []
    p = hw.b.shape[0]
    for i in range(n):
        voltages = rng.uniform(0.0, hw.v_max, size=p)
        input_mode = i % hw.m
        clean = predicted_intensities(hw, layout, voltages, input_mode, scale)
        noisy = clean * (1.0 + noise * rng.standard_normal(hw.m))
        noisy = np.clip(noisy, 0.0, None)
        measurements.append(
            IntensityMeasurement(tuple(voltages), input_mode, tuple(noisy))
        )
    return measurements


# ---------------------------------------------------------------------------
# Calibration


@dataclass
class _Batch:
    w: np.ndarray
    inputs: np.ndarray
    y: np.ndarray


def _pack(a, b, refl, losses, scale):
    return np.concatenate(
        [a.ravel(), b, refl.ravel(), losses, np.array([scale])]
    )


def _unpack(x: np.ndarray, p: int, n_cells: int, m: int):
    i = 0
    a = x[i : i + p * p].reshape(p, p)
    i += p * p
    b = x[i : i + p]
    i += p
    refl = x[i : i + 2 * n_cells].reshape(n_cells, 2)
    i += 2 * n_cells
    losses = x[i : i + m]
    i += m
    scale = x[i]
    return a, b, refl, losses, scale


def _forward_states(
    layout: MeshLayout, phi_act: np.ndarray, refl: np.ndarray, inputs: np.ndarray
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Batched single-input mesh evolution; returns per-cell input states.

    ``states[c]`` holds the amplitudes entering cell c; ``states[-1]``
    is the chip output. ``blocks`` keeps every applied 2x2 cell matrix.
    """
    n_batch = phi_act.shape[0]
    m = layout.m
    phi_log = np.zeros((n_batch, layout.n_logical))
    phi_log[:, list(layout.actuated_indices)] = phi_act
    state = np.zeros((n_batch, m), dtype=complex)
    state[np.arange(n_batch), inputs] = 1.0
    states = np.empty((layout.n_cells + 1, n_batch, m), dtype=complex)
    blocks = np.empty((layout.n_cells, n_batch, 2, 2), dtype=complex)
    states[0] = state
    for c, p in enumerate(layout.cells):
        theta = phi_log[:, 2 * c]
        phi = phi_log[:, 2 * c + 1]
        c1 = _coupler_matrix(refl[c, 0])
        c2 = _coupler_matrix(refl[c, 1])
        block = _cell_chain(theta, phi, c1, c2)
        blocks[c] = block
        pair = state[:, p : p + 2]
        state = state.copy()
        state[:, p : p + 2] = np.einsum("bjk,bk->bj", block, pair)
        states[c + 1] = state
    return states, blocks, phi_log


def _cell_chain(theta, phi, c1, c2):
    """(B,2,2) cell matrices c2 @ P(theta) @ c1 @ P(phi)."""
    n_batch = theta.shape[0]
    x = np.broadcast_to(c1, (n_batch, 2, 2)).copy()
    x[:, :, 0] = x[:, :, 0] * np.exp(1j * phi)[:, None]
    x[:, 0, :] = x[:, 0, :] * np.exp(1j * theta)[:, None]
    return np.einsum("jk,bkl->bjl", c2, x)


def _objective(
    x: np.ndarray, layout: MeshLayout, batch: _Batch
) -> tuple[float, np.ndarray]:
    """Mean squared intensity error and its gradient (reverse mode)."""
    m = layout.m
    p = layout.n_actuated
    n_cells = layout.n_cells
    a, b, refl, losses, scale = _unpack(x, p, n_cells, m)
    refl_c = np.clip(refl, 1e-4, 1.0 - 1e-4)
    n_batch = batch.w.shape[0]

    phi_act = batch.w @ a.T + b
    states, blocks, _ = _forward_states(layout, phi_act, refl_c, batch.inputs)
    out = states[-1]
    power = np.abs(out) ** 2
    pred = scale * losses[None, :] * power
    res = pred - batch.y
    value = float(np.sum(res * res)) / n_batch

    d_pred = 2.0 * res / n_batch
    d_losses = np.sum(d_pred * scale * power, axis=0)
    d_scale = float(np.sum(d_pred * losses[None, :] * power))
    adj = (d_pred * scale * losses[None, :]) * np.conj(out)

    d_phi_log = np.zeros((n_batch, layout.n_logical))
    d_refl = np.zeros((n_cells, 2))
    phi_log = np.zeros((n_batch, layout.n_logical))
    phi_log[:, list(layout.actuated_indices)] = phi_act
    for c in range(n_cells - 1, -1, -1):
        pm = layout.cells[c]
        theta = phi_log[:, 2 * c]
        phi = phi_log[:, 2 * c + 1]
        r1, r2 = refl_c[c]
        c1 = _coupler_matrix(r1)
        c2 = _coupler_matrix(r2)
        state_in = states[c][:, pm : pm + 2]
        a_pair = adj[:, pm : pm + 2]

        e_th = np.exp(1j * theta)
        e_ph = np.exp(1j * phi)
        x1 = np.broadcast_to(c1, (n_batch, 2, 2)).copy()
        x1[:, :, 0] = x1[:, :, 0] * e_ph[:, None]

        d_th_block = np.zeros((n_batch, 2, 2), dtype=complex)
        d_th_block[:, 0, :] = 1j * e_th[:, None] * x1[:, 0, :]
        d_th_block = np.einsum("jk,bkl->bjl", c2, d_th_block)

        x1_dph = np.zeros((n_batch, 2, 2), dtype=complex)
        x1_dph[:, :, 0] = c1[:, 0][None, :] * (1j * e_ph)[:, None]
        x1_dph[:, 0, :] = x1_dph[:, 0, :] * e_th[:, None]
        d_ph_block = np.einsum("jk,bkl->bjl", c2, x1_dph)

        dc1 = _coupler_derivative(r1)
        x_r1 = np.broadcast_to(dc1, (n_batch, 2, 2)).copy()
        x_r1[:, :, 0] = x_r1[:, :, 0] * e_ph[:, None]
        x_r1[:, 0, :] = x_r1[:, 0, :] * e_th[:, None]
        d_r1_block = np.einsum("jk,bkl->bjl", c2, x_r1)

        dc2 = _coupler_derivative(r2)
        x2 = np.broadcast_to(c1, (n_batch, 2, 2)).copy()
        x2[:, :, 0] = x2[:, :, 0] * e_ph[:, None]
        x2[:, 0, :] = x2[:, 0, :] * e_th[:, None]
        d_r2_block = np.einsum("jk,bkl->bjl", dc2, x2)

        def pair_grad(d_block):
            prod = np.einsum("bj,bjk,bk->b", a_pair, d_block, state_in)
            return 2.0 * np.real(prod)

        d_phi_log[:, 2 * c] = pair_grad(d_th_block)
        d_phi_log[:, 2 * c + 1] = pair_grad(d_ph_block)
        d_refl[c, 0] = float(np.sum(pair_grad(d_r1_block)))
        d_refl[c, 1] = float(np.sum(pair_grad(d_r2_block)))

        adj = adj.copy()
        adj[:, pm : pm + 2] = np.einsum("bj,bjk->bk", a_pair, blocks[c])

    d_phi_act = d_phi_log[:, list(layout.actuated_indices)]
    d_a = d_phi_act.T @ batch.w
    d_b = d_phi_act.sum(axis=0)
    grad = _pack(d_a, d_b, d_refl, d_losses, d_scale)
    return value, grad


def _coupler_derivative(r: float) -> np.ndarray:
    dt = 0.5 / np.sqrt(r)
    dk = -0.5j / np.sqrt(1.0 - r)
    return np.array([[dt, dk], [dk, dt]])


def calibrate(
    measurements: list[IntensityMeasurement],
    layout: MeshLayout,
    initial: HardwareModel | None = None,
    maxiter: int = 20000,
    v_max: float = DEFAULT_V_MAX,
) -> HardwareModel:
    """Fit a full crosstalk model to intensity measurements.

    Optimizes A, b, every coupler reflectivity, relative output losses
    and one nuisance intensity scale by quasi-Newton descent on the mean
    squared intensity error, with gradients from a reverse-mode sweep of
    the mesh simulation. Voltages are normalized to v_max internally so
    the crosstalk block is as well scaled as the offsets.
    """
    prior = initial if initial is not None else HardwareModel.prior(layout.m)
    _check_layout(prior, layout)
    if not measurements:
        return prior
    p = layout.n_actuated
    n_params = p * p + p + 2 * layout.n_cells + layout.m + 1
    if len(measurements) * layout.m < n_params:
        warnings.warn(
            f"{len(measurements)} measurements for {n_params} parameters; "
            "fit is underdetermined and covariances are unreliable",
            stacklevel=2,
        )

    w_scale = v_max**2
    volts = np.array([mm.voltages for mm in measurements])
    batch = _Batch(
        w=(volts * volts) / w_scale,
        inputs=np.array([mm.input_mode for mm in measurements]),
        y=np.array([mm.intensities for mm in measurements]),
    )
    x0 = _pack(
        prior.a * w_scale, prior.b, prior.reflectivities, prior.output_losses, 1.0
    )
    bounds = (
        [(None, None)] * (p * p + p)
        + [(0.01, 0.99)] * (2 * layout.n_cells)
        + [(1e-3, 1.0)] * layout.m
        + [(1e-6, None)]
    )
    res = minimize(
        _objective,
        x0,
        args=(layout, batch),
        jac=True,
        method="L-BFGS-B",
        bounds=bounds,
        options={"maxiter": maxiter, "maxfun": maxiter + 5000, "ftol": 1e-14, "gtol": 1e-11},
    )
    a, b, refl, losses, _ = _unpack(res.x, p, layout.n_cells, layout.m)
    losses = losses / losses.max()
    return HardwareModel(
        m=layout.m,
        a=a / w_scale,
        b=np.mod(b, 2.0 * np.pi),
        reflectivities=np.clip(refl, 1e-4, 1.0 - 1e-4),
        output_losses=losses,
        v_max=v_max,
        pin_input_phases=layout.pinned_indices != () or None,
    )


def crosstalk_free_baseline(hw: HardwareModel) -> HardwareModel:
    """Per-shifter view of a chip: true self-heating and offsets, no crosstalk.

    This mirrors what single-heater fringe scans recover before any
    global model fit: diagonal response only, nominal couplers, no loss
    information.
    """
    return HardwareModel(
        m=hw.m,
        a=np.diag(np.diag(hw.a)),
        b=hw.b.copy(),
        reflectivities=np.full_like(hw.reflectivities, 0.5),
        output_losses=np.ones(hw.m),
        v_max=hw.v_max,
        pin_input_phases=hw.pin_input_phases,
    )


def held_out_tvd(
    hw: HardwareModel, measurements: list[IntensityMeasurement], layout: MeshLayout
) -> float:
    """Mean TVD between normalized predicted and observed intensities."""
    _check_layout(hw, layout)
    tvds = []
    for mm in measurements:
        pred = predicted_intensities(hw, layout, np.array(mm.voltages), mm.input_mode)
        obs = np.array(mm.intensities)
        pred = pred / pred.sum()
        obs = obs / obs.sum()
        tvds.append(0.5 * np.sum(np.abs(pred - obs)))
    return float(np.mean(tvds))


@dataclass
class TvdStatistics:
    mean: float
    std: float
    tvds: np.ndarray = field(repr=False)


def benchmark_tvd(
    hw_est: HardwareModel,
    hw_true: HardwareModel,
    layout: MeshLayout,
    n_configs: int = 300,
    seed: int = 0,
) -> TvdStatistics:
    """Programming benchmark: intended versus realized output distributions.

    For each random phase target the estimated model picks drive
    voltages; the true chip then runs at those voltages. The TVD between
    the intended intensity distribution (estimated model at the exact
    target phases) and the realized one measures how faithful the
    estimated model is.
    """
    _check_layout(hw_est, layout)
    _check_layout(hw_true, layout)
    rng = np.random.default_rng(seed)
    tvds = np.empty(n_configs)
    attempts = 0
    for i in range(n_configs):
        while True:
            attempts += 1
            if attempts > 50 * n_configs:
                raise TranspilationError("too many infeasible phase configurations")
            phi_target = rng.uniform(0.0, 2.0 * np.pi, size=layout.n_actuated)
            try:
                voltages = voltages_from_phases(phi_target, hw_est)
            except TranspilationError:
                continue
            break
        input_mode = i % layout.m
        u_int = layout.unitary(
            layout.phases_from_actuated(phi_target), hw_est.reflectivities
        ).matrix
        intended = hw_est.output_losses * np.abs(u_int[:, input_mode]) ** 2
        realized = predicted_intensities(hw_true, layout, voltages, input_mode)
        intended = intended / intended.sum()
        realized = realized / realized.sum()
        tvds[i] = 0.5 * np.sum(np.abs(intended - realized))
    return TvdStatistics(mean=float(tvds.mean()), std=float(tvds.std()), tvds=tvds)
