"""Two-state-vector weak values under dark-port post-selection.

The forward state is the interferometer input evolved by the no-explosion
propagator; the backward state is the post-selected state (photon in the dark
port, bomb in ``|in>_m``) pulled back through the exit beamsplitter and
evolved by the same propagator, which is real and symmetric on the grid.
Everything lives on (4, n) block arrays ordered (I0, I1, II0, II1).

The post-selected photon is matched to the motional component it comes with:
the ``|1>_m`` part carries phi_0(omega + omega_m), the spectrum a photon leaves
with after giving omega_m to the bomb. With this choice the arm-I pairs of
the backward state are pure difference modes.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .dynamics import kraus_blocks
from .errors import ValidationError, VanishingPostselectionError
from .statespace import (
    I0,
    I1,
    II0,
    II1,
    FrequencyGrid,
    JointState,
    Observable,
    Params,
    build_grid,
    gaussian_wavepacket,
    require_picture,
    shifted,
    standard_observables,
)

DEFAULT_FLOOR = 1e-12


@dataclass(frozen=True, eq=False)
class TwoStateSetup:
    """Grid, input spectrum and the pre/post-selected block arrays."""

    params: Params
    grid: FrequencyGrid
    phi0: np.ndarray
    initial: np.ndarray
    final: np.ndarray

    @classmethod
    def build(cls, p: Params, grid: FrequencyGrid | None = None) -> "TwoStateSetup":
        grid = grid or build_grid(p)
        phi0 = gaussian_wavepacket(grid, p.omega_ph, p.delta_omega_ph)
        phi1 = shifted(phi0, grid.shift_steps)
        initial = np.zeros((4, grid.size), dtype=complex)
        initial[I0] = phi0 / math.sqrt(2.0)
        initial[II0] = phi0 / math.sqrt(2.0)
        # dark = (I - II)/sqrt2 pulled back; photon-bomb part (phi0 |0> - phi1 |1>)/sqrt2
        final = np.zeros_like(initial)
        final[I0], final[I1] = phi0 / 2.0, -phi1 / 2.0
        final[II0], final[II1] = -phi0 / 2.0, phi1 / 2.0
        return cls(p, grid, phi0, initial, final)

    def forward(self, t: float) -> np.ndarray:
        return kraus_blocks(self.initial, self.grid.shift_steps, self.params.gamma * t)

    def backward(self, t: float) -> np.ndarray:
        """Post-selected state evolved back from tau to t."""
        return kraus_blocks(self.final, self.grid.shift_steps, self.params.gamma * (self.params.tau - t))

    def amplitude(self) -> complex:
        return complex(np.vdot(self.final, self.forward(self.params.tau)))


def _check_time(t: float, p: Params) -> None:
    if not 0.0 <= t <= p.tau:
        raise ValidationError(f"t={t:g} outside [0, tau={p.tau:g}]")


def weak_value(
    A: Observable,
    t: float,
    p: Params,
    floor: float = DEFAULT_FLOOR,
    setup: TwoStateSetup | None = None,
) -> complex:
    """<Psi_f| U(tau - t) A U(t) |Psi_i> / <Psi_f| U(tau) |Psi_i>.

    Raises:
        VanishingPostselectionError: if the post-selection amplitude is below ``floor``.
    """
    _check_time(t, p)
    setup = setup or TwoStateSetup.build(p)
    denom = setup.amplitude()
    if abs(denom) < floor:
        raise VanishingPostselectionError(f"post-selection amplitude {abs(denom):.3g} below floor {floor:g}")
    fwd, bwd = setup.forward(t), setup.backward(t)
    return complex(np.vdot(bwd, A.apply(fwd, setup.grid.omegas, p))) / denom


@dataclass(frozen=True, eq=False)
class WeakValueSeries:
    """Weak values on a uniform time grid.

    ``values[i, k]`` belongs to ``labels[i]`` at ``times[k]``. Hamiltonian rows
    are in units of hbar*gamma (``units`` records the scale per row);
    ``anomalous`` is computed on the unscaled values.
    """

    times: np.ndarray
    labels: tuple[str, ...]
    values: np.ndarray
    anomalous: np.ndarray
    units: tuple[float, ...]
    ranges: tuple[tuple[float, float], ...]
    params: Params

    def row(self, label: str) -> np.ndarray:
        return self.values[self.labels.index(label)]

    def physical(self, label: str) -> np.ndarray:
        i = self.labels.index(label)
        return self.values[i] * self.units[i]

    def to_rows(self) -> list[dict]:
        """Long-format records (t_Gamma, observable_id, re, im, anomalous_flag)."""
        rows = []
        gamma = self.params.gamma if self.params.gamma > 0 else 1.0
        for k, t in enumerate(self.times):
            for i, label in enumerate(self.labels):
                v = self.values[i, k]
                rows.append({
                    "t_Gamma": t * gamma,
                    "observable_id": label,
                    "re": v.real,
                    "im": v.imag,
                    "anomalous_flag": int(self.anomalous[i, k]),
                })
        return rows


def weak_value_series(
    observables: list[Observable] | None,
    p: Params,
    n_times: int = 201,
    floor: float = DEFAULT_FLOOR,
    eps: float = 1e-9,
) -> WeakValueSeries:
    """Weak values of each observable at ``n_times`` uniform times in [0, tau]."""
    if n_times < 2:
        raise ValidationError("n_times must be >= 2")
    obs = list(standard_observables().values()) if observables is None else list(observables)
    setup = TwoStateSetup.build(p)
    denom = setup.amplitude()
    if abs(denom) < floor:
        raise VanishingPostselectionError(f"post-selection amplitude {abs(denom):.3g} below floor {floor:g}")
    times = np.linspace(0.0, p.tau, n_times)
    omegas = setup.grid.omegas
    raw = np.empty((len(obs), n_times), dtype=complex)
    for k, t in enumerate(times):
        fwd, bwd = setup.forward(t), setup.backward(t)
        for i, A in enumerate(obs):
            raw[i, k] = np.vdot(bwd, A.apply(fwd, omegas, p)) / denom
    ranges = tuple(A.spectral_range(omegas, p) for A in obs)
    anomalous = np.zeros(raw.shape, dtype=bool)
    for i, (lo, hi) in enumerate(ranges):
        anomalous[i] = (raw[i].real < lo - eps) | (raw[i].real > hi + eps)
    hbar_gamma = p.hbar * (p.gamma if p.gamma > 0 else 1.0)
    units = tuple(hbar_gamma if A.is_hamiltonian else 1.0 for A in obs)
    values = raw / np.array(units)[:, None]
    return WeakValueSeries(times, tuple(A.label for A in obs), values, anomalous, units, ranges, p)


@dataclass(frozen=True)
class Anomaly:
    label: str
    t_start: float
    t_end: float
    extremal_value: float


def detect_anomalies(series: WeakValueSeries) -> list[Anomaly]:
    """Contiguous time intervals where an observable's weak value leaves its spectral range.

    ``extremal_value`` is the real part furthest outside the range, in the
    series' reporting units.
    """
    found = []
    for i, label in enumerate(series.labels):
        flags = series.anomalous[i]
        if not flags.any():
            continue
        lo, hi = series.ranges[i]
        phys = series.values[i].real * series.units[i]
        excess = np.maximum(lo - phys, phys - hi)
        edges = np.flatnonzero(np.diff(np.concatenate([[0], flags.astype(np.int8), [0]])))
        for a, b in zip(edges[::2], edges[1::2]):
            j = a + int(np.argmax(excess[a:b]))
            found.append(Anomaly(label, float(series.times[a]), float(series.times[b - 1]), float(series.values[i, j].real)))
    return found


# ---------------------------------------------------------------------------
# Three-state effective propagator


@dataclass(frozen=True, eq=False)
class EffectivePropagator:
    """U(t) = Pi_II + Pi_o + Pi_i exp(-gamma t/2) on (4, n) blocks.

    Phi_i = (phi0 |0> - phi1 |1>)/2 and Phi_o = (phi0 |0> + phi1 |1>)/2 in arm I,
    with phi1(omega) = phi0(omega + omega_m). Phi_i is the combination with the
    bomb inside the beam; it is the one that decays.
    """

    grid: FrequencyGrid
    phi_i: np.ndarray
    phi_o: np.ndarray
    gamma: float
    t: float

    @classmethod
    def build(cls, p: Params, t: float, grid: FrequencyGrid | None = None) -> "EffectivePropagator":
        grid = grid or build_grid(p)
        phi0 = gaussian_wavepacket(grid, p.omega_ph, p.delta_omega_ph)
        phi1 = shifted(phi0, grid.shift_steps)
        vi = np.zeros((4, grid.size), dtype=complex)
        vo = np.zeros_like(vi)
        vi[I0], vi[I1] = phi0 / 2.0, -phi1 / 2.0
        vo[I0], vo[I1] = phi0 / 2.0, phi1 / 2.0
        return cls(grid, vi / np.linalg.norm(vi), vo / np.linalg.norm(vo), p.gamma, t)

    def apply_blocks(self, v: np.ndarray) -> np.ndarray:
        out = np.zeros_like(v, dtype=complex)
        out[II0], out[II1] = v[II0], v[II1]
        decay = math.exp(-0.5 * self.gamma * self.t)
        out += np.vdot(self.phi_o, v) * self.phi_o
        out += decay * np.vdot(self.phi_i, v) * self.phi_i
        return out


def effective_propagator_apply(s: JointState, t: float, p: Params) -> JointState:
    """Apply the three-state propagator to an interaction-picture state.

    Arm-I content outside span{Phi_i, Phi_o} is discarded; the norm lost is
    added to the explosion weight, as in the full evolution.
    """
    require_picture(s, "interaction")
    u = EffectivePropagator.build(p, t, grid=s.grid)
    out = u.apply_blocks(s.blocks())
    new = s.copy_with(psi0=out[I0], psi1=out[I1], beta=out[II0], time=s.time + t)
    lost = s.norm_sq - new.norm_sq
    return new.copy_with(explosion_weight=min(1.0, max(0.0, s.explosion_weight + lost)))


# ---------------------------------------------------------------------------
# Backward propagation of the post-selected state


@dataclass(frozen=True, eq=False)
class BackwardState:
    """Coefficients (c'_0, c'_1, d'_0, d'_1) of the backward ansatz versus elapsed time.

    Arm I of the backward state is
    (c'_0 phi0(w) + d'_0 phi0(w - w_m)) |0> + (c'_1 phi0(w + w_m) + d'_1 phi0(w)) |1>,
    arm II is -|in>/sqrt2 with photon phi0. ``coefficients`` are the raw
    amplitudes; ``normalized_final`` divides the values at tau by the norm of
    the reconstructed backward state. ``armI_max_amplitude`` is the largest
    arm-I amplitude of the normalized state relative to the peak of phi0.
    """

    times: np.ndarray
    coefficients: np.ndarray
    norm: float
    normalized_final: np.ndarray
    armI_max_amplitude: float
    bound: float

    @property
    def final(self) -> np.ndarray:
        return self.coefficients[-1]

    @property
    def bound_ratio(self) -> float:
        return self.armI_max_amplitude / self.bound

    def sign_pattern(self, tol: float = 1e-3) -> str:
        c0, c1, d0, d1 = self.normalized_final.real
        if abs(c0 + d0) < tol and abs(c1 + d1) < tol:
            return "c' = -d'"
        if abs(c0 - d0) < tol and abs(c1 - d1) < tol:
            return "c' = d'"
        return "other"


def backward_propagate(p: Params, n_times: int = 201) -> BackwardState:
    """Evolve the backward ansatz from (1/2, 0, 0, -1/2) over tau and rebuild it on the grid."""
    if n_times < 2:
        raise ValidationError("n_times must be >= 2")
    times = np.linspace(0.0, p.tau, n_times)
    decay = np.exp(-0.5 * p.gamma * times)
    # (c'_0, c'_1) and (d'_0, d'_1) are each a linked pair of the no-explosion channel:
    # the sum is conserved and the difference decays
    start = np.array([0.5, 0.0, 0.0, -0.5], dtype=complex)
    coeffs = np.empty((n_times, 4), dtype=complex)
    for j in (0, 2):
        total, diff = start[j] + start[j + 1], start[j] - start[j + 1]
        coeffs[:, j] = 0.5 * (total + diff * decay)
        coeffs[:, j + 1] = 0.5 * (total - diff * decay)
    grid = build_grid(p)
    phi0 = gaussian_wavepacket(grid, p.omega_ph, p.delta_omega_ph)
    s = grid.shift_steps
    c0, c1, d0, d1 = coeffs[-1]
    arm0 = c0 * phi0 + d0 * shifted(phi0, -s)
    arm1 = c1 * shifted(phi0, s) + d1 * phi0
    norm = math.sqrt(float(np.vdot(arm0, arm0).real + np.vdot(arm1, arm1).real) + 0.5)
    peak = float(np.max(np.abs(phi0)))
    arm_max = float(max(np.abs(arm0).max(), np.abs(arm1).max())) / norm / peak
    return BackwardState(
        times=times,
        coefficients=coeffs,
        norm=norm,
        normalized_final=coeffs[-1] / norm,
        armI_max_amplitude=arm_max,
        bound=p.omega_m / p.delta_omega_ph,
    )
