"""No-explosion Kraus evolution, output-port detection and the free-phase correction.

In the interaction picture the no-explosion generator only links the photon
mode at omega with the bomb in ``|0>_m`` to the mode at omega - omega_m with
the bomb in ``|1>_m``. Each such pair (x0, x1) obeys

    dx0/dt = -(gamma/4) (x0 - x1),   dx1/dt = +(gamma/4) (x0 - x1)

so x0 + x1 is conserved and x0 - x1 decays as exp(-gamma t / 2). The pairs are
propagated with this exact solution; there is no time step.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .statespace import (
    JointState,
    Params,
    PortBranch,
    apply_exit_beamsplitter,
    expectations,
    free_phases,
    initial_state,
    require_picture,
    to_schrodinger,
)


def propagate_pairs(x0: np.ndarray, x1: np.ndarray, shift: int, gamma_t: float) -> tuple[np.ndarray, np.ndarray]:
    """Exact no-explosion propagation of arm-I amplitudes over a time with gamma*t = ``gamma_t``.

    ``x0[k]`` pairs with ``x1[k - shift]``. Modes whose partner falls off the
    grid evolve with the partner held at zero, i.e. decay as exp(-gamma t/4).
    Works on 1-D arrays or on stacks whose last axis is the frequency axis.
    """
    new0 = np.array(x0, dtype=complex, copy=True)
    new1 = np.array(x1, dtype=complex, copy=True)
    if gamma_t == 0:
        return new0, new1
    decay = math.exp(-0.5 * gamma_t)
    lone = math.exp(-0.25 * gamma_t)
    a, b = x0[..., shift:], x1[..., :-shift]
    total, diff = a + b, (a - b) * decay
    new0[..., shift:] = 0.5 * (total + diff)
    new1[..., :-shift] = 0.5 * (total - diff)
    new0[..., :shift] *= lone
    new1[..., x1.shape[-1] - shift:] *= lone
    return new0, new1


def kraus_blocks(v: np.ndarray, shift: int, gamma_t: float) -> np.ndarray:
    """Apply the no-explosion propagator to a (4, n) block array (arm II untouched)."""
    out = v.astype(complex, copy=True)
    out[0], out[1] = propagate_pairs(v[0], v[1], shift, gamma_t)
    return out


@dataclass(frozen=True, eq=False)
class EvolutionResult:
    final_state: JointState
    survival_probability: float
    trajectory: dict[str, np.ndarray] | None = field(default=None)


TRAJECTORY_COLUMNS = ("t", "survival", "E_ph", "E_m", "p_armI", "p_armII")


def _evolved(s: JointState, p: Params, dt: float) -> JointState:
    psi0, psi1 = propagate_pairs(s.psi0, s.psi1, s.grid.shift_steps, p.gamma * dt)
    lost = s.norm_sq - float(np.vdot(psi0, psi0).real + np.vdot(psi1, psi1).real + np.vdot(s.beta, s.beta).real)
    weight = min(1.0, max(0.0, s.explosion_weight + lost))
    return s.copy_with(psi0=psi0, psi1=psi1, explosion_weight=weight, time=s.time + dt)


def evolve_no_explosion(
    s: JointState,
    p: Params,
    record: bool = False,
    duration: float | None = None,
    n_samples: int = 201,
) -> EvolutionResult:
    """Evolve an interaction-picture state for ``duration`` (default ``p.tau``).

    The norm lost from the arm-I amplitudes is moved into ``explosion_weight``.
    With ``record`` a trajectory sampled at ``n_samples`` uniform times is
    attached (conditioned energies and arm populations).
    """
    require_picture(s, "interaction")
    duration = p.tau if duration is None else duration
    final = _evolved(s, p, duration)
    trajectory = None
    if record:
        times = np.linspace(0.0, duration, n_samples)
        rows = {c: np.empty(n_samples) for c in TRAJECTORY_COLUMNS}
        for i, t in enumerate(times):
            st = _evolved(s, p, t) if t > 0 else s
            ex = expectations(st, p)
            rows["t"][i] = s.time + t
            rows["survival"][i] = 1.0 - st.explosion_weight
            rows["E_ph"][i] = ex.E_ph
            rows["E_m"][i] = ex.E_m
            rows["p_armI"][i] = ex.p_armI
            rows["p_armII"][i] = ex.p_armII
        trajectory = rows
    return EvolutionResult(final, 1.0 - final.explosion_weight, trajectory)


@dataclass(frozen=True, eq=False)
class PortOutcomes:
    p_dark: float
    p_bright: float
    p_explosion: float
    state_dark: PortBranch | None
    state_bright: PortBranch | None
    energies: dict[str, dict[str, float]]

    def as_rows(self) -> list[dict]:
        rows = []
        for outcome, prob in (("dark", self.p_dark), ("bright", self.p_bright), ("explosion", self.p_explosion)):
            e = self.energies.get(outcome, {})
            rows.append({
                "outcome": outcome,
                "probability": prob,
                "E_ph": e.get("E_ph", float("nan")),
                "E_m": e.get("E_m", float("nan")),
            })
        return rows


def detect_ports(s: JointState, p: Params) -> PortOutcomes:
    """Exit beamsplitter followed by photodetection at both ports.

    Port probabilities are the squared branch norms of the unnormalized
    no-explosion state; conditioned branches are renormalized. An empty branch
    (e.g. the dark port without a bomb) is reported with ``None`` state.
    """
    dark, bright = apply_exit_beamsplitter(s)
    p_dark, p_bright = dark.norm_sq, bright.norm_sq
    energies: dict[str, dict[str, float]] = {}
    states = {}
    for branch, prob in ((dark, p_dark), (bright, p_bright)):
        if prob > 1e-300:
            states[branch.port] = branch.normalized()
            energies[branch.port] = {
                "E_ph": branch.photon_energy(p.hbar),
                "E_m": branch.motional_energy(p.omega_m, p.hbar),
            }
        else:
            states[branch.port] = None
    energies["explosion"] = {"E_ph": 0.0, "E_m": 0.0, "absorbed": p.hbar * p.omega_ph}
    return PortOutcomes(
        p_dark=p_dark,
        p_bright=p_bright,
        p_explosion=s.explosion_weight,
        state_dark=states["dark"],
        state_bright=states["bright"],
        energies=energies,
    )


def correction_time(omega_m: float, tau: float) -> float:
    """tau2 >= 0 such that tau + tau2 is a multiple of 2 pi / omega_m."""
    period = 2.0 * math.pi / omega_m
    cycles = tau / period
    n = round(cycles)
    if abs(cycles - n) < 1e-12:
        return 0.0
    return math.ceil(cycles) * period - tau


def phase_correction(s: JointState, p: Params) -> JointState:
    """Let the bomb evolve freely until its accumulated motional phase is a multiple of 2 pi.

    Returns a Schrodinger-picture state at time ``s.time + tau2``; norms are
    unchanged.
    """
    schr = to_schrodinger(s, p)
    return free_phases(schr, p, correction_time(p.omega_m, s.time))


def motional_fidelity(rho: np.ndarray, which: str = "in") -> float:
    """<m|rho|m> for m = in = (|0>-|1>)/sqrt2 or out = (|0>+|1>)/sqrt2."""
    sign = -1.0 if which == "in" else 1.0
    v = np.array([1.0, sign]) / math.sqrt(2.0)
    return float(np.real(v @ rho @ v))


@dataclass(frozen=True, eq=False)
class InterferometerRun:
    params: Params
    evolution: EvolutionResult
    ports: PortOutcomes


def run_interferometer(p: Params, record: bool = False) -> InterferometerRun:
    """Input beamsplitter, bomb interaction for tau, exit beamsplitter and detection."""
    s0 = initial_state(p, interferometer=True)
    ev = evolve_no_explosion(s0, p, record=record)
    return InterferometerRun(p, ev, detect_ports(ev.final_state, p))


def run_single_arm(p: Params, record: bool = False) -> EvolutionResult:
    """Photon sent through arm I only (no interferometer)."""
    return evolve_no_explosion(initial_state(p, interferometer=False), p, record=record)
