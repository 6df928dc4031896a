"""Frequency grid, joint photon-bomb states, observables and the exit beamsplitter.

A single photon lives on a uniform frequency grid in either arm of the
interferometer. The bomb's motional state is truncated to the two lowest
levels ``|0>_m`` and ``|1>_m``; arm II never couples to the bomb, so only the
``|0>_m`` amplitude is stored there. The absorbed ("exploded") branch is kept
as a scalar probability.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field, replace
from typing import Literal

import numpy as np

from .errors import InfeasibleGridError, PictureMismatchError, ValidationError, ZeroNormError

SQRT2 = math.sqrt(2.0)

Picture = Literal["interaction", "schrodinger"]


class RegimeWarning(UserWarning):
    """Parameters leave the omega_ph, d_omega >> omega_m >> gamma regime."""


@dataclass(frozen=True)
class Params:
    """Physical parameters plus numerical grid controls.

    All frequencies are angular; ``hbar`` sets the energy unit.
    """

    omega_ph: float = 1.0e5
    delta_omega_ph: float = 500.0
    omega_m: float = 10.0
    gamma: float = 1.0
    tau: float = 20.0
    n_modes: int = 4096
    grid_span: float = 10.0
    hbar: float = 1.0
    regime_factor: float = 10.0

    def __post_init__(self):
        for name in ("omega_ph", "delta_omega_ph", "omega_m", "gamma", "tau", "grid_span", "hbar"):
            value = getattr(self, name)
            if not math.isfinite(value):
                raise ValidationError(f"{name} must be finite")
        for name in ("delta_omega_ph", "omega_m", "grid_span", "hbar"):
            if getattr(self, name) <= 0:
                raise ValidationError(f"{name} must be positive")
        if self.gamma < 0 or self.tau < 0:
            raise ValidationError("gamma and tau must be non-negative")
        if self.n_modes < 3:
            raise ValidationError("n_modes must be >= 3")
        for message in self.regime_violations():
            warnings.warn(message, RegimeWarning, stacklevel=3)

    def regime_violations(self) -> list[str]:
        f = self.regime_factor
        out = []
        if self.omega_ph < f * self.omega_m:
            out.append(f"omega_ph/omega_m = {self.omega_ph / self.omega_m:g} < {f:g}")
        if self.delta_omega_ph < f * self.omega_m:
            out.append(f"delta_omega_ph/omega_m = {self.delta_omega_ph / self.omega_m:g} < {f:g}")
        if self.gamma > 0 and self.omega_m < f * self.gamma:
            out.append(f"omega_m/gamma = {self.omega_m / self.gamma:g} < {f:g}")
        return out

    @property
    def gamma_tau(self) -> float:
        return self.gamma * self.tau

    def with_(self, **changes) -> "Params":
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", RegimeWarning)
            return replace(self, **changes)

    @classmethod
    def weak_value_defaults(cls, delta_over_omega_m: float = 50.0, **kw) -> "Params":
        """Weak-value run parameters: gamma*tau = 20, omega_m = 2 gamma, omega_ph = 10 gamma."""
        base = dict(omega_ph=10.0, omega_m=2.0, gamma=1.0, tau=20.0, delta_omega_ph=delta_over_omega_m * 2.0)
        base.update(kw)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", RegimeWarning)
            return cls(**base)


@dataclass(frozen=True, eq=False)
class FrequencyGrid:
    omegas: np.ndarray
    spacing: float
    shift_steps: int

    @property
    def size(self) -> int:
        return self.omegas.size


def build_grid(p: Params) -> FrequencyGrid:
    """Uniform grid centred on omega_ph covering +/- grid_span * delta_omega_ph.

    The spacing is reduced until omega_m is an exact integer multiple of it;
    the number of modes only ever grows relative to ``p.n_modes``.
    """
    half_width = p.grid_span * p.delta_omega_ph
    requested = 2.0 * half_width / (p.n_modes - 1)
    if p.omega_m < requested:
        raise InfeasibleGridError(
            f"grid spacing {requested:g} exceeds omega_m={p.omega_m:g}; increase n_modes"
        )
    shift = math.ceil(p.omega_m / requested - 1e-12)
    spacing = p.omega_m / shift
    half = math.ceil(half_width / spacing - 1e-12)
    omegas = p.omega_ph + spacing * np.arange(-half, half + 1)
    return FrequencyGrid(omegas=omegas, spacing=spacing, shift_steps=shift)


def gaussian_wavepacket(grid: FrequencyGrid, center: float, width: float) -> np.ndarray:
    """Unit-norm Gaussian amplitudes with <(omega - center)^2> = width^2."""
    if not grid.omegas[0] <= center <= grid.omegas[-1]:
        raise ValidationError(f"center {center:g} lies outside the grid")
    if width <= 0:
        raise ValidationError("width must be positive")
    amp = np.exp(-((grid.omegas - center) ** 2) / (4.0 * width**2))
    return (amp / np.linalg.norm(amp)).astype(complex)


def shifted(amplitudes: np.ndarray, steps: int) -> np.ndarray:
    """phi(omega + steps * spacing) on the same grid, zero past the upper edge."""
    out = np.zeros_like(amplitudes)
    if steps == 0:
        out[:] = amplitudes
    elif steps > 0:
        out[:-steps] = amplitudes[steps:]
    else:
        out[-steps:] = amplitudes[:steps]
    return out


@dataclass(frozen=True, eq=False)
class JointState:
    """No-explosion branch of the photon-bomb state plus the explosion weight.

    ``psi0``/``psi1``: arm I with the bomb in ``|0>_m``/``|1>_m``;
    ``beta``: arm II (bomb in ``|0>_m``). ``time`` is the evolution time the
    amplitudes refer to.
    """

    grid: FrequencyGrid
    psi0: np.ndarray
    psi1: np.ndarray
    beta: np.ndarray
    explosion_weight: float = 0.0
    picture: Picture = "interaction"
    time: float = 0.0

    def __post_init__(self):
        n = self.grid.size
        for name in ("psi0", "psi1", "beta"):
            arr = np.asarray(getattr(self, name), dtype=complex)
            if arr.shape != (n,):
                raise ValidationError(f"{name} must have shape ({n},)")
            object.__setattr__(self, name, arr)
        if not -1e-12 <= self.explosion_weight <= 1 + 1e-12:
            raise ValidationError("explosion_weight must lie in [0, 1]")
        if self.picture not in ("interaction", "schrodinger"):
            raise ValidationError(f"unknown picture {self.picture!r}")

    @property
    def norm_sq(self) -> float:
        return float(
            np.vdot(self.psi0, self.psi0).real
            + np.vdot(self.psi1, self.psi1).real
            + np.vdot(self.beta, self.beta).real
        )

    def total_probability(self) -> float:
        return self.norm_sq + self.explosion_weight

    def copy_with(self, **changes) -> "JointState":
        return replace(self, **changes)

    def blocks(self) -> np.ndarray:
        """Amplitudes as a (4, n) array over (I0, I1, II0, II1); II1 is identically zero."""
        return np.stack([self.psi0, self.psi1, self.beta, np.zeros_like(self.beta)])

    def to_json(self) -> dict:
        def pairs(a):
            return [[float(z.real), float(z.imag)] for z in a]

        return {
            "omegas": [float(w) for w in self.grid.omegas],
            "shift_steps": int(self.grid.shift_steps),
            "psi0": pairs(self.psi0),
            "psi1": pairs(self.psi1),
            "beta": pairs(self.beta),
            "explosion_weight": float(self.explosion_weight),
            "picture": self.picture,
            "time": float(self.time),
        }

    @classmethod
    def from_json(cls, data: dict) -> "JointState":
        omegas = np.asarray(data["omegas"], dtype=float)
        steps = np.diff(omegas)
        spacing = float(steps.mean())
        if not np.allclose(steps, spacing, rtol=1e-9, atol=0):
            raise ValidationError("omegas must be uniformly spaced")
        shift = int(data.get("shift_steps", 0)) or 1
        grid = FrequencyGrid(omegas=omegas, spacing=spacing, shift_steps=shift)

        def arr(key):
            return np.array([complex(re, im) for re, im in data[key]])

        return cls(
            grid=grid,
            psi0=arr("psi0"),
            psi1=arr("psi1"),
            beta=arr("beta"),
            explosion_weight=float(data["explosion_weight"]),
            picture=data.get("picture", "interaction"),
            time=float(data.get("time", 0.0)),
        )


def initial_state(p: Params, interferometer: bool = True, grid: FrequencyGrid | None = None) -> JointState:
    """Photon wavepacket entering arm I (or both arms after the input beamsplitter), bomb in |0>_m."""
    grid = grid or build_grid(p)
    phi = gaussian_wavepacket(grid, p.omega_ph, p.delta_omega_ph)
    zero = np.zeros_like(phi)
    if interferometer:
        return JointState(grid, phi / SQRT2, zero, phi / SQRT2)
    return JointState(grid, phi, zero, zero.copy())


# Motional basis change: |0> = (|in> + |out>)/sqrt2, |1> = (|out> - |in>)/sqrt2.

def to_in_out(a0: np.ndarray, a1: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Energy-basis amplitudes (a0, a1) -> (a_in, a_out)."""
    return (a0 - a1) / SQRT2, (a0 + a1) / SQRT2


def from_in_out(a_in: np.ndarray, a_out: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """(a_in, a_out) -> energy-basis amplitudes (a0, a1)."""
    return (a_in + a_out) / SQRT2, (a_out - a_in) / SQRT2


def free_phases(s: JointState, p: Params, dt: float) -> JointState:
    """Free evolution under H_ph + H_m for ``dt`` on Schrodinger-picture amplitudes."""
    ph = np.exp(-1j * s.grid.omegas * dt)
    return s.copy_with(
        psi0=s.psi0 * ph,
        psi1=s.psi1 * ph * np.exp(-1j * p.omega_m * dt),
        beta=s.beta * ph,
        time=s.time + dt,
    )


def to_schrodinger(s: JointState, p: Params) -> JointState:
    if s.picture == "schrodinger":
        return s
    out = free_phases(s.copy_with(time=0.0), p, s.time)
    return out.copy_with(picture="schrodinger", time=s.time)


def to_interaction(s: JointState, p: Params) -> JointState:
    if s.picture == "interaction":
        return s
    out = free_phases(s.copy_with(time=0.0), p, -s.time)
    return out.copy_with(picture="interaction", time=s.time)


@dataclass(frozen=True, eq=False)
class PortBranch:
    """Photon at one interferometer output port, entangled with the bomb's motion."""

    port: Literal["dark", "bright"]
    grid: FrequencyGrid
    amp0: np.ndarray
    amp1: np.ndarray

    @property
    def norm_sq(self) -> float:
        return float(np.vdot(self.amp0, self.amp0).real + np.vdot(self.amp1, self.amp1).real)

    def normalized(self) -> "PortBranch":
        n = self.norm_sq
        if n <= 0:
            raise ZeroNormError(f"{self.port} branch is empty")
        k = 1.0 / math.sqrt(n)
        return PortBranch(self.port, self.grid, self.amp0 * k, self.amp1 * k)

    def photon_energy(self, hbar: float = 1.0) -> float:
        n = self.norm_sq
        if n <= 0:
            raise ZeroNormError(f"{self.port} branch is empty")
        w = self.grid.omegas
        return hbar * float(np.sum(w * (np.abs(self.amp0) ** 2 + np.abs(self.amp1) ** 2))) / n

    def motional_energy(self, omega_m: float, hbar: float = 1.0) -> float:
        n = self.norm_sq
        if n <= 0:
            raise ZeroNormError(f"{self.port} branch is empty")
        return hbar * omega_m * float(np.vdot(self.amp1, self.amp1).real) / n

    def motional_density_matrix(self) -> np.ndarray:
        """Reduced 2x2 density matrix of the bomb (photon traced out), trace 1."""
        n = self.norm_sq
        if n <= 0:
            raise ZeroNormError(f"{self.port} branch is empty")
        a = np.stack([self.amp0, self.amp1])
        return (a @ a.conj().T) / n


def apply_exit_beamsplitter(s: JointState) -> tuple[PortBranch, PortBranch]:
    """Map arms to ports mode by mode: bright = (I + II)/sqrt2, dark = (I - II)/sqrt2.

    Returns ``(dark, bright)``; the explosion weight is untouched.
    """
    dark = PortBranch("dark", s.grid, (s.psi0 - s.beta) / SQRT2, s.psi1 / SQRT2)
    bright = PortBranch("bright", s.grid, (s.psi0 + s.beta) / SQRT2, s.psi1 / SQRT2)
    return dark, bright


@dataclass(frozen=True)
class Expectations:
    norm: float
    p_armI: float
    p_armII: float
    E_ph: float
    E_m: float
    mean_frequency_armI: float
    mean_frequency_armII: float


def expectations(s: JointState, p: Params) -> Expectations:
    """Energies and arm populations of the (possibly sub-normalized) state, conditioned on its norm."""
    n = s.norm_sq
    if n <= 0:
        raise ZeroNormError("state has zero norm")
    w = s.grid.omegas
    i0, i1, ii = np.abs(s.psi0) ** 2, np.abs(s.psi1) ** 2, np.abs(s.beta) ** 2
    p1 = float(i0.sum() + i1.sum())
    p2 = float(ii.sum())
    e_ph = p.hbar * float(np.sum(w * (i0 + i1 + ii))) / n
    e_m = p.hbar * p.omega_m * float(i1.sum()) / n
    f1 = float(np.sum(w * (i0 + i1)) / p1) if p1 > 0 else float("nan")
    f2 = float(np.sum(w * ii) / p2) if p2 > 0 else float("nan")
    return Expectations(math.sqrt(n), p1 / n, p2 / n, e_ph, e_m, f1, f2)


# ---------------------------------------------------------------------------
# Observables acting on (4, n) block arrays ordered (I0, I1, II0, II1)

I0, I1, II0, II1 = range(4)
_ARM_BLOCKS = {"I": (I0, I1), "II": (II0, II1)}


@dataclass(frozen=True)
class Observable:
    """Operator on the single-photon sector times the two-level motion.

    kind: ``projector_arm``, ``projector_joint``, ``H_ph``, ``H_m``,
    ``H_ph_restricted``, ``H_m_restricted`` or ``identity``.
    """

    kind: str
    arm: str | None = None
    motional: str | None = None
    label: str = field(default="", compare=False)

    def __post_init__(self):
        kinds = {"projector_arm", "projector_joint", "H_ph", "H_m", "H_ph_restricted", "H_m_restricted", "identity"}
        if self.kind not in kinds:
            raise ValidationError(f"unknown observable kind {self.kind!r}")
        if self.kind in {"projector_arm", "projector_joint", "H_ph_restricted", "H_m_restricted"}:
            if self.arm not in _ARM_BLOCKS:
                raise ValidationError(f"arm must be 'I' or 'II', got {self.arm!r}")
        if self.kind == "projector_joint" and self.motional not in {"0", "1", "in", "out"}:
            raise ValidationError(f"motional state must be 0, 1, in or out, got {self.motional!r}")
        if not self.label:
            object.__setattr__(self, "label", self._default_label())

    def _default_label(self) -> str:
        if self.kind == "projector_arm":
            return f"Pi_{self.arm}"
        if self.kind == "projector_joint":
            return f"Pi_{self.arm},{self.motional}"
        if self.kind == "H_ph_restricted":
            return f"H_ph Pi_{self.arm}"
        if self.kind == "H_m_restricted":
            return f"H_m Pi_{self.arm}"
        if self.kind == "identity":
            return "1"
        return self.kind

    @property
    def is_hamiltonian(self) -> bool:
        return self.kind.startswith("H_")

    @property
    def is_projector(self) -> bool:
        return self.kind.startswith("projector")

    def apply(self, v: np.ndarray, omegas: np.ndarray, p: Params) -> np.ndarray:
        """Action on a (4, n) block array."""
        out = np.zeros_like(v)
        if self.kind == "identity":
            return v.copy()
        if self.kind == "H_ph":
            return p.hbar * v * omegas[None, :]
        if self.kind == "H_m":
            out[I1] = p.hbar * p.omega_m * v[I1]
            out[II1] = p.hbar * p.omega_m * v[II1]
            return out
        b0, b1 = _ARM_BLOCKS[self.arm]
        if self.kind == "projector_arm":
            out[b0], out[b1] = v[b0], v[b1]
        elif self.kind == "H_ph_restricted":
            out[b0], out[b1] = p.hbar * omegas * v[b0], p.hbar * omegas * v[b1]
        elif self.kind == "H_m_restricted":
            out[b1] = p.hbar * p.omega_m * v[b1]
        elif self.motional == "0":
            out[b0] = v[b0]
        elif self.motional == "1":
            out[b1] = v[b1]
        else:
            a_in, a_out = to_in_out(v[b0], v[b1])
            if self.motional == "in":
                out[b0], out[b1] = from_in_out(a_in, np.zeros_like(a_in))
            else:
                out[b0], out[b1] = from_in_out(np.zeros_like(a_out), a_out)
        return out

    def spectral_range(self, omegas: np.ndarray, p: Params) -> tuple[float, float]:
        """Eigenvalue range used to flag anomalous weak values."""
        if self.is_projector or self.kind == "identity":
            return (1.0, 1.0) if self.kind == "identity" else (0.0, 1.0)
        if self.kind in ("H_m", "H_m_restricted"):
            return 0.0, p.hbar * p.omega_m
        # photon energies are positive; negative grid frequencies are numerical artefacts
        return 0.0, p.hbar * float(np.max(omegas))


def standard_observables() -> dict[str, Observable]:
    """The sixteen observables reported by the weak-value series."""
    obs = [
        Observable("projector_joint", "I", "in"),
        Observable("projector_joint", "I", "out"),
        Observable("projector_joint", "II", "in"),
        Observable("projector_joint", "II", "out"),
        Observable("projector_joint", "I", "0"),
        Observable("projector_joint", "I", "1"),
        Observable("projector_joint", "II", "0"),
        Observable("projector_joint", "II", "1"),
        Observable("projector_arm", "I"),
        Observable("projector_arm", "II"),
        Observable("H_m"),
        Observable("H_m_restricted", "I"),
        Observable("H_m_restricted", "II"),
        Observable("H_ph_restricted", "I"),
        Observable("H_ph_restricted", "II"),
        Observable("H_ph"),
    ]
    return {o.label: o for o in obs}


def require_picture(s: JointState, picture: Picture) -> None:
    if s.picture != picture:
        raise PictureMismatchError(f"expected {picture} picture, got {s.picture}")
