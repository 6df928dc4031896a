"""Closed-form reference values for the interferometer and its weak values.

Everything here is a function of the dimensionless product gamma*tau (and
of gamma*t for time-resolved quantities), with energies scaled by hbar,
omega_ph and omega_m. Exponentials are always evaluated with non-positive
arguments (``exp(-x)`` and ``expm1(-x)``), so very large gamma*tau gives the
asymptotic values without overflow.
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass

from .errors import ValidationError, VanishingPostselectionError


def _check_rate_time(gamma: float, tau: float) -> None:
    if not (math.isfinite(gamma) and math.isfinite(tau)):
        raise ValidationError("gamma and tau must be finite")
    if gamma < 0 or tau < 0:
        raise ValidationError("gamma and tau must be non-negative")


def _inv_expm1(x: float) -> float:
    """1/(e^x - 1) for x > 0 without overflow."""
    return math.exp(-x) / -math.expm1(-x)


@dataclass(frozen=True)
class AnalyticReport:
    gamma_tau: float
    c0: float
    c1: float
    p_ne_single: float
    p_ne_interf: float
    p_dk: float
    p_br: float
    p_expl: float
    E_dk_ph: float
    E_dk_m: float
    E_br_ph: float
    E_br_m: float

    def to_dict(self) -> dict:
        return asdict(self)


def amplitudes(gamma_t: float) -> tuple[float, float]:
    """(c0, c1) = ((1 + e^{-x/2})/2, (1 - e^{-x/2})/2) for x = gamma*t."""
    e = math.exp(-0.5 * gamma_t)
    return 0.5 * (1.0 + e), 0.5 * (1.0 - e)


def closed_forms(gamma: float, tau: float, omega_ph: float, omega_m: float, hbar: float = 1.0) -> AnalyticReport:
    """Survival, port probabilities and conditioned energies after an interaction time tau.

    The bright-port motional energy comes from the conditioned bright state
    (amplitudes proportional to (3 + e)/4 on ``|0>_m`` and (1 - e)/4 on
    ``|1>_m`` with e = exp(-gamma tau/2)); it tends to hbar omega_m / 10.
    """
    _check_rate_time(gamma, tau)
    x = gamma * tau
    e = math.exp(-0.5 * x)
    e2 = math.exp(-x)
    c0, c1 = amplitudes(x)
    bright_norm = (3.0 + e) ** 2 + (1.0 - e) ** 2
    e_br_m = hbar * omega_m * (1.0 - e) ** 2 / bright_norm
    return AnalyticReport(
        gamma_tau=x,
        c0=c0,
        c1=c1,
        p_ne_single=0.5 * (1.0 + e2),
        p_ne_interf=0.5 + 0.25 * (1.0 + e2),
        p_dk=(1.0 - e) ** 2 / 8.0,
        p_br=(5.0 + 2.0 * e + e2) / 8.0,
        p_expl=(1.0 - e2) / 4.0,
        E_dk_ph=hbar * omega_ph - 0.5 * hbar * omega_m,
        E_dk_m=0.5 * hbar * omega_m,
        E_br_ph=hbar * omega_ph - e_br_m,
        E_br_m=e_br_m,
    )


def conditional_dark_probability(gamma_tau: float) -> float:
    """p(dark | no explosion) = (1 - e^{-x/2})^2 / (2 (3 + e^{-x}))."""
    e = math.exp(-0.5 * gamma_tau)
    return (1.0 - e) ** 2 / (2.0 * (3.0 + e * e))


WEAK_VALUE_LABELS = (
    "Pi_I,in", "Pi_I,out", "Pi_II,in", "Pi_II,out",
    "Pi_I,0", "Pi_I,1", "Pi_II,0", "Pi_II,1",
    "Pi_I", "Pi_II",
    "H_m", "H_m Pi_I", "H_m Pi_II",
    "H_ph Pi_I", "H_ph Pi_II", "H_ph",
)


@dataclass(frozen=True)
class AnalyticWeakValues:
    """Weak values at one time in two forms.

    Attributes:
        printed: The reference closed forms as commonly quoted, with the
            rank-two projector values taken from the sum over the in/out basis.
        consistent: The same expressions with every probability-like
            exponent e^{-gamma tau} replaced by the amplitude-like
            e^{-gamma tau/2}, which is what a two-state-vector calculation
            in the wide-wavepacket limit produces.
        residuals: Violations of the operator sum rules by ``printed``.
    """

    gamma_tau: float
    gamma_t: float
    printed: dict[str, float]
    consistent: dict[str, float]
    residuals: dict[str, float]


def _energies(table: dict[str, float], omega_ph: float, omega_m: float, hbar: float) -> None:
    table["H_m Pi_I"] = hbar * omega_m * table["Pi_I,1"]
    table["H_m Pi_II"] = hbar * omega_m * table["Pi_II,1"]
    table["H_m"] = table["H_m Pi_I"] + table["H_m Pi_II"]
    table["H_ph Pi_I"] = hbar * omega_ph * table["Pi_I,0"] + hbar * (omega_ph - omega_m) * table["Pi_I,1"]
    table["H_ph Pi_II"] = hbar * omega_ph * table["Pi_II,0"]
    table["H_ph"] = table["H_ph Pi_I"] + table["H_ph Pi_II"]


def analytic_weak_values(
    gamma: float,
    tau: float,
    t: float,
    omega_ph: float = 10.0,
    omega_m: float = 2.0,
    hbar: float = 1.0,
) -> AnalyticWeakValues:
    """Closed-form weak values under dark-port post-selection at time t in [0, tau].

    Raises:
        VanishingPostselectionError: if gamma*tau = 0, where the dark port never fires.
    """
    _check_rate_time(gamma, tau)
    if not 0.0 <= t <= tau:
        raise ValidationError("t must lie in [0, tau]")
    x = gamma * tau
    if x == 0:
        raise VanishingPostselectionError("gamma*tau = 0: the dark port never fires")
    eh = math.exp(-0.5 * x)
    eb = math.exp(-0.5 * gamma * (tau - t))
    denom = 2.0 * (-math.expm1(-0.5 * x))
    pi_i0 = -(eb + eh) / denom
    pi_i1 = (eb - eh) / denom

    full = _inv_expm1(x)
    half = _inv_expm1(0.5 * x)
    printed = {
        "Pi_I,in": -full,
        "Pi_I,out": 0.0,
        "Pi_II,in": 1.0 + full,
        "Pi_II,out": 0.0,
        "Pi_I,0": pi_i0,
        "Pi_I,1": pi_i1,
        "Pi_II,0": 1.0 / -math.expm1(-x),
        "Pi_II,1": 0.0,
        "Pi_I": -full,
        "Pi_II": 1.0 / -math.expm1(-x),
    }
    consistent = dict(printed)
    consistent.update({
        "Pi_I,in": -half,
        "Pi_II,in": 1.0 + half,
        "Pi_II,0": 1.0 + half,
        "Pi_I": -half,
        "Pi_II": 1.0 + half,
    })
    _energies(printed, omega_ph, omega_m, hbar)
    _energies(consistent, omega_ph, omega_m, hbar)
    residuals = {
        "energy_basis_vs_Pi_I": printed["Pi_I,0"] + printed["Pi_I,1"] - printed["Pi_I"],
        "inout_basis_vs_Pi_I": printed["Pi_I,in"] + printed["Pi_I,out"] - printed["Pi_I"],
        "Pi_I_plus_Pi_II_minus_1": printed["Pi_I"] + printed["Pi_II"] - 1.0,
        "antisymmetry_I": printed["Pi_I,0"] + printed["Pi_I,1"],
    }
    return AnalyticWeakValues(x, gamma * t, printed, consistent, residuals)
