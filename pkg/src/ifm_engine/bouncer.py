"""Quantum bouncing ball: Airy eigenstates, Gaussian beam-profile fit, platform raise.

The motional degree of freedom of the bomb is a particle of mass ``m`` above a
hard floor in a uniform field ``g``. Its eigenfunctions are shifted Airy
functions ``Ai(z/z0 + zeta_j)`` where ``zeta_j`` are the (negative) Airy zeros.

Ai is evaluated without any special-function library: a Maclaurin series in
extended precision (``decimal``) inside ``|u| <= AIRY_CROSSOVER`` and the
standard asymptotic expansions outside.
"""
from __future__ import annotations

import functools
import math
from dataclasses import dataclass, field
from decimal import Decimal, localcontext

import numpy as np
from scipy import optimize

from .errors import GridTooCoarseError, NonConvergenceError, ValidationError

# Optimally truncated asymptotic series: ~1e-15 relative at |u| = 8, ~1e-10 at |u| = 6.
AIRY_CROSSOVER = 8.0
_SERIES_DIGITS = 50
# Ai(0) and -Ai'(0) to 50 digits: 3^{-2/3}/Gamma(2/3) and 3^{-1/3}/Gamma(1/3).
_AI0 = Decimal("0.35502805388781723926006318600418317639797917419918")
_MINUS_AIP0 = Decimal("0.25881940379280679840518356018920396347909113835493")
_SQRT_PI = math.sqrt(math.pi)


def _series(u: float) -> tuple[float, float]:
    """Ai(u), Ai'(u) from the Maclaurin series, summed in 50-digit arithmetic."""
    with localcontext() as ctx:
        ctx.prec = _SERIES_DIGITS
        x = Decimal(repr(float(u)))
        x3 = x * x * x
        tiny = Decimal(10) ** (-(_SERIES_DIGITS - 5))
        # f = sum t_k, g = sum s_k; f' = sum p_k, g' = sum q_k
        t, s = Decimal(1), x
        p, q = x * x / 2, Decimal(1)
        f, g, fp, gp = t, s, p, q
        k = 0
        while True:
            t = t * x3 / ((3 * k + 2) * (3 * k + 3))
            s = s * x3 / ((3 * k + 3) * (3 * k + 4))
            q = q * x3 / ((3 * k + 3) * (3 * k + 1))
            if k >= 1:
                p = p * x3 / ((3 * k + 2) * (3 * k))
                fp += p
            f += t
            g += s
            gp += q
            k += 1
            if k > 3 and max(abs(t), abs(s), abs(p), abs(q)) < tiny:
                break
        ai = _AI0 * f - _MINUS_AIP0 * g
        aip = _AI0 * fp - _MINUS_AIP0 * gp
        return float(ai), float(aip)


def _asymptotic_coeffs(n: int) -> tuple[np.ndarray, np.ndarray]:
    u = np.empty(n)
    u[0] = 1.0
    for k in range(1, n):
        u[k] = u[k - 1] * (6 * k - 5) * (6 * k - 3) * (6 * k - 1) / ((2 * k - 1) * 216 * k)
    ks = np.arange(n)
    v = -(6 * ks + 1) / (6 * ks - 1) * u
    return u, v


_U, _V = _asymptotic_coeffs(40)


def _truncated(coeffs: np.ndarray, zeta: float, alternate: bool) -> float:
    # sum until the terms stop decreasing (optimal truncation)
    total, prev = 0.0, math.inf
    for k, c in enumerate(coeffs):
        term = c / zeta**k
        if abs(term) > prev:
            break
        total += (-1) ** k * term if alternate else term
        prev = abs(term)
    return total


def _asymptotic(u: float) -> tuple[float, float]:
    if u > 0:
        zeta = 2.0 / 3.0 * u**1.5
        pref = math.exp(-zeta) / (2.0 * _SQRT_PI)
        ai = pref * u**-0.25 * _truncated(_U, zeta, alternate=True)
        aip = -pref * u**0.25 * _truncated(_V, zeta, alternate=True)
        return ai, aip
    x = -u
    zeta = 2.0 / 3.0 * x**1.5
    c, s = math.cos(zeta - math.pi / 4), math.sin(zeta - math.pi / 4)
    # even and odd parts of the alternating-in-pairs expansions
    ue = _truncated(_U[0::2], zeta**2, alternate=True)
    uo = _truncated(_U[1::2], zeta**2, alternate=True) / zeta
    ve = _truncated(_V[0::2], zeta**2, alternate=True)
    vo = _truncated(_V[1::2], zeta**2, alternate=True) / zeta
    ai = (c * ue + s * uo) / (_SQRT_PI * x**0.25)
    aip = x**0.25 * (s * ve - c * vo) / _SQRT_PI
    return ai, aip


def _airy_pair(u: float) -> tuple[float, float]:
    if not math.isfinite(u):
        raise ValidationError(f"Airy argument must be finite, got {u}")
    if abs(u) <= AIRY_CROSSOVER:
        return _series(u)
    return _asymptotic(u)


def airy_ai(u):
    """Airy function Ai(u), the solution of y'' = u y that decays as u -> +inf.

    Accepts a scalar or an array; returns the same shape.
    """
    if np.ndim(u) == 0:
        return _airy_pair(float(u))[0]
    arr = np.asarray(u, dtype=float)
    return np.array([_airy_pair(x)[0] for x in arr.ravel()]).reshape(arr.shape)


def airy_ai_prime(u):
    """Derivative Ai'(u); same conventions as :func:`airy_ai`."""
    if np.ndim(u) == 0:
        return _airy_pair(float(u))[1]
    arr = np.asarray(u, dtype=float)
    return np.array([_airy_pair(x)[1] for x in arr.ravel()]).reshape(arr.shape)


@functools.lru_cache(maxsize=8)
def _zeros(n: int) -> tuple[float, ...]:
    out = []
    for k in range(1, n + 1):
        # leading-order asymptotic location, then bracket a sign change
        t = 3.0 * math.pi * (4 * k - 1) / 8.0
        guess = -t ** (2.0 / 3.0) * (1.0 + 5.0 / 48.0 / t**2)
        lo, hi = guess - 0.3, guess + 0.3
        while airy_ai(lo) * airy_ai(hi) > 0:
            lo, hi = lo - 0.1, hi + 0.1
        root = optimize.brentq(airy_ai, lo, hi, xtol=1e-15, rtol=4 * np.finfo(float).eps, maxiter=200)
        out.append(root)
    return tuple(out)


def airy_zeros(n: int) -> list[float]:
    """The ``n`` least negative zeros of Ai, strictly decreasing."""
    if n < 1:
        raise ValidationError("need at least one zero")
    return list(_zeros(int(n)))


@dataclass(frozen=True, eq=False)
class BouncerConfig:
    """Bouncing-ball problem definition.

    Lengths are in the same units as ``z0``; energies in units of
    ``mass * gravity * length``.
    """

    z0: float = 1.0
    mass: float = 1.0
    gravity: float = 1.0
    z_grid: np.ndarray = field(default_factory=lambda: np.linspace(0.0, 12.0, 4096))
    n_levels: int = 2

    def __post_init__(self):
        grid = np.asarray(self.z_grid, dtype=float)
        object.__setattr__(self, "z_grid", grid)
        if not self.z0 > 0:
            raise ValidationError("z0 must be positive")
        if grid.ndim != 1 or grid.size < 3:
            raise ValidationError("z_grid must be a 1-D array of at least 3 points")
        if grid[0] < 0 or np.any(np.diff(grid) <= 0):
            raise ValidationError("z_grid must be strictly increasing and start at z >= 0")
        if self.n_levels < 2:
            raise ValidationError("n_levels must be >= 2")

    @classmethod
    def uniform(cls, z0: float = 1.0, z_max_over_z0: float = 12.0, n_points: int = 4096, **kw):
        return cls(z0=z0, z_grid=np.linspace(0.0, z_max_over_z0 * z0, n_points), **kw)

    @classmethod
    def from_physical(cls, mass: float, gravity: float, hbar: float = 1.0, **kw):
        """Build a config with ``z0 = (hbar^2 / 2 m^2 g)^(1/3)`` and a default grid."""
        z0 = (hbar**2 / (2.0 * mass**2 * gravity)) ** (1.0 / 3.0)
        grid = kw.pop("z_grid", None)
        if grid is None:
            grid = np.linspace(0.0, 12.0 * z0, 4096)
        return cls(z0=z0, mass=mass, gravity=gravity, z_grid=grid, **kw)

    def refined(self, factor: int = 2) -> "BouncerConfig":
        """Same range, ``factor`` times as many intervals (linear interpolation of the grid)."""
        n = self.z_grid.size
        idx = np.linspace(0.0, n - 1, factor * (n - 1) + 1)
        grid = np.interp(idx, np.arange(n), self.z_grid)
        return BouncerConfig(self.z0, self.mass, self.gravity, grid, self.n_levels)

    @property
    def _key(self):
        return (self.z0, self.n_levels, self.z_grid.tobytes())


@dataclass(frozen=True, eq=False)
class BounceEigenstate:
    index: int
    zero: float
    energy: float
    wavefunction: np.ndarray


@dataclass(frozen=True)
class GaussianFit:
    mean: float
    sigma: float
    overlap_probability: float


def _raw_level(z_over_z0: np.ndarray, zero: float) -> np.ndarray:
    return airy_ai(z_over_z0 + zero) / airy_ai_prime(zero)


@functools.lru_cache(maxsize=16)
def _levels(z0: float, n_levels: int, grid_bytes: bytes) -> tuple[np.ndarray, ...]:
    z = np.frombuffer(grid_bytes, dtype=float)
    zeros = airy_zeros(n_levels)
    # doubled resolution: original points interleaved with cell midpoints
    fine = np.empty(2 * z.size - 1)
    fine[0::2] = z
    fine[1::2] = 0.5 * (z[1:] + z[:-1])
    out = []
    for zeta in zeros:
        psi_fine = _raw_level(fine / z0, zeta)
        psi = psi_fine[0::2].copy()
        norm = np.trapezoid(psi**2, z)
        # cross-check the quadrature on the doubled grid
        norm_fine = np.trapezoid(psi_fine**2, fine)
        if abs(norm - norm_fine) > 1e-4 * norm_fine:
            raise GridTooCoarseError(
                f"normalization {norm:.6g} vs {norm_fine:.6g} on doubled grid"
            )
        psi = psi / math.sqrt(norm)
        psi.setflags(write=False)
        out.append(psi)
    return tuple(out)


def bounce_eigenstate(cfg: BouncerConfig, j: int) -> BounceEigenstate:
    """Level ``j`` sampled on ``cfg.z_grid`` and normalized by trapezoidal quadrature.

    The sign convention is that of ``Ai(z/z0 + zeta)/Ai'(zeta)``, so every level
    starts with a positive slope at the floor.
    """
    if not 0 <= j < cfg.n_levels:
        raise ValidationError(f"level {j} outside 0..{cfg.n_levels - 1}")
    zeta = airy_zeros(cfg.n_levels)[j]
    psi = _levels(*cfg._key)[j]
    energy = -cfg.mass * cfg.gravity * cfg.z0 * zeta
    return BounceEigenstate(index=j, zero=zeta, energy=energy, wavefunction=psi)


def motional_gap(cfg: BouncerConfig, hbar: float = 1.0) -> float:
    """omega_m = (E_1 - E_0)/hbar."""
    zeta = airy_zeros(2)
    return cfg.mass * cfg.gravity * cfg.z0 * (zeta[0] - zeta[1]) / hbar


def in_state(cfg: BouncerConfig) -> np.ndarray:
    """Wavefunction of (|0> - |1>)/sqrt(2), the state inside the beam."""
    psi0 = bounce_eigenstate(cfg, 0).wavefunction
    psi1 = bounce_eigenstate(cfg, 1).wavefunction
    return (psi0 - psi1) / math.sqrt(2.0)


def out_state(cfg: BouncerConfig) -> np.ndarray:
    """Wavefunction of (|0> + |1>)/sqrt(2)."""
    psi0 = bounce_eigenstate(cfg, 0).wavefunction
    psi1 = bounce_eigenstate(cfg, 1).wavefunction
    return (psi0 + psi1) / math.sqrt(2.0)


def _gaussian(z: np.ndarray, mean: float, sigma: float) -> np.ndarray:
    chi = np.exp(-0.5 * ((z - mean) / sigma) ** 2)
    return chi / math.sqrt(np.trapezoid(chi**2, z))


def overlap_with_minus(cfg: BouncerConfig, mean: float, sigma: float) -> float:
    """Squared overlap of a normalized Gaussian with (psi0 - psi1)/sqrt(2).

    ``sigma`` is the standard deviation of the Gaussian amplitude chi(z)
    (not of |chi|^2). ``mean`` and ``sigma`` are in length units.
    """
    if not sigma > 0:
        raise ValidationError("sigma must be positive")
    z = cfg.z_grid
    spacing = float(np.max(np.diff(z)))
    if sigma < 4.0 * spacing:
        raise GridTooCoarseError(f"sigma={sigma:g} unresolved by grid spacing {spacing:g}")
    amp = np.trapezoid(_gaussian(z, mean, sigma) * in_state(cfg), z)
    return float(min(amp * amp, 1.0))


def fit_gaussian(
    cfg: BouncerConfig,
    start: tuple[float, float] | None = None,
    max_iter: int = 2000,
) -> GaussianFit:
    """Gaussian beam profile (mean, sigma) best overlapping the in-state.

    A coarse scan over [1, 5] z0 x [0.5, 3] z0 picks the starting point unless
    ``start`` (in z0 units) is given; Nelder-Mead refines it.
    """
    z0 = cfg.z0

    def objective(x):
        mean, sigma = x
        if sigma <= 0:
            return 1.0
        return -overlap_with_minus(cfg, mean * z0, sigma * z0)

    if start is None:
        means = np.linspace(1.0, 5.0, 41)
        sigmas = np.linspace(0.5, 3.0, 26)
        scores = np.array([[objective((m, s)) for s in sigmas] for m in means])
        i, k = np.unravel_index(np.argmin(scores), scores.shape)
        start = (means[i], sigmas[k])

    res = optimize.minimize(
        objective,
        np.asarray(start, dtype=float),
        method="Nelder-Mead",
        options={"xatol": 1e-7, "fatol": 1e-12, "maxiter": max_iter},
    )
    if not res.success:
        raise NonConvergenceError(f"Gaussian fit did not converge: {res.message}")
    mean, sigma = res.x
    return GaussianFit(mean=float(mean * z0), sigma=float(sigma * z0), overlap_probability=float(-res.fun))


def safe_raise_height(cfg: BouncerConfig, epsilon: float) -> float:
    """Largest floor raise dz with integral_0^dz |<z|in>|^2 dz < epsilon.

    Linear interpolation of the cumulative probability inside the grid cell
    where the threshold is crossed.
    """
    if not 0 < epsilon <= 1:
        raise ValidationError("epsilon must lie in (0, 1]")
    z = cfg.z_grid
    if epsilon >= 1:
        return float(z[-1])
    dens = in_state(cfg) ** 2
    cum = np.concatenate(([0.0], np.cumsum(0.5 * (dens[1:] + dens[:-1]) * np.diff(z))))
    i = int(np.searchsorted(cum, epsilon, side="left"))
    if i >= cum.size:
        return float(z[-1])
    if i == 0:
        return float(z[0])
    frac = (epsilon - cum[i - 1]) / (cum[i] - cum[i - 1])
    return float(z[i - 1] + frac * (z[i] - z[i - 1]))
