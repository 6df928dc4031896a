"""Engine cycle: launch a photon, read the ports, raise the platform or not.

Each cycle ends in one of three outcomes. The energy of each outcome comes
from the conditioned grid states, so the ledger inherits the grid's energy
bookkeeping rather than the idealized closed forms. Sampled runs draw outcomes
in fixed-size chunks, each with its own generator spawned from the master
seed, so results do not depend on how many workers were used.
"""
from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from .bouncer import BouncerConfig, safe_raise_height
from .dynamics import run_interferometer
from .errors import ValidationError
from .statespace import Params, build_grid

OUTCOMES = ("dark", "bright", "explosion")
CHUNK = 1 << 17

LEDGER_COLUMNS = (
    "cycle", "outcome", "weight", "photon_energy_in", "photon_energy_out",
    "motional_gain", "extractable_work", "absorbed_energy", "platform_raise", "bomb_lost",
)


@dataclass(frozen=True)
class EnginePolicy:
    """What the operator does after each outcome.

    Attributes:
        bright_work: ``"zero"`` extracts nothing after a bright click;
            ``"optimistic"`` books the full bright-port motional energy as work.
        epsilon: Tolerated probability of finding the bomb below the raised platform.
        bouncer: Bouncing-ball model used for the platform height.
    """

    bright_work: str = "zero"
    epsilon: float = 1e-3
    bouncer: BouncerConfig = field(default_factory=BouncerConfig)

    def __post_init__(self):
        if self.bright_work not in ("zero", "optimistic"):
            raise ValidationError("bright_work must be 'zero' or 'optimistic'")
        if not 0.0 < self.epsilon <= 1.0:
            raise ValidationError("epsilon must lie in (0, 1]")


@dataclass(frozen=True)
class EngineRecord:
    outcome: str
    photon_energy_in: float
    photon_energy_out: float
    motional_gain: float
    extractable_work: float
    absorbed_energy: float
    platform_raise: float
    bomb_lost: bool

    def row(self) -> dict:
        return {
            "outcome": self.outcome,
            "photon_energy_in": self.photon_energy_in,
            "photon_energy_out": self.photon_energy_out,
            "motional_gain": self.motional_gain,
            "extractable_work": self.extractable_work,
            "absorbed_energy": self.absorbed_energy,
            "platform_raise": self.platform_raise,
            "bomb_lost": int(self.bomb_lost),
        }


@dataclass(frozen=True, eq=False)
class EngineLedger:
    """Cycle outcomes plus the energy record of each outcome type.

    ``outcomes`` holds indices into ``templates``; ``weights`` are 1 for
    sampled cycles and the outcome probabilities in expectation mode.
    """

    mode: str
    templates: tuple[EngineRecord, ...]
    outcomes: np.ndarray
    weights: np.ndarray
    probabilities: tuple[float, float, float]
    max_raise: float
    params: Params

    def __len__(self) -> int:
        return int(self.outcomes.size)

    def counts(self) -> np.ndarray:
        return np.bincount(self.outcomes, minlength=len(OUTCOMES))

    def record(self, i: int) -> EngineRecord:
        return self.templates[int(self.outcomes[i])]

    def rows(self, limit: int | None = None) -> list[dict]:
        n = len(self) if limit is None else min(limit, len(self))
        out = []
        for i in range(n):
            row = {"cycle": i, "weight": float(self.weights[i])}
            row.update(self.record(i).row())
            out.append({c: row[c] for c in LEDGER_COLUMNS})
        return out

    def totals(self) -> dict[str, float]:
        w = np.bincount(self.outcomes, weights=self.weights, minlength=len(OUTCOMES))
        keys = ("photon_energy_in", "photon_energy_out", "motional_gain", "extractable_work", "absorbed_energy")
        return {k: float(sum(w[j] * getattr(self.templates[j], k) for j in range(len(OUTCOMES)))) for k in keys}

    def statistics(self) -> dict[str, dict[str, float]]:
        """Observed frequencies against the outcome probabilities with binomial z-scores."""
        n = len(self)
        counts = self.counts()
        out = {}
        for j, name in enumerate(OUTCOMES):
            prob = self.probabilities[j]
            sigma = math.sqrt(prob * (1.0 - prob) / n) if n else 0.0
            freq = counts[j] / n if n else 0.0
            z = (freq - prob) / sigma if sigma > 0 else (0.0 if freq == prob else math.inf)
            out[name] = {"count": int(counts[j]), "frequency": float(freq), "probability": prob, "sigma": sigma, "z": z}
        return out

    def with_template(self, outcome: str, **changes) -> "EngineLedger":
        """Copy with one outcome's record altered (used to exercise the audit)."""
        j = OUTCOMES.index(outcome)
        templates = list(self.templates)
        templates[j] = replace(templates[j], **changes)
        return replace(self, templates=tuple(templates))


def outcome_records(p: Params, policy: EnginePolicy | None = None) -> tuple[tuple[EngineRecord, ...], tuple[float, float, float], float]:
    """Energy records and probabilities of the three outcomes from one grid run."""
    policy = policy or EnginePolicy()
    run = run_interferometer(p)
    ports = run.ports
    e_in = p.hbar * p.omega_ph
    height = safe_raise_height(policy.bouncer, policy.epsilon)
    records = []
    for name in ("dark", "bright"):
        e = ports.energies.get(name)
        if e is None:
            # branch never populated (no bomb): nothing leaves through it
            records.append(EngineRecord(name, e_in, e_in, 0.0, 0.0, 0.0, 0.0, False))
            continue
        gain = e["E_m"]
        if name == "dark":
            work, raise_by = gain, height
        else:
            work, raise_by = (gain if policy.bright_work == "optimistic" else 0.0), 0.0
        records.append(EngineRecord(name, e_in, e["E_ph"], gain, work, 0.0, raise_by, False))
    records.append(EngineRecord("explosion", e_in, 0.0, 0.0, 0.0, e_in, 0.0, True))
    probs = (ports.p_dark, ports.p_bright, ports.p_explosion)
    return tuple(records), probs, height


def _draw(seed_seq: np.random.SeedSequence, size: int, probs: np.ndarray) -> np.ndarray:
    rng = np.random.default_rng(seed_seq)
    return rng.choice(len(probs), size=size, p=probs).astype(np.uint8)


def run_cycle(
    p: Params,
    mode: str = "expectation",
    seed: int | None = None,
    n_cycles: int = 1,
    policy: EnginePolicy | None = None,
    jobs: int = 1,
) -> EngineLedger:
    """Run engine cycles in ``expectation`` or ``sampled`` mode.

    Expectation mode returns one record per outcome weighted by its
    probability. Sampled mode draws ``n_cycles`` outcomes; ``seed`` is
    required there and the result is identical for any ``jobs``.
    """
    if mode not in ("expectation", "sampled"):
        raise ValidationError("mode must be 'expectation' or 'sampled'")
    templates, probs, height = outcome_records(p, policy)
    if mode == "expectation":
        outcomes = np.arange(len(OUTCOMES), dtype=np.uint8)
        weights = np.asarray(probs, dtype=float)
    else:
        if seed is None:
            raise ValidationError("sampled mode needs a seed")
        if n_cycles < 1:
            raise ValidationError("n_cycles must be >= 1")
        pr = np.clip(np.asarray(probs, dtype=float), 0.0, None)
        pr /= pr.sum()
        sizes = [min(CHUNK, n_cycles - start) for start in range(0, n_cycles, CHUNK)]
        children = np.random.SeedSequence(seed).spawn(len(sizes))
        if jobs > 1 and len(sizes) > 1:
            with ThreadPoolExecutor(max_workers=jobs) as pool:
                parts = list(pool.map(_draw, children, sizes, [pr] * len(sizes)))
        else:
            parts = [_draw(c, s, pr) for c, s in zip(children, sizes)]
        outcomes = np.concatenate(parts)
        weights = np.ones(n_cycles)
    return EngineLedger(mode, templates, outcomes, weights, tuple(float(x) for x in probs), height, p)


@dataclass(frozen=True)
class YieldReport:
    work_per_photon: float
    photon_energy_cost: float
    bombs_lost_per_photon: float
    motional_energy_per_photon: float


def expected_yield(p: Params, policy: EnginePolicy | None = None) -> YieldReport:
    """Per-photon averages over the three outcomes.

    ``photon_energy_cost`` is the photon energy not returned at the ports:
    the redshift of transmitted photons plus the photons absorbed in explosions.
    """
    ledger = run_cycle(p, "expectation", policy=policy)
    tot = ledger.totals()
    return YieldReport(
        work_per_photon=tot["extractable_work"],
        photon_energy_cost=tot["photon_energy_in"] - tot["photon_energy_out"],
        bombs_lost_per_photon=ledger.probabilities[2],
        motional_energy_per_photon=tot["motional_gain"],
    )


def audit_tolerance(p: Params) -> float:
    """hbar omega_m (omega_m / d_omega_ph + 10 delta_omega / omega_m)."""
    spacing = build_grid(p).spacing
    return p.hbar * p.omega_m * (p.omega_m / p.delta_omega_ph + 10.0 * spacing / p.omega_m)


@dataclass(frozen=True)
class AuditReport:
    passed: bool
    tolerance: float
    n_records: int
    violations: tuple[str, ...]
    violating_cycles: int
    closure_residual: float


def audit(ledger: EngineLedger, tolerance: float | None = None) -> AuditReport:
    """Check energy balance per outcome and in aggregate.

    Non-explosion records must satisfy E_in - E_out = motional gain; explosion
    records must put the full photon energy into the absorber. Work may not
    exceed the motional gain and the platform may not rise above the safe
    height. Each failing outcome type is reported once, with the number of
    cycles it affects.
    """
    if len(ledger) == 0:
        raise ValidationError("ledger is empty")
    tol = audit_tolerance(ledger.params) if tolerance is None else tolerance
    counts = ledger.counts()
    problems, bad = [], 0
    for j, rec in enumerate(ledger.templates):
        if counts[j] == 0:
            continue
        issues = []
        balance = rec.photon_energy_in - rec.photon_energy_out - rec.motional_gain - rec.absorbed_energy
        if abs(balance) > tol:
            issues.append(f"energy balance off by {balance:.6g}")
        if rec.extractable_work > rec.motional_gain + 1e-12 * max(1.0, abs(rec.motional_gain)):
            issues.append("work exceeds motional gain")
        if rec.platform_raise > ledger.max_raise * (1 + 1e-12):
            issues.append("platform raised above the safe height")
        if rec.outcome == "explosion" and not rec.bomb_lost:
            issues.append("explosion without bomb loss")
        if issues:
            problems.append(f"{rec.outcome}: " + "; ".join(issues))
            bad += int(counts[j])
    tot = ledger.totals()
    closure = tot["photon_energy_in"] - tot["photon_energy_out"] - tot["motional_gain"] - tot["absorbed_energy"]
    weight = float(ledger.weights.sum())
    if abs(closure) > tol * weight:
        problems.append(f"aggregate closure off by {closure:.6g}")
    return AuditReport(not problems, tol, len(ledger), tuple(problems), bad, closure)
