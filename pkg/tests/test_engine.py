import numpy as np
import pytest

from ifm_engine.analytic import closed_forms
from ifm_engine.bouncer import BouncerConfig, safe_raise_height
from ifm_engine.engine import (
    CHUNK,
    LEDGER_COLUMNS,
    OUTCOMES,
    EnginePolicy,
    audit,
    audit_tolerance,
    expected_yield,
    outcome_records,
    run_cycle,
)
from ifm_engine.errors import ValidationError
from ifm_engine.statespace import Params

P = Params()


@pytest.fixture(scope="module")
def expectation():
    return run_cycle(P)


def test_expectation_ledger(expectation):
    ref = closed_forms(P.gamma, P.tau, P.omega_ph, P.omega_m)
    assert len(expectation) == 3
    np.testing.assert_allclose(expectation.weights, [ref.p_dk, ref.p_br, ref.p_expl], atol=1e-12)
    assert expectation.weights.sum() == pytest.approx(1.0)
    rows = expectation.rows()
    assert [r["outcome"] for r in rows] == list(OUTCOMES)
    assert tuple(rows[0]) == LEDGER_COLUMNS


def test_records(expectation):
    dark, bright, boom = expectation.templates
    assert dark.motional_gain == pytest.approx(0.5 * P.omega_m)
    assert dark.extractable_work == dark.motional_gain
    assert dark.platform_raise == pytest.approx(safe_raise_height(BouncerConfig(), 1e-3))
    assert bright.extractable_work == 0.0 and bright.platform_raise == 0.0
    assert boom.bomb_lost and boom.absorbed_energy == P.omega_ph and boom.photon_energy_out == 0.0


def test_audit_passes_and_totals_close(expectation):
    rep = audit(expectation)
    assert rep.passed, rep.violations
    assert rep.tolerance == pytest.approx(audit_tolerance(P))
    assert abs(rep.closure_residual) < 1e-6
    tot = expectation.totals()
    assert tot["photon_energy_in"] == pytest.approx(P.omega_ph)


def test_audit_tolerance_value():
    # hbar omega_m (omega_m / d_omega + 10 spacing / omega_m) with the default grid spacing
    spacing = 10.0 / 5.0  # 4096 modes over +/-5000 rounds to five steps per omega_m
    assert audit_tolerance(P) == pytest.approx(10.0 * (10.0 / 500.0 + 10.0 * spacing / 10.0))


def test_audit_flags_corrupted_record(expectation):
    bad = expectation.with_template("dark", photon_energy_out=expectation.templates[0].photon_energy_out - 100.0)
    rep = audit(bad)
    assert not rep.passed
    assert any(v.startswith("dark: energy balance") for v in rep.violations)
    greedy = expectation.with_template("bright", extractable_work=5.0)
    assert any("work exceeds" in v for v in audit(greedy).violations)
    high = expectation.with_template("dark", platform_raise=10.0)
    assert any("safe height" in v for v in audit(high).violations)


def test_sampled_counts_corrupted_cycles():
    led = run_cycle(P, "sampled", seed=5, n_cycles=2000)
    bad = led.with_template("bright", motional_gain=50.0, extractable_work=0.0)
    rep = audit(bad)
    assert rep.violating_cycles == int(led.counts()[1])


def test_sampled_mode_is_reproducible_and_job_independent():
    n = 2 * CHUNK + 17
    a = run_cycle(P, "sampled", seed=11, n_cycles=n)
    b = run_cycle(P, "sampled", seed=11, n_cycles=n, jobs=3)
    c = run_cycle(P, "sampled", seed=12, n_cycles=n)
    np.testing.assert_array_equal(a.outcomes, b.outcomes)
    assert not np.array_equal(a.outcomes, c.outcomes)
    assert len(a) == n and a.weights.sum() == n


def test_sampled_frequencies_follow_probabilities():
    led = run_cycle(P, "sampled", seed=2024, n_cycles=200_000)
    stats = led.statistics()
    for name in OUTCOMES:
        assert abs(stats[name]["z"]) < 5
    assert sum(s["count"] for s in stats.values()) == 200_000


@pytest.mark.parametrize("kwargs", [dict(mode="replay"), dict(mode="sampled"), dict(mode="sampled", seed=1, n_cycles=0)])
def test_run_cycle_validation(kwargs):
    with pytest.raises(ValidationError):
        run_cycle(P, **kwargs)


@pytest.mark.parametrize("kwargs", [dict(bright_work="all"), dict(epsilon=0.0), dict(epsilon=2.0)])
def test_policy_validation(kwargs):
    with pytest.raises(ValidationError):
        EnginePolicy(**kwargs)


def test_yield_and_policies():
    ref = closed_forms(P.gamma, P.tau, P.omega_ph, P.omega_m)
    y = expected_yield(P)
    assert y.work_per_photon == pytest.approx(ref.p_dk * 0.5 * P.omega_m, rel=1e-9)
    assert y.bombs_lost_per_photon == pytest.approx(ref.p_expl)
    assert y.photon_energy_cost == pytest.approx(ref.p_expl * P.omega_ph + y.motional_energy_per_photon, rel=1e-9)
    opt = expected_yield(P, EnginePolicy(bright_work="optimistic"))
    assert opt.work_per_photon == pytest.approx(y.motional_energy_per_photon, rel=1e-12)
    assert opt.work_per_photon > y.work_per_photon


def test_no_bomb_records():
    records, probs, _ = outcome_records(P.with_(gamma=0.0))
    assert probs[0] == pytest.approx(0.0, abs=1e-28) and probs[2] == 0.0
    assert records[0].motional_gain == 0.0
    assert audit(run_cycle(P.with_(gamma=0.0))).passed
