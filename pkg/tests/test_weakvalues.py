import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.linalg import expm

from ifm_engine.analytic import analytic_weak_values
from ifm_engine.dynamics import evolve_no_explosion
from ifm_engine.errors import PictureMismatchError, ValidationError, VanishingPostselectionError
from ifm_engine.statespace import Observable, Params, build_grid, initial_state, standard_observables, to_schrodinger
from ifm_engine.weakvalues import (
    EffectivePropagator,
    TwoStateSetup,
    backward_propagate,
    detect_anomalies,
    effective_propagator_apply,
    weak_value,
    weak_value_series,
)

WV = Params.weak_value_defaults()
TINY = Params.weak_value_defaults(5.0, n_modes=61, grid_span=3.0)
OBS = standard_observables()


def _dense_propagator(n, shift, gamma_t):
    """No-explosion propagator on the (4, n) block space from the dense generator."""
    gen = np.zeros((4 * n, 4 * n))
    for k in range(n):
        gen[k, k] -= 0.25
        gen[n + k, n + k] -= 0.25
        if k - shift >= 0:
            gen[k, n + k - shift] += 0.25
            gen[n + k - shift, k] += 0.25
    return expm(gen * gamma_t)


@pytest.mark.parametrize("label", ["Pi_I,0", "Pi_I,1", "Pi_II,in", "Pi_I,out", "H_ph Pi_I", "H_m"])
@pytest.mark.parametrize("t", [0.0, 7.3, 20.0])
def test_weak_value_against_dense_oracle(label, t):
    setup = TwoStateSetup.build(TINY)
    n, s = setup.grid.size, setup.grid.shift_steps
    assert n * 4 < 400
    ui = setup.initial.reshape(-1)
    uf = setup.final.reshape(-1)
    fwd = _dense_propagator(n, s, TINY.gamma * t) @ ui
    bwd = _dense_propagator(n, s, TINY.gamma * (TINY.tau - t)) @ uf
    denom = np.vdot(uf, _dense_propagator(n, s, TINY.gamma * TINY.tau) @ ui)
    a_fwd = OBS[label].apply(fwd.reshape(4, n), setup.grid.omegas, TINY).reshape(-1)
    expected = np.vdot(bwd, a_fwd) / denom
    assert weak_value(OBS[label], t, TINY) == pytest.approx(expected, rel=1e-9, abs=1e-12)


def test_identity_weak_value_is_one():
    one = Observable("identity")
    for t in (0.0, 3.0, 20.0):
        assert weak_value(one, t, WV) == pytest.approx(1.0, abs=1e-12)


def test_vanishing_postselection():
    with pytest.raises(VanishingPostselectionError):
        weak_value(OBS["Pi_I"], 1.0, WV.with_(gamma=0.0))
    with pytest.raises(VanishingPostselectionError):
        weak_value(OBS["Pi_I"], 1.0, WV, floor=1.0)
    with pytest.raises(VanishingPostselectionError):
        weak_value_series(None, WV, n_times=3, floor=1.0)


def test_time_outside_window():
    with pytest.raises(ValidationError):
        weak_value(OBS["Pi_I"], 21.0, WV)
    with pytest.raises(ValidationError):
        weak_value_series(None, WV, n_times=1)


@pytest.fixture(scope="module")
def series():
    return weak_value_series(None, WV, n_times=41)


def test_series_shape_and_rows(series):
    assert series.values.shape == (16, 41)
    rows = series.to_rows()
    assert len(rows) == 16 * 41
    assert set(rows[0]) == {"t_Gamma", "observable_id", "re", "im", "anomalous_flag"}
    assert np.abs(series.values.imag).max() < 1e-12


def test_series_sum_rules(series):
    r = series.row
    np.testing.assert_allclose(r("Pi_I") + r("Pi_II"), 1.0, atol=1e-12)
    np.testing.assert_allclose(r("Pi_I,0") + r("Pi_I,1"), r("Pi_I"), atol=1e-12)
    np.testing.assert_allclose(r("Pi_I,in") + r("Pi_I,out"), r("Pi_I"), atol=1e-12)
    np.testing.assert_allclose(r("Pi_II,in") + r("Pi_II,out"), r("Pi_II"), atol=1e-12)
    np.testing.assert_allclose(r("H_ph Pi_I") + r("H_ph Pi_II"), r("H_ph"), atol=1e-10)
    np.testing.assert_allclose(r("H_m Pi_I") + r("H_m Pi_II"), r("H_m"), atol=1e-12)


def test_series_agrees_with_amplitude_consistent_closed_forms(series):
    tol_overlap = (WV.omega_m / WV.delta_omega_ph) ** 2
    for k, t in enumerate(series.times):
        ref = analytic_weak_values(WV.gamma, WV.tau, t, WV.omega_ph, WV.omega_m).consistent
        for label in ("Pi_I", "Pi_II", "Pi_I,0", "Pi_I,1", "Pi_II,0", "Pi_II,1", "H_m"):
            assert series.row(label)[k].real == pytest.approx(ref[label], abs=1e-10)
        for label in ("Pi_I,in", "Pi_II,in", "Pi_II,out"):
            assert series.row(label)[k].real == pytest.approx(ref[label], abs=tol_overlap)


def test_hamiltonian_rows_scaled(series):
    i = series.labels.index("H_ph")
    assert series.units[i] == WV.hbar * WV.gamma
    np.testing.assert_allclose(series.physical("H_ph"), series.row("H_ph") * series.units[i])


def test_anomalies(series):
    found = {a.label: a for a in detect_anomalies(series)}
    assert "Pi_I,0" in found and found["Pi_I,0"].extremal_value < -0.5
    assert found["Pi_I,0"].t_start == 0.0 and found["Pi_I,0"].t_end == WV.tau
    assert "H_m" not in found and "Pi_I,1" not in found


def test_anomaly_intervals_split():
    # Pi_I,1 runs from 0 to 1/2; with a tight artificial range it is anomalous only late
    obs = [Observable("projector_joint", "I", "1")]
    s = weak_value_series(obs, WV, n_times=21)
    s = type(s)(s.times, s.labels, s.values, s.values.real > 0.4, s.units, ((0.0, 0.4),), s.params)
    (a,) = detect_anomalies(s)
    assert a.t_start > 0 and a.t_end == WV.tau and a.extremal_value == pytest.approx(0.5, abs=1e-9)


@settings(max_examples=20, deadline=None)
@given(st.floats(0.0, 20.0))
def test_effective_propagator_matches_evolution(t):
    s = initial_state(WV)
    exact = evolve_no_explosion(s, WV, duration=t).final_state
    eff = effective_propagator_apply(s, t, WV)
    np.testing.assert_allclose(eff.psi0, exact.psi0, atol=1e-10)
    np.testing.assert_allclose(eff.psi1, exact.psi1, atol=1e-10)
    assert eff.explosion_weight == pytest.approx(exact.explosion_weight, abs=1e-10)


def test_effective_propagator_decaying_component():
    u = EffectivePropagator.build(WV, 20.0)
    assert np.linalg.norm(u.apply_blocks(u.phi_o) - u.phi_o) < 1e-12
    np.testing.assert_allclose(u.apply_blocks(u.phi_i), math.exp(-10.0) * u.phi_i, atol=1e-12)


def test_effective_propagator_needs_interaction_picture():
    with pytest.raises(PictureMismatchError):
        effective_propagator_apply(to_schrodinger(initial_state(WV).copy_with(time=1.0), WV), 1.0, WV)


def test_backward_state():
    b = backward_propagate(WV)
    np.testing.assert_allclose(b.coefficients[0], [0.5, 0, 0, -0.5])
    np.testing.assert_allclose(b.final.real, [0.25, 0.25, -0.25, -0.25], atol=1e-4)
    assert b.sign_pattern() == "c' = -d'"
    assert abs(b.normalized_final[0]) == pytest.approx(0.353565, abs=1e-5)
    assert b.norm == pytest.approx(1 / math.sqrt(2), rel=1e-3)
    assert b.times[-1] == WV.tau


@pytest.mark.parametrize("ratio", [10.0, 30.0, 100.0])
def test_backward_arm_one_bound(ratio):
    b = backward_propagate(Params.weak_value_defaults(ratio, n_modes=8192))
    assert b.bound == pytest.approx(1 / ratio)
    assert 0 < b.bound_ratio < 1
