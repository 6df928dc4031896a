import json
import math
import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ifm_engine.errors import InfeasibleGridError, PictureMismatchError, ValidationError, ZeroNormError
from ifm_engine.statespace import (
    I0,
    I1,
    II0,
    II1,
    JointState,
    Observable,
    Params,
    RegimeWarning,
    apply_exit_beamsplitter,
    build_grid,
    expectations,
    from_in_out,
    gaussian_wavepacket,
    initial_state,
    require_picture,
    shifted,
    standard_observables,
    to_in_out,
    to_interaction,
    to_schrodinger,
)

SMALL = Params(n_modes=1201, grid_span=6.0)


def test_grid_is_uniform_and_commensurate():
    for p in (Params(), SMALL, Params(omega_m=7.3, n_modes=2000)):
        g = build_grid(p)
        assert np.allclose(np.diff(g.omegas), g.spacing, rtol=1e-12)
        assert g.shift_steps * g.spacing == pytest.approx(p.omega_m, rel=1e-14)
        assert g.size >= p.n_modes
        centre = g.omegas[g.size // 2]
        assert centre == pytest.approx(p.omega_ph)
        assert g.omegas[-1] - p.omega_ph >= p.grid_span * p.delta_omega_ph - 1e-9


def test_grid_too_coarse_for_motional_shift():
    with pytest.raises(InfeasibleGridError):
        build_grid(Params(n_modes=50))


@pytest.mark.parametrize("kwargs", [
    dict(delta_omega_ph=0.0), dict(omega_m=-1.0), dict(gamma=-0.1), dict(tau=float("nan")),
    dict(n_modes=2), dict(hbar=0.0), dict(omega_ph=float("inf")),
])
def test_params_validation(kwargs):
    with pytest.raises(ValidationError):
        Params(**kwargs)


def test_regime_warning_is_a_warning_not_an_error():
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        p = Params(omega_m=10.0, gamma=5.0)
    assert any(issubclass(w.category, RegimeWarning) for w in caught)
    assert p.regime_violations() == ["omega_m/gamma = 2 < 10"]
    assert Params().regime_violations() == []


def test_weak_value_defaults():
    p = Params.weak_value_defaults()
    assert (p.gamma_tau, p.omega_m, p.omega_ph) == (20.0, 2.0, 10.0)
    assert p.delta_omega_ph == 100.0
    assert Params.weak_value_defaults(30.0).delta_omega_ph == 60.0


def test_wavepacket_norm_and_width():
    g = build_grid(Params())
    phi = gaussian_wavepacket(g, 1e5, 500.0)
    assert np.linalg.norm(phi) == pytest.approx(1.0, abs=1e-14)
    prob = np.abs(phi) ** 2
    mean = np.sum(prob * g.omegas)
    assert mean == pytest.approx(1e5, abs=1e-8)
    assert math.sqrt(np.sum(prob * (g.omegas - mean) ** 2)) == pytest.approx(500.0, rel=1e-9)
    with pytest.raises(ValidationError):
        gaussian_wavepacket(g, 0.0, 1.0)
    with pytest.raises(ValidationError):
        gaussian_wavepacket(g, 1e5, 0.0)


def test_shifted():
    a = np.arange(1, 6, dtype=complex)
    np.testing.assert_array_equal(shifted(a, 2), [3, 4, 5, 0, 0])
    np.testing.assert_array_equal(shifted(a, -1), [0, 1, 2, 3, 4])
    np.testing.assert_array_equal(shifted(a, 0), a)


@settings(max_examples=50, deadline=None)
@given(st.lists(st.complex_numbers(max_magnitude=10, allow_nan=False, allow_infinity=False), min_size=2, max_size=2))
def test_in_out_roundtrip_is_unitary(pair):
    a0, a1 = np.array([pair[0]]), np.array([pair[1]])
    a_in, a_out = to_in_out(a0, a1)
    assert abs(a_in[0]) ** 2 + abs(a_out[0]) ** 2 == pytest.approx(abs(pair[0]) ** 2 + abs(pair[1]) ** 2, abs=1e-9)
    b0, b1 = from_in_out(a_in, a_out)
    np.testing.assert_allclose([b0[0], b1[0]], pair, atol=1e-12)


def test_in_out_convention():
    # |in> = (|0> - |1>)/sqrt2
    a_in, a_out = to_in_out(np.array([1.0]), np.array([-1.0]))
    assert a_in[0] == pytest.approx(math.sqrt(2)) and a_out[0] == pytest.approx(0.0)


def test_initial_state():
    s = initial_state(SMALL)
    assert s.norm_sq == pytest.approx(1.0, abs=1e-13)
    np.testing.assert_allclose(s.psi0, s.beta)
    assert not s.psi1.any() and s.explosion_weight == 0.0
    single = initial_state(SMALL, interferometer=False)
    assert not single.beta.any() and single.norm_sq == pytest.approx(1.0)


def test_exit_beamsplitter_without_bomb_sends_everything_bright():
    dark, bright = apply_exit_beamsplitter(initial_state(SMALL))
    assert dark.norm_sq == pytest.approx(0.0, abs=1e-28)
    assert bright.norm_sq == pytest.approx(1.0, abs=1e-13)
    with pytest.raises(ZeroNormError):
        dark.normalized()


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_exit_beamsplitter_preserves_norm(seed):
    rng = np.random.default_rng(seed)
    g = build_grid(SMALL)
    z = lambda: rng.normal(size=g.size) + 1j * rng.normal(size=g.size)
    s = JointState(g, z(), z(), z())
    dark, bright = apply_exit_beamsplitter(s)
    assert dark.norm_sq + bright.norm_sq == pytest.approx(s.norm_sq, rel=1e-12)
    rho = dark.motional_density_matrix()
    assert np.trace(rho).real == pytest.approx(1.0)
    np.testing.assert_allclose(rho, rho.conj().T, atol=1e-14)
    assert np.linalg.eigvalsh(rho).min() > -1e-12


def test_json_roundtrip():
    s = initial_state(SMALL).copy_with(explosion_weight=0.125, time=3.0)
    back = JointState.from_json(json.loads(json.dumps(s.to_json())))
    np.testing.assert_array_equal(back.psi0, s.psi0)
    np.testing.assert_array_equal(back.grid.omegas, s.grid.omegas)
    assert back.explosion_weight == 0.125 and back.time == 3.0
    assert back.grid.shift_steps == s.grid.shift_steps


def test_json_rejects_nonuniform_grid():
    data = initial_state(SMALL).to_json()
    data["omegas"][3] += 0.5
    with pytest.raises(ValidationError):
        JointState.from_json(data)


def test_state_shape_and_picture_checks():
    g = build_grid(SMALL)
    z = np.zeros(g.size)
    with pytest.raises(ValidationError):
        JointState(g, z[:-1], z, z)
    with pytest.raises(ValidationError):
        JointState(g, z, z, z, picture="heisenberg")
    with pytest.raises(ValidationError):
        JointState(g, z, z, z, explosion_weight=1.5)
    s = initial_state(SMALL)
    with pytest.raises(PictureMismatchError):
        require_picture(s, "schrodinger")


def test_picture_roundtrip():
    s = initial_state(SMALL)
    rng = np.random.default_rng(1)
    s = s.copy_with(psi1=rng.normal(size=s.grid.size) * 1e-2, time=2.7)
    schr = to_schrodinger(s, SMALL)
    assert schr.picture == "schrodinger" and schr.norm_sq == pytest.approx(s.norm_sq)
    back = to_interaction(schr, SMALL)
    np.testing.assert_allclose(back.psi1, s.psi1, atol=1e-12)
    assert to_schrodinger(schr, SMALL) is schr


def test_expectations_initial():
    ex = expectations(initial_state(SMALL), SMALL)
    assert ex.p_armI == pytest.approx(0.5) and ex.p_armII == pytest.approx(0.5)
    assert ex.E_ph == pytest.approx(SMALL.omega_ph, rel=1e-12)
    assert ex.E_m == 0.0


def test_standard_observables():
    obs = standard_observables()
    assert len(obs) == 16
    assert {"Pi_I", "Pi_II", "Pi_I,in", "Pi_II,out", "H_ph", "H_m", "H_ph Pi_I", "H_m Pi_II"} <= set(obs)
    assert obs["H_ph"].is_hamiltonian and obs["Pi_I,0"].is_projector


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_projector_identities(seed):
    rng = np.random.default_rng(seed)
    g = build_grid(SMALL)
    v = rng.normal(size=(4, g.size)) + 1j * rng.normal(size=(4, g.size))
    obs = standard_observables()
    ap = lambda label, x: obs[label].apply(x, g.omegas, SMALL)
    np.testing.assert_allclose(ap("Pi_I", v) + ap("Pi_II", v), v)
    np.testing.assert_allclose(ap("Pi_I,in", v) + ap("Pi_I,out", v), ap("Pi_I", v), atol=1e-12)
    np.testing.assert_allclose(ap("Pi_II,0", v) + ap("Pi_II,1", v), ap("Pi_II", v))
    for label in ("Pi_I", "Pi_I,in", "Pi_II,out", "Pi_I,1"):
        once = ap(label, v)
        np.testing.assert_allclose(ap(label, once), once, atol=1e-12)
    np.testing.assert_allclose(ap("H_ph Pi_I", v) + ap("H_ph Pi_II", v), ap("H_ph", v))
    np.testing.assert_allclose(ap("H_m Pi_I", v) + ap("H_m Pi_II", v), ap("H_m", v))


def test_observable_blocks():
    g = build_grid(SMALL)
    v = np.ones((4, g.size), dtype=complex)
    out = Observable("projector_joint", "II", "1").apply(v, g.omegas, SMALL)
    assert not out[[I0, I1, II0]].any() and out[II1].all()
    hm = Observable("H_m").apply(v, g.omegas, SMALL)
    assert hm[I1, 0] == SMALL.omega_m and hm[I0, 0] == 0


@pytest.mark.parametrize("kwargs", [dict(kind="spin"), dict(kind="projector_arm", arm="III"),
                                    dict(kind="projector_joint", arm="I", motional="2")])
def test_observable_validation(kwargs):
    with pytest.raises(ValidationError):
        Observable(**kwargs)


def test_spectral_ranges():
    g = build_grid(SMALL)
    obs = standard_observables()
    assert obs["Pi_I"].spectral_range(g.omegas, SMALL) == (0.0, 1.0)
    assert obs["H_m"].spectral_range(g.omegas, SMALL) == (0.0, SMALL.omega_m)
    assert obs["H_ph"].spectral_range(g.omegas, SMALL)[1] == pytest.approx(g.omegas.max())
