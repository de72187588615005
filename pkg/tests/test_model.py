import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from eetrap.errors import DegenerateCouplings, NoRealCoupling, SingularDenominator, ZeroCoupling
from eetrap.model import (SystemParams, ThreeModeParams, bright_frequency, carrier_candidates, ee_condition_residual,
                          ee_frequency, ee_frequency_closed_forms, ee_state, single_excitation_heff,
                          single_excitation_spectrum, solve_g_for_ee, solve_j_for_ee, spectrum,
                          three_mode_ee_residual, three_mode_heff, three_mode_spectrum, two_excitation_heff,
                          two_excitation_levels, with_ee_coupling)

BASE = SystemParams(omega_c=0.96, omega_a=1.0, v_a=0.1, v_c=0.05)


def test_residual_values():
    assert ee_condition_residual(BASE) == pytest.approx(2e-4, rel=1e-12)
    assert abs(ee_condition_residual(BASE.replace(j_coupling=0.0266667))) < 1e-9
    same = SystemParams(omega_c=1.0, omega_a=1.0, v_a=0.1, v_c=0.1, j_coupling=0.37)
    assert ee_condition_residual(same) == 0.0


def test_solve_j_reference_value():
    assert solve_j_for_ee(BASE) == pytest.approx(0.04 * 0.5 / 0.75, abs=1e-15)
    assert abs(solve_j_for_ee(BASE) - 0.0266667) < 1e-6


def test_solve_j_resonant_and_near_degenerate():
    assert solve_j_for_ee(BASE.replace(omega_c=1.0)) == 0.0
    # the coupling diverges as V_C/V_A -> 1: 0.04 * 0.0099 / (0.01 * 0.0199)
    near = SystemParams(omega_c=0.96, omega_a=1.0, v_a=0.1, v_c=0.099)
    assert solve_j_for_ee(near) == pytest.approx(0.04 * 0.0099 / (0.01 * 0.0199), rel=1e-9)


def test_solve_j_errors():
    with pytest.raises(DegenerateCouplings):
        solve_j_for_ee(SystemParams(omega_c=0.9, omega_a=1.0, v_a=0.1, v_c=0.1))
    with pytest.raises(ZeroCoupling):
        solve_j_for_ee(SystemParams(omega_c=0.9, omega_a=1.0))
    assert solve_j_for_ee(SystemParams(omega_c=1.0, omega_a=1.0, v_a=0.1, v_c=0.1)) == 0.0


def test_ee_eigenvalue_and_bright_mode(reference):
    spec = single_excitation_spectrum(reference)
    ee, bright = spec.eigenvalues
    assert abs(ee.imag) < 1e-12
    assert ee.real == pytest.approx(0.9466667, abs=1e-7)
    w1, w2 = ee_frequency_closed_forms(reference)
    assert w1 == pytest.approx(ee.real, abs=1e-12) and w2 == pytest.approx(ee.real, abs=1e-12)
    assert bright.real == pytest.approx(1.96 - ee.real, abs=1e-12)
    assert bright.imag == pytest.approx(-2 * np.pi * 0.0125, rel=1e-12)
    assert ee_frequency(reference) == pytest.approx(ee.real)
    assert bright_frequency(reference) == pytest.approx(bright.real)


def test_closed_system_is_hermitian():
    p = SystemParams(omega_c=0.96, omega_a=1.0, j_coupling=0.02)
    h = single_excitation_heff(p)
    assert np.allclose(h, h.conj().T)
    assert np.all(np.abs(spectrum(h).eigenvalues.imag) < 1e-15)


def test_spectrum_invariants(reference):
    for h in (single_excitation_heff(reference), two_excitation_heff(reference)):
        spec = spectrum(h)
        assert abs(spec.eigenvalues.sum() - np.trace(h)) < 1e-10 * abs(np.trace(h))
        assert np.all(spec.eigenvalues.imag <= 1e-12)
        assert np.allclose(np.linalg.norm(spec.eigenvectors, axis=0), 1)


def test_ee_state_amplitudes(reference):
    a, c = ee_state(reference)
    assert a ** 2 == pytest.approx(0.2) and c ** 2 == pytest.approx(0.8)
    assert reference.v_c * c + reference.v_a * a == pytest.approx(0, abs=1e-16)
    assert ee_state(BASE.replace(v_c=0.0)) == (0.0, -1.0)
    a, c = ee_state(BASE.replace(v_c=0.1))
    assert a ** 2 == pytest.approx(0.5) and c ** 2 == pytest.approx(0.5)
    with pytest.raises(ZeroCoupling):
        ee_state(SystemParams(omega_c=1, omega_a=1))


def test_two_excitation_levels(reference):
    lev = two_excitation_levels(reference)
    assert lev["gamma_d2"] / lev["gamma_b2"] < 0.3
    # frozen golden ratio for the reference system
    assert lev["gamma_d2"] / lev["gamma_b2"] == pytest.approx(0.0445329, rel=1e-5)
    h = two_excitation_heff(reference)
    ev = np.linalg.eigvals(h)
    gc, ga = 4 * np.pi * reference.v_c ** 2, 4 * np.pi * reference.v_a ** 2
    assert ev.imag.sum() == pytest.approx(-(2 * gc + gc + ga) / 2, rel=1e-12)
    lone = SystemParams(omega_c=0.96, omega_a=1.0, v_c=0.05)
    ev = np.linalg.eigvals(two_excitation_heff(lone))
    assert np.min(np.abs(ev - (1.92 - 2j * lone.gamma_c))) < 1e-12


def test_carrier_candidates(reference):
    cand = carrier_candidates(reference)
    assert cand["omega_b1"] == pytest.approx(bright_frequency(reference))
    assert len(cand) == 8


@settings(max_examples=1000, deadline=None)
@given(w_a=st.floats(0.5, 1.5), w_c=st.floats(0.5, 1.5), v_a=st.floats(0.01, 0.3), ratio=st.floats(0.05, 0.95))
def test_ee_property_random_draws(w_a, w_c, v_a, ratio):
    p = with_ee_coupling(SystemParams(omega_c=w_c, omega_a=w_a, v_a=v_a, v_c=ratio * v_a))
    scale = abs(w_a - w_c) * p.v_a * p.v_c + abs(p.j_coupling) * (p.v_a ** 2 + p.v_c ** 2)
    assert abs(ee_condition_residual(p)) <= 1e-12 * max(scale, 1e-300)
    h = single_excitation_heff(p)
    v = np.array([p.v_c, -p.v_a])
    hv = h @ v
    lam = (v @ hv) / (v @ v)
    assert np.allclose(hv, lam * v, atol=1e-12 * np.abs(h).max())
    assert abs(lam.imag) < 1e-12


@settings(max_examples=300, deadline=None)
@given(w_a=st.floats(0.5, 1.5), w_c=st.floats(0.5, 1.5), v_a=st.floats(0.01, 0.3), ratio=st.floats(0.05, 0.95),
       j=st.floats(-0.1, 0.1))
def test_off_condition_is_lossy(w_a, w_c, v_a, ratio, j):
    p = SystemParams(omega_c=w_c, omega_a=w_a, v_a=v_a, v_c=ratio * v_a, j_coupling=j)
    if abs(ee_condition_residual(p)) <= 1e-6:
        return
    ev = np.linalg.eigvals(single_excitation_heff(p))
    assert np.all(ev.imag < -1e-12 * min(p.gamma_a, p.gamma_c))


def test_three_mode_reduces_to_two_mode():
    q = ThreeModeParams(omega_1=0.96, omega_2=1.0, omega_a=0.9, j_coupling=0.01, g_coupling=0.0, v_1=0.05, v_2=0.1)
    # cavity 1 plays the atom's role when g = 0
    p = SystemParams(omega_c=1.0, omega_a=0.96, v_a=0.05, v_c=0.1, j_coupling=0.01)
    r3, r2 = three_mode_ee_residual(q), ee_condition_residual(p)
    assert r2 != 0
    assert abs(r3 - r2) <= 1e-15 * abs(r2)


def test_three_mode_solved_g(three_mode):
    assert abs(three_mode_ee_residual(three_mode)) < 1e-12
    spec = three_mode_spectrum(three_mode)
    assert abs(spec.eigenvalues[0].imag) < 1e-10
    h = three_mode_heff(three_mode)
    assert h[0, 0].imag == 0 and h[0, 2] == 0


def test_three_mode_g_zero_and_closed():
    q = ThreeModeParams(omega_1=1.0, omega_2=0.96, omega_a=1.0, j_coupling=0.0, g_coupling=0.0, v_1=0.1, v_2=0.05)
    q = q.replace(j_coupling=solve_j_for_ee(SystemParams(omega_c=0.96, omega_a=1.0, v_a=0.1, v_c=0.05)))
    assert abs(three_mode_ee_residual(q)) < 1e-15
    ev = np.linalg.eigvals(three_mode_heff(q))
    assert np.sum(np.abs(ev.imag) < 1e-12) == 2
    assert np.min(np.abs(ev - 1.0)) < 1e-12
    closed = q.replace(v_1=0.0, v_2=0.0, g_coupling=0.01)
    assert np.all(np.abs(np.linalg.eigvals(three_mode_heff(closed)).imag) < 1e-15)


def test_three_mode_errors():
    q = ThreeModeParams(omega_1=1.0, omega_2=0.96, omega_a=0.96, j_coupling=0.0, g_coupling=0.0, v_1=0.1, v_2=0.05)
    with pytest.raises(SingularDenominator):
        three_mode_ee_residual(q)
    bad = ThreeModeParams(omega_1=0.9, omega_2=0.96, omega_a=1.0, j_coupling=0.0, g_coupling=0.0, v_1=0.1, v_2=0.05)
    with pytest.raises(NoRealCoupling):
        solve_g_for_ee(bad)
    gs = np.linspace(0, 0.2, 401)
    res = [three_mode_ee_residual(bad.replace(g_coupling=g)) for g in gs]
    assert np.all(np.sign(res) == np.sign(res[0])) and res[0] != 0
    with pytest.raises(ZeroCoupling):
        solve_g_for_ee(bad.replace(v_2=0.0))


def test_param_validation():
    with pytest.raises(ValueError):
        SystemParams(omega_c=1, omega_a=1, v_a=-0.1)
    with pytest.raises(ValueError):
        SystemParams(omega_c=1, omega_a=1, gamma_prime_c=-1)
    p = SystemParams.two_cavity(1.0, 0.96, 0.02, 0.1, 0.05)
    assert (p.omega_a, p.omega_c, p.v_a, p.v_c) == (1.0, 0.96, 0.1, 0.05)
    assert p.gamma_unit == pytest.approx(np.pi * 0.0125)
