import dataclasses

import numpy as np
import pytest
from hypothesis import assume, given, settings
from hypothesis import strategies as st

from conftest import make_params
from tether_guide.config import load_preset
from tether_guide.control import GuidanceConfig, Law, robot_reference
from tether_guide.model import HumanParams, SystemState
from tether_guide.sim import run
from tether_guide.stability import (
    InsufficientSamples,
    check_damping_condition,
    check_scalar_damping,
    check_vertical_force,
    dissipation_matrix,
    dissipation_rate,
    lyapunov_error_coords,
    lyapunov_regulation,
    lyapunov_samples,
    passivity_check,
    stability_report,
    steady_state_gamma,
    steady_state_gamma_h,
    walking_cable_load,
)

I = np.eye(3)
HUMAN = HumanParams(70, 30)


def guidance(f_z=2.0, k_p=2.0, target=(20, 0, 1), law=Law.GAMMA):
    return GuidanceConfig(law, k_p, f_z, target, 3.0)


# ---- closed-form conditions -------------------------------------------------

def test_vertical_force_condition():
    assert check_vertical_force(guidance(2.0), HUMAN) == (True, 2.0)
    ok, margin = check_vertical_force(guidance(600.0), HUMAN)
    assert ok and margin == pytest.approx(70 * 9.81 - 600)
    assert not check_vertical_force(guidance(0.0), HUMAN)[0]
    assert not check_vertical_force(guidance(700.0), HUMAN)[0]
    assert not check_vertical_force(guidance(-1.0), HUMAN)[0]


@pytest.mark.parametrize("d_H,d_A,ok,min_eig", [(30, 100, True, 5.0), (15, 60, False, 0.0), (40, 180, False, -5.0)])
def test_damping_condition_table_rows(d_H, d_A, ok, min_eig):
    got_ok, got_eig = check_damping_condition(d_H * I, d_A * I)
    assert got_ok is ok
    assert got_eig == pytest.approx(min_eig, abs=1e-12)


@pytest.mark.parametrize("d_H,d_A,ok,margin", [(30, 100, True, 20), (15, 60, False, 0), (1, 0.1, True, 3.9), (40, 180, False, -20)])
def test_scalar_damping_bound(d_H, d_A, ok, margin):
    got_ok, got_margin = check_scalar_damping(d_H, d_A)
    assert got_ok is ok
    assert got_margin == pytest.approx(margin)


@given(st.floats(0.1, 500))
def test_scalar_bound_excludes_equality(d_H):
    assert not check_scalar_damping(d_H, 4 * d_H)[0]


@given(st.floats(0.1, 200), st.floats(0.1, 800))
def test_scalar_and_matrix_conditions_agree(d_H, d_A):
    assume(abs(4 * d_H - d_A) > 1e-9 * d_A)
    assert check_scalar_damping(d_H, d_A)[0] == check_damping_condition(d_H * I, d_A * I)[0]


def _spd(seed_values, scale):
    a = np.asarray(seed_values, dtype=float).reshape(3, 3)
    return scale * (a @ a.T + 0.1 * I)


def _cholesky_ok(mat):
    try:
        np.linalg.cholesky(mat)
        return True
    except np.linalg.LinAlgError:
        return False


mats = st.lists(st.floats(-1, 1), min_size=9, max_size=9)


@settings(max_examples=200)
@given(mats, mats, st.floats(0.5, 50), st.floats(0.5, 200))
def test_schur_condition_matches_full_dissipation_matrix(a, b, s_H, s_A):
    D_H, D_A = _spd(a, s_H), _spd(b, s_A)
    ok, min_eig = check_damping_condition(D_H, D_A)
    assume(abs(min_eig) > 1e-6 * (s_H + s_A))
    # independent path: build the 6x6 block matrix by hand and test it with Cholesky
    B = np.zeros((6, 6))
    B[:3, :3], B[3:, 3:] = D_H, D_A
    B[:3, 3:] = B[3:, :3] = -0.5 * D_A
    np.testing.assert_allclose(dissipation_matrix(D_H, D_A, Law.GAMMA_H), B)
    assert ok == _cholesky_ok(B)


def test_dissipation_matrix_of_constant_input_law_is_block_diagonal():
    B = dissipation_matrix(30 * I, 13 * I, "Gamma")
    np.testing.assert_array_equal(B[:3, 3:], 0)
    np.testing.assert_array_equal(np.diag(B), [30, 30, 30, 13, 13, 13])


def test_dissipation_rate_examples():
    z = np.zeros(3)
    v = np.array([0.1, 0, 0])
    assert dissipation_rate(z, z, 30 * I, 100 * I, Law.GAMMA_H) == 0
    assert dissipation_rate(v, z, 30 * I, 100 * I, Law.GAMMA) == pytest.approx(-0.3)
    assert dissipation_rate(v, v, 30 * I, 100 * I, Law.GAMMA_H) == pytest.approx(-0.3)


# ---- steady-state predictors ------------------------------------------------

def test_steady_state_under_gamma():
    v, f = steady_state_gamma([3, 0, 0], 15 * I, 13 * I)
    np.testing.assert_allclose(v, [3 / 28, 0, 0])
    np.testing.assert_allclose(f, [45 / 28, 0, 0])
    v, f = steady_state_gamma([0, 0, 0], 15 * I, 13 * I)
    assert not v.any() and not f.any()
    _, f = steady_state_gamma([3, 0, 0], 15 * I, 1e-12 * I)
    np.testing.assert_allclose(f, [3, 0, 0])


def test_steady_state_drops_vertical_component():
    v, f = steady_state_gamma([3, 0, 7], 15 * I, 13 * I)
    assert v[2] == 0 and f[2] == 0


@pytest.mark.parametrize("d_H,speed", [(30, 0.1), (15, 0.2), (40, 0.075)])
def test_steady_state_under_gamma_h(d_H, speed):
    v, f = steady_state_gamma_h([3, 0, 0], d_H * I)
    np.testing.assert_allclose(v, [speed, 0, 0])
    np.testing.assert_array_equal(f, [3, 0, 0])


@given(st.floats(-3, 3), st.floats(-3, 3), st.floats(1, 100), st.floats(1, 400))
def test_predictor_orderings(gx, gy, d_H, d_A):
    assume(np.hypot(gx, gy) > 1e-3)
    g = np.array([gx, gy, 0.0])
    v_g, f_g = steady_state_gamma(g, d_H * I, d_A * I)
    v_h, f_h = steady_state_gamma_h(g, d_H * I)
    assert np.linalg.norm(f_g) < np.linalg.norm(g)
    assert np.linalg.norm(v_h) > np.linalg.norm(v_g)
    np.testing.assert_allclose(np.abs(v_h) >= np.abs(v_g), True)
    np.testing.assert_array_equal(f_h, g)


# ---- storage functions ------------------------------------------------------

def _equilibrium(cfg, params):
    z = np.zeros(3)
    return SystemState(cfg.p_H_ref, z, robot_reference(cfg, params.cable), z)


def test_regulation_lyapunov_vanishes_at_equilibrium(params):
    for f_z in (2.0, 50.0):
        cfg = guidance(f_z)
        assert lyapunov_regulation(_equilibrium(cfg, params), cfg, params) == pytest.approx(0, abs=1e-12)


def test_regulation_lyapunov_kinetic_perturbation(params):
    cfg = guidance()
    x = dataclasses.replace(_equilibrium(cfg, params), v_H=np.array([0.1, 0, 0]))
    assert lyapunov_regulation(x, cfg, params) == pytest.approx(0.35)


def test_regulation_lyapunov_slack_cable_hand_value(params):
    # slack cable (length 1 < 1.5), robot 1 m beside the target in the linear regime:
    # k_p r^2 / 2 - l_c.f + f^2/(2k) + l0 f = 1 - 2 + 0.02 + 3
    cfg = guidance(2.0, k_p=2.0, target=(1, 0, 1))
    x = SystemState((0, 0, 1), (0, 0, 0), (0, 0, 2), (0, 0, 0))
    assert lyapunov_regulation(x, cfg, params) == pytest.approx(2.02)
    # 20 m away the clamp is active and the potential grows linearly: 3 * 20 - 9 / (2 * 2)
    cfg = guidance(2.0, k_p=2.0, target=(20, 0, 1))
    assert lyapunov_regulation(x, cfg, params) == pytest.approx(57.75 - 2 + 3.02)


def _walking_equilibrium(params, law, v_offset=(0, 0, 0)):
    gamma = np.array([3.0, 0, 0])
    v, load = walking_cable_load(gamma, 2.0, params.human.damping, params.admittance.damping, law)
    n = np.linalg.norm(load)
    p_H = np.array([0, 0, 1.0])
    x = SystemState(p_H, v + np.asarray(v_offset), p_H + load / n * (1.5 + n / 100), v)
    return x, v, load


@pytest.mark.parametrize("law", list(Law))
def test_error_lyapunov_zero_on_walking_trajectory(law):
    params = make_params(15, 13)
    x, v, load = _walking_equilibrium(params, law)
    assert lyapunov_error_coords(x, v, load, params) == pytest.approx(0, abs=1e-12)
    x, v, load = _walking_equilibrium(params, law, (0.05, 0, 0))
    assert lyapunov_error_coords(x, v, load, params) == pytest.approx(0.5 * 70 * 0.0025)


def test_walking_load_horizontal_part_balances_human_damping():
    params = make_params(15, 13)
    for law in Law:
        v, load = walking_cable_load([3, 0, 0], 2.0, params.human.damping, params.admittance.damping, law)
        np.testing.assert_allclose(load[:2], (params.human.damping @ v)[:2])
        assert load[2] == 2.0


c = st.floats(-4, 4)


@given(st.tuples(c, c, c), st.tuples(c, c), st.tuples(c, c, c), st.tuples(c, c, c))
def test_error_lyapunov_nonnegative(l_c, v_H, v_R, dv):
    params = make_params(15, 13)
    v, load = walking_cable_load([3, 0, 0], 2.0, params.human.damping, params.admittance.damping, Law.GAMMA)
    p_H = np.array([0, 0, 1.0])
    x = SystemState(p_H, (*v_H, 0), p_H + l_c, v_R)
    assert lyapunov_error_coords(x, v, load, params) >= -1e-9


@given(st.tuples(c, c, c), st.tuples(c, c), st.tuples(c, c, c), st.floats(-30, 30), st.floats(-30, 30))
def test_regulation_lyapunov_nonnegative(l_c, v_H, v_R, px, py):
    params = make_params(30, 60)
    cfg = guidance(50.0, k_p=5.0, target=(2, 0, 1), law=Law.GAMMA_H)
    p_H = np.array([px, py, 1.0])
    x = SystemState(p_H, (*v_H, 0), p_H + l_c, v_R)
    assert lyapunov_regulation(x, cfg, params) >= -1e-9


# ---- trajectory checks ------------------------------------------------------

@pytest.fixture(scope="module")
def short_passive_log():
    sc = load_preset("passivity_gammaH")
    return run(dataclasses.replace(sc.sim, duration=3.0), sc.params)


@pytest.fixture(scope="module")
def short_nominal_log():
    sc = load_preset("regulation_gammaH")
    return run(dataclasses.replace(sc.sim, duration=3.0), sc.params)


def test_passivity_nominal_and_forced(short_nominal_log, short_passive_log):
    assert passivity_check(short_nominal_log)[0]
    ok, worst = passivity_check(short_passive_log)
    assert ok and worst <= 1e-4


def test_passivity_detects_injected_energy(short_passive_log):
    bad = dataclasses.replace(short_passive_log, V=short_passive_log.V.copy())
    bad.V[1500:] += 0.01
    ok, worst = passivity_check(bad)
    assert not ok and worst > 1.0


def test_passivity_needs_three_samples(short_nominal_log):
    tiny = dataclasses.replace(short_nominal_log, t=short_nominal_log.t[:2], V=short_nominal_log.V[:2],
                               x=short_nominal_log.x[:2])
    with pytest.raises(InsufficientSamples):
        passivity_check(tiny)
    with pytest.raises(InsufficientSamples):
        lyapunov_samples(tiny)


def test_lyapunov_samples_respect_dissipation(short_nominal_log):
    samples = lyapunov_samples(short_nominal_log)
    assert len(samples) == len(short_nominal_log)
    assert all(np.isfinite([s.V, s.Vdot_numeric, s.dissipation_bound]).all() for s in samples)
    assert max(s.Vdot_numeric - s.dissipation_bound for s in samples) < 1e-4


# ---- report -----------------------------------------------------------------

def test_report_for_table_row():
    params = make_params(30, 100)
    r = stability_report(guidance(law=Law.GAMMA_H), params)
    assert r.ok
    d = r.to_dict()
    assert d["scalar_damping_margin"] == 20 and d["damping_condition_min_eig"] == pytest.approx(5)
    assert d["v_star_gamma_h_x"] == pytest.approx(0.1)
    assert d["f_ss_gamma_h_x"] == 3.0
    assert all(k == k.lower() for k in d)
    assert "all_ok = true" in r.to_text()


def test_report_flags_boundary_and_vertical_force():
    assert not stability_report(guidance(law=Law.GAMMA_H), make_params(15, 60)).ok
    # the constant-input law does not depend on the damping bound
    assert stability_report(guidance(law=Law.GAMMA), make_params(15, 60)).ok
    assert not stability_report(guidance(0.0), make_params(30, 100)).ok


def test_report_without_scalar_damping():
    params = make_params(np.diag([30.0, 31.0, 32.0]), 100)
    r = stability_report(guidance(law=Law.GAMMA_H), params)
    assert r.scalar_damping_ok is None and r.scalar_damping_margin is None
    assert r.ok
