import numpy as np
import pytest

from trinls.model import SystemParams, dissipation_constants, gauge_rotate
from trinls.profile_ode import (
    InsufficientSpan,
    NonDissipative,
    decoupled_closed_form,
    profile_decay_metrics,
    run_profile,
    trajectory_rows,
)


@pytest.fixture(scope="module")
def coupled_traj(request):
    params = SystemParams(m=(1, 1, 2), lam=(-1j, -1j, -1j), mu=(1, 1, 2),
                          kappa=(1, 1, 1))
    alpha0 = np.array([0.6, 0.6, 0.6], complex)
    return run_profile(alpha0, params, 40.0, dtau=1e-3, record_every=10), params


def test_decoupled_matches_closed_form():
    params = SystemParams(m=(1, 1, 2), lam=(-1j, -1j, -1j), mu=(0, 0, 0),
                          kappa=(1, 1, 1), test_mode=True)
    traj = run_profile(np.array([1.0, 0.5j, -0.25], complex), params, 10.0,
                       dtau=1e-3, record_every=100)
    for j, a0 in enumerate((1.0, 0.5j, -0.25)):
        exact = decoupled_closed_form(a0, -1j, traj.taus)
        assert np.abs(traj.alphas[:, j] - exact).max() <= 1e-10


def test_closed_form_real_lambda_rotates():
    taus = np.linspace(0.0, 5.0, 11)
    out = decoupled_closed_form(2.0, 0.7, taus)
    assert np.allclose(np.abs(out), 2.0, atol=1e-14)
    assert np.allclose(out, 2.0 * np.exp(-1j * 0.7 * 2.0 * taus), atol=1e-13)


def test_closed_form_rejects_growth():
    with pytest.raises(NonDissipative):
        decoupled_closed_form(1.0, 1.0 + 0.5j, 1.0)


def test_closed_form_against_rk4_real_lambda():
    params = SystemParams(m=(1, 1, 2), lam=(0.8, 0.8, 0.8), mu=(0, 0, 0),
                          kappa=(1, 1, 1), strict=False, test_mode=True)
    traj = run_profile(np.array([1.5, 0, 0], complex), params, 5.0,
                       dtau=1e-3, record_every=500)
    exact = decoupled_closed_form(1.5, 0.8, traj.taus)
    assert np.abs(traj.alphas[:, 0] - exact).max() <= 1e-9


def test_rk4_fourth_order_convergence():
    params = SystemParams(m=(1, 1, 2), lam=(-1j, -1j, -1j), mu=(1, 1, 2),
                          kappa=(1, 1, 1))
    alpha0 = np.array([0.6, 0.6, 0.6], complex)
    ref = run_profile(alpha0, params, 1.0, dtau=1e-4).alphas[-1]
    errs = []
    for dtau in (0.1, 0.05):
        end = run_profile(alpha0, params, 1.0, dtau=dtau).alphas[-1]
        errs.append(np.abs(end - ref).max())
    ratio = errs[0] / errs[1]
    assert 13.0 <= ratio <= 19.0


def test_panel_matches_scalar_columns():
    params = SystemParams(m=(1, 1, 2), lam=(-1j, -1j, -1j), mu=(1, 1, 2),
                          kappa=(1, 1, 1))
    cols = np.array([[0.6, 1.0], [0.6, 0.0], [0.6, 0.0]], complex)
    panel = run_profile(cols, params, 2.0, dtau=1e-3, record_every=100)
    assert panel.alphas.shape == (21, 3, 2)
    assert panel.nu(params).shape == (21, 2)
    for p in range(2):
        single = run_profile(cols[:, p], params, 2.0, dtau=1e-3,
                             record_every=100)
        assert np.abs(panel.alphas[:, :, p] - single.alphas).max() <= 1e-12


def test_profile_flow_gauge_equivariant():
    params = SystemParams(m=(1, 1, 2), lam=(-1j, -1j, -1j), mu=(1, 1, 2),
                          kappa=(1, 1, 1))
    alpha0 = np.array([0.6, 0.4j, 0.5], complex)
    theta = 1.1
    a = run_profile(gauge_rotate(alpha0, theta, params), params, 2.0,
                    dtau=1e-3, record_every=1000).alphas[-1]
    b = gauge_rotate(run_profile(alpha0, params, 2.0, dtau=1e-3,
                                 record_every=1000).alphas[-1], theta, params)
    assert np.abs(a - b).max() <= 1e-11


def test_record_cadence():
    params = SystemParams(m=(1, 1, 2), lam=(-1j, -1j, -1j), mu=(1, 1, 2),
                          kappa=(1, 1, 1))
    traj = run_profile(np.array([0.6, 0.6, 0.6], complex), params, 1.0,
                       dtau=1e-3, record_every=300)
    assert np.allclose(traj.taus, [0.0, 0.3, 0.6, 0.9, 1.0])


def test_run_profile_argument_guards():
    params = SystemParams(m=(1, 1, 2), lam=(-1j, -1j, -1j), mu=(1, 1, 2),
                          kappa=(1, 1, 1))
    a0 = np.array([0.6, 0.6, 0.6], complex)
    with pytest.raises(ValueError):
        run_profile(a0, params, 0.0)
    with pytest.raises(ValueError):
        run_profile(a0, params, 1.0005, dtau=1e-2)
    with pytest.raises(ValueError):
        run_profile(a0, params, 1.0, record_every=0)
    with pytest.raises(ValueError):
        run_profile(np.zeros((2,), complex), params, 1.0)


def test_nu_monotone_and_bracket_slopes(coupled_traj):
    # d(1/nu)/dtau lies in [C_lower, C_upper] exactly along the flow; the
    # recorded 0.01 spacing keeps the discrete slopes inside the band too
    traj, params = coupled_traj
    nu = traj.nu(params)
    assert np.all(np.diff(nu) < 1e-12)
    consts = dissipation_constants(params)
    slopes = np.diff(1.0 / nu) / np.diff(traj.taus)
    assert slopes.min() >= consts.c_lower - 1e-6
    assert slopes.max() <= consts.c_upper + 1e-6


def test_metrics_on_decoupled_closed_form():
    params = SystemParams(m=(1, 1, 2), lam=(-1j, -1j, -1j), mu=(0, 0, 0),
                          kappa=(1, 1, 1), test_mode=True)
    traj = run_profile(np.array([10.0, 0, 0], complex), params, 40.0,
                       dtau=1e-3, record_every=10)
    m = profile_decay_metrics(traj, params, tau_min=20.0)
    # nu = 10 / (1 + 10 tau): tau nu increases through [200/201, 400/401]
    assert m.tau_nu_tail_min == pytest.approx(200.0 / 201.0, rel=1e-6)
    assert m.tau_nu_max == pytest.approx(400.0 / 401.0, rel=1e-6)
    assert m.tau2_phi_min == pytest.approx((200.0 / 201.0) ** 2, rel=1e-6)
    assert m.enhanced_decay
    assert m.inverse_bracket == pytest.approx((1.0, np.sqrt(3.0)))
    d = m.as_dict()
    assert d["tau_start"] == pytest.approx(20.0)
    assert d["tau_end"] == pytest.approx(40.0)


def test_metrics_window_guards(coupled_traj):
    traj, params = coupled_traj
    with pytest.raises(InsufficientSpan):
        profile_decay_metrics(traj, params)            # starts at tau = 0
    with pytest.raises(InsufficientSpan):
        profile_decay_metrics(traj, params, tau_min=25.0)   # 40 < 2 * 25
    with pytest.raises(InsufficientSpan):
        profile_decay_metrics(traj, params, tau_min=40.0)   # single sample
    m = profile_decay_metrics(traj, params, tau_min=10.0)
    assert m.tau_start == pytest.approx(10.0)
    assert m.tau_end == pytest.approx(40.0)


def test_metrics_non_strict_has_no_bracket():
    params = SystemParams(m=(1, 1, 2), lam=(1.0, 1.0, 1.0), mu=(1, 1, 2),
                          kappa=(1, 1, 1), strict=False)
    traj = run_profile(np.array([0.5, 0.5, 0.5], complex), params, 40.0,
                       dtau=1e-2, record_every=10)
    m = profile_decay_metrics(traj, params, tau_min=20.0)
    assert not m.enhanced_decay
    assert m.inverse_bracket is None


def test_trajectory_rows(coupled_traj):
    traj, params = coupled_traj
    rows = list(trajectory_rows(traj, params))
    assert len(rows) == len(traj.taus)
    first = rows[0]
    assert first["tau"] == 0.0
    assert first["alpha1_re"] == pytest.approx(0.6)
    assert first["nu_a"] == pytest.approx(np.sqrt(3 * 0.36))
    assert first["tau_nu"] == 0.0
    last = rows[-1]
    assert last["tau2_phi"] == pytest.approx(
        (40.0 * traj.nu(params)[-1]) ** 2, rel=1e-12)
    panel = run_profile(np.zeros((3, 2), complex) + 0.5, params, 1.0,
                        dtau=1e-2)
    with pytest.raises(ValueError):
        list(trajectory_rows(panel, params))
