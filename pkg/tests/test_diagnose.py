import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from trinls import diagnose
from trinls.diagnose import (
    DiagnosticsSeries,
    InsufficientSamples,
    boundary_fraction,
    cubic_rate,
    damped_x_norms,
    fit_decay_rate,
    ledger,
    monotone_fluctuation,
    phi_of_alpha,
    residual_r,
    sup_norm_metrics,
    weighted_mass,
    window_band_ratio,
)
from trinls.evolve import make_initial_state
from trinls.spectral import FieldState, propagate_free, weighted_norm


def test_series_columns_and_nan_fill():
    series = DiagnosticsSeries()
    series.append(t=0.0, sup_u=1.0)
    series.append(t=1.0, sup_u=0.5, r_sup=0.1)
    assert len(series) == 2
    assert np.array_equal(series.t, [0.0, 1.0])
    r = series.column("r_sup")
    assert np.isnan(r[0]) and r[1] == 0.1
    cols = series.as_columns()
    assert set(cols) == set(diagnose.COLUMNS)
    with pytest.raises(KeyError):
        series.append(t=2.0, bogus=1.0)
    with pytest.raises(KeyError):
        series.column("bogus")


def test_weighted_mass_gaussian_oracle(grid, canonical_params):
    state = make_initial_state(grid, 0.1)
    # each |u_j|^2 integrates to epsilon^2 pi; kappa = (1, 1, 1)
    assert weighted_mass(state.u, grid, canonical_params) == \
        pytest.approx(3 * 0.01 * np.pi, rel=1e-12)


def test_cubic_rate_gaussian_oracle(grid, canonical_params):
    eps = 0.1
    state = make_initial_state(grid, eps)
    # ||u_j||_L3^3 = eps^3 * 2 pi / 3 and Im lam_j = -1 throughout
    expected = 2.0 * 3 * (-1.0) * eps ** 3 * (2 * np.pi / 3)
    assert cubic_rate(state, canonical_params) == \
        pytest.approx(expected, rel=1e-12)


def test_ledger_is_mass_minus_accumulator(grid, canonical_params):
    state = make_initial_state(grid, 0.1)
    mass = weighted_mass(state.u, grid, canonical_params)
    assert ledger(state, 0.25, canonical_params) == pytest.approx(mass - 0.25)


def test_sup_norm_metrics_values(small_grid):
    u = np.zeros((3, 64, 64), complex)
    u[1, 3, 4] = -2.0
    state = FieldState(u, 3.0, small_grid)
    row = sup_norm_metrics(state)
    assert row["sup_u"] == 2.0
    assert row["sup_u_t"] == pytest.approx(8.0)
    assert row["sup_u_tlogt"] == pytest.approx(8.0 * np.log(5.0))


def test_phi_of_alpha(canonical_params):
    alpha = np.zeros((3, 4, 4), complex)
    alpha[0, 1, 1] = 2.0
    alpha[2, 1, 1] = 1.0
    assert phi_of_alpha(alpha, canonical_params) == pytest.approx(5.0)


def test_residual_vanishes_for_free_flow(free_params):
    from trinls.spectral import Grid2D
    grid = Grid2D(128, 40.0)
    state0 = make_initial_state(grid, 0.1)
    state = FieldState(propagate_free(state0.u, grid, free_params, 1.0),
                       1.0, grid)
    r, r_sup = residual_r(state, free_params)
    assert r_sup == 0.0
    assert np.all(r == 0.0)
    with pytest.raises(ValueError):
        residual_r(state0, free_params)


def test_boundary_fraction_gaussian(grid, canonical_params):
    state = make_initial_state(grid, 1.0)
    frac = boundary_fraction(state.u, grid, canonical_params, 2.0)
    # |u|^2 = exp(-r^2): the mass fraction beyond radius R is exp(-R^2)
    assert frac == pytest.approx(np.exp(-4.0), rel=0.05)
    assert boundary_fraction(np.zeros_like(state.u), grid,
                             canonical_params, 2.0) == 0.0


def test_damped_x_norms(grid, canonical_params):
    state = make_initial_state(grid, 0.1)
    row = damped_x_norms(state, canonical_params, profile=state.u)
    assert set(row) == {"xnorm_ms0", "xnorm_m0s"}
    # t = 0: no damping; both entries are plain weighted norms of the data
    assert row["xnorm_ms0"] == pytest.approx(
        weighted_norm(state.u, grid, "hs0", canonical_params.s), rel=1e-12)
    assert row["xnorm_m0s"] == pytest.approx(
        weighted_norm(state.u, grid, "h0s", canonical_params.s), rel=1e-12)
    late = FieldState(state.u, 7.0, grid)
    row_late = damped_x_norms(late, canonical_params, profile=state.u)
    damp = 8.0 ** (-canonical_params.gamma / 3.0)
    assert row_late["xnorm_ms0"] == pytest.approx(damp * row["xnorm_ms0"],
                                                  rel=1e-12)


def test_monotone_fluctuation_cases():
    t = np.arange(5.0)
    y = np.array([5.0, 4.0, 3.0, 3.3, 2.0])
    assert monotone_fluctuation(t, y, (0.0, 4.0)) == pytest.approx(0.1)
    assert monotone_fluctuation(t, np.array([5, 4, 3, 2, 1.0]),
                                (0.0, 4.0)) == 0.0
    with pytest.raises(InsufficientSamples):
        monotone_fluctuation(t, y, (3.5, 3.9))
    y_nan = y.copy()
    y_nan[3] = np.nan
    assert monotone_fluctuation(t, y_nan, (0.0, 4.0)) == 0.0


def test_window_band_ratio_cases():
    t = np.arange(6.0)
    y = np.array([np.nan, 2.0, 1.0, 4.0, np.nan, 8.0])
    assert window_band_ratio(t, y, (0.0, 4.0)) == pytest.approx(4.0)
    assert window_band_ratio(t, np.array([1, 0, 2, 3, 4, 5.0]),
                             (0.0, 5.0)) == np.inf
    with pytest.raises(InsufficientSamples):
        window_band_ratio(t, y, (0.0, 2.0))


def test_fit_calibration_pure_power():
    t = np.linspace(4.0, 40.0, 100)
    fit = fit_decay_rate(t, 1.0 / (1.0 + t))
    assert fit.a == pytest.approx(1.0, abs=1e-8)
    assert fit.b == pytest.approx(0.0, abs=1e-8)
    assert fit.favored == "t"


def test_fit_calibration_log_product():
    t = np.linspace(4.0, 40.0, 100)
    fit = fit_decay_rate(t, 1.0 / ((1.0 + t) * np.log(2.0 + t)))
    assert fit.a == pytest.approx(1.0, abs=1e-8)
    assert fit.b == pytest.approx(1.0, abs=1e-8)
    assert fit.favored == "t_logt"
    assert fit.rms_plain > fit.rms


def test_fit_window_and_sample_guards():
    t = np.linspace(4.0, 40.0, 100)
    sup = 1.0 / (1.0 + t)
    with pytest.raises(InsufficientSamples):
        fit_decay_rate(t[:10], sup[:10])
    with pytest.raises(InsufficientSamples):
        fit_decay_rate(t, sup, window=(4.0, 7.0), min_samples=5)
    with pytest.raises(InsufficientSamples):
        fit_decay_rate(np.linspace(0.5, 40, 100),
                       1.0 / (1.5 + np.linspace(0.5, 40, 100)))
    fit = fit_decay_rate(t, sup, window=(5.0, 20.0))
    assert fit.n_samples == int(np.sum((t >= 5.0) & (t <= 20.0)))


def test_fit_mild_noise_robustness():
    rng = np.random.default_rng(23)
    t = np.linspace(3.0, 30.0, 120)
    sup = (1.0 + t) ** -1.2 * np.exp(rng.normal(0.0, 0.01, t.size))
    fit = fit_decay_rate(t, sup)
    assert abs(fit.a - 1.2) <= 0.15


@settings(max_examples=30, deadline=None)
@given(a=st.floats(0.3, 2.0), b=st.floats(0.0, 1.5), c=st.floats(-2.0, 2.0))
def test_fit_recovers_exact_exponents(a, b, c):
    t = np.linspace(3.0, 30.0, 60)
    sup = np.exp(c) * (1.0 + t) ** -a * np.log(2.0 + t) ** -b
    fit = fit_decay_rate(t, sup)
    assert abs(fit.a - a) <= 1e-6
    assert abs(fit.b - b) <= 1e-6
    assert fit.rms <= 1e-10
