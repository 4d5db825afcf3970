import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from trinls.model import (
    DissipativityViolated,
    KappaNotFound,
    MassResonanceViolated,
    MuKappaMismatch,
    NotStrict,
    ParamError,
    RegularityRangeError,
    SystemParams,
    dissipation_constants,
    dissipation_pairing,
    eval_F,
    find_kappa,
    gauge_rotate,
    nu_a,
)


def test_eval_f_frozen_point(canonical_params):
    out = eval_F(np.array([1.0, 1.0, 1.0], complex), canonical_params)
    assert np.allclose(out, [1.0 - 1.0j, 1.0 - 1.0j, 2.0 - 1.0j], atol=1e-15)


def test_eval_f_stacked_shapes(canonical_params):
    z = np.ones((3, 4, 5), complex)
    out = eval_F(z, canonical_params)
    assert out.shape == (3, 4, 5)
    assert np.allclose(out[2], 2.0 - 1.0j)


def test_pairing_frozen_point(canonical_params):
    z = np.array([1.0, 1.0, 1.0], complex)
    pairing, nu = dissipation_pairing(z, canonical_params)
    assert abs(pairing - (4.0 - 3.0j)) <= 1e-14
    assert abs(nu - np.sqrt(3.0)) <= 1e-14


def test_gauge_rotate_half_turn(canonical_params):
    z = np.array([1.0, 1.0, 1.0], complex)
    out = gauge_rotate(z, np.pi, canonical_params)
    # masses (1, 1, 2): the first two flip sign, the third comes back around
    assert np.allclose(out, [-1.0, -1.0, 1.0], atol=1e-12)


def test_gauge_rotate_spatial_theta(canonical_params):
    z = np.ones((3, 8, 8), complex)
    theta = np.linspace(0.0, 1.0, 64).reshape(8, 8)
    out = gauge_rotate(z, theta, canonical_params)
    assert np.allclose(out[2], np.exp(2j * theta))


def test_constants_canonical(canonical_params):
    consts = dissipation_constants(canonical_params)
    assert consts.c_lower == pytest.approx(3.0 ** -0.5, abs=1e-15)
    assert consts.c_upper == pytest.approx(1.0, abs=1e-15)
    lo, hi = consts.inverse_bracket
    assert lo == pytest.approx(1.0, abs=1e-15)
    assert hi == pytest.approx(np.sqrt(3.0), abs=1e-15)


def test_constants_require_strict():
    params = SystemParams(m=(1, 1, 2), lam=(1, 1, 1), mu=(1, 1, 2),
                          kappa=(1, 1, 1), strict=False)
    with pytest.raises(NotStrict):
        dissipation_constants(params)


def test_find_kappa_canonical():
    kappa = find_kappa(np.array([1.0, 1.0, 2.0], complex))
    assert np.allclose(kappa, [1.0, 1.0, 1.0], atol=1e-12)


def test_find_kappa_complex_coupling():
    kappa = find_kappa(np.array([1 + 1j, 1 - 1j, 1.0], complex))
    # kappa1 = kappa2, kappa3 = 2 kappa1, normalized to max 1
    assert np.allclose(kappa, [0.5, 0.5, 1.0], atol=1e-10)
    residual = kappa[0] * (1 + 1j) + kappa[1] * (1 - 1j) - kappa[2] * 1.0
    assert abs(residual) <= 1e-12


@pytest.mark.parametrize("mu", [(1j, -1j, 1.0), (1.0, 1.0, -2.0)])
def test_find_kappa_infeasible(mu):
    with pytest.raises(KappaNotFound):
        find_kappa(np.array(mu, complex))


def test_validation_mass_resonance():
    with pytest.raises(MassResonanceViolated):
        SystemParams(m=(1, 1, 2.5), lam=(-1j, -1j, -1j), mu=(1, 1, 2),
                     kappa=(1, 1, 1))
    with pytest.raises(MassResonanceViolated):
        SystemParams(m=(1, 0, 1), lam=(-1j, -1j, -1j), mu=(1, 1, 2),
                     kappa=(1, 1, 1))


def test_validation_dissipativity():
    with pytest.raises(DissipativityViolated):
        SystemParams(m=(1, 1, 2), lam=(1j, -1j, -1j), mu=(1, 1, 2),
                     kappa=(1, 1, 1))
    # strict mode rejects merely non-positive imaginary parts
    with pytest.raises(DissipativityViolated):
        SystemParams(m=(1, 1, 2), lam=(1.0, -1j, -1j), mu=(1, 1, 2),
                     kappa=(1, 1, 1), strict=True)


def test_validation_mu_kappa():
    with pytest.raises(MuKappaMismatch):
        SystemParams(m=(1, 1, 2), lam=(-1j, -1j, -1j), mu=(1, 1, 3),
                     kappa=(1, 1, 1))
    with pytest.raises(MuKappaMismatch):
        SystemParams(m=(1, 1, 2), lam=(-1j, -1j, -1j), mu=(1, 1, 2),
                     kappa=(1, -1, 1))


def test_validation_regularity_range():
    with pytest.raises(RegularityRangeError):
        SystemParams(m=(1, 1, 2), lam=(-1j, -1j, -1j), mu=(1, 1, 2),
                     kappa=(1, 1, 1), s=2.5)
    with pytest.raises(RegularityRangeError):
        SystemParams(m=(1, 1, 2), lam=(-1j, -1j, -1j), mu=(1, 1, 2),
                     kappa=(1, 1, 1), s=1.5, gamma=0.3)


def test_validation_zero_coefficients_need_test_mode():
    with pytest.raises(ParamError):
        SystemParams(m=(1, 1, 2), lam=(0, 0, 0), mu=(0, 0, 0),
                     kappa=(1, 1, 1), strict=False)
    params = SystemParams(m=(1, 1, 2), lam=(0, 0, 0), mu=(0, 0, 0),
                          kappa=(1, 1, 1), strict=False, test_mode=True)
    assert np.all(params.lam == 0)


def test_params_arrays_frozen(canonical_params):
    with pytest.raises(ValueError):
        canonical_params.m[0] = 5.0


def test_as_dict_roundtrip(canonical_params):
    d = canonical_params.as_dict()
    rebuilt = SystemParams(
        m=d["m"], lam=[complex(*v) for v in d["lam"]],
        mu=[complex(*v) for v in d["mu"]], kappa=d["kappa"],
        strict=d["strict"], s=d["s"], gamma=d["gamma"],
        test_mode=d["test_mode"])
    assert np.array_equal(rebuilt.lam, canonical_params.lam)
    assert np.array_equal(rebuilt.kappa, canonical_params.kappa)


def test_nu_a_shapes_and_values(canonical_params):
    assert nu_a(np.array([1, 1, 1], complex), canonical_params) == \
        pytest.approx(np.sqrt(3.0))
    z = np.zeros((3, 4, 4), complex)
    z[2] = 2.0
    out = nu_a(z, canonical_params)
    assert out.shape == (4, 4)
    assert np.allclose(out, 2.0)


def test_dissipation_sandwich_sampled(canonical_params):
    # C_lower <= -Im<F,Az>/nu^3 <= C_upper on the unit sphere of nu_A
    rng = np.random.default_rng(7)
    z = rng.standard_normal((3, 20000)) + 1j * rng.standard_normal((3, 20000))
    z /= nu_a(z, canonical_params)
    pairing, nu = dissipation_pairing(z, canonical_params)
    ratio = -pairing.imag / nu ** 3
    consts = dissipation_constants(canonical_params)
    assert ratio.min() >= consts.c_lower - 1e-10
    assert ratio.max() <= consts.c_upper + 1e-10


# --- property tests -------------------------------------------------------

_coef = st.floats(-2.0, 2.0, allow_nan=False, allow_infinity=False)
_neg = st.floats(-2.0, -0.05, allow_nan=False, allow_infinity=False)
_pos = st.floats(0.2, 1.0, allow_nan=False, allow_infinity=False)
_mass = st.floats(0.3, 2.0, allow_nan=False, allow_infinity=False)


@st.composite
def systems(draw) -> SystemParams:
    m1, m2 = draw(_mass), draw(_mass)
    lam = [complex(draw(_coef), draw(_neg)) for _ in range(3)]
    kappa = [draw(_pos) for _ in range(3)]
    mu1 = complex(draw(_coef), draw(_coef))
    mu2 = complex(draw(_coef), draw(_coef))
    mu3 = np.conj((kappa[0] * mu1 + kappa[1] * mu2) / kappa[2])
    return SystemParams(m=(m1, m2, m1 + m2), lam=lam, mu=(mu1, mu2, mu3),
                        kappa=kappa, test_mode=True)


@st.composite
def triples(draw) -> np.ndarray:
    return np.array([complex(draw(_coef), draw(_coef)) for _ in range(3)])


@settings(max_examples=200, deadline=None)
@given(params=systems(), z=triples(),
       theta=st.floats(0.0, 2.0 * np.pi, allow_nan=False))
def test_gauge_equivariance_property(params, z, theta):
    lhs = eval_F(gauge_rotate(z, theta, params), params)
    rhs = gauge_rotate(eval_F(z, params), theta, params)
    assert np.abs(lhs - rhs).max() <= 1e-10


@settings(max_examples=200, deadline=None)
@given(params=systems(), z=triples())
def test_pairing_identity_property(params, z):
    # compatibility makes the coupling drop out of the imaginary part
    pairing, _ = dissipation_pairing(z, params)
    target = float(np.dot(params.kappa * params.lam.imag, np.abs(z) ** 3))
    assert abs(pairing.imag - target) <= 1e-10


@settings(max_examples=200, deadline=None)
@given(params=systems(), z=triples())
def test_nu_norm_equivalence_property(params, z):
    nu = nu_a(z, params)
    norm = np.sqrt(np.sum(np.abs(z) ** 2))
    kmin, kmax = params.kappa.min(), params.kappa.max()
    assert np.sqrt(kmin) * norm - 1e-12 <= nu <= np.sqrt(kmax) * norm + 1e-12
