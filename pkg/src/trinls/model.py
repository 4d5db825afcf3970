"""Coefficients and pointwise algebra of the three-component system.

The unknown is a triple z = (z1, z2, z3) of complex amplitudes coupled by

    F(z) = (lam1 |z1| z1 + mu1 conj(z2) z3,
            lam2 |z2| z2 + mu2 conj(z1) z3,
            lam3 |z3| z3 + mu3 z1 z2).

Two structural conditions drive everything downstream:

* mass resonance m1 + m2 = m3, which makes F equivariant under the gauge
  action z_j -> exp(i m_j theta) z_j;
* a positive weight vector kappa with
  kappa1 mu1 + kappa2 mu2 = kappa3 conj(mu3), which makes the coupling terms
  cancel in the weighted pairing, leaving
  Im <F(z), A z> = sum_j kappa_j Im(lam_j) |z_j|^3 with A = diag(kappa).

When every Im lam_j < 0 the pairing is strictly negative and is sandwiched
between -C_upper nu^3 and -C_lower nu^3 on the weighted sphere
nu_A(z) = sqrt(sum kappa_j |z_j|^2); those constants are what the long-time
decay rates are measured against.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.optimize import linprog

__all__ = [
    "ParamError",
    "MassResonanceViolated",
    "DissipativityViolated",
    "MuKappaMismatch",
    "RegularityRangeError",
    "NotStrict",
    "KappaNotFound",
    "SystemParams",
    "DissipationConstants",
    "validate_params",
    "find_kappa",
    "eval_F",
    "gauge_rotate",
    "nu_a",
    "dissipation_pairing",
    "dissipation_constants",
]

VALIDATION_TOL = 1e-12


class ParamError(ValueError):
    """Invalid system parameters."""


class MassResonanceViolated(ParamError):
    """m1 + m2 != m3, or a vanishing mass."""


class DissipativityViolated(ParamError):
    """Some Im lam_j > 0, or strict mode with Im lam_j >= 0."""


class MuKappaMismatch(ParamError):
    """kappa not positive or kappa1 mu1 + kappa2 mu2 != kappa3 conj(mu3)."""


class RegularityRangeError(ParamError):
    """(s, gamma) outside 1 < s < 2, 0 < gamma < (s - 1)/2."""


class NotStrict(ParamError):
    """Operation requires strictly dissipative coefficients (Im lam_j < 0)."""


class KappaNotFound(ParamError):
    """No positive kappa satisfies the compatibility condition for this mu."""


@dataclass(frozen=True)
class SystemParams:
    """Coefficient bundle for the three-component system.

    m:      masses, all nonzero, with m1 + m2 = m3.
    lam:    cubic coefficients; Im lam_j <= 0 always, < 0 when strict.
    mu:     quadratic coupling coefficients.
    kappa:  positive weights with kappa1 mu1 + kappa2 mu2 = kappa3 conj(mu3).
    strict: promises Im lam_j < 0 for every j (enables decay constants).
    s:      Sobolev/weight regularity, 1 < s < 2.
    gamma:  slack exponent for the slowly-growing norms, 0 < gamma < (s-1)/2.
    test_mode: permit degenerate zero coefficients (free or decoupled runs).
    """

    m: np.ndarray
    lam: np.ndarray
    mu: np.ndarray
    kappa: np.ndarray
    strict: bool = True
    s: float = 1.5
    gamma: float = 0.2
    test_mode: bool = False

    def __post_init__(self) -> None:
        for name, dtype in (("m", float), ("lam", complex),
                            ("mu", complex), ("kappa", float)):
            arr = np.array(getattr(self, name), dtype=dtype)
            if arr.shape != (3,):
                raise ParamError(f"{name} must have shape (3,), got {arr.shape}")
            if not np.all(np.isfinite(arr.view(float))):
                raise ParamError(f"{name} contains non-finite entries")
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        validate_params(self)

    def as_dict(self) -> dict:
        """JSON-friendly view (complex entries as [re, im] pairs)."""
        return {
            "m": [float(v) for v in self.m],
            "lam": [[v.real, v.imag] for v in self.lam],
            "mu": [[v.real, v.imag] for v in self.mu],
            "kappa": [float(v) for v in self.kappa],
            "strict": self.strict,
            "s": self.s,
            "gamma": self.gamma,
            "test_mode": self.test_mode,
        }


@dataclass(frozen=True)
class DissipationConstants:
    """Sharp-form constants of the dissipation sandwich.

    On nu_A(z) = 1:  -c_upper <= Im <F(z), A z> <= -c_lower < 0.
    """

    c_lower: float
    c_upper: float
    kappa_min: float
    kappa_max: float

    @property
    def inverse_bracket(self) -> tuple[float, float]:
        """(1/c_upper, 1/c_lower): the bracket that tau * nu_A settles into."""
        return (1.0 / self.c_upper, 1.0 / self.c_lower)


def validate_params(params: SystemParams, tol: float = VALIDATION_TOL) -> None:
    """Check every structural invariant; raise a specific error on failure."""
    m, lam, mu, kappa = params.m, params.lam, params.mu, params.kappa

    if np.any(m == 0.0):
        raise MassResonanceViolated("masses must be nonzero")
    scale = max(1.0, float(np.max(np.abs(m))))
    if abs(m[0] + m[1] - m[2]) > tol * scale:
        raise MassResonanceViolated(
            f"m1 + m2 = {m[0] + m[1]!r} but m3 = {m[2]!r}")

    if np.any(lam.imag > 0.0):
        raise DissipativityViolated(f"Im lam must be <= 0, got {lam.imag}")
    if params.strict and np.any(lam.imag >= 0.0):
        raise DissipativityViolated(
            f"strict mode requires Im lam < 0, got {lam.imag}")

    if np.any(kappa <= 0.0):
        raise MuKappaMismatch(f"kappa must be positive, got {kappa}")
    residual = kappa[0] * mu[0] + kappa[1] * mu[1] - kappa[2] * np.conj(mu[2])
    scale = max(1.0, float(np.max(np.abs(kappa * np.abs(mu)))))
    if abs(residual) > tol * scale:
        raise MuKappaMismatch(
            f"kappa-mu compatibility residual {abs(residual):.3e} exceeds "
            f"{tol * scale:.3e}")

    if not (1.0 < params.s < 2.0):
        raise RegularityRangeError(f"s must lie in (1, 2), got {params.s}")
    if not (0.0 < params.gamma < (params.s - 1.0) / 2.0):
        raise RegularityRangeError(
            f"gamma must lie in (0, (s-1)/2) = (0, {(params.s - 1) / 2}), "
            f"got {params.gamma}")

    if not params.test_mode:
        if np.any(lam == 0.0) or np.any(mu == 0.0):
            raise ParamError(
                "zero coefficients are degenerate; set test_mode=True for "
                "free or decoupled configurations")


def find_kappa(mu, tol: float = 1e-10) -> np.ndarray:
    """Search for positive weights kappa compatible with the coupling mu.

    Solves kappa1 mu1 + kappa2 mu2 - kappa3 conj(mu3) = 0 (two real
    equations) over kappa > 0, normalized so max kappa_j = 1.  Raises
    KappaNotFound when no positive solution exists (e.g. mu = (1, 1, -2)).
    """
    mu = np.asarray(mu, dtype=complex)
    if mu.shape != (3,):
        raise ParamError(f"mu must have shape (3,), got {mu.shape}")

    # Real form of the compatibility condition: rows are Re and Im parts.
    mat = np.array([
        [mu[0].real, mu[1].real, -mu[2].real],
        [mu[0].imag, mu[1].imag, +mu[2].imag],
    ])
    row_scale = np.maximum(np.linalg.norm(mat, axis=1), 1e-30)
    mat_scaled = mat / row_scale[:, None]

    # Positive null vector via a feasibility LP; kappa >= 1 is scale-free.
    res = linprog(c=[1.0, 1.0, 1.0], A_eq=mat_scaled, b_eq=[0.0, 0.0],
                  bounds=[(1.0, None)] * 3, method="highs")
    if not res.success:
        raise KappaNotFound(f"no positive kappa for mu = {mu}")

    # Polish: project the LP point onto the exact null space of the system.
    # vh has 3 rows; rows whose singular value vanishes (or is missing, since
    # the matrix is 2x3) span the null space.
    _, svals, vh = np.linalg.svd(mat_scaled)
    cutoff = 1e-12 * max(1.0, svals.max(initial=0.0))
    svals3 = np.concatenate([svals, np.zeros(3 - svals.size)])
    null_basis = vh[svals3 <= cutoff]
    kappa = null_basis.T @ (null_basis @ res.x) if null_basis.size else res.x
    kappa = np.asarray(kappa, dtype=float)
    kappa /= kappa.max()

    residual = abs(kappa[0] * mu[0] + kappa[1] * mu[1] - kappa[2] * np.conj(mu[2]))
    scale = max(1.0, float(np.max(np.abs(mu))))
    if np.any(kappa <= 0.0) or residual > tol * scale:
        raise KappaNotFound(
            f"search failed for mu = {mu} (residual {residual:.3e})")
    return kappa


def eval_F(z, params: SystemParams) -> np.ndarray:
    """Nonlinearity F(z); z has shape (3,) or (3, ...) for stacked fields."""
    z = np.asarray(z, dtype=complex)
    lam, mu = params.lam, params.mu
    out = np.empty_like(z)
    out[0] = lam[0] * np.abs(z[0]) * z[0] + mu[0] * np.conj(z[1]) * z[2]
    out[1] = lam[1] * np.abs(z[1]) * z[1] + mu[1] * np.conj(z[0]) * z[2]
    out[2] = lam[2] * np.abs(z[2]) * z[2] + mu[2] * z[0] * z[1]
    return out


def gauge_rotate(z, theta, params: SystemParams) -> np.ndarray:
    """Apply the gauge action z_j -> exp(i m_j theta) z_j.

    theta may be a scalar or an array broadcastable against z[0] (for
    spatially varying rotations such as quadratic phases).
    """
    z = np.asarray(z, dtype=complex)
    theta_arr = np.asarray(theta, dtype=float)
    phase = np.exp(1j * np.multiply.outer(params.m, theta_arr))
    if phase.ndim < z.ndim:
        phase = phase.reshape(phase.shape + (1,) * (z.ndim - phase.ndim))
    return phase * z


def nu_a(z, params: SystemParams):
    """Weighted amplitude nu_A(z) = sqrt(sum_j kappa_j |z_j|^2)."""
    z = np.asarray(z, dtype=complex)
    kappa = params.kappa.reshape((3,) + (1,) * (z.ndim - 1))
    return np.sqrt(np.sum(kappa * (z.real ** 2 + z.imag ** 2), axis=0))


def dissipation_pairing(z, params: SystemParams):
    """Weighted pairing <F(z), A z> together with nu_A(z).

    Under the compatibility condition the imaginary part collapses to
    sum_j kappa_j Im(lam_j) |z_j|^3; the real coupling contribution survives
    only in the real part.
    """
    z = np.asarray(z, dtype=complex)
    f = eval_F(z, params)
    kappa = params.kappa.reshape((3,) + (1,) * (z.ndim - 1))
    pairing = np.sum(kappa * f * np.conj(z), axis=0)
    return pairing, nu_a(z, params)


def dissipation_constants(params: SystemParams) -> DissipationConstants:
    """Constants of the sandwich -c_upper nu^3 <= Im <F,Az> <= -c_lower nu^3.

    c_lower = min_j(-Im lam_j) / sqrt(kappa1 + kappa2 + kappa3)
    c_upper = max_j(-Im lam_j) / sqrt(min_j kappa_j)

    Requires strict dissipativity; raises NotStrict otherwise.
    """
    if not params.strict or np.any(params.lam.imag >= 0.0):
        raise NotStrict("decay constants need Im lam_j < 0 for every j")
    rates = -params.lam.imag
    kappa = params.kappa
    c_lower = rates.min() / math.sqrt(float(kappa.sum()))
    c_upper = rates.max() / math.sqrt(float(kappa.min()))
    return DissipationConstants(
        c_lower=float(c_lower), c_upper=float(c_upper),
        kappa_min=float(kappa.min()), kappa_max=float(kappa.max()))
