"""Run diagnostics: norms, the dissipation ledger, the profile residual.

Everything here is a pure function of a field state (or of recorded series);
the evolution loop calls these at its snapshot cadence and the CLI turns the
resulting series into CSV rows and summary checks.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .model import SystemParams, eval_F, nu_a
from .spectral import FieldState, Grid2D, compute_alpha, propagate_free, pullback, \
    apply_G, weighted_norm

# Column order of the per-snapshot series. Heavy-cadence columns (phi and
# friends, r_sup) hold NaN on light rows; consumers must tolerate that.
COLUMNS = (
    "t",
    "sup_u",
    "sup_u_t",
    "sup_u_tlogt",
    "ledger",
    "ledger_drift_rel",
    "phi",
    "logt_sqrtphi",
    "logt2_phi",
    "r_sup",
    "xnorm_ms0",
    "xnorm_m0s",
)


class InsufficientSamples(ValueError):
    """Rate fit asked for on a window too short or too sparse to mean anything."""


class DiagnosticsSeries:
    """Append-only column store for snapshot rows (missing entries are NaN)."""

    def __init__(self) -> None:
        self._rows: list[dict[str, float]] = []

    def append(self, **values: float) -> None:
        unknown = set(values) - set(COLUMNS)
        if unknown:
            raise KeyError(f"unknown diagnostic columns: {sorted(unknown)}")
        self._rows.append(values)

    def __len__(self) -> int:
        return len(self._rows)

    def column(self, name: str) -> np.ndarray:
        if name not in COLUMNS:
            raise KeyError(name)
        return np.array([row.get(name, np.nan) for row in self._rows], dtype=float)

    @property
    def t(self) -> np.ndarray:
        return self.column("t")

    def as_columns(self) -> dict[str, np.ndarray]:
        return {name: self.column(name) for name in COLUMNS}


def weighted_mass(u: np.ndarray, grid: Grid2D, params: SystemParams) -> float:
    """sum_j kappa_j ||u_j||_L2^2 on the grid."""
    per = np.sum(u.real ** 2 + u.imag ** 2, axis=(-2, -1)) * grid.dx ** 2
    return float(np.dot(params.kappa, per))


def cubic_rate(state: FieldState, params: SystemParams) -> float:
    """d/dt of the weighted mass: 2 sum_j kappa_j Im(lam_j) ||u_j||_L3^3."""
    mod = np.abs(state.u)
    cubes = np.sum(mod ** 3, axis=(-2, -1)) * state.grid.dx ** 2
    return 2.0 * float(np.dot(params.kappa * params.lam.imag, cubes))


def ledger(state: FieldState, accumulated_cubic: float,
           params: SystemParams) -> float:
    """Weighted mass minus the time-integrated cubic dissipation.

    Constant along exact solutions; its drift measures the combined
    time-discretization and quadrature error of a run.
    """
    return weighted_mass(state.u, state.grid, params) - accumulated_cubic


def sup_norm_metrics(state: FieldState) -> dict[str, float]:
    """Componentwise sup norm and its decay-compensated variants."""
    sup = float(np.abs(state.u).max())
    t = state.t
    return {
        "sup_u": sup,
        "sup_u_t": (1.0 + t) * sup,
        "sup_u_tlogt": (1.0 + t) * np.log(2.0 + t) * sup,
    }


def phi_of_alpha(alpha: np.ndarray, params: SystemParams) -> float:
    """Peak weighted amplitude squared of a profile: max over xi of nu_A^2."""
    w = params.kappa[:, None, None] if alpha.ndim == 3 else params.kappa
    nu2 = np.sum(w * (alpha.real ** 2 + alpha.imag ** 2), axis=0)
    return float(nu2.max())


def residual_r(state: FieldState, params: SystemParams,
               alpha: np.ndarray | None = None,
               profile: np.ndarray | None = None) -> tuple[np.ndarray, float]:
    """Closure defect of the profile equation at the state's time.

    r(t) = G(U(-t) F(u)) - F(alpha)/t on the frequency lattice. Along the
    conjectured asymptotics this decays faster than 1/t by the extra factor
    t^(-gamma/3); the series records its sup norm for rate checks.
    """
    if state.t < 1.0:
        raise ValueError(f"residual defined for t >= 1, got t = {state.t}")
    grid = state.grid
    if alpha is None:
        alpha = compute_alpha(state, params, profile=profile)
    fu = eval_F(state.u, params)
    fu_back = propagate_free(fu, grid, params, -state.t)
    lhs = apply_G(fu_back, grid, params, "forward", check_band=False)
    r = lhs - eval_F(alpha, params) / state.t
    return r, float(np.abs(r).max())


def boundary_fraction(u: np.ndarray, grid: Grid2D, params: SystemParams,
                      radius: float) -> float:
    """kappa-weighted mass fraction sitting at |x| > radius."""
    outside = grid.r2() > radius * radius
    dens = np.tensordot(params.kappa, u.real ** 2 + u.imag ** 2, axes=(0, 0))
    total = float(dens.sum())
    if total == 0.0:
        return 0.0
    return float(dens[outside].sum()) / total


def damped_x_norms(state: FieldState, params: SystemParams,
                   profile: np.ndarray | None = None) -> dict[str, float]:
    """The bootstrap norms with their allowed growth divided out.

    (1+t)^(-gamma/3) ||u||_{H^{s,0}} and the same damping applied to the
    localization norm of the pulled-back profile U(-t)u.
    """
    grid = state.grid
    if profile is None:
        profile = pullback(state, params)
    damp = (1.0 + state.t) ** (-params.gamma / 3.0)
    return {
        "xnorm_ms0": damp * weighted_norm(state.u, grid, "hs0", params.s),
        "xnorm_m0s": damp * weighted_norm(profile, grid, "h0s", params.s),
    }


def window_mask(t: np.ndarray, window: tuple[float, float]) -> np.ndarray:
    lo, hi = window
    return (t >= lo - 1e-12) & (t <= hi + 1e-12)


def monotone_fluctuation(t: np.ndarray, y: np.ndarray,
                         window: tuple[float, float]) -> float:
    """How far y rises above its running minimum on the window (relative).

    Zero for a non-increasing series; a value of f means some later point
    exceeds an earlier minimum by the factor 1 + f.
    """
    m = window_mask(t, window) & np.isfinite(y)
    vals = y[m]
    if vals.size < 2:
        raise InsufficientSamples(
            f"need at least 2 finite samples in window {window}, got {vals.size}")
    running = np.minimum.accumulate(vals)
    return float((vals / running).max() - 1.0)


def window_band_ratio(t: np.ndarray, y: np.ndarray,
                      window: tuple[float, float]) -> float:
    """max/min over the window; NaN-skipping, needs at least 3 samples."""
    m = window_mask(t, window) & np.isfinite(y)
    vals = y[m]
    if vals.size < 3:
        raise InsufficientSamples(
            f"need at least 3 finite samples in window {window}, got {vals.size}")
    lo = float(vals.min())
    if lo <= 0.0:
        return np.inf
    return float(vals.max()) / lo


@dataclass(frozen=True)
class DecayFit:
    """Least-squares decay exponents for sup|u| ~ (1+t)^-a (log(2+t))^-b."""

    a: float
    b: float
    c: float
    rms: float
    n_samples: int
    rms_plain: float      # refit with b forced to 0
    favored: str          # "t_logt" when the log factor clearly helps, else "t"

    def as_dict(self) -> dict:
        return {
            "a": self.a, "b": self.b, "c": self.c, "rms": self.rms,
            "n_samples": self.n_samples, "rms_plain": self.rms_plain,
            "favored": self.favored,
        }


def fit_decay_rate(t: np.ndarray, sup: np.ndarray,
                   window: tuple[float, float] | None = None,
                   min_samples: int = 20) -> DecayFit:
    """Fit log sup = c - a log(1+t) - b log(log(2+t)) over a window.

    The two basis decays are nearly collinear over short spans, so the window
    must cover at least a doubling of t starting no earlier than t = 2;
    anything less and the exponents are noise (InsufficientSamples).
    """
    t = np.asarray(t, dtype=float)
    sup = np.asarray(sup, dtype=float)
    if window is not None:
        m = window_mask(t, window)
        t, sup = t[m], sup[m]
    good = np.isfinite(sup) & (sup > 0.0)
    t, sup = t[good], sup[good]
    if t.size < min_samples:
        raise InsufficientSamples(
            f"{t.size} usable samples, need at least {min_samples}")
    t0, t1 = float(t.min()), float(t.max())
    if not (t0 >= 2.0 and t1 >= 2.0 * t0):
        raise InsufficientSamples(
            f"window [{t0:g}, {t1:g}] too short: need t0 >= 2 and t1 >= 2 t0")

    y = np.log(sup)
    cols = np.stack([-np.log1p(t), -np.log(np.log(2.0 + t)), np.ones_like(t)],
                    axis=1)
    coef, *_ = np.linalg.lstsq(cols, y, rcond=None)
    resid = y - cols @ coef
    rms = float(np.sqrt(np.mean(resid ** 2)))

    coef_p, *_ = np.linalg.lstsq(cols[:, [0, 2]], y, rcond=None)
    resid_p = y - cols[:, [0, 2]] @ coef_p
    rms_plain = float(np.sqrt(np.mean(resid_p ** 2)))

    # Prefer the plain power law unless the log factor buys a real improvement.
    favored = "t_logt" if (rms_plain > 1.2 * rms + 1e-15 and abs(coef[1]) > 0.1) \
        else "t"
    return DecayFit(a=float(coef[0]), b=float(coef[1]), c=float(coef[2]),
                    rms=rms, n_samples=int(t.size), rms_plain=rms_plain,
                    favored=favored)
