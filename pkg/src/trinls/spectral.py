"""Spectral grid, transform convention, and the propagator operator family.

Everything lives on a periodic box [-L/2, L/2)^2 sampled on an n x n grid
(n a power of two), used as a surrogate for the plane.  The continuous
transform convention is

    fhat(xi) = (1/2pi) integral exp(-i y.xi) f(y) dy,

which is unitary on L^2(R^2) and maps exp(-|x|^2/2) to itself.  The discrete
forward transform is the Riemann sum of that integral over the grid, evaluated
at the lattice frequencies xi_k = 2 pi k / L; the shifted grid origin -L/2
contributes the (-1)^(k1+k2) checkerboard phase handled below.

Operators:

* free_propagate: U(t) = exp(i t Delta / (2 m_j)) per component, a diagonal
  frequency multiplier exp(-i t |xi|^2 / (2 m_j)).
* apply_M: multiplication by the quadratic gauge phase exp(i m_j |x|^2 / (2t)).
* apply_G: frequency rescaling (G phi)_j(xi) = -i m_j phihat_j(m_j xi),
  realized by band-limited evaluation of the semidiscrete transform.
* apply_D: dilation (D(t) g)(x) = g(x/t) / t, band-limited resampling from the
  frequency lattice onto the spatial grid.
* apply_W: G M(t) G^{-1}, the frequency-side residue of the gauge phase.

Off-grid evaluations truncate to zero outside the fundamental frequency band
instead of wrapping: the semidiscrete transform is periodic, but the functions
it represents decay, so wrapped values would be spurious order-one numbers
where the truth is spectrally small.
"""

from __future__ import annotations

import os
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
import scipy.fft as sfft

from .model import SystemParams

__all__ = [
    "Grid2D",
    "FieldState",
    "ZeroTime",
    "ScalingOutOfRange",
    "transform",
    "free_propagate",
    "propagate_free",
    "pullback",
    "apply_M",
    "apply_G",
    "apply_D",
    "apply_W",
    "frac_laplacian",
    "weighted_norm",
    "l2_norm",
    "compute_alpha",
]

BAND_TOL = 1e-6  # spectral-mass fraction allowed to fall outside the band


class ZeroTime(ValueError):
    """Gauge phase |x|^2/(2t) undefined at t = 0."""


class ScalingOutOfRange(ValueError):
    """Frequency rescaling would truncate a non-negligible part of the data."""


def _workers() -> int:
    try:
        return max(1, int(os.environ.get("TRINLS_THREADS", "1")))
    except ValueError:
        return 1


@dataclass(frozen=True)
class Grid2D:
    """Square periodic grid: n points per axis (power of two) on side length L."""

    n: int
    length: float

    def __post_init__(self) -> None:
        n = self.n
        if n < 16 or (n & (n - 1)) != 0:
            raise ValueError(f"n must be a power of two >= 16, got {n}")
        if not self.length > 0.0:
            raise ValueError(f"length must be positive, got {self.length}")

    @property
    def dx(self) -> float:
        return self.length / self.n

    @property
    def dxi(self) -> float:
        return 2.0 * np.pi / self.length

    @property
    def xi_max(self) -> float:
        """Half-width of the representable frequency band, pi / dx."""
        return np.pi * self.n / self.length

    def x_axis(self) -> np.ndarray:
        return _x_axis(self.n, self.length)

    def xi_axis(self) -> np.ndarray:
        return _xi_axis(self.n, self.length)

    def r2(self) -> np.ndarray:
        return _r2(self.n, self.length)

    def xi2(self) -> np.ndarray:
        return _xi2(self.n, self.length)


@lru_cache(maxsize=32)
def _x_axis(n: int, length: float) -> np.ndarray:
    x = -0.5 * length + (length / n) * np.arange(n)
    x.setflags(write=False)
    return x


@lru_cache(maxsize=32)
def _xi_axis(n: int, length: float) -> np.ndarray:
    xi = 2.0 * np.pi * sfft.fftfreq(n, d=length / n)
    xi.setflags(write=False)
    return xi


@lru_cache(maxsize=32)
def _r2(n: int, length: float) -> np.ndarray:
    x = _x_axis(n, length)
    r2 = x[:, None] ** 2 + x[None, :] ** 2
    r2.setflags(write=False)
    return r2


@lru_cache(maxsize=32)
def _xi2(n: int, length: float) -> np.ndarray:
    xi = _xi_axis(n, length)
    xi2 = xi[:, None] ** 2 + xi[None, :] ** 2
    xi2.setflags(write=False)
    return xi2


@lru_cache(maxsize=32)
def _checkerboard(n: int) -> np.ndarray:
    s = np.where(np.arange(n) % 2 == 0, 1.0, -1.0)
    grid = s[:, None] * s[None, :]
    grid.setflags(write=False)
    return grid


@dataclass
class FieldState:
    """Three complex fields on a grid at one instant.

    u has shape (3, n, n); component j carries mass m_j.
    """

    u: np.ndarray
    t: float
    grid: Grid2D

    def __post_init__(self) -> None:
        u = np.asarray(self.u, dtype=complex)
        if u.shape != (3, self.grid.n, self.grid.n):
            raise ValueError(
                f"u must have shape (3, {self.grid.n}, {self.grid.n}), "
                f"got {u.shape}")
        self.u = u

    def copy(self) -> "FieldState":
        return FieldState(self.u.copy(), self.t, self.grid)


def transform(f, grid: Grid2D, direction: str = "forward") -> np.ndarray:
    """Discrete version of the unitary 1/(2pi)-normalized transform.

    Acts on the trailing two axes; leading axes (components) pass through.
    forward:  values of fhat on the fftfreq lattice xi_k = 2 pi k / L.
    inverse:  exact inverse of forward.
    """
    f = np.asarray(f, dtype=complex)
    sign = _checkerboard(grid.n)
    if direction == "forward":
        scale = grid.dx ** 2 / (2.0 * np.pi)
        return scale * (sign * sfft.fft2(f, axes=(-2, -1), workers=_workers()))
    if direction == "inverse":
        scale = grid.dxi ** 2 * grid.n ** 2 / (2.0 * np.pi)
        return scale * sfft.ifft2(sign * f, axes=(-2, -1), workers=_workers())
    raise ValueError(f"direction must be 'forward' or 'inverse', got {direction!r}")


_MULT_CACHE: dict = {}


def _free_multiplier(grid: Grid2D, params: SystemParams, dt: float) -> np.ndarray:
    key = (grid.n, grid.length, tuple(params.m), dt)
    mult = _MULT_CACHE.get(key)
    if mult is None:
        xi2 = grid.xi2()
        mult = np.empty((3, grid.n, grid.n), dtype=complex)
        for j in range(3):
            mult[j] = np.exp(xi2 * (-0.5j * dt / params.m[j]))
        mult.setflags(write=False)
        if len(_MULT_CACHE) > 64:
            _MULT_CACHE.clear()
        _MULT_CACHE[key] = mult
    return mult


def propagate_free(u: np.ndarray, grid: Grid2D, params: SystemParams,
                   dt: float) -> np.ndarray:
    """Apply the free flow U(dt) to a (3, n, n) array of components."""
    if dt == 0.0:
        return np.array(u, dtype=complex)
    mult = _free_multiplier(grid, params, dt)
    uhat = sfft.fft2(u, axes=(-2, -1), workers=_workers())
    uhat *= mult
    return sfft.ifft2(uhat, axes=(-2, -1), workers=_workers())


def free_propagate(state: FieldState, params: SystemParams,
                   dt: float) -> FieldState:
    """Advance a state by the free flow; the clock moves with it."""
    return FieldState(propagate_free(state.u, state.grid, params, dt),
                      state.t + dt, state.grid)


def pullback(state: FieldState, params: SystemParams) -> np.ndarray:
    """U(-t) u(t): the free-flow-removed profile of the current state."""
    return propagate_free(state.u, state.grid, params, -state.t)


def apply_M(u, grid: Grid2D, params: SystemParams, t: float,
            sign: int = +1) -> np.ndarray:
    """Multiply component j by exp(sign * i m_j |x|^2 / (2 t))."""
    if t == 0.0:
        raise ZeroTime("gauge phase |x|^2/(2t) undefined at t = 0")
    u = np.asarray(u, dtype=complex)
    r2 = grid.r2()
    out = np.empty_like(u)
    for j in range(3):
        out[j] = u[j] * np.exp((0.5j * sign * params.m[j] / t) * r2)
    return out


def _nudft_axes(f: np.ndarray, grid: Grid2D, targets1: np.ndarray,
                targets2: np.ndarray | None = None) -> np.ndarray:
    """Semidiscrete forward transform of grid samples at arbitrary frequencies.

    Returns (dx^2 / 2pi) sum_m f(x_m) exp(-i x_m . eta) on the tensor lattice
    targets1 x targets2, computed as two dense matrix products per field.
    Targets beyond the representable band are truncated to zero.
    """
    if targets2 is None:
        targets2 = targets1
    x = grid.x_axis()
    band = grid.xi_max * (1.0 + 1e-12)
    scale = grid.dx / np.sqrt(2.0 * np.pi)
    a1 = np.exp(-1j * np.outer(targets1, x)) * scale
    a2 = np.exp(-1j * np.outer(targets2, x)) * scale
    a1[np.abs(targets1) > band] = 0.0
    a2[np.abs(targets2) > band] = 0.0
    if f.ndim == 2:
        return a1 @ f @ a2.T
    flat = f.reshape(-1, f.shape[-2], f.shape[-1])
    out = np.stack([a1 @ g @ a2.T for g in flat])
    return out.reshape(f.shape[:-2] + (targets1.size, targets2.size))


def _component_l2sq(u: np.ndarray, weight: float) -> np.ndarray:
    return np.sum(u.real ** 2 + u.imag ** 2, axis=(-2, -1)) * weight


def apply_G(u, grid: Grid2D, params: SystemParams,
            direction: str = "forward", check_band: bool = True,
            band_tol: float = BAND_TOL) -> np.ndarray:
    """Frequency rescaling (G phi)_j(xi) = -i m_j phihat_j(m_j xi).

    forward: physical-grid components -> values on the frequency lattice.
    inverse: frequency-lattice components -> physical-grid components,
             phihat_j(xi) = (i / m_j) psi_j(xi / m_j).

    Rescaled frequencies that leave the representable band are truncated to
    zero; if the truncated spectral mass exceeds band_tol of a component's
    total, the data cannot be represented and ScalingOutOfRange is raised.
    The default tolerance is factorization-grade; long-horizon diagnostics
    pass a looser budget (see evolve.DIAG_BAND_TOL).
    """
    u = np.asarray(u, dtype=complex)
    if u.shape[0] != 3:
        raise ValueError(f"expected a (3, n, n) component stack, got {u.shape}")
    xi = grid.xi_axis()
    out = np.empty_like(u)

    if direction == "forward":
        for j in range(3):
            m = params.m[j]
            out[j] = (-1j * m) * _nudft_axes(u[j], grid, m * xi)
    elif direction == "inverse":
        u_phys = transform(u, grid, "inverse")
        for j in range(3):
            m = params.m[j]
            hat = (1j / m) * _nudft_axes(u_phys[j], grid, xi / m)
            out[j] = transform(hat, grid, "inverse")
    else:
        raise ValueError(f"direction must be 'forward' or 'inverse', got {direction!r}")

    if check_band:
        # The maps above are isometric on the band they keep, so any norm
        # defect measures exactly the truncated spectral mass.
        before = _component_l2sq(u, grid.dx ** 2 if direction == "forward"
                                 else grid.dxi ** 2)
        after = _component_l2sq(out, grid.dxi ** 2 if direction == "forward"
                                else grid.dx ** 2)
        for j in range(3):
            if before[j] > 0.0:
                loss = (before[j] - after[j]) / before[j]
                if loss > band_tol:
                    raise ScalingOutOfRange(
                        f"component {j}: rescaling by m = {params.m[j]} "
                        f"truncates {loss:.2e} of the spectral mass")
    return out


def apply_D(g, grid: Grid2D, t: float) -> np.ndarray:
    """Dilation (D(t) g)(x) = g(x / t) / t.

    g holds samples on the frequency lattice (the natural habitat of the
    factorization this participates in); the result lives on the spatial grid.
    Band-limited interpolation, truncating targets outside the band.
    """
    if t == 0.0:
        raise ZeroTime("dilation undefined at t = 0")
    g = np.asarray(g, dtype=complex)
    g_phys = transform(g, grid, "inverse")
    targets = grid.x_axis() / t
    return _nudft_axes(g_phys, grid, targets) / t


def apply_W(psi, grid: Grid2D, params: SystemParams, t: float) -> np.ndarray:
    """W(t) = G M(t) G^{-1} acting on frequency-lattice components; t >= 1."""
    if t < 1.0:
        raise ValueError(f"W(t) is used for t >= 1, got t = {t}")
    phys = apply_G(psi, grid, params, direction="inverse")
    phys = apply_M(phys, grid, params, t)
    return apply_G(phys, grid, params, direction="forward")


def frac_laplacian(u, grid: Grid2D, s: float) -> np.ndarray:
    """(-Delta)^(s/2): the |xi|^s frequency multiplier."""
    u = np.asarray(u, dtype=complex)
    mult = grid.xi2() ** (0.5 * s)
    uhat = sfft.fft2(u, axes=(-2, -1), workers=_workers())
    uhat *= mult
    return sfft.ifft2(uhat, axes=(-2, -1), workers=_workers())


def weighted_norm(u, grid: Grid2D, which: str, s: float) -> float:
    """Weighted L^2 norms over a component stack (l^2 across components).

    which = "hs0": smoothness norm, multiplier (1 + |xi|^2)^(s/2) in frequency.
    which = "h0s": decay norm, weight (1 + |x|^2)^(s/2) in space.
    """
    u = np.asarray(u, dtype=complex)
    if which == "hs0":
        uhat = transform(u, grid, "forward")
        w = (1.0 + grid.xi2()) ** s
        total = np.sum(w * (uhat.real ** 2 + uhat.imag ** 2)) * grid.dxi ** 2
    elif which == "h0s":
        w = (1.0 + grid.r2()) ** s
        total = np.sum(w * (u.real ** 2 + u.imag ** 2)) * grid.dx ** 2
    else:
        raise ValueError(f"which must be 'hs0' or 'h0s', got {which!r}")
    return float(np.sqrt(total))


def l2_norm(u, grid: Grid2D) -> float:
    """Plain L^2 norm of a component stack (l^2 across components)."""
    u = np.asarray(u, dtype=complex)
    return float(np.sqrt(np.sum(u.real ** 2 + u.imag ** 2) * grid.dx ** 2))


def compute_alpha(state: FieldState, params: SystemParams,
                  profile: np.ndarray | None = None,
                  band_tol: float = BAND_TOL) -> np.ndarray:
    """Scaled asymptotic coordinate alpha(t, xi) = G(U(-t) u(t))(xi).

    Defined for t >= 1 (earlier times belong to the local phase of the flow).
    `profile` may pass a precomputed pullback U(-t)u to avoid recomputing it.
    band_tol forwards to apply_G: the pulled-back field of a long run slowly
    spreads past the box's folding radius and in-run diagnostics accept a
    larger representation defect than the factorization operators do.
    """
    if state.t < 1.0:
        raise ValueError(f"alpha is defined for t >= 1, got t = {state.t}")
    if profile is None:
        profile = pullback(state, params)
    return apply_G(profile, state.grid, params, direction="forward",
                   band_tol=band_tol)
