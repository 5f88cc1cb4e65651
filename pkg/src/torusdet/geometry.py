"""Conformal metrics rho |dz|^2 on the torus C/(Z + tau Z) and their curvature.

Conventions fixed here and used everywhere else:

* The torus is parametrized by the unit square (x, y) in [0,1)^2 via
  z = x + tau y; all integrals carry the constant Jacobian Im(tau).
* Grids are n x n with axis 0 = y and axis 1 = x (a C-contiguous row has
  constant y, matching the snapshot file layout).
* u = log(rho) is the evolved field; the volume form is d(mu) = e^u Im(tau)
  dx dy and the scalar curvature is R = -e^{-u} Lap0 u, where Lap0 is the
  flat Laplacian of |dz|^2.  With these choices Gauss-Bonnet reads
  integral(R dmu) = 8 pi (1 - g), i.e. 0 here.
* Lap0 acts as the Fourier multiplier -lambda_{mk} with
  lambda_{mk} = (4 pi^2 / Im(tau)^2) |m tau - k|^2 on exp(2 pi i (m x + k y)).
"""
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
import scipy.fft as sfft

from .errors import GridError, NonFinite

GENUS = 1  # only genus-1 charts are implemented; kept for error messages


@dataclass(frozen=True)
class TorusModulus:
    """Point tau = re + i*im of the upper half-plane: the conformal class.

    Immutable by construction -- the conformal class (equivalently the
    b-period matrix, which for genus 1 is tau itself) is frozen along any
    flow run.
    """

    re: float
    im: float

    def __post_init__(self):
        if not (np.isfinite(self.re) and np.isfinite(self.im)):
            raise ValueError("tau must be finite")
        if self.im <= 0:
            raise ValueError(f"tau must lie in the upper half-plane (im={self.im})")

    @property
    def as_complex(self) -> complex:
        return complex(self.re, self.im)


def _check_grid(u: np.ndarray) -> np.ndarray:
    u = np.asarray(u, dtype=float)
    if u.ndim != 2 or u.shape[0] != u.shape[1]:
        raise GridError(f"expected a square grid, got shape {u.shape}")
    if u.shape[0] < 8:
        raise GridError(f"grid must be at least 8x8, got {u.shape[0]}")
    if not np.isfinite(u).all():
        raise NonFinite("grid contains non-finite values")
    return u


@dataclass(frozen=True)
class ConformalMetric:
    """Metric e^u |dz|^2 in the fixed conformal class tau.

    volume_target is the conserved volume the flow renormalizes to; it is
    part of the metric's identity so that comparisons at fixed volume are
    exact at the discrete level.
    """

    n: int
    tau: TorusModulus
    u: np.ndarray
    volume_target: float

    def __post_init__(self):
        if self.n < 8 or (self.n & (self.n - 1)) != 0:
            raise GridError(f"n must be a power of two >= 8, got {self.n}")
        u = _check_grid(self.u)
        if u.shape[0] != self.n:
            raise GridError(f"u has shape {u.shape}, expected ({self.n}, {self.n})")
        u = u.copy()
        u.setflags(write=False)
        object.__setattr__(self, "u", u)
        if not (np.isfinite(self.volume_target) and self.volume_target > 0):
            raise ValueError(f"volume_target must be positive, got {self.volume_target}")


@dataclass(frozen=True)
class CurvatureField:
    """Scalar curvature grid with its measure-weighted mean and the
    Gauss-Bonnet residual integral(R dmu) - 8 pi (1 - g)."""

    r: np.ndarray
    r0: float
    gb_defect: float


@lru_cache(maxsize=32)
def _symbol_cache(n: int, re: float, im: float):
    """(lambda grid, Hermitian column weights) for the rfft2 layout."""
    p, q = re, im
    ky = np.fft.fftfreq(n) * n          # axis 0: y-mode k
    kx = np.fft.rfftfreq(n) * n         # axis 1: x-mode m
    m = kx[np.newaxis, :]
    k = ky[:, np.newaxis]
    lam = (4 * np.pi**2 / q**2) * ((m * p - k) ** 2 + (m * q) ** 2)
    if n % 2 == 0:
        # x-Nyquist column: the +-n/2 mode pair is aliased; average the two
        # symbol values so the multiplier stays real-symmetric.
        mn = n / 2.0
        lam[:, -1] = (4 * np.pi**2 / q**2) * ((mn * p) ** 2 + ky**2 + (mn * q) ** 2)
    lam.setflags(write=False)
    colw = np.full(n // 2 + 1, 2.0)
    colw[0] = 1.0
    if n % 2 == 0:
        colw[-1] = 1.0
    colw.setflags(write=False)
    return lam, colw


def laplacian_symbol(n: int, tau: TorusModulus) -> np.ndarray:
    """Multiplier lambda >= 0 of -Lap0 in the rfft2 layout (read-only)."""
    return _symbol_cache(n, tau.re, tau.im)[0]


def energy_weights(n: int) -> np.ndarray:
    """Mode-count weights for quadratic sums over the rfft2 half-spectrum."""
    return _symbol_cache(n, 0.0, 1.0)[1]


def collocation_grid(n: int):
    """(X, Y) coordinate arrays of the n x n grid (axis 0 = y, axis 1 = x)."""
    s = np.arange(n) / n
    return np.meshgrid(s, s, indexing="xy")


def flat_laplacian(u: np.ndarray, tau: TorusModulus) -> np.ndarray:
    """Lap0 u: flat Laplacian of |dz|^2 applied spectrally.

    The output has exactly zero grid mean (the zero mode is annihilated by
    the symbol, not by subtraction).
    """
    u = _check_grid(u)
    lam = laplacian_symbol(u.shape[0], tau)
    return -sfft.irfft2(lam * sfft.rfft2(u), s=u.shape)


def scalar_curvature(m: ConformalMetric) -> CurvatureField:
    """R = -e^{-u} Lap0 u, with quadrature mean and Gauss-Bonnet residual."""
    lam = laplacian_symbol(m.n, m.tau)
    L = sfft.irfft2(lam * sfft.rfft2(m.u), s=m.u.shape)  # -Lap0 u
    r = np.exp(-m.u) * L
    cell = m.tau.im / m.n**2
    s_eu = float(np.sum(np.exp(m.u)))
    total = cell * float(L.sum())      # integral(R dmu); R e^u == L pointwise
    r0 = total / (cell * s_eu)
    return CurvatureField(r=r, r0=r0, gb_defect=total)


def volume(m: ConformalMetric) -> float:
    """V = Im(tau) * mean(e^u): rectangle rule, spectrally accurate."""
    return m.tau.im / m.n**2 * float(np.sum(np.exp(m.u)))


def mean_curvature(m: ConformalMetric) -> float:
    """Measure-weighted mean of R; vanishes on the torus by Gauss-Bonnet."""
    return scalar_curvature(m).r0


def normalize_volume(m: ConformalMetric) -> ConformalMetric:
    """Shift u by a constant so the volume equals volume_target exactly."""
    shift = np.log(m.volume_target / volume(m))
    if shift == 0.0:
        return m
    return ConformalMetric(m.n, m.tau, m.u + shift, m.volume_target)


# ---------------------------------------------------------------------------
# field and metric constructors

def mode_field(n: int, mode) -> np.ndarray:
    """cos(2 pi (m x + k y)) sampled on the grid, unit sup-norm."""
    mx, ky = mode
    X, Y = collocation_grid(n)
    return np.cos(2 * np.pi * (mx * X + ky * Y))


def band_limited_field(n: int, bandlimit: int, seed: int) -> np.ndarray:
    """Random real field with modes (m, k) != 0, |m|, |k| <= bandlimit.

    Coefficients are drawn from numpy's PCG64 generator in a fixed mode
    order that does not depend on n, so the same (seed, bandlimit) names the
    same function on every grid that resolves it.  Unnormalized.
    """
    if bandlimit < 1:
        raise ValueError("bandlimit must be >= 1")
    if bandlimit >= n // 2:
        raise GridError(f"bandlimit {bandlimit} unresolved on an n={n} grid")
    rng = np.random.default_rng(seed)
    c = np.zeros((n, n), dtype=complex)
    for m in range(0, bandlimit + 1):
        for k in range(-bandlimit, bandlimit + 1):
            if m == 0 and k <= 0:
                continue  # one representative per conjugate pair
            re, im = rng.uniform(-1.0, 1.0, 2)
            c[k % n, m % n] += 0.5 * (re + 1j * im)
            c[(-k) % n, (-m) % n] += 0.5 * (re - 1j * im)
    return np.fft.ifft2(c).real * n**2


def metric_from_field(field_grid: np.ndarray, tau: TorusModulus, amplitude: float,
                      volume_target: float = 1.0, normalize: bool = True) -> ConformalMetric:
    """Metric with u = amplitude * field / sup|field|, volume-normalized."""
    field_grid = _check_grid(field_grid)
    n = field_grid.shape[0]
    sup = float(np.max(np.abs(field_grid)))
    u = field_grid * (amplitude / sup) if sup > 0 else np.zeros_like(field_grid)
    m = ConformalMetric(n, tau, u, volume_target)
    return normalize_volume(m) if normalize else m


def flat_metric(n: int, tau: TorusModulus, volume_target: float = 1.0) -> ConformalMetric:
    """Constant-factor flat metric scaled to volume_target."""
    u = np.full((n, n), np.log(volume_target / tau.im))
    return ConformalMetric(n, tau, u, volume_target)


def mode_metric(n: int, tau: TorusModulus, mode, amplitude: float,
                volume_target: float = 1.0) -> ConformalMetric:
    return metric_from_field(mode_field(n, mode), tau, amplitude, volume_target)


def random_metric(n: int, tau: TorusModulus, seed: int, amplitude: float,
                  bandlimit: int | None = None, volume_target: float = 1.0) -> ConformalMetric:
    """Seeded band-limited random metric (default bandlimit n // 8)."""
    bl = n // 8 if bandlimit is None else bandlimit
    return metric_from_field(band_limited_field(n, bl, seed), tau, amplitude,
                             volume_target)
