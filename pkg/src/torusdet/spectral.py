"""log det' of the Laplace-Beltrami operator of a conformal torus metric.

Two independent routes:

* conformal-anomaly route (authoritative): the closed-form flat-torus value
  (Dedekind eta) plus the exact Dirichlet-energy anomaly of the conformal
  factor.  Spectrally exact up to quadrature of a smooth integrand.
* truncated-spectrum route (oracle): heat-trace zeta regularization from the
  K smallest eigenvalues of the weighted eigenproblem, with a fitted
  short-time expansion.  Advertised absolute accuracy 1e-2 at n=64, K=400.

The instantaneous flow rate of log det' is the curvature variance form
RATE_COEFF * integral (R - R0)^2 dmu, nonnegative by Cauchy-Schwarz and zero
exactly at constant curvature.
"""
from dataclasses import dataclass

import numpy as np
import scipy.fft as sfft
from scipy.sparse.linalg import LinearOperator, eigsh
from scipy.special import exp1

from .backend import kernels
from .errors import FitRejected, IterationFailure
from .geometry import (ConformalMetric, TorusModulus, energy_weights,
                       laplacian_symbol, volume)

EULER_GAMMA = 0.5772156649015328606
POLYAKOV_COEFF = 1.0 / (48.0 * np.pi)   # on Im(tau) * integral |grad u|^2 dx dy
RATE_COEFF = 1.0 / (24.0 * np.pi)       # on integral (R - R0)^2 dmu
ZERO_MODE_REL = 1e-9                    # zero-mode identification threshold
PAIR_RESID_REL = 1e-10                  # per-pair eigensolver contract


def log_abs_eta(tau: TorusModulus, tol: float = 1e-16) -> float:
    """log |eta(tau)| by the q-product, truncated below tol."""
    out = -np.pi * tau.im / 12.0
    q = np.exp(2j * np.pi * tau.as_complex)
    qk = q
    for _ in range(100000):
        if abs(qk) < tol:
            break
        out += np.log(abs(1.0 - qk))
        qk *= q
    return out


def flat_logdet(tau: TorusModulus, area: float) -> float:
    """log det' of the flat metric on C/(Z + tau Z) scaled to the given area.

    Closed form log[Im(tau)^2 |eta(tau)|^4] at the natural area Im(tau),
    moved to the requested area with the torus scaling law
    det'(c g) = c det'(g).
    """
    if not area > 0:
        raise ValueError("area must be positive")
    return np.log(tau.im) + 4.0 * log_abs_eta(tau) + np.log(area)


def dirichlet_energy(m: ConformalMetric) -> float:
    """Im(tau) * integral |grad u|^2 dx dy, via the spectral symbol."""
    lam = laplacian_symbol(m.n, m.tau)
    colw = energy_weights(m.n)
    uh = np.fft.rfft2(m.u)
    e = float(np.sum(colw[np.newaxis, :] * lam * (uh.real**2 + uh.imag**2)))
    return m.tau.im * e / m.n**4


def polyakov_logdet(m: ConformalMetric) -> float:
    """log det' via the integrated conformal anomaly against the flat value."""
    v = volume(m)
    return flat_logdet(m.tau, v) - POLYAKOV_COEFF * dirichlet_energy(m)


def det_rate(m: ConformalMetric) -> float:
    """Instantaneous d/dt log det' along the flow: the curvature variance
    form RATE_COEFF * integral (R - R0)^2 dmu.  Nonnegative always."""
    lam = laplacian_symbol(m.n, m.tau)
    L = sfft.irfft2(lam * sfft.rfft2(m.u), s=m.u.shape)
    eu = np.exp(m.u)
    emu = np.reciprocal(eu)
    out = np.empty_like(L)
    _, _, _, _, var_sum, _ = kernels.rhs_stage(eu, emu, L, out)
    cell = m.tau.im / m.n**2
    return RATE_COEFF * cell * var_sum


# ---------------------------------------------------------------------------
# spectrum of the weighted problem  -Lap0 phi = lambda e^u phi

@dataclass(frozen=True)
class SpectrumResult:
    """K+1 smallest eigenvalues (ascending, zero mode included)."""

    eigenvalues: np.ndarray
    count: int
    zero_mode_error: float

    def nonzero(self) -> np.ndarray:
        """Eigenvalues with the zero mode removed by the magnitude rule
        |lam| < 1e-9 lam_1 (never by position in the list)."""
        lams = self.eigenvalues
        lam1 = lams[np.abs(lams) >= ZERO_MODE_REL * np.abs(lams[-1])][0]
        return lams[np.abs(lams) >= ZERO_MODE_REL * lam1]


class _WeightedOperator:
    """Symmetrized operator A = e^{-u/2} (-Lap0) e^{-u/2} on the grid.

    Its kernel is spanned exactly by e^{u/2}, and the factorized structure
    makes S^{-1} Lap0^+ S^{-1} an inverse up to a rank-one defect, so the
    deflated PCG below converges in a couple of iterations.
    """

    def __init__(self, m: ConformalMetric):
        self.n = m.n
        self.shape2 = (m.n, m.n)
        self.lam = laplacian_symbol(m.n, m.tau)
        self.shalf = np.exp(-0.5 * m.u).ravel()
        w0 = np.exp(0.5 * m.u).ravel()
        self.w0 = w0 / np.linalg.norm(w0)
        ilam = np.zeros_like(self.lam)
        pos = self.lam > 0
        ilam[pos] = 1.0 / self.lam[pos]
        self.ilam = ilam
        self.dim = m.n * m.n

    def apply(self, v):
        g = (self.shalf * v).reshape(self.shape2)
        Lg = sfft.irfft2(self.lam * sfft.rfft2(g), s=self.shape2)
        return self.shalf * Lg.ravel()

    def _precondition(self, v):
        g = (v / self.shalf).reshape(self.shape2)
        Pg = sfft.irfft2(self.ilam * sfft.rfft2(g), s=self.shape2)
        return Pg.ravel() / self.shalf

    def apply_pinv(self, b, tol=1e-13, maxiter=200):
        """Pseudo-inverse on the orthogonal complement of the kernel."""
        w0 = self.w0
        b = b - w0 * (w0 @ b)
        bn = np.linalg.norm(b)
        x = np.zeros_like(b)
        if bn == 0.0:
            return x
        r = b.copy()
        z = self._precondition(r)
        z -= w0 * (w0 @ z)
        p = z.copy()
        rz = r @ z
        for _ in range(maxiter):
            Ap = self.apply(p)
            alpha = rz / (p @ Ap)
            x += alpha * p
            r -= alpha * Ap
            if np.linalg.norm(r) <= tol * bn:
                break
            z = self._precondition(r)
            z -= w0 * (w0 @ z)
            rz_new = r @ z
            p = z + (rz_new / rz) * p
            rz = rz_new
        else:
            raise IterationFailure("inner PCG solve did not converge")
        return x - w0 * (w0 @ x)


def eigenvalues(m: ConformalMetric, K: int, return_vectors: bool = False):
    """K+1 smallest eigenvalues of -Lap0 phi = lambda e^u phi.

    Solved matrix-free in the symmetrized form via shift-inverted Lanczos
    at sigma = 0; every returned pair is validated against the per-pair
    residual contract.  With return_vectors, also returns the symmetrized
    eigenvectors as columns (zero mode first).
    """
    if K < 1:
        raise ValueError("K must be >= 1")
    if K + 1 > m.n**2 // 4:
        raise ValueError(f"K+1={K + 1} exceeds the resolved budget n^2/4={m.n**2 // 4}")
    op = _WeightedOperator(m)
    A = LinearOperator((op.dim, op.dim), matvec=op.apply, dtype=float)
    Ainv = LinearOperator((op.dim, op.dim), matvec=op.apply_pinv, dtype=float)
    v0 = np.random.default_rng(0x5EED).standard_normal(op.dim)
    try:
        vals, vecs = eigsh(A, k=K, sigma=0.0, which="LM", OPinv=Ainv, v0=v0)
    except Exception as exc:
        raise IterationFailure(f"shift-inverted Lanczos failed: {exc}") from exc
    order = np.argsort(vals)
    vals = vals[order]
    vecs = vecs[:, order]
    if vals[0] <= 0:
        raise IterationFailure(f"nonpositive eigenvalue {vals[0]} in the bulk spectrum")
    resid = np.linalg.norm(
        np.column_stack([op.apply(vecs[:, i]) for i in range(K)]) - vecs * vals,
        axis=0,
    )
    worst = np.max(resid / vals)
    if worst > PAIR_RESID_REL:
        raise IterationFailure(f"worst pair residual {worst:.2e} > {PAIR_RESID_REL}")
    lam0 = float(op.w0 @ op.apply(op.w0))
    zero_err = abs(lam0)
    if zero_err > ZERO_MODE_REL * vals[0]:
        raise IterationFailure(f"zero mode error {zero_err:.2e} vs lam1={vals[0]:.2e}")
    spectrum = np.concatenate([[lam0], vals])
    spectrum.setflags(write=False)
    result = SpectrumResult(eigenvalues=spectrum, count=K, zero_mode_error=zero_err)
    if return_vectors:
        return result, np.column_stack([op.w0, vecs])
    return result


def eigenvalues_dense(m: ConformalMetric, K: int) -> SpectrumResult:
    """Dense-matrix route: an independent oracle for small grids."""
    import scipy.linalg as sla

    if m.n > 32:
        raise ValueError("dense route is intended for n <= 32")
    n = m.n
    lam_full = _full_symbol(n, m.tau)
    stencil = np.fft.ifft2(lam_full).real
    idx = np.arange(n)
    J, Kg = np.meshgrid(idx, idx, indexing="ij")
    rows = []
    for j in range(n):
        for k in range(n):
            rows.append(stencil[(J - j) % n, (Kg - k) % n].ravel())
    Lmat = np.asarray(rows)
    shalf = np.exp(-0.5 * m.u).ravel()
    A = shalf[:, None] * Lmat * shalf[None, :]
    A = 0.5 * (A + A.T)
    vals = sla.eigh(A, eigvals_only=True, subset_by_index=(0, K))
    vals = np.sort(vals)
    if vals[1] <= 0:
        raise IterationFailure(f"nonpositive eigenvalue {vals[1]} in the bulk spectrum")
    zero_err = abs(float(vals[0]))
    if zero_err > ZERO_MODE_REL * vals[1]:
        raise IterationFailure(f"zero mode error {zero_err:.2e} vs lam1={vals[1]:.2e}")
    vals.setflags(write=False)
    return SpectrumResult(eigenvalues=vals, count=K, zero_mode_error=zero_err)


def _full_symbol(n, tau):
    """Symbol of -Lap0 on the full FFT grid: the exact Hermitian extension
    of the reduced symbol, so the dense matrix is the matrix of the rfft2
    route, Nyquist conventions included."""
    red = laplacian_symbol(n, tau)
    lam = np.empty((n, n))
    nc = n // 2 + 1
    lam[:, :nc] = red
    mirror = (-np.arange(n)) % n
    for b in range(nc, n):
        lam[:, b] = red[mirror, n - b]
    return lam


# ---------------------------------------------------------------------------
# heat trace and the truncated zeta route

def heat_trace(s: SpectrumResult, t: float, V: float):
    """(sum_{k>=1} e^{-lam_k t}, Weyl tail bound (V/4 pi t) e^{-lam_K t})."""
    if not t > 0:
        raise ValueError("t must be positive")
    lams = s.nonzero()
    value = float(np.exp(-lams * t).sum())
    bound = V / (4 * np.pi * t) * np.exp(-lams[-1] * t)
    return value, bound


def logdet_zeta_from_spectrum(lams: np.ndarray, V: float, t0: float,
                              nfit: int = 33):
    """-zeta'(0) from a truncated positive spectrum via the Mellin split.

    For t >= t0 the truncated sum is used (integrated in closed form as
    exponential integrals); below t0 the trace is modeled by the fitted
    short-time expansion V/(4 pi t) + c0 + c1 t, fitted on [t0, 2 t0].
    Returns (value, c0, c1).
    """
    ts = np.linspace(t0, 2 * t0, nfit)
    theta = np.exp(-np.outer(ts, lams)).sum(axis=1)
    y = theta - V / (4 * np.pi * ts)
    design = np.column_stack([np.ones_like(ts), ts])
    (c0, c1), *_ = np.linalg.lstsq(design, y, rcond=None)
    value = (V / (4 * np.pi * t0)
             - c0 * (EULER_GAMMA + np.log(t0))
             - c1 * t0
             - float(exp1(lams * t0).sum()))
    return value, float(c0), float(c1)


def logdet_zeta(m: ConformalMetric, K: int, t0: float | None = None) -> float:
    """log det' from the K-term truncated heat trace.

    The default split point is t0 = 10 / lam_K (truncation error ~5e-5 in
    the trace at the split); an explicit t0 must satisfy lam_K t0 >= 20.
    Raises FitRejected when the fitted constant term strays from the exact
    torus value -1, signalling an under-resolved spectrum.
    """
    s = eigenvalues(m, K)
    lams = s.nonzero()
    lam_k = float(lams[-1])
    if t0 is None:
        t0 = 10.0 / lam_k
    elif lam_k * t0 < 20.0:
        raise ValueError(f"lam_K * t0 = {lam_k * t0:.2f} < 20: K too small "
                         f"for the chosen split point")
    v = volume(m)
    value, c0, _ = logdet_zeta_from_spectrum(lams, v, t0)
    if abs(c0 + 1.0) > 0.05:
        raise FitRejected(f"fitted heat-trace constant {c0:.4f} is not -1 "
                          f"within 0.05: spectrum under-resolved")
    return value


# ---------------------------------------------------------------------------
# report assembly

@dataclass(frozen=True)
class DetReport:
    """log det' by route, with its exact decomposition.

    logdet_polyakov == flat_reference + anomaly_term + log(volume/Im tau)
    holds to the bit; anomaly_term <= 0 always (Dirichlet energy), which is
    the fixed-volume maximality of the flat metric in functional form.
    """

    logdet_polyakov: float
    logdet_zeta: float | None
    flat_reference: float
    anomaly_term: float
    rate_formula: float
    volume: float


def det_report(m: ConformalMetric, K: int | None = None,
               with_zeta: bool = False) -> DetReport:
    v = volume(m)
    flat_ref = flat_logdet(m.tau, m.tau.im)
    anomaly = -POLYAKOV_COEFF * dirichlet_energy(m)
    # built exactly as the decomposition reads, so the identity is bitwise
    logdet = flat_ref + anomaly + np.log(v / m.tau.im)
    zeta_val = None
    if with_zeta:
        zeta_val = logdet_zeta(m, K if K is not None else 400)
    return DetReport(
        logdet_polyakov=logdet,
        logdet_zeta=zeta_val,
        flat_reference=flat_ref,
        anomaly_term=anomaly,
        rate_formula=det_rate(m),
        volume=v,
    )
