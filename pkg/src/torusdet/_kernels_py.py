"""NumPy fallback for the compiled kernels in ``_kernels.pyx``.

Same signatures, same semantics; only summation order differs (NumPy pairwise
vs compensated serial), so results agree to ~1e-13 relative, not bitwise.
"""
import numpy as np


def rhs_stage(eu, emu, L, out):
    s_eu = float(np.sum(eu))
    s_L = float(np.sum(L))
    r0 = s_L / s_eu
    r = emu * L
    d = r - r0
    var_sum = float(np.sum(d * d * eu))
    np.subtract(r0, r, out=out)
    sup_rhs = float(np.max(np.abs(out)))
    return r0, s_eu, float(np.min(eu)), sup_rhs, var_sum, s_L


def rk4_combine(u, k1, k2, k3, k4, dt, out):
    np.add(k2, k3, out=out)
    out *= 2.0
    out += k1
    out += k4
    out *= dt / 6.0
    out += u


def apply_symbol_energy(uhat, lam, colw):
    energy = float(np.sum(colw[np.newaxis, :] * lam * (uhat.real**2 + uhat.imag**2)))
    uhat *= lam
    return energy


def axpy(u, k, c, out):
    np.multiply(k, c, out=out)
    out += u
