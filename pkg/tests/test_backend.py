"""Compiled kernels against the NumPy fallback: same semantics."""
import numpy as np
import pytest

import torusdet._kernels_py as kpy
from torusdet import FlowConfig, TorusModulus, backend, evolve, random_metric

kcy = pytest.importorskip("torusdet._kernels")

TAU_I = TorusModulus(0.0, 1.0)


@pytest.fixture
def fields():
    rng = np.random.default_rng(42)
    n = 64
    u = rng.uniform(-0.4, 0.4, (n, n))
    eu = np.exp(u)
    emu = np.reciprocal(eu)
    L = rng.normal(0.0, 50.0, (n, n))
    return eu, emu, L


def test_rhs_stage_equivalence(fields):
    eu, emu, L = fields
    out_a = np.empty_like(L)
    out_b = np.empty_like(L)
    a = kcy.rhs_stage(eu, emu, L, out_a)
    b = kpy.rhs_stage(eu, emu, L, out_b)
    assert np.allclose(a, b, rtol=1e-13)
    # r0 (a sum) enters out, so agreement is to the ulp of r0, not bitwise
    assert np.allclose(out_a, out_b, rtol=0, atol=1e-14)


def test_rk4_combine_equivalence(fields):
    eu, emu, L = fields
    rng = np.random.default_rng(1)
    ks = [rng.normal(0, 10, eu.shape) for _ in range(4)]
    u = rng.uniform(-0.3, 0.3, eu.shape)
    out_a = np.empty_like(u)
    out_b = np.empty_like(u)
    kcy.rk4_combine(u, *ks, 1e-4, out_a)
    kpy.rk4_combine(u, *ks, 1e-4, out_b)
    assert np.allclose(out_a, out_b, rtol=0, atol=1e-17)


def test_apply_symbol_energy_equivalence():
    rng = np.random.default_rng(7)
    n = 64
    uh_a = (rng.normal(size=(n, n // 2 + 1))
            + 1j * rng.normal(size=(n, n // 2 + 1)))
    uh_b = uh_a.copy()
    lam = np.abs(rng.uniform(0.0, 1e4, (n, n // 2 + 1)))
    colw = np.full(n // 2 + 1, 2.0)
    colw[0] = colw[-1] = 1.0
    e_a = kcy.apply_symbol_energy(uh_a, lam, colw)
    e_b = kpy.apply_symbol_energy(uh_b, lam, colw)
    assert e_a == pytest.approx(e_b, rel=1e-13)
    assert np.array_equal(uh_a, uh_b)


def test_axpy_equivalence(fields):
    eu, emu, L = fields
    out_a = np.empty_like(L)
    out_b = np.empty_like(L)
    kcy.axpy(eu, L, 0.37, out_a)
    kpy.axpy(eu, L, 0.37, out_b)
    assert np.array_equal(out_a, out_b)


def test_backend_selection_roundtrip():
    original = backend.name
    try:
        assert backend.select("python") == "python"
        assert backend.kernels is kpy
        assert backend.select("auto") in ("cython", "python")
        with pytest.raises(ValueError):
            backend.select("fortran")
    finally:
        backend.select(original)


def test_full_run_agrees_across_backends():
    m = random_metric(32, TAU_I, 3, 0.2, bandlimit=4)
    cfg = FlowConfig(t_max=0.02, record_every=8)
    original = backend.name
    try:
        backend.select("cython")
        t_cy = evolve(m, cfg)
        backend.select("python")
        t_py = evolve(m, cfg)
    finally:
        backend.select(original)
    assert len(t_cy.samples) == len(t_py.samples)
    for a, b in zip(t_cy.samples, t_py.samples):
        assert a.t == b.t
        assert a.logdet_polyakov == pytest.approx(b.logdet_polyakov, abs=1e-13)
        assert a.sup_resid == pytest.approx(b.sup_resid, rel=1e-12)
        assert a.volume == pytest.approx(b.volume, rel=1e-14)
