"""Acceptance suite: one test per criterion, one printed line each.

Run with `pytest tests/test_acceptance.py -v -s` to see the PASS lines.

The shared corpus is 10 seeded random band-limited metrics at n = 64,
tau = i, sup-amplitude 0.2, unit volume, integrated to stationarity
(sup|R - R0| < 1e-8) with per-step diagnostics.  Bandlimit 4 keeps the
fastest decay scale resolvable by the CFL-limited sample spacing, so the
finite-difference bridge tolerance of 1e-3 is meaningful (resolvability
bound (2/3) lam_max^2 dt^2 ~ 2.5e-4).
"""
import time

import numpy as np
import pytest

from torusdet import (FlowConfig, Termination, TorusModulus, cauchy_gap,
                      convergence_fit, eigenvalues, flat_logdet, flat_metric,
                      logdet_zeta, maximality_sweep, mode_metric,
                      monotonicity_certificate, random_metric,
                      scalar_curvature, volume)

TAU = TorusModulus(0.0, 1.0)
N = 64
SEEDS = list(range(10))
AMPLITUDE = 0.2
BANDLIMIT = 4


def _report(name, ok, detail=""):
    print(f"\n[acceptance] {name}: {'PASS' if ok else 'FAIL'}  {detail}")
    return ok


@pytest.fixture(scope="module")
def corpus():
    cfg = FlowConfig(t_max=2.0, cfl_safety=0.25, tol_stationary=1e-8,
                     record_every=1, renormalize_volume=True)
    runs = []
    t0 = time.time()
    for seed in SEEDS:
        m = random_metric(N, TAU, seed, AMPLITUDE, bandlimit=BANDLIMIT,
                          volume_target=1.0)
        runs.append(evolve_cached(m, cfg))
    return runs, time.time() - t0


def evolve_cached(m, cfg):
    from torusdet import evolve

    return evolve(m, cfg)


def test_criterion_1_monotonicity(corpus):
    """log det' non-decreasing (slack 1e-9 per unit time), rate >= 0,
    for 10 seeded runs within the 5 minute budget."""
    runs, wall = corpus
    worst_slack = 0.0
    min_rate = np.inf
    for traj in runs:
        assert traj.termination is Termination.STATIONARY
        rep = monotonicity_certificate(traj, tol=1e-9)
        assert rep.passed, f"violations: {rep.violations[:3]}"
        min_rate = min(min_rate, rep.min_rate)
        lds = np.array([r.logdet_polyakov for r in traj.samples])
        ts = np.array([r.t for r in traj.samples])
        slack = np.min(np.diff(lds) + 1e-9 * np.diff(ts))
        worst_slack = min(worst_slack, float(slack))
    ok = min_rate >= 0.0 and worst_slack >= 0.0 and wall <= 300.0
    assert _report("1 monotonicity",
                   ok, f"min rate {min_rate:.2e}, worst slack {worst_slack:.2e}, "
                       f"wall {wall:.0f}s")


def test_criterion_2_rate_bridge(corpus):
    """Centered FD of log det' matches the variance rate within 1e-3
    relative wherever the rate exceeds 1e-6."""
    runs, _ = corpus
    worst = 0.0
    checked = 0
    for traj in runs:
        for row in traj.samples:
            if row.rate_fd is not None and row.rate_formula > 1e-6:
                worst = max(worst, abs(row.rate_fd - row.rate_formula)
                            / row.rate_formula)
                checked += 1
    ok = worst <= 1e-3 and checked > 1000
    assert _report("2 rate bridge", ok,
                   f"worst rel err {worst:.2e} over {checked} samples")


def test_criterion_3_flat_reference():
    """Truncated-zeta value of the flat torus against the closed form."""
    m = flat_metric(N, TAU, 1.0)
    zeta_val = logdet_zeta(m, 400)
    ref = flat_logdet(TAU, 1.0)
    err = abs(zeta_val - ref)
    ok = err <= 1e-2
    assert _report("3 flat reference", ok,
                   f"zeta {zeta_val:.6f} vs eta {ref:.6f} (err {err:.2e})")


def test_criterion_4_maximality():
    """Volume-normalized perturbations lower log det'; quadratic
    coefficients pi/24 and pi/12 within 2%."""
    eps = [0.02, 0.04, 0.08, 0.16]
    rows10, c10 = maximality_sweep((1, 0), eps, TAU, N, 1.0)
    rows11, c11 = maximality_sweep((1, 1), eps, TAU, N, 1.0)
    neg = all(r.delta_vs_flat < 0 for r in rows10 + rows11 if r.eps != 0)
    e10 = abs(c10 / (np.pi / 24) - 1)
    e11 = abs(c11 / (np.pi / 12) - 1)
    ok = neg and e10 <= 0.02 and e11 <= 0.02
    assert _report("4 maximality", ok,
                   f"c10={c10:.6f} ({e10:.1%} off pi/24), "
                   f"c11={c11:.6f} ({e11:.1%} off pi/12)")


def test_criterion_5_convergence_rate():
    """Single-mode decay at 4 pi^2 within 5%, stationary before t=2."""
    m = mode_metric(N, TAU, (1, 0), AMPLITUDE)
    from torusdet import evolve

    traj = evolve(m, FlowConfig(t_max=2.0, record_every=8))
    rate, window = convergence_fit(traj)
    err = abs(rate / (4 * np.pi**2) - 1)
    ok = (traj.termination is Termination.STATIONARY
          and traj.final.t < 2.0 and err <= 0.05)
    assert _report("5 convergence rate", ok,
                   f"rate {rate:.3f} vs {4 * np.pi**2:.3f} ({err:.2%}), "
                   f"stationary at t={traj.final.t:.3f}")


def test_criterion_6_structural_invariants(corpus):
    """Gauss-Bonnet on 100 random metrics, volume drift along runs, flat
    spectrum shells, modular invariance."""
    runs, _ = corpus
    worst_gb = 0.0
    for seed in range(100):
        tau = TAU if seed % 2 else TorusModulus(0.3, 1.7)
        m = random_metric(N, tau, seed, 0.3, bandlimit=8)
        curv = scalar_curvature(m)
        cell = m.tau.im / m.n**2
        abs_int = cell * float((np.abs(curv.r) * np.exp(m.u)).sum())
        worst_gb = max(worst_gb, abs(curv.gb_defect) / (1.0 + abs_int))

    drift = 0.0
    for traj in runs:
        drift = max(drift, max(abs(r.volume - 1.0) for r in traj.samples))

    s = eigenvalues(flat_metric(N, TAU, 1.0), 8)
    ref = 4 * np.pi**2 * np.array([0, 1, 1, 1, 1, 2, 2, 2, 2], dtype=float)
    spec_err = float(np.max(np.abs(s.eigenvalues - ref) / np.maximum(ref, 1.0)))

    t = TorusModulus(0.3, 1.7).as_complex
    vals = [flat_logdet(TorusModulus(z.real, z.imag), 1.0)
            for z in (t, t + 1, -1 / t)]
    mod_spread = max(vals) - min(vals)

    ok = (worst_gb <= 1e-8 and drift <= 1e-10 and spec_err <= 1e-8
          and mod_spread <= 1e-12)
    assert _report("6 structural invariants", ok,
                   f"GB {worst_gb:.2e}, drift {drift:.2e}, "
                   f"spectrum {spec_err:.2e}, modular {mod_spread:.2e}")


def test_criterion_7_equality_case(corpus):
    """At the converged metrics the curvature variance vanishes: the rate
    is zero exactly at constant curvature."""
    runs, _ = corpus
    worst = 0.0
    for traj in runs:
        m = traj.final.metric
        gap = cauchy_gap(m)
        curv = scalar_curvature(m)
        cell = m.tau.im / m.n**2
        r2 = cell * float((curv.r**2 * np.exp(m.u)).sum())
        worst = max(worst, gap / (1e-14 * (1.0 + r2)))
    ok = worst <= 1.0
    assert _report("7 equality case", ok,
                   f"worst gap / bound ratio {worst:.2e}")
