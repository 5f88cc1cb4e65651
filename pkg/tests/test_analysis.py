"""Certificates, sweeps, and convergence fits."""
import numpy as np
import pytest

from torusdet import (EmptyTrajectory, FlowConfig, InsufficientDecay,
                      TorusModulus, cauchy_gap, convergence_fit, det_rate,
                      evolve, flat_metric, maximality_sweep, mode_metric,
                      monotonicity_certificate, random_metric, volume)
from torusdet.analysis import MaximalityViolation
from torusdet.flow import DiagnosticRow, Trajectory
from torusdet.spectral import RATE_COEFF

TAU_I = TorusModulus(0.0, 1.0)


def fake_trajectory(logdets, rates=None):
    rows = []
    for k, ld in enumerate(logdets):
        rows.append(DiagnosticRow(t=0.001 * k, dt=0.001, volume=1.0, r0=0.0,
                                  sup_resid=0.1, var_r=0.0,
                                  logdet_polyakov=ld,
                                  rate_formula=0.0 if rates is None else rates[k],
                                  rate_fd=None, gb_defect=0.0))
    return Trajectory(samples=rows, final=None, termination=None)


class TestMonotonicityCertificate:
    def test_flat_run_passes_with_zero_differences(self):
        # numerically flat start: logdet varies at the 1e-26 level, far below
        # double resolution, so every recorded difference is exactly zero
        m = mode_metric(32, TAU_I, (1, 0), 1e-13)
        traj = evolve(m, FlowConfig(t_max=2e-4, tol_stationary=1e-300))
        assert len(traj.samples) >= 3
        rep = monotonicity_certificate(traj, tol=1e-9)
        assert rep.passed
        assert rep.violations == []
        lds = {r.logdet_polyakov for r in traj.samples}
        assert len(lds) == 1

    def test_seeded_run_passes(self):
        m = random_metric(32, TAU_I, 7, 0.2, bandlimit=4)
        traj = evolve(m, FlowConfig(t_max=2.0, record_every=4))
        rep = monotonicity_certificate(traj, tol=1e-9)
        assert rep.passed
        assert rep.min_rate >= 0.0
        assert rep.samples == len(traj.samples)

    def test_detects_injected_decrease(self):
        traj = fake_trajectory([0.0, 0.1, 0.05, 0.2])
        rep = monotonicity_certificate(traj, tol=1e-9)
        assert not rep.passed
        assert len(rep.violations) == 1
        t, ld_a, ld_b, slack = rep.violations[0]
        assert (ld_a, ld_b) == (0.1, 0.05)
        assert slack < 0

    def test_detects_negative_rate(self):
        traj = fake_trajectory([0.0, 0.1, 0.2], rates=[0.0, -1e-3, 0.0])
        rep = monotonicity_certificate(traj, tol=1e-9)
        assert not rep.passed
        assert rep.min_rate == -1e-3

    def test_needs_two_samples(self):
        with pytest.raises(EmptyTrajectory):
            monotonicity_certificate(fake_trajectory([0.0]), tol=1e-9)


class TestCauchyGap:
    def test_flat_gap_vanishes(self):
        assert cauchy_gap(flat_metric(64, TAU_I, 1.0)) <= 1e-20

    def test_perturbative_value(self):
        n, eps = 64, 0.01
        m = mode_metric(n, TAU_I, (1, 0), eps)
        assert cauchy_gap(m) == pytest.approx(8 * np.pi**4 * eps**2, rel=2e-2)

    @pytest.mark.parametrize("seed", range(5))
    def test_definitional_identity_with_rate(self, seed):
        m = random_metric(32, TAU_I, seed, 0.3, bandlimit=4)
        assert det_rate(m) == pytest.approx(
            RATE_COEFF * cauchy_gap(m) * volume(m), rel=1e-10)

    @pytest.mark.parametrize("seed", range(5))
    def test_nonnegative(self, seed):
        m = random_metric(32, TorusModulus(0.5, 0.9), seed, 0.4, bandlimit=4)
        assert cauchy_gap(m) >= 0.0


class TestMaximalitySweep:
    def test_mode_10_quadratic_coefficient(self):
        rows, c = maximality_sweep((1, 0), [0.02, 0.04, 0.08, 0.16], TAU_I, 64, 1.0)
        assert c == pytest.approx(np.pi / 24, rel=0.02)
        assert all(r.delta_vs_flat < 0 for r in rows if r.eps != 0)

    def test_mode_11_quadratic_coefficient(self):
        rows, c = maximality_sweep((1, 1), [0.02, 0.04, 0.08, 0.16], TAU_I, 64, 1.0)
        assert c == pytest.approx(np.pi / 12, rel=0.02)

    def test_zero_amplitude_row_is_flat(self):
        rows, _ = maximality_sweep((1, 0), [0.0, 0.02, 0.04, 0.08], TAU_I, 32, 1.0)
        assert rows[0].delta_vs_flat == 0.0

    def test_random_direction_rows_all_negative(self):
        from torusdet import band_limited_field

        direction = band_limited_field(32, 3, 11)
        rows, c = maximality_sweep(direction, [0.05, 0.1, 0.2], TAU_I, 32, 1.0)
        assert all(r.delta_vs_flat < 0 for r in rows)
        assert c > 0

    def test_degenerate_direction_raises(self):
        with pytest.raises(MaximalityViolation):
            maximality_sweep(np.zeros((32, 32)), [0.1], TAU_I, 32, 1.0)


class TestConvergenceFit:
    def test_mode_10_rate(self):
        m = mode_metric(32, TAU_I, (1, 0), 0.3)
        traj = evolve(m, FlowConfig(t_max=2.0, record_every=4))
        rate, (t_a, t_b) = convergence_fit(traj)
        assert rate == pytest.approx(4 * np.pi**2, rel=0.05)
        assert t_a < t_b <= traj.final.t

    def test_mode_11_rate(self):
        m = mode_metric(32, TAU_I, (1, 1), 0.3)
        traj = evolve(m, FlowConfig(t_max=2.0, record_every=4))
        rate, _ = convergence_fit(traj)
        assert rate == pytest.approx(8 * np.pi**2, rel=0.05)

    def test_generic_start_decays_at_slowest_mode(self):
        m = random_metric(32, TAU_I, 5, 0.2, bandlimit=4)
        traj = evolve(m, FlowConfig(t_max=2.0, record_every=4))
        rate, _ = convergence_fit(traj)
        assert rate == pytest.approx(4 * np.pi**2, rel=0.05)

    def test_requires_decayed_trajectory(self):
        m = random_metric(32, TAU_I, 5, 0.2, bandlimit=4)
        traj = evolve(m, FlowConfig(t_max=1e-4, record_every=4))
        with pytest.raises(InsufficientDecay):
            convergence_fit(traj)
