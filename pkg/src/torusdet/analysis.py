"""Certificates and experiments built on top of flow trajectories.

* monotonicity_certificate: checks that log det' never decreases between
  recorded samples (up to an explicit, reported slack) and that the sampled
  rate stays nonnegative.
* maximality_sweep: one-parameter families of volume-normalized
  perturbations; every non-flat member must lower log det', quadratically
  near the flat point.
* convergence_fit: exponential decay rate of the curvature residual over
  the final decade of a converged run.
"""
from dataclasses import dataclass

import numpy as np

from .errors import EmptyTrajectory, InsufficientDecay, MaximalityViolation
from .geometry import (ConformalMetric, TorusModulus, metric_from_field,
                       mode_field, scalar_curvature)
from .spectral import flat_logdet, polyakov_logdet


@dataclass(frozen=True)
class MonotonicityReport:
    samples: int
    min_rate: float
    violations: list
    passed: bool


@dataclass(frozen=True)
class SweepRow:
    eps: float
    logdet: float
    delta_vs_flat: float


def monotonicity_certificate(traj, tol: float) -> MonotonicityReport:
    """Certify logdet_{k+1} >= logdet_k - tol (t_{k+1} - t_k) on a run.

    Violations are reported verbatim as (t_k, logdet_k, logdet_{k+1}, slack)
    with slack < 0; the certificate also requires every sampled rate to be
    >= -tol.  Discretization jitter is absorbed only by the explicit tol.
    """
    rows = [r for r in traj.samples if r.logdet_polyakov is not None]
    if len(rows) < 2:
        raise EmptyTrajectory("need at least 2 samples with logdet recorded")
    violations = []
    for a, b in zip(rows, rows[1:]):
        slack = b.logdet_polyakov - a.logdet_polyakov + tol * (b.t - a.t)
        if slack < 0:
            violations.append((a.t, a.logdet_polyakov, b.logdet_polyakov, slack))
    min_rate = min(r.rate_formula for r in rows)
    passed = not violations and min_rate >= -tol
    return MonotonicityReport(samples=len(rows), min_rate=min_rate,
                              violations=violations, passed=passed)


def cauchy_gap(m: ConformalMetric) -> float:
    """Variance of R under dmu/V, in the moment form
    (int R^2 dmu * int dmu - (int R dmu)^2) / V^2.  Nonnegative; zero only
    at constant curvature."""
    curv = scalar_curvature(m)
    cell = m.tau.im / m.n**2
    eu = np.exp(m.u)
    v = cell * float(eu.sum())
    m1 = cell * float((curv.r * eu).sum())
    m2 = cell * float((curv.r**2 * eu).sum())
    return (m2 * v - m1 * m1) / v**2


def maximality_sweep(direction, eps_list, tau: TorusModulus, n: int = 64,
                     volume_target: float = 1.0):
    """log det' along u = eps * direction, volume-normalized per row.

    direction is a mode pair (m, k) or a precomputed field grid; it is
    scaled to unit sup-norm so eps is the field amplitude.  Returns
    (rows, c) with c fitted from delta ~ -c eps^2 on the three smallest
    nonzero amplitudes.  Raises MaximalityViolation if any non-flat row
    fails to lower the determinant.
    """
    if isinstance(direction, tuple) or (
            hasattr(direction, "__len__") and len(direction) == 2
            and not hasattr(direction[0], "__len__")):
        base = mode_field(n, tuple(int(x) for x in direction))
    else:
        base = np.asarray(direction, dtype=float)
        if base.shape != (n, n):
            raise ValueError(f"direction grid has shape {base.shape}, expected ({n}, {n})")
    flat_ld = flat_logdet(tau, volume_target)
    rows = []
    for eps in eps_list:
        if eps == 0.0:
            rows.append(SweepRow(eps=0.0, logdet=flat_ld, delta_vs_flat=0.0))
            continue
        metric = metric_from_field(base, tau, eps, volume_target)
        ld = polyakov_logdet(metric)
        rows.append(SweepRow(eps=eps, logdet=ld, delta_vs_flat=ld - flat_ld))
    bad = [r for r in rows if r.eps != 0.0 and not r.delta_vs_flat < 0.0]
    if bad:
        raise MaximalityViolation(
            f"{len(bad)} row(s) did not lower log det', first at eps={bad[0].eps}")
    nz = sorted((r for r in rows if r.eps != 0.0), key=lambda r: abs(r.eps))[:3]
    if not nz:
        raise ValueError("eps_list needs at least one nonzero amplitude")
    e2 = np.array([r.eps**2 for r in nz])
    d = np.array([r.delta_vs_flat for r in nz])
    c = -float((d @ e2) / (e2 @ e2))
    return rows, c


def convergence_fit(traj):
    """Exponential decay rate of sup|R - R0| over the final decade.

    Least-squares slope of log(residual) against t on the samples whose
    residual lies within 10x of the final one.  Returns (rate, (t_a, t_b)).
    """
    rows = traj.samples
    if not rows or rows[-1].sup_resid >= 0.1:
        raise InsufficientDecay("trajectory never reached residual < 0.1")
    r_end = rows[-1].sup_resid
    start = len(rows)
    while start > 0 and rows[start - 1].sup_resid <= 10.0 * r_end:
        start -= 1
    window = rows[start:]
    if len(window) < 5:
        raise InsufficientDecay(f"only {len(window)} samples in the final decade")
    ts = np.array([r.t for r in window])
    ys = np.log([r.sup_resid for r in window])
    design = np.column_stack([np.ones_like(ts), ts])
    (_, slope), *_ = np.linalg.lstsq(design, ys, rcond=None)
    return -float(slope), (float(ts[0]), float(ts[-1]))
