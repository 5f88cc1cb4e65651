"""Normalized Ricci flow on genus-1 conformal tori, with the
zeta-regularized determinant of the Laplace-Beltrami operator tracked and
certified along the flow."""

from . import backend
from .analysis import (MonotonicityReport, SweepRow, cauchy_gap,
                       convergence_fit, maximality_sweep,
                       monotonicity_certificate)
from .errors import (ConfigError, EmptyTrajectory, FitRejected, GridError,
                     InsufficientDecay, IterationFailure,
                     MaximalityViolation, NonFinite, StepUnderflow)
from .flow import (DiagnosticRow, FlowConfig, FlowState, Termination,
                   Trajectory, cfl_dt, evolve, rhs, stationarity_residual,
                   step)
from .geometry import (ConformalMetric, CurvatureField, TorusModulus,
                       band_limited_field, flat_laplacian, flat_metric,
                       mean_curvature, metric_from_field, mode_field,
                       mode_metric, normalize_volume, random_metric,
                       scalar_curvature, volume)
from .spectral import (DetReport, SpectrumResult, det_rate, det_report,
                       dirichlet_energy, eigenvalues, eigenvalues_dense,
                       flat_logdet, heat_trace, logdet_zeta, polyakov_logdet)

__version__ = "0.1.0"
