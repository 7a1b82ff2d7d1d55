"""Regularized Monge-Kantorovich quantiles, ranks and depth for directional data on S^2."""
from .depth import (
    DepthReport,
    QuantileContour,
    ScaleCurve,
    SignCurve,
    directional_sign,
    estimate_pole,
    mk_depth,
    oracle_pole,
    quantile_contour,
    reference_contour,
    region_membership,
    scale_curve,
    sign_curve,
)
from .distributions import (
    RotInvariantLaw,
    SphericalSample,
    VonMisesFisher,
    closed_form_F,
    closed_form_Q,
    load_sample,
    sample_mixture,
    sample_uniform,
    sample_vmf,
)
from .exceptions import DomainError, NumericalError, SingularityError
from .geometry import exp_map, frechet_median, geodesic_distance, log_map, rodrigues_rotation
from .harmonics import HarmonicCoeffs, QuadratureGrid, analyze, eval_series, synthesize
from .maps import (
    EntropicMapContext,
    cost_derivatives,
    empirical_c_transform,
    g_eps_density,
    grad_u_ceps_closed_form,
    grad_u_eps_closed_form,
    hessian_u_eps,
    interpolate_potentials,
    map_F_eps,
    map_Q_eps,
)
from .solver import PotentialEstimate, SolverConfig, fit, sinkhorn_semidiscrete_oracle

__version__ = "0.1.0"
