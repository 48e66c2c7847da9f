"""Numerical Finsler geometry for Randers metrics and the Fermat metrics of stationary spacetimes."""

from .errors import (
    ConfigError,
    DegenerateDirection,
    DomainError,
    FermatFinslerError,
    Inconsistent,
    NoDescent,
    NonPositiveConformal,
    NotAGeodesic,
    RandersConditionError,
)
from .fields import ChartDomain, OneFormField, RiemannianField, ScalarField, VectorField, field_partials, wrap
from .finsler import GenericFinsler, RandersMetric, chern_coefficients, eval_F, fundamental_tensor, geodesic_shoot, reversibility
from .variational import DiscreteCurve, connect, energy, energy_gradient, geodesic_residual, length, minimize, multistart_homotopy
from .fermat import (
    StationarySpacetime,
    conformal_normalize,
    fermat_metric,
    kaluza_klein_extend,
    lens_images,
    lift_to_lightlike,
    reconstruct_time,
    reversed_fermat_metric,
    timelike_fixed_energy,
)
from .causality import causal_cone, connectivity_crosscheck, delta_beta_condition, distance_map, growth_condition_check, omega_norm_sup
from .config import build_metric, build_spacetime, load_config, parse_config

__version__ = "0.1.0"
