"""Spectral-gap experiments for the stochastically forced 2D Navier-Stokes vorticity equation."""

from .fourier import (
    SpectralGrid,
    VelocityField,
    VorticityField,
    biot_savart,
    bilinear,
    curl,
    from_physical,
    inner,
    nonlinearity,
    project,
    random_field,
    sobolev_norm,
    to_physical,
)
from .integrator import (
    DivergenceError,
    ForcingSpec,
    NoiseIncrement,
    SimParams,
    integrate,
    integrate_pairs,
    propagate_tangent,
    simulate,
    simulate_pair,
    step,
    validate_assumption1,
)
from .lyapunov import WeightedMetricSpec, composite_distance, d_eta_upper, lyapunov, rho_r_bracket
from .transport import EmpiricalMeasure, GroundMetric, max_diagonal_mass, w1_exact
from .contraction import (
    FiniteKernel,
    doeblin_rate,
    harris_alpha1,
    lemma311_radius,
    verify_assumption2,
    check_assumption3,
    verify_doeblin_contraction,
)
from .config import ConfigError, ExperimentConfig, load_config, parse_config

__version__ = "0.1.0"
