"""Lyapunov exponents, exterior-power cocycles and cohomology bounds for torus diffeomorphisms."""

from .cocycle import (
    LyapunovSpectrum,
    OseledecFrame,
    cocycle_product,
    exterior_top_exponent,
    oseledec_frame,
    qr_spectrum,
    uniform_exponent,
)
from .errors import (
    ConsistencyError,
    DegenerateSplittingError,
    MetricDivergenceError,
    NumericError,
    ReorthonormalizationError,
    TorusLyapError,
    ValidationError,
)
from .forms import (
    KForm,
    alpha_sequence,
    cohomology_action,
    entropy_estimate,
    harmonic_projection,
    pullback_at,
    total_spectral_radius,
    volume_growth,
)
from .linalg import compound, induced_gram_power, operator_norm, spectral_radius
from .metric import growth_ratio_check, lp_estimate, metric_at
from .systems import (
    ShearFactor,
    TorusSystem,
    catalog_names,
    eval_inverse,
    eval_map,
    get_catalog,
    jacobian,
    load_system,
)
from .verify import RunParams, VerificationReport, run_checks

__version__ = "0.1.0"
