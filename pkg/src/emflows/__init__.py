"""EM-family gradient-flow iterations on latent-variable models, with exact
free-energy/Fisher instrumentation, functional-inequality trajectory checks
and non-asymptotic convergence-bound comparisons."""

from .algorithms import (
    AlgorithmConfig,
    IterateRecord,
    Trace,
    agd_step,
    em_step,
    evaluate_points,
    first_order_em_step,
    langevin_em_step_exact,
    langevin_em_step_particles,
    run,
    sample_gaussian_cloud,
)
from .bounds import (
    BoundCurve,
    agd_bound,
    constant_C,
    em_bound_basic,
    em_bound_sharp,
    first_order_bound,
    gap_to_distance,
    langevin_em_bound,
)
from .energy import (
    EnergyReport,
    energy_report,
    extended_fisher,
    free_energy_gap,
    particle_energy_estimates,
)
from .inequalities import (
    InequalityReport,
    bakry_emery_lambda,
    certified_lambda,
    check_descent,
    check_monotonicity,
    check_xlsi,
    check_xt2i,
    contraction_lambda,
    perturbation_lambda,
)
from .laws import (
    GaussianLaw,
    ParticleCloud,
    ProductPoint,
    distance_to_optimum,
    kl_gaussian,
    moments,
    product_distance,
    w2_empirical_1d,
    w2_gaussian,
)
from .models import (
    ClosedForms,
    HierarchicalModelConfig,
    ModelSpec,
    make_conjugate_1d,
    make_hierarchical,
    perturbed_model,
    pushforward_model,
)

__version__ = "0.1.0"
