"""Continuously tempered MCMC toolkit.

Joint and Gibbs continuous-tempering HMC, simulated tempering, annealed
importance sampling, normalizing-constant and expectation estimators, base
density fitting, and a benchmark harness with exactly enumerable
Boltzmann-machine relaxation targets.
"""

from ._kernels import BACKEND, COMPILED
from .basefit import (
    LocalApprox,
    MixtureApprox,
    bootstrap_refit,
    fit_local_approxes,
    fit_relaxation_base,
    meanfield_bm,
    moment_matched_base,
)
from .errors import (
    CtmcError,
    DegenerateWeightsError,
    DimensionError,
    DivergenceError,
    DomainError,
    EmptyTraceError,
    InitializationError,
    NumericalError,
    SizeLimitError,
    UsageError,
)
from .estimators import (
    EstimateReport,
    LogAccumulator,
    MarginalBoundReport,
    Quadrature1DOracle,
    StLogZ,
    ais_expectation,
    ais_log_Z,
    beta_marginal_rb,
    check_marginal_bounds,
    compute_report,
    compute_st_report,
    ct_expectation,
    ct_log_Z,
    ct_moments,
    mcse_batch_means,
    st_expectation,
    st_log_Z,
    st_moments,
)
from .integrators import SeparableSystem, leapfrog
from .models import (
    BMOracle,
    BoltzmannMachine,
    CustomPotential,
    GaussianDensity,
    GaussianMixtureModel,
    RelaxationModel,
    bm_exhaustive_oracle,
    dump_model,
    generate_bm_params,
    load_model,
    model_from_dict,
    relaxation_from_bm,
    relaxation_gradient,
    relaxation_potential,
    relaxation_true_moments,
)
from .samplers import (
    ChainTrace,
    HmcConfig,
    TemperatureSchedule,
    adapted_weights,
    ais_batch,
    ais_run,
    gibbs_ct_chain,
    hmc_chain,
    joint_ct_chain,
    linear_schedule,
    simulated_tempering_chain,
)
from .tempering import (
    ExtendedState,
    LogisticControlMap,
    TemperedSystem,
    beta,
    beta_grad,
    delta,
    extended_gradients,
    extended_hamiltonian,
    joint_log_density_x_beta,
    log_beta_grad,
    log_w0,
    log_w1,
    sample_beta_conditional,
    system_from_dict,
    truncated_exponential,
)

__version__ = "0.1.0"
