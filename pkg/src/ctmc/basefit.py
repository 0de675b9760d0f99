"""Base-density fitting: mean-field local approximations for Boltzmann
relaxations, their mixture combination, moment matching, and the iterative
bootstrap refit of (base, log zeta) from tempered chains.
"""

from dataclasses import dataclass

import numpy as np

from .errors import DegenerateWeightsError, UsageError
from .estimators import compute_report, logsumexp
from .models import LOG_2PI, GaussianDensity
from .samplers import joint_ct_chain
from .tempering import ExtendedState

MEANFIELD_DAMPING = 0.5
MEANFIELD_TOL = 1e-8
MEANFIELD_MAX_ITER = 10_000

#: local solutions closer than this in L-infinity norm count as duplicates
DEDUP_TOL = 1e-3

#: diagonal regularization added before factorizing fitted covariances
COV_REGULARIZATION = 1e-8


@dataclass(frozen=True)
class LocalApprox:
    """One local Gaussian approximation: N(mean, I) with its ELBO value."""

    mean: np.ndarray
    elbo: float


@dataclass(frozen=True)
class MixtureApprox:
    """ELBO-weighted mixture of local approximations.

    log_zeta is always logsumexp of the member ELBOs.
    """

    locals: tuple
    log_zeta: float

    @classmethod
    def from_locals(cls, locals_):
        locals_ = tuple(locals_)
        if not locals_:
            raise UsageError("mixture needs at least one local approximation")
        return cls(locals_, float(logsumexp([la.elbo for la in locals_])))


def meanfield_bm(bm, init_m, damping=MEANFIELD_DAMPING, tol=MEANFIELD_TOL,
                 max_iter=MEANFIELD_MAX_ITER):
    """Damped mean-field fixed point m_i <- tanh(sum_j W_ij m_j + b_i).

    Returns (magnetizations, converged). Non-convergence is reported through
    the flag, never raised.
    """
    m = np.asarray(init_m, dtype=np.float64).copy()
    if m.shape != (bm.n_units,):
        raise UsageError(f"init_m must have shape ({bm.n_units},)")
    if np.any(np.abs(m) >= 1.0):
        raise UsageError("init_m entries must lie in (-1, 1)")
    for _ in range(max_iter):
        target = np.tanh(bm.W @ m + bm.b)
        new = (1.0 - damping) * m + damping * target
        change = np.max(np.abs(new - m))
        m = new
        if change < tol:
            return m, True
    return m, False


def _elbo(relaxation, mean, noise):
    """Monte Carlo evidence lower bound of N(mean, I) against the relaxation."""
    pts = mean[None, :] + noise
    fn = getattr(relaxation, "potential_batch", None)
    if fn is not None:
        vals = fn(pts)
    else:
        vals = np.array([relaxation.potential(p) for p in pts])
    d = relaxation.dim
    return float(-vals.mean() + 0.5 * d * (1.0 + LOG_2PI))


def fit_local_approxes(relaxation, n_inits, mc_samples=1000, rng=None, seed=0):
    """Mean-field fits from uniform random inits, deduplicated into locals.

    Each converged magnetization m maps to a local N(Q'm, I); the ELBO is a
    seeded Monte Carlo estimate sharing one noise matrix across locals.
    Falls back to a single local at the origin if nothing converges.
    """
    if n_inits < 1:
        raise UsageError("n_inits must be at least 1")
    rng = np.random.default_rng(np.uint64(seed)) if rng is None else rng
    bm = relaxation.source
    solutions = []
    for _ in range(int(n_inits)):
        init = rng.uniform(-1.0, 1.0, bm.n_units)
        m, converged = meanfield_bm(bm, init)
        if converged:
            solutions.append(m)

    # spin modes pair up under s -> -s (biases only tilt the weights), so
    # every solution seeds a restart at its sign flip; uniform inits alone
    # can miss a dominant mirror basin
    for m in list(solutions):
        flipped, converged = meanfield_bm(bm, np.clip(-m, -0.999999, 0.999999))
        if converged:
            solutions.append(flipped)

    # sort before greedy dedup so the result is independent of init order
    solutions.sort(key=lambda m: tuple(m))
    kept = []
    for m in solutions:
        if all(np.max(np.abs(m - k)) >= DEDUP_TOL for k in kept):
            kept.append(m)
    if not kept:
        kept = [np.zeros(bm.n_units)]

    noise = rng.standard_normal((int(mc_samples), relaxation.dim))
    locals_ = [
        LocalApprox(mean=relaxation.Q.T @ m, elbo=_elbo(relaxation, relaxation.Q.T @ m, noise))
        for m in kept
    ]
    return locals_


def moment_matched_base(mixture):
    """Gaussian matched to the mixture's mean and covariance.

    Responsibilities are softmax(ELBOs); the covariance picks up a small
    diagonal regularization so coincident locals stay factorizable. Returns
    (GaussianDensity, log_zeta).
    """
    elbos = np.array([la.elbo for la in mixture.locals])
    resp = np.exp(elbos - elbos.max())
    resp /= resp.sum()
    means = np.stack([la.mean for la in mixture.locals])
    dim = means.shape[1]
    mean = resp @ means
    cov = np.eye(dim) + (means * resp[:, None]).T @ means - np.outer(mean, mean)
    cov = 0.5 * (cov + cov.T) + COV_REGULARIZATION * np.eye(dim)
    return GaussianDensity(mean, cov), mixture.log_zeta


def fit_relaxation_base(relaxation, n_inits, mc_samples=1000, rng=None, seed=0):
    """End-to-end fit: mean-field locals -> mixture -> moment-matched base."""
    locals_ = fit_local_approxes(relaxation, n_inits, mc_samples, rng=rng, seed=seed)
    mixture = MixtureApprox.from_locals(locals_)
    base, log_zeta = moment_matched_base(mixture)
    return base, log_zeta, mixture


def bootstrap_refit(system, sampler_cfg, n_rounds, samples_per_round, rng=None,
                    burn_in=0.1):
    """Iterative refit: sample the joint, re-estimate log zeta and the target
    moments, rebuild the Gaussian base, repeat.

    Returns (final system, list of per-round EstimateReports). Deterministic
    given the seed; the chain init of each round is a fresh base draw.
    """
    if n_rounds < 1:
        raise UsageError("n_rounds must be at least 1")
    rng = np.random.default_rng(np.uint64(sampler_cfg.seed)) if rng is None else rng
    current = system
    reports = []
    for round_idx in range(int(n_rounds)):
        x0 = current.base.sample(rng)
        trace = joint_ct_chain(
            current, ExtendedState(x=x0, u=0.0), sampler_cfg, samples_per_round, rng=rng
        )
        try:
            report = compute_report(trace, current, burn_in=burn_in)
        except DegenerateWeightsError as exc:
            raise DegenerateWeightsError(f"round {round_idx}: {exc}") from exc
        reports.append(report)
        cov = np.asarray(report.cov_hat)
        cov = 0.5 * (cov + cov.T) + COV_REGULARIZATION * np.eye(current.dim)
        new_base = GaussianDensity(report.mean_hat, cov)
        current = current.with_updates(base=new_base, log_zeta=report.log_z_hat)
    return current, reports
