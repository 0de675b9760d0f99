"""Normalizing-constant and expectation estimators over sampler traces,
plus quadrature verification utilities for the inverse-temperature marginal
bounds.

All weight sums run in the log domain with streaming max shifts: on
relaxation targets Delta spans hundreds of nats, so linear-domain weights
would overflow long before the estimators converge.
"""

import math
from dataclasses import dataclass

import numpy as np
from scipy.integrate import quad

from .errors import (
    DegenerateWeightsError,
    DomainError,
    EmptyTraceError,
    NumericalError,
    UsageError,
)
from .tempering import log_w0, log_w1

#: fraction of each trace discarded before estimation
DEFAULT_BURN_IN = 0.1


class LogAccumulator:
    """Streaming log-sum-exp: running max plus rescaled sum.

    Insertion-order differences only move the result at the 1e-12 level and
    the scaled sum cannot overflow for inputs within ~700 nats of the max.
    """

    def __init__(self):
        self._max = -np.inf
        self._sum = 0.0
        self.count = 0

    def add(self, value):
        v = float(value)
        self.count += 1
        if v == -math.inf:
            return
        if v <= self._max:
            self._sum += math.exp(v - self._max)
        else:
            self._sum = self._sum * math.exp(self._max - v) + 1.0
            self._max = v

    def extend(self, values):
        for v in np.asarray(values, dtype=np.float64).ravel():
            self.add(v)

    def result(self):
        if self.count == 0 or self._sum == 0.0:
            return -np.inf
        return self._max + math.log(self._sum)


def logsumexp(values):
    v = np.asarray(values, dtype=np.float64)
    if v.size == 0:
        return -np.inf
    m = v.max()
    if not np.isfinite(m):
        return float(m)
    return float(m + np.log(np.exp(v - m).sum()))


def _post_burn(trace_len, burn_in):
    if trace_len == 0:
        raise EmptyTraceError("estimator called on an empty trace")
    start = int(math.floor(trace_len * burn_in))
    if start >= trace_len:
        raise EmptyTraceError("burn-in leaves no samples")
    return slice(start, trace_len)


def _trace_deltas(trace, burn_in):
    sl = _post_burn(len(trace), burn_in)
    d = trace.deltas[sl]
    if np.any(np.isnan(d)):
        raise UsageError("trace has no per-sample delta; run a tempered sampler")
    return d, sl


def ct_log_Z(trace, log_zeta, burn_in=DEFAULT_BURN_IN):
    """Continuous-tempering normalizing constant estimate.

    log zeta + log sum w1(Delta_s) - log sum w0(Delta_s), the continuous
    Rao-Blackwellised ratio of the beta-endpoint conditionals.
    """
    d, _ = _trace_deltas(trace, burn_in)
    return float(log_zeta) + logsumexp(log_w1(d)) - logsumexp(log_w0(d))


def _normalized_weights(deltas, which):
    if which == "target":
        lw = log_w1(deltas)
    elif which == "base":
        lw = log_w0(deltas)
    else:
        raise UsageError(f"which must be 'target' or 'base', got {which!r}")
    m = lw.max()
    if not np.isfinite(m):
        raise DegenerateWeightsError("all importance weights are degenerate")
    return np.exp(lw - m)


def _self_normalized(weights, xs, f):
    # accumulate numerator and denominator in the same order so that f = 1
    # returns exactly 1.0
    acc = None
    total = 0.0
    for ai, x in zip(weights, xs):
        fx = np.asarray(f(x), dtype=np.float64)
        acc = ai * fx if acc is None else acc + ai * fx
        total += ai
    out = acc / total
    return float(out) if out.ndim == 0 else out


def ct_expectation(trace, f, which="target", burn_in=DEFAULT_BURN_IN):
    """Self-normalized importance average of f under the target (weights w1)
    or the base (weights w0)."""
    d, sl = _trace_deltas(trace, burn_in)
    a = _normalized_weights(d, which)
    return _self_normalized(a, trace.xs[sl], f)


def ct_moments(trace, which="target", burn_in=DEFAULT_BURN_IN):
    """Importance-weighted mean and covariance of the trace states."""
    d, sl = _trace_deltas(trace, burn_in)
    a = _normalized_weights(d, which)
    xs = trace.xs[sl]
    total = a.sum()
    mean = (a @ xs) / total
    second = (xs * a[:, None]).T @ xs / total
    cov = second - np.outer(mean, mean)
    return mean, 0.5 * (cov + cov.T)


@dataclass
class StLogZ:
    """Simulated-tempering normalizing constant estimates.

    Degenerate inputs produce NaN fields with an explanatory diagnostic
    rather than silent non-finite values.
    """

    rao_blackwell: float
    count_based: float
    diagnostics: tuple = ()


def st_log_Z(trace, schedule, burn_in=DEFAULT_BURN_IN):
    """Count-based and Rao-Blackwellised log Z from a tempering trace.

    Both apply the exp(w_0 - w_N) prior-weight correction and the log zeta
    folded into the bridge by the sampler.
    """
    if trace.log_conditionals is None:
        raise UsageError("trace has no stored conditionals; run simulated tempering")
    sl = _post_burn(len(trace), burn_in)
    log_zeta = float(trace.meta.get("log_zeta", 0.0))
    correction = log_zeta + float(schedule.weights[0] - schedule.weights[-1])
    diagnostics = []

    betas = trace.betas[sl]
    c0 = int(np.sum(betas == 0.0))
    c1 = int(np.sum(betas == 1.0))
    if c0 == 0 or c1 == 0:
        diagnostics.append(f"endpoint visits absent (beta=0: {c0}, beta=1: {c1})")
        count_based = math.nan
    else:
        count_based = correction + math.log(c1) - math.log(c0)

    lc = trace.log_conditionals[sl]
    log_p0 = logsumexp(lc[:, 0])
    log_p1 = logsumexp(lc[:, -1])
    rao_blackwell = correction + log_p1 - log_p0
    if not math.isfinite(rao_blackwell):
        diagnostics.append("Rao-Blackwell endpoint probabilities vanished")
    return StLogZ(rao_blackwell, count_based, tuple(diagnostics))


def st_expectation(trace, f, burn_in=DEFAULT_BURN_IN):
    """Rao-Blackwellised target expectation from a simulated-tempering trace:
    averages weighted by the stored conditionals p(beta = 1 | x)."""
    if trace.log_conditionals is None:
        raise UsageError("trace has no stored conditionals; run simulated tempering")
    sl = _post_burn(len(trace), burn_in)
    lw = trace.log_conditionals[sl][:, -1]
    m = lw.max()
    if not np.isfinite(m):
        raise DegenerateWeightsError("all endpoint conditionals vanished")
    return _self_normalized(np.exp(lw - m), trace.xs[sl], f)


def st_moments(trace, burn_in=DEFAULT_BURN_IN):
    """Rao-Blackwellised target mean and covariance from an ST trace."""
    if trace.log_conditionals is None:
        raise UsageError("trace has no stored conditionals; run simulated tempering")
    sl = _post_burn(len(trace), burn_in)
    lw = trace.log_conditionals[sl][:, -1]
    m = lw.max()
    if not np.isfinite(m):
        raise DegenerateWeightsError("all endpoint conditionals vanished")
    a = np.exp(lw - m)
    xs = trace.xs[sl]
    total = a.sum()
    mean = (a @ xs) / total
    second = (xs * a[:, None]).T @ xs / total
    cov = second - np.outer(mean, mean)
    return mean, 0.5 * (cov + cov.T)


def ais_log_Z(log_weights):
    """log of the mean AIS weight: logsumexp(log_weights) - log(count)."""
    lw = np.asarray(log_weights, dtype=np.float64)
    if lw.size == 0:
        raise EmptyTraceError("no AIS weights supplied")
    return logsumexp(lw) - math.log(lw.size)


def ais_expectation(finals, log_weights, f):
    """Self-normalized importance average over AIS final states."""
    lw = np.asarray(log_weights, dtype=np.float64)
    if lw.size == 0:
        raise EmptyTraceError("no AIS weights supplied")
    return _self_normalized(np.exp(lw - lw.max()), np.atleast_2d(finals), f)


def beta_marginal_rb(trace, beta_grid, burn_in=DEFAULT_BURN_IN):
    """Rao-Blackwellised density estimate of the inverse-temperature
    marginal on a grid: averages of exp(-beta Delta) w0(Delta)."""
    grid = np.asarray(beta_grid, dtype=np.float64)
    if np.any(grid < 0.0) or np.any(grid > 1.0):
        raise DomainError("beta grid values must lie in [0, 1]")
    d, _ = _trace_deltas(trace, burn_in)
    lw0 = log_w0(d)
    out = np.empty(grid.shape)
    log_n = math.log(d.shape[0])
    for i, b in enumerate(grid):
        out[i] = math.exp(logsumexp(lw0 - b * d) - log_n)
    return out


def mcse_batch_means(series, n_batches=None):
    """Classic batch-means Monte Carlo standard error of the series mean."""
    y = np.asarray(series, dtype=np.float64).ravel()
    n = y.shape[0]
    a = int(math.floor(math.sqrt(n))) if n_batches is None else int(n_batches)
    if a < 2 or n < 2 * a:
        raise UsageError(f"series of length {n} too short for {a} batches")
    b = n // a
    used = y[: a * b].reshape(a, b)
    batch_means = used.mean(axis=1)
    var_hat = b * np.sum((batch_means - used.mean()) ** 2) / (a - 1)
    return float(math.sqrt(var_hat / (a * b)))


@dataclass
class EstimateReport:
    """Bundle of the estimates a tempered trace supports."""

    log_z_hat: float
    mean_hat: np.ndarray
    cov_hat: np.ndarray
    base_mean_discrepancy: float
    base_cov_discrepancy: float
    mcse_log_z: float
    mcse_mean: np.ndarray

    def to_dict(self):
        return {
            "log_Z_hat": self.log_z_hat,
            "mean_hat": np.asarray(self.mean_hat).tolist(),
            "cov_hat": np.asarray(self.cov_hat).tolist(),
            "mcse": {
                "log_Z": self.mcse_log_z,
                "mean": np.asarray(self.mcse_mean).tolist(),
            },
            "base_check": {
                "mean": self.base_mean_discrepancy,
                "cov": self.base_cov_discrepancy,
            },
        }


def _batch_errors(values_per_batch):
    a = values_per_batch.shape[0]
    return np.std(values_per_batch, axis=0, ddof=1) / math.sqrt(a)


def compute_report(trace, system=None, burn_in=DEFAULT_BURN_IN, n_batches=None,
                   log_zeta=None):
    """Full EstimateReport: log Z, target moments, base-moment convergence
    check against the known base moments, and batch-means standard errors.

    system may be omitted (CLI estimation from a bare trace); the base
    discrepancy fields are then null.
    """
    if log_zeta is None:
        if system is None:
            raise UsageError("need a system or an explicit log_zeta")
        log_zeta = system.log_zeta
    log_z = ct_log_Z(trace, log_zeta, burn_in)
    mean, cov = ct_moments(trace, "target", burn_in)
    if system is not None:
        base_mean, base_cov = ct_moments(trace, "base", burn_in)
        mean_disc = float(np.max(np.abs(base_mean - system.base.known_mean)))
        cov_disc = float(np.max(np.abs(base_cov - system.base.known_cov)))
    else:
        mean_disc = cov_disc = None

    sl = _post_burn(len(trace), burn_in)
    n = sl.stop - sl.start
    a = int(math.floor(math.sqrt(n))) if n_batches is None else int(n_batches)
    a = max(a, 2)
    b = n // a
    if b < 1:
        raise UsageError("trace too short for batch-means errors")
    batch_logz = np.empty(a)
    batch_means = np.empty((a, trace.dim))
    deltas = trace.deltas[sl]
    xs = trace.xs[sl]
    for k in range(a):
        dk = deltas[k * b : (k + 1) * b]
        xk = xs[k * b : (k + 1) * b]
        batch_logz[k] = log_zeta + logsumexp(log_w1(dk)) - logsumexp(log_w0(dk))
        ak = np.exp(log_w1(dk) - log_w1(dk).max())
        batch_means[k] = (ak @ xk) / ak.sum()
    return EstimateReport(
        log_z_hat=log_z,
        mean_hat=mean,
        cov_hat=cov,
        base_mean_discrepancy=mean_disc,
        base_cov_discrepancy=cov_disc,
        mcse_log_z=float(_batch_errors(batch_logz)),
        mcse_mean=_batch_errors(batch_means),
    )


def compute_st_report(trace, schedule, system=None, burn_in=DEFAULT_BURN_IN,
                      n_batches=None):
    """EstimateReport for a simulated-tempering trace: Rao-Blackwellised
    log Z and target moments, with batch-means errors over sub-traces."""
    result = st_log_Z(trace, schedule, burn_in)
    mean, cov = st_moments(trace, burn_in)
    if system is not None:
        lw = trace.log_conditionals[_post_burn(len(trace), burn_in)][:, 0]
        a = np.exp(lw - lw.max())
        xs = trace.xs[_post_burn(len(trace), burn_in)]
        base_mean = (a @ xs) / a.sum()
        mean_disc = float(np.max(np.abs(base_mean - system.base.known_mean)))
        cov_disc = None
    else:
        mean_disc = cov_disc = None

    sl = _post_burn(len(trace), burn_in)
    n = sl.stop - sl.start
    a_n = int(math.floor(math.sqrt(n))) if n_batches is None else int(n_batches)
    a_n = max(a_n, 2)
    b = n // a_n
    if b < 1:
        raise UsageError("trace too short for batch-means errors")
    lc = trace.log_conditionals[sl]
    xs = trace.xs[sl]
    correction = float(trace.meta.get("log_zeta", 0.0)) + float(
        schedule.weights[0] - schedule.weights[-1]
    )
    batch_logz = np.empty(a_n)
    batch_means = np.empty((a_n, trace.dim))
    for k in range(a_n):
        lck = lc[k * b : (k + 1) * b]
        xk = xs[k * b : (k + 1) * b]
        batch_logz[k] = correction + logsumexp(lck[:, -1]) - logsumexp(lck[:, 0])
        ak = np.exp(lck[:, -1] - lck[:, -1].max())
        batch_means[k] = (ak @ xk) / ak.sum()
    return EstimateReport(
        log_z_hat=result.rao_blackwell,
        mean_hat=mean,
        cov_hat=cov,
        base_mean_discrepancy=mean_disc,
        base_cov_discrepancy=cov_disc,
        mcse_log_z=float(_batch_errors(batch_logz)),
        mcse_mean=_batch_errors(batch_means),
    )


# ---------------------------------------------------------------------------
# quadrature oracle and marginal-density bound checks (1-D systems)


class Quadrature1DOracle:
    """Adaptive-quadrature ground truth for one-dimensional systems.

    Integrates over the base mean +- n_sd base standard deviations with
    absolute tolerance epsabs; raises NumericalError when the quadrature
    error estimate is not well below the requested tolerance scale.
    """

    def __init__(self, system, n_sd=12.0, epsabs=1e-10):
        if system.dim != 1:
            raise UsageError("quadrature oracle requires a 1-D system")
        self.system = system
        sd = math.sqrt(float(np.asarray(system.base.known_cov).reshape(())))
        mid = float(np.asarray(system.base.known_mean).reshape(()))
        self.lo = mid - n_sd * sd
        self.hi = mid + n_sd * sd
        self.epsabs = epsabs

    def _integrate(self, fn):
        val, err = quad(fn, self.lo, self.hi, epsabs=self.epsabs, limit=400)
        if err > max(1e-6, 1e-6 * abs(val)):
            raise NumericalError(f"quadrature failed to converge (err={err})")
        return val

    def log_z(self):
        phi = self.system.target.potential
        return math.log(self._integrate(lambda t: math.exp(-phi(np.array([t])))))

    def log_bridge_norm(self, beta_value):
        """log integral of the zeta-folded geometric bridge at this beta."""
        s = self.system

        def integrand(t):
            x = np.array([t])
            e = beta_value * (s.target.potential(x) + s.log_zeta) + (
                1.0 - beta_value
            ) * s.base.neg_log_pdf(x)
            return math.exp(-e)

        return math.log(self._integrate(integrand))

    def kl_base_to_target(self):
        s = self.system

        def integrand(t):
            x = np.array([t])
            psi = s.base.neg_log_pdf(x)
            return math.exp(-psi) * (s.target.potential(x) - psi)

        return self.log_z() + self._integrate(integrand)

    def kl_target_to_base(self):
        s = self.system
        log_z = self.log_z()

        def integrand(t):
            x = np.array([t])
            phi = s.target.potential(x)
            return math.exp(-phi - log_z) * (s.base.neg_log_pdf(x) - phi)

        return -log_z + self._integrate(integrand)

    def beta_marginal(self, beta_grid):
        """Normalized marginal density p(beta) on a grid."""
        grid = np.asarray(beta_grid, dtype=np.float64)
        log_g = np.array([self.log_bridge_norm(b) for b in grid])
        norm, err = quad(
            lambda b: math.exp(self.log_bridge_norm(b)), 0.0, 1.0, epsabs=1e-8, limit=100
        )
        if err > 1e-4:
            raise NumericalError(f"beta-marginal normalization failed (err={err})")
        return np.exp(log_g) / norm


@dataclass
class MarginalBoundReport:
    """Signed violations (positive = broken) of the marginal-density bounds."""

    beta_grid: np.ndarray
    upper_violation: np.ndarray
    lower_bt_violation: np.ndarray
    lower_tb_violation: np.ndarray
    tol: float

    @property
    def max_violation(self):
        return float(
            max(
                self.upper_violation.max(),
                self.lower_bt_violation.max(),
                self.lower_tb_violation.max(),
            )
        )

    @property
    def passed(self):
        return bool(self.max_violation <= self.tol)

    def to_dict(self):
        return {
            "beta_grid": self.beta_grid.tolist(),
            "upper_violation": self.upper_violation.tolist(),
            "lower_bt_violation": self.lower_bt_violation.tolist(),
            "lower_tb_violation": self.lower_tb_violation.tolist(),
            "tol": self.tol,
            "max_violation": self.max_violation,
            "passed": self.passed,
        }


def check_marginal_bounds(
    system,
    oracle,
    beta_grid,
    tol=1e-8,
    d_bt=None,
    d_tb=None,
    log_Z=None,
):
    """Verify the sandwich on the inverse-temperature marginal.

    With r = log Z - log zeta and the marginal scaled so C p(0) = 1:

        beta r - beta d_bt   <=  log C p(beta)  <=  beta r
        beta r - (1-beta) d_tb  <=  log C p(beta)

    The d/log Z overrides exist so corrupted inputs can be shown to trip the
    checker.
    """
    grid = np.asarray(beta_grid, dtype=np.float64)
    if np.any(grid < 0.0) or np.any(grid > 1.0):
        raise DomainError("beta grid values must lie in [0, 1]")
    log_z = oracle.log_z() if log_Z is None else float(log_Z)
    d_bt = oracle.kl_base_to_target() if d_bt is None else float(d_bt)
    d_tb = oracle.kl_target_to_base() if d_tb is None else float(d_tb)
    lbn0 = oracle.log_bridge_norm(0.0)
    log_cp = np.array([oracle.log_bridge_norm(b) for b in grid]) - lbn0
    r = log_z - system.log_zeta
    upper = log_cp - grid * r
    lower_bt = (grid * r - grid * d_bt) - log_cp
    lower_tb = (grid * r - (1.0 - grid) * d_tb) - log_cp
    return MarginalBoundReport(
        beta_grid=grid,
        upper_violation=upper,
        lower_bt_violation=lower_bt,
        lower_tb_violation=lower_tb,
        tol=tol,
    )
