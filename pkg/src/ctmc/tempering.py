"""Temperature control map, extended Hamiltonian and tempered densities.

The inverse temperature beta in (0,1) is driven through an unbounded control
variable u via the logistic sigmoid. The extended Hamiltonian couples a
target potential phi, a normalized base psi and a normalizing-constant guess
zeta:

    h(x,u,p,v) = beta(u) [phi(x) + log zeta] + (1 - beta(u)) psi(x)
                 - log beta'(u) + p'M^-1 p / 2 + v^2 / (2 m)
"""

import math
from dataclasses import dataclass

import numpy as np

from .errors import DimensionError, DomainError, UsageError

#: below this |delta|, truncated-exponential and weight formulas switch to
#: series expansions (truncation error < 1e-17, beneath double rounding)
SMALL_DELTA = 1e-8


def _sigmoid(u):
    u = np.atleast_1d(np.asarray(u, dtype=np.float64))
    out = np.empty_like(u)
    pos = u >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-u[pos]))
    eu = np.exp(u[~pos])
    out[~pos] = eu / (1.0 + eu)
    return out


def _softplus(u):
    u = np.asarray(u, dtype=np.float64)
    return np.log1p(np.exp(-np.abs(u))) + np.maximum(u, 0.0)


def _scalarize(x, scalar_in):
    return float(x[0]) if scalar_in else x


class LogisticControlMap:
    """The built-in control map beta(u) = 1 / (1 + exp(-u))."""

    kind = "logistic"

    def beta(self, u):
        scalar = np.ndim(u) == 0
        return _scalarize(_sigmoid(u), scalar)

    def beta_grad(self, u):
        scalar = np.ndim(u) == 0
        s = _sigmoid(u)
        return _scalarize(s * (1.0 - s), scalar)

    def log_beta_grad(self, u):
        # log sigma'(u) = -softplus(u) - softplus(-u); never logs a product
        scalar = np.ndim(u) == 0
        u = np.atleast_1d(np.asarray(u, dtype=np.float64))
        return _scalarize(-_softplus(u) - _softplus(-u), scalar)

    def dlog_beta_grad(self, u):
        """d/du log beta'(u) = 1 - 2 sigma(u)."""
        scalar = np.ndim(u) == 0
        return _scalarize(1.0 - 2.0 * _sigmoid(u), scalar)

    def inverse(self, beta):
        return math.log(beta) - math.log1p(-beta)


LOGISTIC = LogisticControlMap()


def beta(u):
    return LOGISTIC.beta(u)


def beta_grad(u):
    return LOGISTIC.beta_grad(u)


def log_beta_grad(u):
    return LOGISTIC.log_beta_grad(u)


@dataclass(frozen=True)
class TemperedSystem:
    """Bundle defining the extended Hamiltonian.

    target supplies phi / grad phi, base the normalized psi / grad psi plus
    sampling; mass_diag is the diagonal momentum covariance for x and
    control_mass the momentum variance for u.
    """

    target: object
    base: object
    log_zeta: float = 0.0
    control: object = LOGISTIC
    mass_diag: np.ndarray = None
    control_mass: float = 1.0

    def __post_init__(self):
        if self.target.dim != self.base.dim:
            raise DimensionError(
                f"target dim {self.target.dim} != base dim {self.base.dim}"
            )
        m = self.mass_diag
        m = np.ones(self.target.dim) if m is None else np.asarray(m, dtype=np.float64)
        if m.shape != (self.target.dim,) or np.any(m <= 0):
            raise UsageError("mass_diag must be a positive vector of target dim")
        if self.control_mass <= 0:
            raise UsageError("control_mass must be positive")
        object.__setattr__(self, "mass_diag", m)
        object.__setattr__(self, "log_zeta", float(self.log_zeta))

    @property
    def dim(self):
        return self.target.dim

    def with_updates(self, **kw):
        cur = dict(
            target=self.target,
            base=self.base,
            log_zeta=self.log_zeta,
            control=self.control,
            mass_diag=self.mass_diag,
            control_mass=self.control_mass,
        )
        cur.update(kw)
        return TemperedSystem(**cur)

    def extended_kernel_spec(self):
        tspec = self.target.kernel_spec()
        bspec = self.base.kernel_spec()
        if tspec is None or bspec is None or self.control is not LOGISTIC:
            return None
        return ("extended", self.log_zeta, tspec, bspec)

    def bridge_kernel_spec(self, beta_value):
        tspec = self.target.kernel_spec()
        bspec = self.base.kernel_spec()
        if tspec is None or bspec is None:
            return None
        return ("bridge", float(beta_value), self.log_zeta, tspec, bspec)

    def to_dict(self):
        return {
            "target": self.target.to_dict(),
            "base": self.base.to_dict(),
            "log_zeta": self.log_zeta,
            "control_mass": self.control_mass,
            "mass_diag": self.mass_diag.tolist(),
        }


def system_from_dict(d):
    from .models import model_from_dict

    return TemperedSystem(
        target=model_from_dict(d["target"]),
        base=model_from_dict(d["base"]),
        log_zeta=d.get("log_zeta", 0.0),
        mass_diag=d.get("mass_diag"),
        control_mass=d.get("control_mass", 1.0),
    )


@dataclass
class ExtendedState:
    """Point in the augmented phase space (x, u, p, v)."""

    x: np.ndarray
    u: float = 0.0
    p: np.ndarray = None
    v: float = 0.0

    def __post_init__(self):
        self.x = np.asarray(self.x, dtype=np.float64)
        if self.p is None:
            self.p = np.zeros_like(self.x)
        self.p = np.asarray(self.p, dtype=np.float64)


def delta(system, x):
    """Delta(x) = phi(x) + log zeta - psi(x); the rate of p(beta | x)."""
    return (
        system.target.potential(x) + system.log_zeta - system.base.neg_log_pdf(x)
    )


def extended_potential(system, x, u):
    """Non-kinetic part of the extended Hamiltonian at (x, u)."""
    b = system.control.beta(u)
    return (
        b * (system.target.potential(x) + system.log_zeta)
        + (1.0 - b) * system.base.neg_log_pdf(x)
        - system.control.log_beta_grad(u)
    )


def extended_hamiltonian(system, state):
    """Full extended Hamiltonian including both kinetic terms."""
    kin = 0.5 * float(state.p @ (state.p / system.mass_diag))
    kin += 0.5 * state.v * state.v / system.control_mass
    return extended_potential(system, state.x, state.u) + kin


def extended_gradients(system, state):
    """Partials (dh/dx, dh/du) of the extended Hamiltonian.

    dh/dx = beta grad_phi + (1 - beta) grad_psi;
    dh/du = beta'(u) Delta(x) - d/du log beta'(u).
    """
    b = system.control.beta(state.u)
    dh_dx = b * system.target.gradient(state.x) + (1.0 - b) * system.base.gradient(
        state.x
    )
    dh_du = system.control.beta_grad(state.u) * delta(
        system, state.x
    ) - system.control.dlog_beta_grad(state.u)
    return dh_dx, dh_du


def joint_log_density_x_beta(system, x, beta_value):
    """Unnormalized log density of (x, beta): -beta phi - (1-beta) psi - beta log zeta."""
    if not 0.0 <= beta_value <= 1.0:
        raise DomainError(f"beta must lie in [0, 1], got {beta_value}")
    return -(
        beta_value * (system.target.potential(x) + system.log_zeta)
        + (1.0 - beta_value) * system.base.neg_log_pdf(x)
    )


def sample_beta_conditional(system, x, rng):
    """Draw beta | x: an exponential with rate Delta(x) truncated to [0, 1].

    Inverse-CDF transform of a single uniform; exact in the rate -> 0 limit.
    """
    d = delta(system, x)
    return truncated_exponential(d, rng.random())


def truncated_exponential(rate, unit_uniform):
    """Inverse CDF of the [0,1]-truncated exponential, stable in both tails."""
    d, u = float(rate), float(unit_uniform)
    if abs(d) < SMALL_DELTA:
        return u
    if d > 0:
        out = -math.log1p(u * math.expm1(-d)) / d
    else:
        arg = (1.0 - u) * math.expm1(d)
        if arg <= -1.0:
            return 0.0
        out = 1.0 - math.log1p(arg) / d
    return min(max(out, 0.0), 1.0)


def log_w0(delta_value):
    """log of w0 = Delta / (1 - exp(-Delta)), the p(beta=0 | x) weight."""
    scalar = np.ndim(delta_value) == 0
    d = np.atleast_1d(np.asarray(delta_value, dtype=np.float64))
    out = np.empty_like(d)
    small = np.abs(d) < SMALL_DELTA
    pos = (d > 0) & ~small
    mid = (d < 0) & (d >= -700.0) & ~small
    neg = d < -700.0
    ds = d[small]
    # non-finite deltas fall through as NaN for the callers to flag
    with np.errstate(invalid="ignore"):
        out[small] = 0.5 * ds - ds * ds / 24.0
        out[pos] = np.log(d[pos]) - np.log(-np.expm1(-d[pos]))
        out[mid] = np.log(-d[mid]) - np.log(np.expm1(-d[mid]))
        out[neg] = np.log(-d[neg]) + d[neg] - np.log1p(-np.exp(d[neg]))
    return float(out[0]) if scalar else out


def log_w1(delta_value):
    """log of w1 = Delta / (exp(Delta) - 1); equals log_w0(-Delta)."""
    if np.ndim(delta_value) == 0:
        return log_w0(-float(delta_value))
    return log_w0(-np.asarray(delta_value, dtype=np.float64))
