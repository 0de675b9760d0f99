"""The five samplers: HMC, joint and Gibbs continuous tempering, simulated
tempering, and annealed importance sampling.

All chains are deterministic given their seed. Hot trajectories run through
the compiled kernel backend when the models involved expose kernel specs;
otherwise the generic pure-python leapfrog is used. Random draws per
iteration happen in a fixed order (momentum, step count, Metropolis uniform,
then any sampler-specific variate) so traces are reproducible.
"""

import csv
import math
from dataclasses import dataclass

import numpy as np

from . import _kernels, integrators
from .errors import (
    DivergenceError,
    EmptyTraceError,
    InitializationError,
    UsageError,
)
from .integrators import DIVERGENCE_THRESHOLD, SeparableSystem
from .tempering import ExtendedState, delta, extended_potential, truncated_exponential


@dataclass(frozen=True)
class HmcConfig:
    """Leapfrog settings shared by every HMC-based update."""

    step_size: float
    n_leapfrog: int
    jitter: float = 0.2
    seed: int = 0

    def __post_init__(self):
        if self.step_size <= 0:
            raise UsageError("step_size must be positive")
        if self.n_leapfrog < 1:
            raise UsageError("n_leapfrog must be at least 1")
        if not 0.0 <= self.jitter < 1.0:
            raise UsageError("jitter must lie in [0, 1)")

    def to_dict(self):
        return {
            "step_size": self.step_size,
            "n_leapfrog": self.n_leapfrog,
            "jitter": self.jitter,
            "seed": int(self.seed),
        }

    @classmethod
    def from_dict(cls, d):
        return cls(**d)


@dataclass(frozen=True)
class TemperatureSchedule:
    """Ordered inverse temperatures 0 = beta_0 < ... < beta_N = 1 with
    optional per-temperature log prior weights (simulated tempering only)."""

    betas: np.ndarray
    weights: np.ndarray = None

    def __post_init__(self):
        b = np.asarray(self.betas, dtype=np.float64)
        if b.ndim != 1 or b.shape[0] < 2:
            raise UsageError("schedule needs at least two inverse temperatures")
        if b[0] != 0.0 or b[-1] != 1.0:
            raise UsageError("schedule endpoints must be exactly 0 and 1")
        if np.any(np.diff(b) <= 0):
            raise UsageError("schedule must be strictly increasing")
        w = self.weights
        w = np.zeros_like(b) if w is None else np.asarray(w, dtype=np.float64)
        if w.shape != b.shape:
            raise UsageError("weights must match betas in length")
        object.__setattr__(self, "betas", b)
        object.__setattr__(self, "weights", w)

    @property
    def n_temperatures(self):
        return self.betas.shape[0]


def linear_schedule(n_betas, weights=None):
    """Evenly spaced schedule with n_betas values including both endpoints."""
    return TemperatureSchedule(np.linspace(0.0, 1.0, int(n_betas)), weights)


class ChainTrace:
    """Per-iteration record of a sampler run.

    Arrays are length n_samples; `us` is NaN outside continuous tempering and
    `deltas` is NaN when the sampler has no base density. `energies` holds
    the Hamiltonian of the state retained at each iteration (written to the
    `hamiltonian` CSV column). Simulated-tempering traces additionally carry
    the per-sample log conditional vector over schedule indices.
    """

    def __init__(
        self,
        xs,
        betas,
        us,
        deltas,
        energies,
        accepted,
        log_conditionals=None,
        meta=None,
    ):
        self.xs = np.atleast_2d(np.asarray(xs, dtype=np.float64))
        self.betas = np.asarray(betas, dtype=np.float64)
        self.us = np.asarray(us, dtype=np.float64)
        self.deltas = np.asarray(deltas, dtype=np.float64)
        self.energies = np.asarray(energies, dtype=np.float64)
        self.accepted = np.asarray(accepted, dtype=bool)
        self.log_conditionals = (
            None
            if log_conditionals is None
            else np.asarray(log_conditionals, dtype=np.float64)
        )
        self.meta = dict(meta or {})

    def __len__(self):
        return self.xs.shape[0]

    @property
    def dim(self):
        return self.xs.shape[1]

    def head(self, n):
        """Prefix view with the first n samples (checkpointed estimation)."""
        n = min(int(n), len(self))
        return ChainTrace(
            xs=self.xs[:n],
            betas=self.betas[:n],
            us=self.us[:n],
            deltas=self.deltas[:n],
            energies=self.energies[:n],
            accepted=self.accepted[:n],
            log_conditionals=None
            if self.log_conditionals is None
            else self.log_conditionals[:n],
            meta=self.meta,
        )

    @property
    def acceptance_rate(self):
        return float(self.accepted.mean()) if len(self) else 0.0

    def summary(self):
        out = dict(self.meta)
        out["n_samples"] = len(self)
        out["acceptance_rate"] = self.acceptance_rate
        return out

    def save(self, path):
        """Write the trace CSV (plus a .npy sidecar for ST conditionals)."""
        path = str(path)
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(
                ["iter", "beta", "u", "delta", "hamiltonian", "accepted"]
                + [f"x{i}" for i in range(self.dim)]
            )
            for i in range(len(self)):
                row = [
                    str(i),
                    _fmt(self.betas[i]),
                    _fmt(self.us[i]),
                    _fmt(self.deltas[i]),
                    _fmt(self.energies[i]),
                    "1" if self.accepted[i] else "0",
                ]
                row.extend(_fmt(v) for v in self.xs[i])
                writer.writerow(row)
        if self.log_conditionals is not None:
            np.save(_conditionals_path(path), self.log_conditionals)

    @classmethod
    def load(cls, path):
        path = str(path)
        rows = []
        with open(path, newline="") as fh:
            reader = csv.reader(fh)
            header = next(reader)
            if header[:6] != ["iter", "beta", "u", "delta", "hamiltonian", "accepted"]:
                raise UsageError(f"{path} is not a trace CSV")
            for row in reader:
                rows.append(row)
        if not rows:
            raise EmptyTraceError(f"{path} contains no samples")
        dim = len(rows[0]) - 6

        def col(j):
            return np.array(
                [float(r[j]) if r[j] != "" else np.nan for r in rows], dtype=np.float64
            )

        xs = np.column_stack([col(6 + i) for i in range(dim)])
        conds = None
        cpath = _conditionals_path(path)
        try:
            conds = np.load(cpath)
        except FileNotFoundError:
            conds = None
        return cls(
            xs=xs,
            betas=col(1),
            us=col(2),
            deltas=col(3),
            energies=col(4),
            accepted=np.array([r[5] == "1" for r in rows]),
            log_conditionals=conds,
        )


def _conditionals_path(path):
    base = path[:-4] if path.endswith(".csv") else path
    return base + ".conditionals.npy"


def _fmt(v):
    return "" if math.isnan(v) else f"{v:.17g}"


# ---------------------------------------------------------------------------
# leapfrog drivers: compiled fast path with a pure fallback


class _PureStepper:
    def __init__(self, potential, gradient, mass_diag):
        self.mass_diag = np.asarray(mass_diag, dtype=np.float64)
        self._potential = potential
        self.system = SeparableSystem(
            position_dim=self.mass_diag.shape[0],
            potential_grad=gradient,
            mass_diag=self.mass_diag,
            potential=potential,
        )

    def potential(self, q):
        return self._potential(q)

    def run(self, q, p, step_size, n_steps):
        try:
            q1, p1 = integrators.leapfrog(self.system, q, p, step_size, n_steps)
        except DivergenceError:
            return q, p, np.nan, True
        return q1, p1, self._potential(q1), False


class _CompiledStepper:
    def __init__(self, handle, mass_diag):
        self.handle = handle
        self.mass_diag = np.asarray(mass_diag, dtype=np.float64)

    def potential(self, q):
        return _kernels.potential_value(self.handle, np.asarray(q, dtype=np.float64))

    def run(self, q, p, step_size, n_steps):
        return _kernels.leapfrog_fused(
            self.handle, q, p, step_size, n_steps, self.mass_diag
        )


def _make_stepper(potential, gradient, mass_diag, spec):
    handle = _kernels.build_potential(spec)
    if handle is not None:
        return _CompiledStepper(handle, mass_diag)
    return _PureStepper(potential, gradient, mass_diag)


class _BridgeStepper:
    """Stepper for the fixed-beta geometric bridge with a mutable beta."""

    def __init__(self, system):
        self.system = system
        self.beta = 1.0
        self.mass_diag = system.mass_diag
        handle = _kernels.build_potential(system.bridge_kernel_spec(1.0))
        if handle is not None:
            self._stepper = _CompiledStepper(handle, system.mass_diag)
            self._handle = handle
        else:
            self._stepper = _PureStepper(
                self._pure_potential, self._pure_gradient, system.mass_diag
            )
            self._handle = None

    def set_beta(self, beta_value):
        self.beta = float(beta_value)
        if self._handle is not None:
            _kernels._core.set_bridge_beta(self._handle, self.beta)

    def _pure_potential(self, x):
        s = self.system
        return self.beta * (s.target.potential(x) + s.log_zeta) + (
            1.0 - self.beta
        ) * s.base.neg_log_pdf(x)

    def _pure_gradient(self, x):
        s = self.system
        return self.beta * s.target.gradient(x) + (1.0 - self.beta) * s.base.gradient(x)

    def phi_psi(self, x):
        """(phi(x), psi(x)) evaluated through whichever backend is active."""
        if self._handle is not None:
            return _kernels._core.bridge_phi_psi(
                self._handle, np.asarray(x, dtype=np.float64)
            )
        s = self.system
        return s.target.potential(x), s.base.neg_log_pdf(x)

    def run(self, q, p, step_size, n_steps):
        return self._stepper.run(q, p, step_size, n_steps)


# ---------------------------------------------------------------------------
# shared HMC transition machinery


def _draw_momentum(rng, mass_diag):
    return rng.standard_normal(mass_diag.shape[0]) * np.sqrt(mass_diag)


def _draw_n_steps(cfg, rng):
    lo = max(1, math.ceil((1.0 - cfg.jitter) * cfg.n_leapfrog))
    hi = max(lo, math.floor((1.0 + cfg.jitter) * cfg.n_leapfrog))
    return int(rng.integers(lo, hi + 1))


def _kinetic(p, mass_diag):
    return 0.5 * float(p @ (p / mass_diag))


def _hmc_transition(stepper, q, pot_q, cfg, rng):
    """One momentum-refresh + trajectory + Metropolis step.

    Returns (q, pot_q, accepted, hamiltonian_of_retained_state). Divergent
    trajectories (non-finite states or |dH| above the threshold) are always
    rejected.
    """
    mass = stepper.mass_diag
    p = _draw_momentum(rng, mass)
    n_steps = _draw_n_steps(cfg, rng)
    u_mh = rng.random()
    h0 = pot_q + _kinetic(p, mass)
    q1, p1, pot1, diverged = stepper.run(q, p, cfg.step_size, n_steps)
    if not diverged:
        h1 = pot1 + _kinetic(p1, mass)
        if not math.isfinite(h1) or abs(h1 - h0) > DIVERGENCE_THRESHOLD:
            diverged = True
    if diverged:
        return q, pot_q, False, h0, True
    if math.log(u_mh) < h0 - h1:
        return q1, pot1, True, h1, False
    return q, pot_q, False, h0, False


def _resolve_rng(cfg, rng):
    return np.random.default_rng(np.uint64(cfg.seed)) if rng is None else rng


def _check_init(value, what="initial potential"):
    if not math.isfinite(value):
        raise InitializationError(f"{what} is not finite: {value}")


# ---------------------------------------------------------------------------
# samplers


def hmc_chain(model, init, cfg, n_samples, rng=None, mass_diag=None):
    """Standard HMC targeting exp(-potential); full momentum refresh each
    iteration, jittered leapfrog step count, Metropolis correction."""
    rng = _resolve_rng(cfg, rng)
    q = np.array(init, dtype=np.float64)
    mass = np.ones(model.dim) if mass_diag is None else np.asarray(mass_diag, float)
    stepper = _make_stepper(model.potential, model.gradient, mass, model.kernel_spec())
    pot = stepper.potential(q)
    _check_init(pot)

    n = int(n_samples)
    xs = np.empty((n, model.dim))
    energies = np.empty(n)
    accepted = np.empty(n, dtype=bool)
    n_div = 0
    for i in range(n):
        q, pot, acc, h, div = _hmc_transition(stepper, q, pot, cfg, rng)
        xs[i] = q
        energies[i] = h
        accepted[i] = acc
        n_div += div
    return ChainTrace(
        xs=xs,
        betas=np.ones(n),
        us=np.full(n, np.nan),
        deltas=np.full(n, np.nan),
        energies=energies,
        accepted=accepted,
        meta={"sampler": "hmc", "seed": int(cfg.seed), "config": cfg.to_dict(),
              "n_divergent": int(n_div)},
    )


def joint_ct_chain(system, init, cfg, n_samples, rng=None):
    """HMC on the flattened (x, u) extended system (joint continuous
    tempering); records beta(u) and Delta(x) for every retained sample."""
    rng = _resolve_rng(cfg, rng)
    if isinstance(init, ExtendedState):
        x0, u0 = init.x, init.u
    else:
        x0, u0 = np.asarray(init, dtype=np.float64), 0.0
    d = system.dim
    q = np.concatenate([x0, [u0]])
    mass = np.concatenate([system.mass_diag, [system.control_mass]])

    def pure_pot(qv):
        return extended_potential(system, qv[:d], qv[d])

    def pure_grad(qv):
        x, u = qv[:d], qv[d]
        b = system.control.beta(u)
        gx = b * system.target.gradient(x) + (1.0 - b) * system.base.gradient(x)
        gu = system.control.beta_grad(u) * delta(system, x) - system.control.dlog_beta_grad(u)
        return np.concatenate([gx, [gu]])

    stepper = _make_stepper(pure_pot, pure_grad, mass, system.extended_kernel_spec())
    pot = stepper.potential(q)
    _check_init(pot)

    compiled = isinstance(stepper, _CompiledStepper)
    n = int(n_samples)
    xs = np.empty((n, d))
    us = np.empty(n)
    betas = np.empty(n)
    deltas = np.empty(n)
    energies = np.empty(n)
    accepted = np.empty(n, dtype=bool)
    n_div = 0
    d_cur = None
    for i in range(n):
        q, pot, acc, h, div = _hmc_transition(stepper, q, pot, cfg, rng)
        n_div += div
        if acc or d_cur is None:
            if compiled:
                d_cur = _kernels._core.extended_delta(stepper.handle, q[:d])
            else:
                d_cur = delta(system, q[:d])
        xs[i] = q[:d]
        us[i] = q[d]
        betas[i] = system.control.beta(q[d])
        deltas[i] = d_cur
        energies[i] = h
        accepted[i] = acc
    return ChainTrace(
        xs=xs,
        betas=betas,
        us=us,
        deltas=deltas,
        energies=energies,
        accepted=accepted,
        meta={"sampler": "joint_ct", "seed": int(cfg.seed), "config": cfg.to_dict(),
              "log_zeta": system.log_zeta, "n_divergent": int(n_div)},
    )


def gibbs_ct_chain(system, init_x, cfg, n_samples, rng=None):
    """Alternate an exact truncated-exponential draw of beta | x with one HMC
    update of x at fixed beta (Gibbs continuous tempering)."""
    rng = _resolve_rng(cfg, rng)
    x = np.array(init_x, dtype=np.float64)
    bridge = _BridgeStepper(system)
    phi, psi = bridge.phi_psi(x)
    _check_init(phi + psi)
    d_cur = phi + system.log_zeta - psi
    beta_cur = truncated_exponential(d_cur, rng.random())

    n = int(n_samples)
    xs = np.empty((n, system.dim))
    betas = np.empty(n)
    deltas = np.empty(n)
    energies = np.empty(n)
    accepted = np.empty(n, dtype=bool)
    n_div = 0
    for i in range(n):
        bridge.set_beta(beta_cur)
        pot = beta_cur * (phi + system.log_zeta) + (1.0 - beta_cur) * psi
        x, _, acc, h, div = _hmc_transition(bridge, x, pot, cfg, rng)
        n_div += div
        if acc:
            phi, psi = bridge.phi_psi(x)
            d_cur = phi + system.log_zeta - psi
        beta_cur = truncated_exponential(d_cur, rng.random())
        xs[i] = x
        betas[i] = beta_cur
        deltas[i] = d_cur
        energies[i] = h
        accepted[i] = acc
    return ChainTrace(
        xs=xs,
        betas=betas,
        us=np.full(n, np.nan),
        deltas=deltas,
        energies=energies,
        accepted=accepted,
        meta={"sampler": "gibbs_ct", "seed": int(cfg.seed), "config": cfg.to_dict(),
              "log_zeta": system.log_zeta, "n_divergent": int(n_div)},
    )


def simulated_tempering_chain(system, schedule, init_x, cfg, n_samples, rng=None):
    """Discrete-schedule tempering: alternate an exact categorical draw of
    the temperature index given x with one HMC update of x at that beta.

    log zeta is folded into the bridge exactly as in continuous tempering, so
    the Eq-style count/Rao-Blackwell estimators recover Z including the
    prior-weight correction. The full log conditional vector over indices is
    stored per sample for Rao-Blackwellised estimation.
    """
    rng = _resolve_rng(cfg, rng)
    x = np.array(init_x, dtype=np.float64)
    bvals = schedule.betas
    weights = schedule.weights
    bridge = _BridgeStepper(system)
    phi, psi = bridge.phi_psi(x)
    _check_init(phi + psi)

    def log_conditional(phi_x, psi_x):
        logits = -(bvals * (phi_x + system.log_zeta) + (1.0 - bvals) * psi_x) + weights
        m = logits.max()
        return logits - (m + math.log(np.exp(logits - m).sum()))

    log_cond = log_conditional(phi, psi)
    idx = _draw_categorical(log_cond, rng)

    n = int(n_samples)
    k = schedule.n_temperatures
    xs = np.empty((n, system.dim))
    betas = np.empty(n)
    deltas = np.empty(n)
    energies = np.empty(n)
    accepted = np.empty(n, dtype=bool)
    conds = np.empty((n, k))
    n_div = 0
    for i in range(n):
        bridge.set_beta(bvals[idx])
        pot = bvals[idx] * (phi + system.log_zeta) + (1.0 - bvals[idx]) * psi
        x, _, acc, h, div = _hmc_transition(bridge, x, pot, cfg, rng)
        n_div += div
        if acc:
            phi, psi = bridge.phi_psi(x)
        log_cond = log_conditional(phi, psi)
        idx = _draw_categorical(log_cond, rng)
        xs[i] = x
        betas[i] = bvals[idx]
        deltas[i] = phi + system.log_zeta - psi
        energies[i] = h
        accepted[i] = acc
        conds[i] = log_cond
    return ChainTrace(
        xs=xs,
        betas=betas,
        us=np.full(n, np.nan),
        deltas=deltas,
        energies=energies,
        accepted=accepted,
        log_conditionals=conds,
        meta={"sampler": "st", "seed": int(cfg.seed), "config": cfg.to_dict(),
              "log_zeta": system.log_zeta, "n_divergent": int(n_div),
              "schedule_betas": bvals.tolist(), "schedule_weights": weights.tolist()},
    )


def _draw_categorical(log_probs, rng):
    p = np.exp(log_probs - log_probs.max())
    c = np.cumsum(p)
    return int(np.searchsorted(c, rng.random() * c[-1], side="right").clip(0, len(p) - 1))


def ais_run(system, schedule, cfg, rng=None):
    """One annealed importance sampling pass along the schedule.

    Starts from an exact base draw, accumulates the telescoping bridge-ratio
    log weight, applying one HMC transition per temperature. The returned
    log weight estimates log Z directly: E[exp(log_weight)] = Z.
    """
    rng = _resolve_rng(cfg, rng)
    x = system.base.sample(rng)
    bridge = _BridgeStepper(system)
    phi, psi = bridge.phi_psi(x)
    _check_init(phi + psi)
    log_r = 0.0
    bvals = schedule.betas
    for nidx in range(len(bvals) - 1):
        d_here = phi + system.log_zeta - psi
        log_r -= (bvals[nidx + 1] - bvals[nidx]) * d_here
        bridge.set_beta(bvals[nidx + 1])
        pot = bvals[nidx + 1] * (phi + system.log_zeta) + (1.0 - bvals[nidx + 1]) * psi
        x, _, acc, _, _ = _hmc_transition(bridge, x, pot, cfg, rng)
        if acc:
            phi, psi = bridge.phi_psi(x)
    return x, log_r + system.log_zeta


def ais_batch(system, schedule, cfg, n_runs, rng=None):
    """Convenience wrapper: n_runs independent AIS passes.

    Returns (final_states (n, dim), log_weights (n,)).
    """
    rng = _resolve_rng(cfg, rng)
    finals = np.empty((int(n_runs), system.dim))
    log_w = np.empty(int(n_runs))
    for i in range(int(n_runs)):
        finals[i], log_w[i] = ais_run(system, schedule, cfg, rng=rng)
    return finals, log_w


def adapted_weights(trace, schedule):
    """Geyer-style weight update from a pilot simulated-tempering trace.

    Sets w_n <- w_n - log p_hat(n) (shifted so w_0 = 0), flattening the
    empirical temperature marginal estimated from the stored conditionals.
    """
    if trace.log_conditionals is None:
        raise UsageError("trace has no stored conditionals; run simulated tempering")
    lc = trace.log_conditionals
    m = lc.max(axis=0)
    log_p = m + np.log(np.exp(lc - m).sum(axis=0)) - math.log(lc.shape[0])
    w = schedule.weights - log_p
    w = w - w[0]
    return TemperatureSchedule(schedule.betas, w)
