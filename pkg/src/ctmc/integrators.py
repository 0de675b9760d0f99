"""Leapfrog (Stormer-Verlet) integration for separable Hamiltonians.

One integrator serves both plain HMC and the tempered samplers: the extended
state is flattened to dim+1 positions with mass vector (M, m) before it gets
here.
"""

from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .errors import DivergenceError, UsageError

#: a trajectory whose Hamiltonian drifts by more than this is divergent
DIVERGENCE_THRESHOLD = 1000.0


@dataclass(frozen=True)
class SeparableSystem:
    """Hamiltonian with quadratic kinetic energy p' M^-1 p / 2.

    mass_diag is the diagonal of M (the momentum covariance). potential is
    optional; when given, samplers use it for divergence checks and
    Metropolis corrections.
    """

    position_dim: int
    potential_grad: Callable[[np.ndarray], np.ndarray]
    mass_diag: np.ndarray
    potential: Optional[Callable[[np.ndarray], float]] = None

    def __post_init__(self):
        m = np.asarray(self.mass_diag, dtype=np.float64)
        if m.shape != (self.position_dim,) or np.any(m <= 0):
            raise UsageError("mass_diag must be positive with length position_dim")
        object.__setattr__(self, "mass_diag", m)

    def kinetic(self, p):
        return 0.5 * float(p @ (p / self.mass_diag))


def leapfrog(system, q0, p0, step_size, n_steps):
    """Integrate n_steps of the half-kick / drift / half-kick scheme.

    Inner half-kicks are fused into full kicks. Exactly time-reversible up
    to floating-point roundoff: integrating from (q, -p) returns (q0, -p0).

    Raises DivergenceError as soon as a non-finite gradient or state is
    encountered; callers treat that as a rejected proposal.
    """
    if step_size <= 0:
        raise UsageError("step_size must be positive")
    if n_steps < 1:
        raise UsageError("n_steps must be at least 1")
    q = np.array(q0, dtype=np.float64)
    p = np.array(p0, dtype=np.float64)
    inv_mass = 1.0 / system.mass_diag
    eps = float(step_size)

    g = system.potential_grad(q)
    _check_finite(g)
    p -= 0.5 * eps * g
    for step in range(n_steps):
        q += eps * (p * inv_mass)
        g = system.potential_grad(q)
        _check_finite(g)
        # fused kick: full step inside, half step to finish
        p -= (eps if step < n_steps - 1 else 0.5 * eps) * g
    if not (np.all(np.isfinite(q)) and np.all(np.isfinite(p))):
        raise DivergenceError("non-finite state after leapfrog trajectory")
    return q, p


def _check_finite(g):
    if not np.all(np.isfinite(g)):
        raise DivergenceError("non-finite gradient during leapfrog trajectory")
