"""Benchmark the compiled kernels against the pure numpy fallback.

Run as `python -m ctmc.kernel_bench [--quick]`. Times fused leapfrog
trajectories on the extended tempered system over a Boltzmann relaxation
target, plus exhaustive enumeration, for both backends.
"""

import argparse
import time

import numpy as np

from . import _kernels
from ._kernels import pure as pure_kernels
from .basefit import fit_relaxation_base
from .models import generate_bm_params, relaxation_from_bm
from .samplers import _CompiledStepper, _PureStepper
from .tempering import TemperedSystem, delta, extended_potential


def _build_case(n_units=12, seed=0):
    bm = generate_bm_params(seed, n_units)
    relaxation = relaxation_from_bm(bm)
    base, log_zeta, _ = fit_relaxation_base(relaxation, 16, 500, seed=seed)
    return bm, TemperedSystem(target=relaxation, base=base, log_zeta=log_zeta)


def _pure_stepper(system):
    d = system.dim

    def pot(q):
        return extended_potential(system, q[:d], q[d])

    def grad(q):
        x, u = q[:d], q[d]
        b = system.control.beta(u)
        gx = b * system.target.gradient(x) + (1.0 - b) * system.base.gradient(x)
        gu = system.control.beta_grad(u) * delta(system, x) - system.control.dlog_beta_grad(u)
        return np.concatenate([gx, [gu]])

    mass = np.concatenate([system.mass_diag, [system.control_mass]])
    return _PureStepper(pot, grad, mass)


def _time_stepper(stepper, dim, n_traj, n_steps, step_size=0.2):
    rng = np.random.default_rng(42)
    q = np.zeros(dim + 1)
    t0 = time.perf_counter()
    for _ in range(n_traj):
        p = rng.standard_normal(dim + 1)
        q, p, _, _ = stepper.run(q, p, step_size, n_steps)
    elapsed = time.perf_counter() - t0
    return n_traj * n_steps / elapsed, elapsed


def main(argv=None):
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--quick", action="store_true", help="smaller workload")
    parser.add_argument("--units", type=int, default=12)
    args = parser.parse_args(argv)

    n_traj = 200 if args.quick else 2000
    n_steps = 16
    bm, system = _build_case(args.units)
    dim = system.dim

    pure = _pure_stepper(system)
    rate_pure, t_pure = _time_stepper(pure, dim, n_traj, n_steps)
    print(f"pure leapfrog:     {rate_pure:12.0f} steps/s ({t_pure:.2f}s)")

    if _kernels.COMPILED:
        handle = _kernels.build_potential(system.extended_kernel_spec())
        mass = np.concatenate([system.mass_diag, [system.control_mass]])
        fast = _CompiledStepper(handle, mass)
        rate_fast, t_fast = _time_stepper(fast, dim, n_traj, n_steps)
        print(f"compiled leapfrog: {rate_fast:12.0f} steps/s ({t_fast:.2f}s)")
        print(f"speedup: {rate_fast / rate_pure:.1f}x")
    else:
        print("compiled backend unavailable; pure only")

    t0 = time.perf_counter()
    pure_kernels.bm_enumerate(bm.W, bm.b)
    t_pure = time.perf_counter() - t0
    print(f"pure enumeration ({args.units} units):     {t_pure * 1e3:9.1f} ms")
    if _kernels.COMPILED:
        t0 = time.perf_counter()
        _kernels._core.bm_enumerate(bm.W, bm.b)
        t_fast = time.perf_counter() - t0
        print(f"compiled enumeration ({args.units} units): {t_fast * 1e3:9.1f} ms")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
