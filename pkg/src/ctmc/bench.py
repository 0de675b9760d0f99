"""Benchmark harness: the 1-D bimodal illustration and the desk-scale
Boltzmann-relaxation comparison.

Everything emitted is deterministic for a fixed config (CSV + JSON,
floats at full precision); wall-clock timings are opt-in because they are
the one intrinsically non-reproducible output.
"""

import csv
import json
import math
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from .basefit import fit_relaxation_base
from .errors import SizeLimitError, UsageError
from .estimators import (
    Quadrature1DOracle,
    ais_expectation,
    ais_log_Z,
    beta_marginal_rb,
    check_marginal_bounds,
    compute_report,
    ct_expectation,
    ct_log_Z,
    ct_moments,
    st_log_Z,
    st_moments,
)
from .models import (
    GaussianDensity,
    GaussianMixtureModel,
    bm_exhaustive_oracle,
    generate_bm_params,
    relaxation_from_bm,
    relaxation_true_moments,
)
from .samplers import (
    HmcConfig,
    ais_batch,
    gibbs_ct_chain,
    hmc_chain,
    joint_ct_chain,
    linear_schedule,
    simulated_tempering_chain,
)
from .tempering import ExtendedState, TemperedSystem

EXPERIMENTS = ("bimodal1d", "relaxation")

_BIMODAL_SAMPLERS = {
    "hmc": {"step_size": 0.12, "n_leapfrog": 8, "jitter": 0.2},
    "joint_ct": {"step_size": 0.45, "n_leapfrog": 16, "jitter": 0.2},
    "gibbs_ct": {"step_size": 0.45, "n_leapfrog": 12, "jitter": 0.2},
}

# per-sampler n_samples equalize wall-clock: one simulated-tempering
# iteration costs roughly 1.5x a joint-CT one (conditional vector over the
# whole schedule) and a Gibbs-CT iteration is the cheapest of the three
_RELAXATION_SAMPLERS = {
    "joint_ct": {"step_size": 0.32, "n_leapfrog": 16, "jitter": 0.2},
    "gibbs_ct": {"step_size": 0.32, "n_leapfrog": 12, "jitter": 0.2,
                 "n_samples_scale": 1.33},
    "st": {"step_size": 0.32, "n_leapfrog": 12, "jitter": 0.2,
           "n_samples_scale": 0.67},
    "ais": {"step_size": 0.32, "n_leapfrog": 10, "jitter": 0.2},
}


@dataclass(frozen=True)
class ExperimentConfig:
    """Configuration of one benchmark run; JSON round-trippable."""

    experiment: str
    seeds: tuple = (0, 1, 2, 3, 4)
    n_samples: int = 100_000
    samplers: dict = None
    checkpoints: tuple = ()
    master_seed: int = 20_17
    out_dir: str = ""

    # bimodal settings; the separation is deep enough that plain HMC stays
    # trapped in its starting mode over 1e5 iterations
    mixture_weights: tuple = (0.65, 0.35)
    mixture_means: tuple = (-2.5, 2.5)
    mixture_sds: tuple = (0.5, 0.5)
    mode_cut: float = 0.0
    marginal_grid_size: int = 101
    bound_grid_size: int = 21

    # relaxation settings
    n_units: int = 12
    n_param_sets: int = 5
    relaxation_eps: float = 1e-6
    meanfield_inits: int = 24
    elbo_samples: int = 1000
    control_mass: float = 0.5
    st_n_betas: int = 200
    ais_n_temps: tuple = (50, 200, 1000)
    ais_n_runs: int = 16

    def __post_init__(self):
        if self.experiment not in EXPERIMENTS:
            raise UsageError(f"experiment must be one of {EXPERIMENTS}")
        if not self.seeds:
            raise UsageError("at least one chain seed is required")
        samplers = self.samplers
        if samplers is None:
            samplers = (
                _BIMODAL_SAMPLERS if self.experiment == "bimodal1d" else _RELAXATION_SAMPLERS
            )
        if not samplers:
            raise UsageError("at least one sampler must be selected")
        object.__setattr__(self, "samplers", {k: dict(v) for k, v in samplers.items()})
        object.__setattr__(self, "seeds", tuple(int(s) for s in self.seeds))
        cps = tuple(int(c) for c in self.checkpoints) or _default_checkpoints(self.n_samples)
        object.__setattr__(self, "checkpoints", cps)

    def hmc_config(self, sampler, seed=0):
        d = dict(self.samplers[sampler])
        d.pop("n_samples_scale", None)
        d["seed"] = seed
        return HmcConfig(**d)

    def samples_for(self, sampler):
        scale = self.samplers[sampler].get("n_samples_scale", 1.0)
        return max(10, int(round(self.n_samples * scale)))

    def checkpoints_for(self, sampler):
        scale = self.samplers[sampler].get("n_samples_scale", 1.0)
        return tuple(max(10, int(round(c * scale))) for c in self.checkpoints)

    def to_dict(self):
        d = asdict(self)
        d["seeds"] = list(self.seeds)
        d["checkpoints"] = list(self.checkpoints)
        d["ais_n_temps"] = list(self.ais_n_temps)
        for k in ("mixture_weights", "mixture_means", "mixture_sds"):
            d[k] = list(getattr(self, k))
        return d

    @classmethod
    def from_dict(cls, d):
        known = {f for f in cls.__dataclass_fields__}
        extra = set(d) - known
        if extra:
            raise UsageError(f"unknown config keys: {sorted(extra)}")
        d = dict(d)
        for k in ("seeds", "checkpoints", "ais_n_temps", "mixture_weights",
                  "mixture_means", "mixture_sds"):
            if k in d:
                d[k] = tuple(d[k])
        return cls(**d)


def _default_checkpoints(n_samples):
    cps = [n_samples // 8, n_samples // 4, n_samples // 2, n_samples]
    return tuple(sorted({max(c, 10) for c in cps}))


def default_config(experiment, **overrides):
    if experiment == "bimodal1d":
        base = dict(experiment="bimodal1d", n_samples=100_000)
    else:
        base = dict(
            experiment="relaxation",
            n_samples=64_000,
            checkpoints=(8000, 16000, 32000, 64000),
        )
    base.update(overrides)
    return ExperimentConfig(**base)


def write_json(obj, path):
    with open(path, "w") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _write_csv(path, header, rows):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for row in rows:
            writer.writerow([_cell(v) for v in row])


def _cell(v):
    if isinstance(v, float):
        return f"{v:.17g}"
    return str(v)


def _rng_for(*key):
    return np.random.default_rng(np.random.SeedSequence(list(int(k) for k in key)))


# ---------------------------------------------------------------------------
# bimodal experiment


def build_bimodal_target(config):
    variances = [[sd * sd] for sd in config.mixture_sds]
    return GaussianMixtureModel(
        config.mixture_weights,
        [[m] for m in config.mixture_means],
        variances=variances,
    )


def build_bimodal_system(config):
    """Target mixture, moment-matched Gaussian base, zeta = Z = 1."""
    target = build_bimodal_target(config)
    base = GaussianDensity(target.known_mean, target.known_cov)
    return TemperedSystem(target=target, base=base, log_zeta=0.0)


def run_bimodal1d(config, out_dir, timings=False):
    """Mode-trapping comparison plus the full continuous-tempering artifact
    set: traces, estimate reports, beta-marginal grid, bound report and
    histogram data."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    t_start = time.perf_counter()
    system = build_bimodal_system(config)
    target = system.target
    write_json(config.to_dict(), out / "config_echo.json")
    write_json(system.to_dict(), out / "system.json")

    true_minor_mass = target.tail_mass(config.mode_cut)
    results = {
        "true_log_z": 0.0,
        "true_minor_mass": true_minor_mass,
        "mode_cut": config.mode_cut,
        "methods": {},
    }
    timing = {}

    left_mode = np.array([min(config.mixture_means)])
    for name in config.samplers:
        t0 = time.perf_counter()
        per_seed = {}
        for seed in config.seeds:
            cfg = config.hmc_config(name, seed)
            rng = _rng_for(config.master_seed, seed, _method_id(name))
            if name == "hmc":
                trace = hmc_chain(target, left_mode.copy(), cfg, config.n_samples, rng=rng)
                other_frac = float(np.mean(trace.xs[:, 0] > config.mode_cut))
                per_seed[seed] = {
                    "acceptance_rate": trace.acceptance_rate,
                    "other_mode_fraction": other_frac,
                }
                if seed == config.seeds[0]:
                    _emit_plain_hist(config, system, trace, out)
            elif name in ("joint_ct", "gibbs_ct"):
                x0 = system.base.sample(rng)
                if name == "joint_ct":
                    trace = joint_ct_chain(
                        system, ExtendedState(x=x0, u=0.0), cfg, config.n_samples, rng=rng
                    )
                else:
                    trace = gibbs_ct_chain(system, x0, cfg, config.n_samples, rng=rng)
                report = compute_report(trace, system)
                write_json(report.to_dict(), out / f"report_{name}_seed{seed}.json")
                minor = ct_expectation(
                    trace, lambda x: float(x[0] > config.mode_cut), "target"
                )
                per_seed[seed] = {
                    "acceptance_rate": trace.acceptance_rate,
                    "log_z_hat": report.log_z_hat,
                    "minor_mass_hat": minor,
                }
            else:
                raise UsageError(f"bimodal experiment does not support sampler {name!r}")
            trace.save(out / f"trace_{name}_seed{seed}.csv")
            write_json(trace.summary(), out / f"trace_{name}_seed{seed}.summary.json")
            if name != "hmc" and seed == config.seeds[0]:
                _emit_marginal_and_hist(config, system, trace, name, out)
        results["methods"][name] = per_seed
        timing[name] = time.perf_counter() - t0

    oracle = Quadrature1DOracle(system)
    bound_grid = np.linspace(0.0, 1.0, config.bound_grid_size)
    bound_report = check_marginal_bounds(system, oracle, bound_grid)
    write_json(bound_report.to_dict(), out / "bound_report.json")
    results["bounds_passed"] = bound_report.passed
    write_json(results, out / "results.json")
    if timings:
        timing["total"] = time.perf_counter() - t_start
        write_json(timing, out / "timings.json")
    return results


def _emit_marginal_and_hist(config, system, trace, name, out):
    grid = np.linspace(0.0, 1.0, config.marginal_grid_size)
    rb = beta_marginal_rb(trace, grid)
    oracle = Quadrature1DOracle(system)
    truth = oracle.beta_marginal(grid)
    _write_csv(
        out / f"beta_marginal_{name}.csv",
        ["beta", "density_rb", "density_quadrature"],
        zip(grid.tolist(), rb.tolist(), truth.tolist()),
    )

    edges = _hist_edges(config)
    centers = 0.5 * (edges[:-1] + edges[1:])
    # importance-weighted histogram of the tempered chain against the truth
    from .tempering import log_w1

    lw = log_w1(trace.deltas)
    w = np.exp(lw - lw.max())
    hist_w, _ = np.histogram(trace.xs[:, 0], bins=edges, weights=w)
    hist_w = hist_w / (hist_w.sum() * np.diff(edges))
    true_pdf = np.array(
        [math.exp(-system.target.potential(np.array([c]))) for c in centers]
    )
    _write_csv(
        out / f"histogram_{name}.csv",
        ["x", "weighted_density", "true_density"],
        zip(centers.tolist(), hist_w.tolist(), true_pdf.tolist()),
    )


def _hist_edges(config):
    lo = min(config.mixture_means) - 4 * max(config.mixture_sds)
    hi = max(config.mixture_means) + 4 * max(config.mixture_sds)
    return np.linspace(lo, hi, 81)


def _emit_plain_hist(config, system, trace, out):
    edges = _hist_edges(config)
    centers = 0.5 * (edges[:-1] + edges[1:])
    hist, _ = np.histogram(trace.xs[:, 0], bins=edges)
    dens = hist / (hist.sum() * np.diff(edges))
    true_pdf = np.array(
        [math.exp(-system.target.potential(np.array([c]))) for c in centers]
    )
    _write_csv(
        out / "histogram_hmc.csv",
        ["x", "density", "true_density"],
        zip(centers.tolist(), dens.tolist(), true_pdf.tolist()),
    )


def _method_id(name):
    return {"hmc": 1, "joint_ct": 2, "gibbs_ct": 3, "st": 4, "ais": 5}[name]


# ---------------------------------------------------------------------------
# relaxation experiment


def build_relaxation_case(config, set_seed):
    """One parameter set: BM draw, exact oracle, relaxation, fitted base."""
    bm = generate_bm_params(set_seed, config.n_units)
    if config.n_units > 20:
        raise SizeLimitError("ground truth requires enumerable unit counts")
    oracle = bm_exhaustive_oracle(bm)
    relaxation = relaxation_from_bm(bm, config.relaxation_eps)
    log_z, mean, cov = relaxation_true_moments(relaxation, oracle)
    base, log_zeta, _ = fit_relaxation_base(
        relaxation,
        config.meanfield_inits,
        config.elbo_samples,
        seed=set_seed + 90_001,
    )
    system = TemperedSystem(
        target=relaxation,
        base=base,
        log_zeta=log_zeta,
        control_mass=config.control_mass,
    )
    truth = {"log_z": log_z, "mean": mean, "cov": cov}
    return bm, oracle, system, truth


def _moment_errors(truth, log_z_hat, mean_hat, cov_hat):
    d = truth["mean"].shape[0]
    return {
        "log_z": abs(log_z_hat - truth["log_z"]),
        "mean": float(np.linalg.norm(mean_hat - truth["mean"]) / math.sqrt(d)),
        "cov": float(np.linalg.norm(cov_hat - truth["cov"], "fro") / d),
    }


def _relaxation_cell(payload):
    """One (parameter set, chain seed, method) run; module-level for pickling."""
    cfg_dict, set_seed, chain_seed, method = payload
    config = ExperimentConfig.from_dict(cfg_dict)
    _, _, system, truth = build_relaxation_case(config, set_seed)
    cfg = config.hmc_config(method, chain_seed)
    rng = _rng_for(config.master_seed, set_seed, chain_seed, _method_id(method))
    t0 = time.perf_counter()
    rows = []
    if method == "ais":
        for n_temps in config.ais_n_temps:
            schedule = linear_schedule(n_temps)
            finals, log_w = ais_batch(system, schedule, cfg, config.ais_n_runs, rng=rng)
            log_z_hat = ais_log_Z(log_w)
            mean_hat = ais_expectation(finals, log_w, lambda x: x)
            second = ais_expectation(finals, log_w, lambda x: np.outer(x, x))
            cov_hat = second - np.outer(mean_hat, mean_hat)
            errs = _moment_errors(truth, log_z_hat, mean_hat, cov_hat)
            rows.append((method, int(n_temps), errs, time.perf_counter() - t0))
    else:
        x0 = system.base.sample(rng)
        n_samples = config.samples_for(method)
        if method == "joint_ct":
            trace = joint_ct_chain(
                system, ExtendedState(x=x0, u=0.0), cfg, n_samples, rng=rng
            )
        elif method == "gibbs_ct":
            trace = gibbs_ct_chain(system, x0, cfg, n_samples, rng=rng)
        elif method == "st":
            schedule = linear_schedule(config.st_n_betas)
            trace = simulated_tempering_chain(
                system, schedule, x0, cfg, n_samples, rng=rng
            )
        else:
            raise UsageError(f"unknown method {method!r}")
        for cp in config.checkpoints_for(method):
            part = trace.head(cp)
            if method == "st":
                schedule = linear_schedule(config.st_n_betas)
                log_z_hat = st_log_Z(part, schedule).rao_blackwell
                mean_hat, cov_hat = st_moments(part)
            else:
                log_z_hat = ct_log_Z(part, system.log_zeta)
                mean_hat, cov_hat = ct_moments(part)
            errs = _moment_errors(truth, log_z_hat, mean_hat, cov_hat)
            rows.append((method, int(cp), errs, time.perf_counter() - t0))
    return (set_seed, chain_seed, method), rows


def run_relaxation(config, out_dir, timings=False):
    """Relative-RMSE table over (parameter sets x chain seeds x methods),
    normalized per quantity by the variational base approximation's RMSE."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    write_json(config.to_dict(), out / "config_echo.json")
    set_seeds = list(range(config.n_param_sets))

    base_errs = {}
    for s in set_seeds:
        bm, oracle, system, truth = build_relaxation_case(config, s)
        set_dir = out / f"set{s}"
        set_dir.mkdir(exist_ok=True)
        write_json(bm.to_dict(), set_dir / "bm.json")
        write_json(
            {
                "bm_oracle": oracle.to_dict(),
                "relaxation": {
                    "log_z": truth["log_z"],
                    "mean": truth["mean"].tolist(),
                    "cov": truth["cov"].tolist(),
                },
            },
            set_dir / "oracle.json",
        )
        base_doc = system.base.to_dict()
        base_doc["log_zeta"] = system.log_zeta
        write_json(base_doc, set_dir / "base.json")
        base_errs[s] = _moment_errors(
            truth, system.log_zeta, system.base.known_mean, system.base.known_cov
        )

    norms = {
        q: math.sqrt(np.mean([base_errs[s][q] ** 2 for s in set_seeds]))
        for q in ("log_z", "mean", "cov")
    }

    tasks = [
        (config.to_dict(), s, seed, method)
        for s in set_seeds
        for seed in config.seeds
        for method in config.samplers
    ]
    results = {}
    n_workers = _worker_count(len(tasks))
    if n_workers > 1:
        with ProcessPoolExecutor(max_workers=n_workers) as pool:
            for key, rows in pool.map(_relaxation_cell, tasks):
                results[key] = rows
    else:
        for task in tasks:
            key, rows = _relaxation_cell(task)
            results[key] = rows

    raw_rows = []
    agg = {}
    cell_times = {}
    for (set_seed, chain_seed, method), rows in sorted(results.items()):
        for _, budget, errs, elapsed in rows:
            raw_rows.append(
                (set_seed, chain_seed, method, budget,
                 errs["log_z"], errs["mean"], errs["cov"])
            )
            agg.setdefault((method, budget), []).append(errs)
            cell_times[f"{method}/set{set_seed}/seed{chain_seed}"] = elapsed
    _write_csv(
        out / "raw_errors.csv",
        ["set", "seed", "method", "budget", "err_log_z", "err_mean", "err_cov"],
        raw_rows,
    )

    table_rows = []
    rel = {}
    for (method, budget), errlist in sorted(agg.items()):
        row = {
            q: math.sqrt(np.mean([e[q] ** 2 for e in errlist])) / norms[q]
            for q in ("log_z", "mean", "cov")
        }
        rel[(method, budget)] = row
        table_rows.append((method, budget, row["log_z"], row["mean"], row["cov"]))
    _write_csv(
        out / "rmse_table.csv",
        ["method", "budget", "rel_rmse_log_z", "rel_rmse_mean", "rel_rmse_cov"],
        table_rows,
    )
    write_json(
        {
            "base_rmse": norms,
            "relative_rmse": {
                f"{m}@{b}": v for (m, b), v in sorted(rel.items())
            },
        },
        out / "rmse_summary.json",
    )
    if timings:
        write_json(cell_times, out / "timings.json")
    return rel


def _worker_count(n_tasks):
    env = os.environ.get("CTMC_THREADS", "").strip()
    if env:
        return max(1, min(int(env), n_tasks))
    return max(1, min(os.cpu_count() or 1, n_tasks, 8))


def run_experiment(config, out_dir, timings=False):
    if config.experiment == "bimodal1d":
        return run_bimodal1d(config, out_dir, timings=timings)
    return run_relaxation(config, out_dir, timings=timings)
