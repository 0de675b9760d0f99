"""Command-line interface.

Subcommands: bmgen, oracle, fitbase, sample, estimate, bench. Every
subcommand honors --seed, --config and --out; exit codes are 0 on success,
1 on usage errors (with help text) and 2 on numerical failures.
"""

import argparse
import csv
import json
import sys
from pathlib import Path

import numpy as np

from . import _kernels
from .basefit import fit_relaxation_base
from .bench import ExperimentConfig, default_config, run_experiment, write_json
from .errors import NumericalError, UsageError
from .estimators import (
    ais_expectation,
    ais_log_Z,
    compute_report,
    compute_st_report,
)
from .models import (
    BoltzmannMachine,
    RelaxationModel,
    bm_exhaustive_oracle,
    generate_bm_params,
    load_model,
    model_from_dict,
    relaxation_from_bm,
    relaxation_true_moments,
)
from .samplers import (
    ChainTrace,
    HmcConfig,
    TemperatureSchedule,
    ais_batch,
    gibbs_ct_chain,
    hmc_chain,
    joint_ct_chain,
    linear_schedule,
    simulated_tempering_chain,
)
from .tempering import ExtendedState, system_from_dict


class _Parser(argparse.ArgumentParser):
    """argparse that reports usage problems through UsageError (exit 1)."""

    def error(self, message):
        raise UsageError(f"{message}\n\n{self.format_help()}")


def _build_parser():
    parser = _Parser(prog="ctmc", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--seed", type=int, default=None, help="seed override")
        p.add_argument("--config", type=Path, default=None, help="JSON config file")
        p.add_argument("--out", type=Path, default=Path("."), help="output directory")

    p = sub.add_parser("bmgen", parents=[], help="emit a Boltzmann machine JSON")
    common(p)
    p.add_argument("--dim", type=int, default=None, help="number of units")

    p = sub.add_parser("oracle", help="exact moments of a Boltzmann machine")
    common(p)
    p.add_argument("--model", type=Path, default=None, help="BM model JSON")
    p.add_argument("--eps", type=float, default=None, help="relaxation diagonal slack")

    p = sub.add_parser("fitbase", help="fit a Gaussian base + log zeta")
    common(p)
    p.add_argument("--model", type=Path, default=None, help="BM or relaxation JSON")
    p.add_argument("--inits", type=int, default=None, help="mean-field restarts")
    p.add_argument("--elbo-samples", type=int, default=None)
    p.add_argument("--eps", type=float, default=None)

    p = sub.add_parser("sample", help="run one sampler; emit trace + summary")
    common(p)

    p = sub.add_parser("estimate", help="trace CSV -> estimate report JSON")
    common(p)
    p.add_argument("--trace", type=Path, default=None, help="trace CSV path")
    p.add_argument("--log-zeta", type=float, default=None)
    p.add_argument("--burn-in", type=float, default=None)

    p = sub.add_parser("bench", help="run a benchmark experiment")
    p.add_argument("--seed", type=int, default=None, help="master seed override")
    p.add_argument("--config", type=Path, default=None, help="JSON config file")
    p.add_argument("--out", type=Path, default=None,
                   help="output directory (default: config out_dir or '.')")
    p.add_argument("experiment", nargs="?", default=None,
                   choices=["bimodal1d", "relaxation"])
    p.add_argument("--timings", action="store_true",
                   help="also write wall-clock timings (not byte-reproducible)")
    return parser


def _load_config(args):
    if args.config is None:
        return {}
    with open(args.config) as fh:
        return json.load(fh)


def _out_dir(args):
    args.out.mkdir(parents=True, exist_ok=True)
    return args.out


def _cmd_bmgen(args):
    cfg = _load_config(args)
    dim = args.dim if args.dim is not None else cfg.get("dim", 12)
    seed = args.seed if args.seed is not None else cfg.get("seed", 0)
    bm = generate_bm_params(
        seed,
        dim,
        s1=cfg.get("s1", 6.0),
        s2=cfg.get("s2", 2.0),
        bias_scale=cfg.get("bias_scale", 0.1),
    )
    out = _out_dir(args) / "bm.json"
    write_json(bm.to_dict(), out)
    print(out)
    return 0


def _require(value, flag):
    if value is None:
        raise UsageError(f"missing required option {flag}")
    return value


def _cmd_oracle(args):
    cfg = _load_config(args)
    model_path = args.model or cfg.get("model")
    bm = load_model(Path(_require(model_path, "--model")))
    if not isinstance(bm, BoltzmannMachine):
        raise UsageError("oracle expects a Boltzmann machine model JSON")
    eps = args.eps if args.eps is not None else cfg.get("eps", 1e-6)
    oracle = bm_exhaustive_oracle(bm)
    relaxation = relaxation_from_bm(bm, eps)
    log_z, mean, cov = relaxation_true_moments(relaxation, oracle)
    doc = {
        "bm_oracle": oracle.to_dict(),
        "relaxation": {
            "eps": eps,
            "log_z": log_z,
            "mean": mean.tolist(),
            "cov": cov.tolist(),
        },
    }
    out = _out_dir(args) / "oracle.json"
    write_json(doc, out)
    print(out)
    return 0


def _cmd_fitbase(args):
    cfg = _load_config(args)
    model_path = args.model or cfg.get("model")
    model = load_model(Path(_require(model_path, "--model")))
    eps = args.eps if args.eps is not None else cfg.get("eps", 1e-6)
    if isinstance(model, BoltzmannMachine):
        relaxation = relaxation_from_bm(model, eps)
    elif isinstance(model, RelaxationModel):
        relaxation = model
    else:
        raise UsageError("fitbase expects a Boltzmann machine or relaxation JSON")
    seed = args.seed if args.seed is not None else cfg.get("seed", 0)
    inits = args.inits if args.inits is not None else cfg.get("inits", 24)
    mc = (
        args.elbo_samples
        if args.elbo_samples is not None
        else cfg.get("elbo_samples", 1000)
    )
    base, log_zeta, _ = fit_relaxation_base(relaxation, inits, mc, seed=seed)
    doc = base.to_dict()
    doc["log_zeta"] = log_zeta
    out = _out_dir(args) / "base.json"
    write_json(doc, out)
    print(out)
    return 0


def _cmd_sample(args):
    cfg = _load_config(args)
    if not cfg:
        raise UsageError("sample requires --config with a sampler specification")
    sampler = cfg.get("sampler")
    n_samples = int(cfg.get("n_samples", 1000))
    hmc_dict = dict(cfg.get("hmc", {}))
    if args.seed is not None:
        hmc_dict["seed"] = args.seed
    hcfg = HmcConfig(**hmc_dict)
    out = _out_dir(args)

    if sampler == "hmc":
        model = model_from_dict(cfg["model"] if "model" in cfg else cfg["system"]["target"])
        init = np.asarray(cfg.get("init", np.zeros(model.dim)), dtype=np.float64)
        trace = hmc_chain(model, init, hcfg, n_samples)
        return _emit_trace(out, trace, log_zeta=None)

    system = system_from_dict(cfg["system"])
    rng = np.random.default_rng(np.uint64(hcfg.seed))
    init = cfg.get("init")
    x0 = system.base.sample(rng) if init is None else np.asarray(init, dtype=np.float64)
    if sampler == "joint_ct":
        trace = joint_ct_chain(system, ExtendedState(x=x0, u=0.0), hcfg, n_samples, rng=rng)
    elif sampler == "gibbs_ct":
        trace = gibbs_ct_chain(system, x0, hcfg, n_samples, rng=rng)
    elif sampler == "st":
        schedule = linear_schedule(int(cfg.get("st_n_betas", 200)))
        trace = simulated_tempering_chain(system, schedule, x0, hcfg, n_samples, rng=rng)
    elif sampler == "ais":
        n_temps = int(cfg.get("ais_n_temps", 200))
        n_runs = int(cfg.get("ais_n_runs", 16))
        finals, log_w = ais_batch(system, linear_schedule(n_temps), hcfg, n_runs, rng=rng)
        path = out / "ais.csv"
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["run", "log_weight"] + [f"x{i}" for i in range(system.dim)])
            for i in range(n_runs):
                writer.writerow(
                    [str(i), f"{log_w[i]:.17g}"] + [f"{v:.17g}" for v in finals[i]]
                )
        summary = {
            "sampler": "ais",
            "seed": int(hcfg.seed),
            "n_runs": n_runs,
            "n_temps": n_temps,
            "log_Z_hat": ais_log_Z(log_w),
            "log_zeta": system.log_zeta,
            "backend": _kernels.BACKEND,
        }
        write_json(summary, out / "ais.summary.json")
        print(path)
        return 0
    else:
        raise UsageError(f"unknown sampler {sampler!r}")
    return _emit_trace(out, trace, log_zeta=system.log_zeta)


def _emit_trace(out, trace, log_zeta):
    path = out / "trace.csv"
    trace.save(path)
    summary = trace.summary()
    summary["backend"] = _kernels.BACKEND
    if log_zeta is not None:
        if trace.meta.get("sampler") == "st":
            schedule = TemperatureSchedule(
                np.asarray(trace.meta["schedule_betas"]),
                np.asarray(trace.meta["schedule_weights"]),
            )
            summary["log_Z_hat"] = st_log_zeta_summary(trace, schedule)
        else:
            from .estimators import ct_log_Z

            summary["log_Z_hat"] = ct_log_Z(trace, log_zeta)
    write_json(summary, out / "trace.summary.json")
    print(path)
    return 0


def st_log_zeta_summary(trace, schedule):
    from .estimators import st_log_Z

    return st_log_Z(trace, schedule).rao_blackwell


def _cmd_estimate(args):
    cfg = _load_config(args)
    trace_path = args.trace or cfg.get("trace")
    trace_path = Path(_require(trace_path, "--trace"))
    burn_in = args.burn_in if args.burn_in is not None else cfg.get("burn_in", 0.1)
    out = _out_dir(args)

    with open(trace_path, newline="") as fh:
        header = fh.readline().strip().split(",")
    if header[:2] == ["run", "log_weight"]:
        return _estimate_ais(trace_path, out)

    trace = ChainTrace.load(trace_path)
    summary = _sidecar_summary(trace_path)
    log_zeta = args.log_zeta
    if log_zeta is None:
        log_zeta = cfg.get("log_zeta", summary.get("log_zeta"))
    if log_zeta is None:
        raise UsageError("log zeta unknown: pass --log-zeta or keep the summary sidecar")

    if trace.log_conditionals is not None and "schedule_betas" in summary:
        schedule = TemperatureSchedule(
            np.asarray(summary["schedule_betas"]),
            np.asarray(summary["schedule_weights"]),
        )
        trace.meta["log_zeta"] = log_zeta
        report = compute_st_report(trace, schedule, burn_in=burn_in)
    else:
        trace.meta["log_zeta"] = log_zeta
        report = compute_report(trace, system=None, log_zeta=log_zeta, burn_in=burn_in)
    out_path = out / "report.json"
    write_json(report.to_dict(), out_path)
    print(out_path)
    return 0


def _sidecar_summary(trace_path):
    p = trace_path.with_suffix("")  # drop .csv
    candidate = Path(str(p) + ".summary.json")
    if candidate.exists():
        with open(candidate) as fh:
            return json.load(fh)
    return {}


def _estimate_ais(path, out):
    runs = []
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        next(reader)
        for row in reader:
            runs.append([float(v) for v in row[1:]])
    arr = np.asarray(runs)
    log_w, finals = arr[:, 0], arr[:, 1:]
    mean = ais_expectation(finals, log_w, lambda x: x)
    second = ais_expectation(finals, log_w, lambda x: np.outer(x, x))
    doc = {
        "log_Z_hat": ais_log_Z(log_w),
        "mean_hat": np.atleast_1d(mean).tolist(),
        "cov_hat": (second - np.outer(mean, mean)).tolist(),
        "mcse": None,
        "base_check": None,
    }
    out_path = out / "report.json"
    write_json(doc, out_path)
    print(out_path)
    return 0


def _cmd_bench(args):
    cfg_dict = _load_config(args)
    experiment = args.experiment or cfg_dict.get("experiment")
    if experiment is None:
        raise UsageError("bench needs an experiment name or a config file")
    if cfg_dict:
        cfg_dict.setdefault("experiment", experiment)
        config = ExperimentConfig.from_dict(cfg_dict)
    else:
        config = default_config(experiment)
    if args.seed is not None:
        config = ExperimentConfig.from_dict(
            {**config.to_dict(), "master_seed": args.seed}
        )
    if args.out is None:
        args.out = Path(config.out_dir or ".")
    run_experiment(config, _out_dir(args), timings=args.timings)
    print(args.out)
    return 0


_COMMANDS = {
    "bmgen": _cmd_bmgen,
    "oracle": _cmd_oracle,
    "fitbase": _cmd_fitbase,
    "sample": _cmd_sample,
    "estimate": _cmd_estimate,
    "bench": _cmd_bench,
}


def main(argv=None):
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
        return _COMMANDS[args.command](args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except NumericalError as exc:
        print(f"numerical error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
