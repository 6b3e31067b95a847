"""Command-line interface.

Subcommands: `fit` (estimate a model from a dataset CSV), `experiment`
(multi-replication benchmark runs), `verify` (theorem-level checks with
PASS/FAIL verdicts), `cov` (standalone sandwich covariance for a stored
fit), and `simulate` (emit synthetic datasets).

Exit codes: 0 success, 1 verification failure, 2 usage or configuration
error.
"""

from __future__ import annotations

import argparse
import inspect
import json
import os
import secrets
import sys

import numpy as np

from ._version import __version__
from .asymptotics import ci_from_covariance, sandwich_covariance
from .config import (
    fit_config_from_config,
    load_config,
    load_dataset_csv,
    noise_from_config,
    spec_from_config,
)
from .errors import ConfigError, ConvMmdError
from .kernels import KernelMixture
from .models import (
    GaussianLocationModel,
    GaussianMixtureModel1D,
    GaussianScaleModel,
    LinearEivModel,
    LogisticEivModel,
)
from .optim import fit, warm_start
from . import simlab
from .simlab import (
    ExperimentSpec,
    derive_rng,
    gen_eivr_data,
    gen_gmm_data,
    gen_logistic_data,
    rows_to_csv,
    run_experiment,
    write_report,
)

VERIFY_HARNESSES = {
    "equivalence": simlab.verify_equivalence,
    "deviation-bound": simlab.verify_deviation_bound,
    "variance-bound": simlab.verify_variance_bound,
    "clt-rate": simlab.verify_clt_rate,
    "gradient-check": simlab.verify_gradient_check,
}


def _atomic_write(path: str, text: str):
    tmp = path + ".tmp"
    with open(tmp, "w") as fh:
        fh.write(text)
    os.replace(tmp, path)


def _resolve_seed(cfg: dict, override) -> int:
    if override is not None:
        cfg["seed"] = int(override)
    if "seed" not in cfg:
        cfg["seed"] = secrets.randbits(63)
        print(f"seed = {cfg['seed']} (drawn from entropy)")
    return int(cfg["seed"])


def _model_from_config(cfg: dict, dim: int):
    family = cfg.get("model")
    k = int(cfg.get("n_components", 1))
    if family == "gmm":
        return GaussianMixtureModel1D(k)
    if family == "linear_eiv":
        return LinearEivModel(k)
    if family == "logistic_eiv":
        return LogisticEivModel(tuple([k] * (dim - 1)))
    if family == "scale":
        return GaussianScaleModel()
    if family == "location":
        return GaussianLocationModel(sigma=float(cfg.get("location_sigma", 1.0)))
    raise ConfigError(
        f"unknown or missing model family {family!r}; valid: gmm, linear_eiv, "
        "logistic_eiv, scale, location"
    )


def cmd_fit(args) -> int:
    cfg = load_config(args.config)
    seed = _resolve_seed(cfg, args.seed)
    if "data" not in cfg:
        raise ConfigError("fit config is missing 'data' (dataset CSV path)")
    data, scales = load_dataset_csv(cfg["data"])
    noise = noise_from_config(cfg, per_observation_scales=scales)
    if noise.dim != data.shape[1]:
        raise ConfigError(
            f"noise model has {noise.dim} coordinates but the dataset has "
            f"{data.shape[1]} columns"
        )
    model = _model_from_config(cfg, data.shape[1])
    fit_cfg = fit_config_from_config(cfg)
    kernel = KernelMixture.from_data(data, seed=seed)
    init = warm_start(model, data)
    result = fit(model, data, noise, kernel, fit_cfg, init,
                 derive_rng(seed, 0, "fit"))

    payload = result.to_json_dict()
    payload["seed"] = seed
    payload["config"] = {**payload["config"],
                         **{k: v for k, v in cfg.items() if not k.startswith("fit.")}}
    del payload["wall_time"]  # kept out so identical runs are byte-identical

    level = float(cfg.get("ci_level", 0.95))
    b = int(cfg.get("sandwich_b", 50))
    if b > 0:
        est = sandwich_covariance(
            model, result.theta_hat, data, noise, kernel, b=b,
            m=int(cfg.get("sandwich_m", min(data.shape[0], 1000))),
            rng=derive_rng(seed, 0, "sandwich"),
        )
        cis = ci_from_covariance(result.theta_hat, est.covariance_c,
                                 data.shape[0], level)
        payload["asymptotics"] = {
            "covariance": est.covariance_c.tolist(),
            "curvature": est.curvature_g.tolist(),
            "score_covariance": est.score_cov_sigma.tolist(),
            "ci_level": level,
            "ci": cis.tolist(),
            "n_batches": est.n_batches_b,
            "batch_size": est.batch_size,
        }
        print(f"{'param':>8} {'estimate':>12} {'ci_lo':>12} {'ci_hi':>12}")
        for j, (th, (lo, hi)) in enumerate(zip(result.theta_hat, cis)):
            print(f"theta[{j}] {th:12.6f} {lo:12.6f} {hi:12.6f}")
    else:
        for j, th in enumerate(result.theta_hat):
            print(f"theta[{j}] {th:12.6f}")

    os.makedirs(args.out, exist_ok=True)
    _atomic_write(os.path.join(args.out, "fit.json"),
                  json.dumps(payload, indent=2, sort_keys=True) + "\n")
    print(f"wrote {os.path.join(args.out, 'fit.json')}")
    return 0


def cmd_experiment(args) -> int:
    cfg = load_config(args.config)
    _resolve_seed(cfg, args.seed)
    if args.replications is not None:
        cfg["replications"] = int(args.replications)
    spec = spec_from_config(cfg)
    report = run_experiment(spec)
    write_report(report, args.out)
    for agg in report.aggregates:
        se = "" if agg["se"] is None else f" +/- {agg['se']:.4g}"
        print(f"{agg['method']:>12} {agg['metric']:<16} {agg['mean']:.4g}{se}")
    if report.n_failures:
        print(f"WARNING: {report.n_failures} replication(s) failed")
    print(f"wrote report to {args.out}")
    return 0


def cmd_verify(args) -> int:
    harness = VERIFY_HARNESSES.get(args.which)
    if harness is None:
        raise ConfigError(
            f"unknown check {args.which!r}; valid: {', '.join(sorted(VERIFY_HARNESSES))}"
        )
    cfg = load_config(args.config) if args.config else {}
    params = inspect.signature(harness).parameters
    kwargs = {}
    for key, value in cfg.items():
        name = "base_seed" if key == "seed" else key
        if name in params:
            kwargs[name] = value
        elif key != "seed":
            raise ConfigError(f"unknown option {key!r} for check {args.which}")
    result = harness(**kwargs)
    verdict = "PASS" if result.passed else "FAIL"
    detail = ", ".join(f"{k}={v}" for k, v in result.summary.items())
    print(f"{verdict} {result.name}: {detail}")
    if args.out:
        os.makedirs(args.out, exist_ok=True)
        _atomic_write(os.path.join(args.out, f"{result.name}.csv"),
                      rows_to_csv(result.rows))
        _atomic_write(
            os.path.join(args.out, f"{result.name}.json"),
            json.dumps({"passed": result.passed, "summary": result.summary,
                        "config": cfg, "version": __version__},
                       indent=2, sort_keys=True) + "\n",
        )
    return 0 if result.passed else 1


def cmd_cov(args) -> int:
    cfg = load_config(args.config)
    seed = _resolve_seed(cfg, args.seed)
    try:
        with open(args.fit) as fh:
            stored = json.load(fh)
        theta_hat = np.asarray(stored["theta_hat"], dtype=float)
    except (OSError, KeyError, ValueError) as exc:
        raise ConfigError(f"cannot read stored fit {args.fit}: {exc}")
    data, scales = load_dataset_csv(cfg["data"])
    noise = noise_from_config(cfg, per_observation_scales=scales)
    model = _model_from_config(cfg, data.shape[1])
    kernel = KernelMixture.from_data(data, seed=seed)
    est = sandwich_covariance(
        model, theta_hat, data, noise, kernel,
        b=int(cfg.get("sandwich_b", 50)),
        m=int(cfg.get("sandwich_m", min(data.shape[0], 1000))),
        rng=derive_rng(seed, 0, "sandwich"),
    )
    payload = {
        "covariance": est.covariance_c.tolist(),
        "curvature": est.curvature_g.tolist(),
        "score_covariance": est.score_cov_sigma.tolist(),
        "n_batches": est.n_batches_b,
        "batch_size": est.batch_size,
        "theta_hat": theta_hat.tolist(),
        "seed": seed,
        "config": cfg,
        "version": __version__,
    }
    os.makedirs(args.out, exist_ok=True)
    _atomic_write(os.path.join(args.out, "cov.json"),
                  json.dumps(payload, indent=2, sort_keys=True) + "\n")
    print(f"wrote {os.path.join(args.out, 'cov.json')}")
    return 0


def cmd_simulate(args) -> int:
    cfg = load_config(args.config)
    _resolve_seed(cfg, args.seed)
    spec = spec_from_config(cfg)
    if spec.design == "gmm":
        _, noisy, _ = gen_gmm_data(spec, 0)
    elif spec.design == "eivr":
        _, noisy = gen_eivr_data(spec, 0)
    elif spec.design == "logistic":
        _, noisy = gen_logistic_data(spec, 0)
    else:
        raise ConfigError(f"simulate supports gmm, eivr, logistic; got {spec.design!r}")
    header = ",".join(f"x{j}" for j in range(noisy.shape[1]))
    lines = [header] + [",".join(repr(float(v)) for v in row) for row in noisy]
    os.makedirs(os.path.dirname(os.path.abspath(args.out)), exist_ok=True)
    _atomic_write(args.out, "\n".join(lines) + "\n")
    print(f"wrote {noisy.shape[0]} rows to {args.out}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="convmmd",
        description="Noise-aware parametric estimation by minimizing kernel "
                    "discrepancies between noise-convolved distributions.",
    )
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("fit", help="fit a model to a dataset CSV")
    p.add_argument("--config", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=None)
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("experiment", help="run a multi-replication benchmark")
    p.add_argument("--config", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--replications", type=int, default=None)
    p.set_defaults(func=cmd_experiment)

    p = sub.add_parser("verify", help="run a theorem-level check")
    p.add_argument("which", choices=sorted(VERIFY_HARNESSES))
    p.add_argument("--config", default=None)
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("cov", help="sandwich covariance for a stored fit")
    p.add_argument("--config", required=True)
    p.add_argument("--fit", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=None)
    p.set_defaults(func=cmd_cov)

    p = sub.add_parser("simulate", help="emit a synthetic dataset CSV")
    p.add_argument("--config", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=None)
    p.set_defaults(func=cmd_simulate)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except ConvMmdError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
