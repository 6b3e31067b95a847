#!/usr/bin/env python3
"""Asymptotics study: estimator variance vs N, and the sandwich covariance
against the closed-form value for the Gaussian location model.

Writes three CSVs under results/asymptotics/:
  - clt_variance.csv: var(sigma_hat) over a grid of sample sizes, with the
    fitted log-log slope in the header comment (should be close to -1).
  - sandwich_vs_closed_form.csv: Monte-Carlo sandwich covariance for the
    location model at N = 5000 next to the closed-form constant.
  - bandwidth_sweep.csv: the closed-form asymptotic variance as a function
    of the kernel bandwidth (it decreases monotonically toward
    sigma^2 + tau^2).

Pass --quick to cut replication counts roughly 4x.
"""

import argparse
import os
import time

import numpy as np

from convmmd import (
    GaussianLocationModel,
    KernelMixture,
    NoiseModel,
    closed_form_gaussian_cov,
    sandwich_covariance,
)
from convmmd.simlab import derive_rng, run_clt_fits


def clt_variance(out_dir, reps):
    rows = []
    n_list = (100, 500, 1000, 2000, 5000)
    for n in n_list:
        t0 = time.time()
        sh = run_clt_fits(n, reps)
        rows.append((n, float(np.var(sh, ddof=1)), float(np.mean(sh))))
        print(f"clt n={n} var={rows[-1][1]:.6g} ({time.time()-t0:.0f}s)",
              flush=True)
    slope = np.polyfit(np.log([r[0] for r in rows]),
                       np.log([r[1] for r in rows]), 1)[0]
    with open(os.path.join(out_dir, "clt_variance.csv"), "w") as fh:
        fh.write(f"# log-log slope = {slope:.4f} (expect about -1)\n")
        fh.write("n,var_sigma_hat,mean_sigma_hat\n")
        for n, v, m in rows:
            fh.write(f"{n},{v!r},{m!r}\n")
    print(f"variance slope vs N: {slope:.4f}")


def sandwich_vs_closed_form(out_dir, b):
    sigma, tau, ell, n = 1.0, 1.0, 1.0, 5000
    model = GaussianLocationModel(sigma=sigma)
    noise = NoiseModel.gaussian_fixed(tau)
    kernel = KernelMixture.single([ell])
    rng = derive_rng(0, 0, "data")
    data = (sigma * rng.standard_normal((n, 1))
            + tau * rng.standard_normal((n, 1)))
    theta = np.array([float(data.mean())])
    est = sandwich_covariance(model, theta, data, noise, kernel, b=b,
                              m=1000, rng=derive_rng(0, 0, "fit"))
    oracle = closed_form_gaussian_cov(sigma, tau, ell)[0, 0]
    mc = est.covariance_c[0, 0]
    with open(os.path.join(out_dir, "sandwich_vs_closed_form.csv"), "w") as fh:
        fh.write("n,b,monte_carlo,closed_form,rel_error\n")
        fh.write(f"{n},{b},{mc!r},{oracle!r},{abs(mc-oracle)/oracle!r}\n")
    print(f"sandwich {mc:.4f} vs closed form {oracle:.4f} "
          f"(rel err {abs(mc-oracle)/oracle:.3f})")


def bandwidth_sweep(out_dir):
    with open(os.path.join(out_dir, "bandwidth_sweep.csv"), "w") as fh:
        fh.write("ell,closed_form_cov\n")
        for ell in np.geomspace(0.1, 32.0, 41):
            c = closed_form_gaussian_cov(1.0, 1.0, float(ell))[0, 0]
            fh.write(f"{float(ell)!r},{c!r}\n")
    print("wrote bandwidth sweep (limit value sigma^2 + tau^2 = 2)")


if __name__ == "__main__":
    ap = argparse.ArgumentParser()
    ap.add_argument("--quick", action="store_true")
    ap.add_argument("--out", default="results/asymptotics")
    args = ap.parse_args()
    os.makedirs(args.out, exist_ok=True)
    clt_variance(args.out, reps=25 if args.quick else 100)
    sandwich_vs_closed_form(args.out, b=10 if args.quick else 40)
    bandwidth_sweep(args.out)
