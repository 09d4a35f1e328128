#!/usr/bin/env python3
"""One adaptive experiment end to end, then the coverage of its interval.

First a single run: assign, observe, estimate the effect and build a
Wald interval from the variance-bound estimate. Then the same experiment
repeated many times to see how often the interval covers the truth.

Usage:
  python demos/confidence_intervals.py --T 1000 --reps 1000 --rho 0.5
"""

from __future__ import annotations

import argparse

from neyman_lab import DesignConfig, gen_stationary, infer, run, summarize
from neyman_lab.engine import simulate
from neyman_lab.numerics import RngStream


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--T", type=int, default=1000)
    ap.add_argument("--reps", type=int, default=1000)
    ap.add_argument("--rho", type=float, default=0.0)
    ap.add_argument("--alpha", type=float, default=0.05)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args(argv)

    seq = gen_stationary(args.T, 2, rho_target=args.rho, rng=RngStream(args.seed, 99))
    s = summarize(seq)
    log = run(DesignConfig(seq.T, seq.d), seq, RngStream(args.seed, 0))
    r = infer(log, seq.X, alpha=args.alpha)
    print(f"true effect          {seq.tau:.4f}")
    print(f"estimate             {r.tau_hat:.4f}")
    print(f"interval             [{r.ci_low:.4f}, {r.ci_high:.4f}]")
    print(f"E^2 estimates        {r.e2_hat_1:.4f}, {r.e2_hat_0:.4f}  (truth {s.e1 ** 2:.4f}, {s.e0 ** 2:.4f})")
    print(f"treated share        {log.z.mean():.3f}\n")

    res = simulate("ftrl", seq, args.reps, base_seed=args.seed, alpha=args.alpha)
    cov = res.covered.mean()
    print(f"coverage over {args.reps} runs: {cov:.3f} (nominal {1 - args.alpha:.2f})")
    print("The interval uses 4E(1)E(0), which exceeds the true variance unless rho = 1,")
    print("so for rho < 1 coverage sits above nominal. At rho = 1 nothing is spare and the")
    print("guarantee is only asymptotic: coverage climbs to nominal as --T grows.")


if __name__ == "__main__":
    main()
