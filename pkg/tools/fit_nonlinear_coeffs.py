#!/usr/bin/env python3
"""Fit the frozen polynomial coefficients in cryptogen.fixedpoint.

Two fits, both deterministic:

  1. GELU on [0, 3.2]: zero-intercept quartic (so the origin is exact),
     Lawson-reweighted least squares towards the minimax solution.  The
     runtime evaluates it in two squaring rounds as
     c4*(x^2 + beta*x)^2 + c2p*x^2 + c1*x with beta = c3/(2 c4).
  2. exp(r) on the softmax residual range, fit padded to [-0.72, 0.02],
     plain least-squares quadratic.

Run with --check to confirm the values frozen in the package match.
"""

import argparse
import math
import sys

import numpy as np


def fit_gelu(samples: int = 50_001, sweeps: int = 300):
    xs = np.linspace(0.0, 3.2, samples)
    ref = xs * 0.5 * (1.0 + np.array([math.erf(x / math.sqrt(2)) for x in xs]))
    A = np.stack([xs**4, xs**3, xs**2, xs], axis=1)
    w = np.ones_like(xs)
    coef = None
    for _ in range(sweeps):
        Aw = A * w[:, None]
        coef, *_ = np.linalg.lstsq(Aw, ref * w, rcond=None)
        r = np.abs(A @ coef - ref)
        w *= np.sqrt(r + 1e-12)
        w /= w.sum()
    err = float(np.max(np.abs(A @ coef - ref)))
    return coef, err


def fit_exp(samples: int = 8_001):
    rs = np.linspace(-0.72, 0.02, samples)
    A = np.stack([rs * rs, rs, np.ones_like(rs)], axis=1)
    coef, *_ = np.linalg.lstsq(A, np.exp(rs), rcond=None)
    err = float(np.max(np.abs(A @ coef - np.exp(rs))))
    return coef, err


def main() -> int:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--check", action="store_true", help="compare against the frozen values")
    args = ap.parse_args()

    (c4, c3, c2, c1), gelu_err = fit_gelu()
    (e2, e1, e0), exp_err = fit_exp()

    print(f"# GELU quartic on [0, 3.2], max |err| {gelu_err:.3e}")
    print(f"_G_C4 = {c4:.10f}")
    print(f"_G_C3 = {c3:.10f}")
    print(f"_G_C2 = {c2:.10f}")
    print(f"_G_C1 = {c1:.10f}")
    print(f"# exp(r) quadratic on [-0.72, 0.02], max |err| {exp_err:.3e}")
    print(f"_E_C2 = {e2:.10f}")
    print(f"_E_C1 = {e1:.10f}")
    print(f"_E_C0 = {e0:.10f}")

    if args.check:
        from cryptogen import fixedpoint as fx

        frozen = (fx._G_C4, fx._G_C3, fx._G_C2, fx._G_C1, fx._E_C2, fx._E_C1, fx._E_C0)
        fitted = (c4, c3, c2, c1, e2, e1, e0)
        drift = max(abs(a - b) for a, b in zip(frozen, fitted))
        print(f"# max drift vs frozen constants: {drift:.2e}")
        if drift > 1e-6:
            print("FROZEN CONSTANTS ARE STALE", file=sys.stderr)
            return 1
        print("# frozen constants confirmed")
    return 0


if __name__ == "__main__":
    sys.exit(main())
