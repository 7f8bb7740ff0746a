"""Accuracy of the exponential-mixture approximation of h and its derivatives.

For each base and number of terms, fits the mixture and reports the worst
relative error of h^(k)(u) against the exact series for k = 0..kmax at
u = psi_obj(1) = ln 2.

    python scripts/mixture_accuracy.py --terms 10 20 40 80
"""
import argparse
import math

import numpy as np

from hcrm.crm_core import FitError, LevySpec, fit_exp_mixture, log_abs_h_deriv_series


def main(argv=None):
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--terms", type=int, nargs="+", default=[10, 20, 40, 80])
    p.add_argument("--kmax", type=int, default=30)
    p.add_argument("--u", type=float, default=math.log(2.0))
    a = p.parse_args(argv)
    bases = [("ggp(0.1)", LevySpec.ggp(0.1)), ("ggp(0.3)", LevySpec.ggp(0.3)),
             ("ggp(0.3, mass 4)", LevySpec.ggp(0.3, 4.0)),
             ("sggp(1:0,1:0.4)", LevySpec.sggp([(1.0, 0.0), (1.0, 0.4)]))]
    grid = np.concatenate([[0.0], np.logspace(-3, math.log10(20.0), 199)])
    print(f"{'base':>18s} {'terms':>5s} {'fit resid':>10s}  worst rel err of h^(k), k<=kmax")
    for name, base in bases:
        exact = log_abs_h_deriv_series(base, a.kmax, a.u)
        for n in a.terms:
            try:
                mix = fit_exp_mixture(base, num_terms=n, u_grid=grid)
            except FitError as exc:
                print(f"{name:>18s} {n:5d} {'failed':>10s}  {exc}")
                continue
            approx = np.array([mix.log_abs_deriv(k, a.u) for k in range(a.kmax + 1)])
            err = np.abs(np.expm1(approx - exact))
            worst_by_k = ", ".join(f"k={k}:{err[k]:.1e}" for k in (0, 1, 5, 10, a.kmax))
            print(f"{name:>18s} {n:5d} {mix.max_rel_residual:10.2e}  {worst_by_k}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
