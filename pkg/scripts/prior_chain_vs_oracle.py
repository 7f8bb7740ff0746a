"""Compare the collapsed prior chain with the explicit rejection oracle.

Runs the franchise sampler with the likelihood switched off, records the
dish statistic (number of dishes, sorted dish sizes) at every thinned
iteration and compares it with exact draws from the generative hierarchy
conditioned on the same document sizes.

    python scripts/prior_chain_vs_oracle.py --base gamma --sizes 5 5 5
"""
import argparse
import time

import numpy as np

from hcrm.cli import parse_sggp_components
from hcrm.crm_core import LevySpec
from hcrm.franchise import FranchiseState, HierarchyModel, SamplerConfig
from hcrm.oracle import compare_report, conditional_rejection_sample, dish_statistic


def make_base(family, theta, d, components):
    if family == "gamma":
        return LevySpec.gamma(theta)
    if family == "ggp":
        return LevySpec.ggp(d, theta)
    return LevySpec.sggp(parse_sggp_components(components))


def chain_statistics(base, sizes, n_samples, thin, seed, table_prior="joint"):
    docs = [[0] * s for s in sizes]
    cfg = SamplerConfig(iterations=n_samples * thin + 1, burn_in=0, thinning=thin, seed=seed,
                        resample_hyper=False, use_likelihood=False, table_prior=table_prior)
    model = HierarchyModel(base, LevySpec.gamma(), len(docs))
    state = FranchiseState(docs, 1, model, cfg).initialize()
    out = []
    for it in range(n_samples * thin):
        state.sweep()
        if (it + 1) % thin == 0:
            out.append(dish_statistic(state.doc_dish_counts().T))
    return out


def oracle_statistics(base, sizes, n_samples, seed, eps=1e-6):
    rng = np.random.default_rng(seed)
    s = conditional_rejection_sample(base, LevySpec.gamma(), len(sizes), sizes, eps, rng,
                                     n_samples, method="marginal")
    return s.dish_statistics(), s.acceptance_rate


def main(argv=None):
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--base", default="gamma", choices=["gamma", "ggp", "sggp"])
    p.add_argument("--theta", type=float, default=1.0)
    p.add_argument("--d", type=float, default=0.3)
    p.add_argument("--sggp-components", default="1:0,1:0.4")
    p.add_argument("--sizes", type=int, nargs="+", default=[5, 5, 5])
    p.add_argument("--samples", type=int, default=20_000)
    p.add_argument("--thin", type=int, default=5)
    p.add_argument("--table-prior", default="joint", choices=["joint", "paper"])
    p.add_argument("--seed", type=int, default=1)
    a = p.parse_args(argv)
    base = make_base(a.base, a.theta, a.d, a.sggp_components)
    t0 = time.perf_counter()
    chain = chain_statistics(base, a.sizes, a.samples, a.thin, a.seed, a.table_prior)
    t1 = time.perf_counter()
    orc, acc = oracle_statistics(base, a.sizes, a.samples, a.seed + 1)
    t2 = time.perf_counter()
    rep = compare_report(chain, orc)
    print(f"base={base} sizes={a.sizes} table_prior={a.table_prior}")
    print(f"chain {t1 - t0:.1f}s, oracle {t2 - t1:.1f}s (acceptance {acc:.4f})")
    print(rep.to_text())
    return 0 if rep.passed else 1


if __name__ == "__main__":
    raise SystemExit(main())
