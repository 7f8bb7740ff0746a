"""Posterior number of dishes on synthetic corpora with a known topic count.

Prints, per seed, the mode and range of the retained dish count p and the
final base mass, so the effect of the base family and eta can be inspected.

    python scripts/topic_count.py --seeds 10 --eta 0.5
"""
import argparse
from collections import Counter

from hcrm.crm_core import LevySpec
from hcrm.data_io import split_train_test, synth_corpus
from hcrm.franchise import FranchiseState, HierarchyModel, SamplerConfig, run_chain


def main(argv=None):
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--topics", type=int, default=3)
    p.add_argument("--W", type=int, default=10)
    p.add_argument("--docs", type=int, default=50)
    p.add_argument("--doc-len", type=int, default=40)
    p.add_argument("--eta", type=float, default=0.5)
    p.add_argument("--d", type=float, default=0.0, help="GGP discount of the base (0 = gamma)")
    p.add_argument("--iterations", type=int, default=2000)
    p.add_argument("--seeds", type=int, default=10)
    a = p.parse_args(argv)
    for seed in range(a.seeds):
        corpus, _ = synth_corpus(a.topics, a.W, a.docs, a.doc_len, seed=seed)
        corpus = split_train_test(corpus, 1.0, seed)
        cfg = SamplerConfig(iterations=a.iterations, burn_in=a.iterations // 4, thinning=5,
                            seed=seed, eta=a.eta)
        base = LevySpec.ggp(a.d, 1.0) if a.d else LevySpec.gamma(1.0)
        state = FranchiseState(list(corpus.docs), corpus.W,
                               HierarchyModel(base, LevySpec.gamma(), corpus.D), cfg)
        state.initialize()
        ps = []
        run_chain(state, on_sample=lambda s: ps.append(s.n_dishes))
        mode = Counter(ps).most_common(1)[0][0]
        print(f"seed={seed} p mode={mode} range=[{min(ps)}, {max(ps)}] "
              f"theta={state.model.base.mass:.3f}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
