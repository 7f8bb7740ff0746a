"""Perplexity against a unigram baseline over a grid of training fractions.

Fits one chain per (seed, p_train) on a synthetic admixture corpus or a UCI
bag-of-words file and writes a CSV of (seed, p_train, model, perplexity).

    python scripts/perplexity_sweep.py --seeds 10 --out runs/sweep
    python scripts/perplexity_sweep.py --docword docword.kos.txt --base ggp --d 0.2
"""
import argparse
import csv
import time
from dataclasses import replace
from pathlib import Path

from hcrm.cli import RunConfig, evaluate, fit


def main(argv=None):
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--docword", default="")
    p.add_argument("--vocab", default="")
    p.add_argument("--topics", type=int, default=3, help="synthetic topics (ignored with --docword)")
    p.add_argument("--W", type=int, default=10)
    p.add_argument("--docs", type=int, default=50)
    p.add_argument("--doc-len", type=int, default=40)
    p.add_argument("--base", default="gamma", choices=["gamma", "ggp", "sggp"])
    p.add_argument("--d", type=float, default=0.0)
    p.add_argument("--sggp-components", default="")
    p.add_argument("--iterations", type=int, default=2000)
    p.add_argument("--grid", default="0.3,0.4,0.5,0.6,0.7")
    p.add_argument("--seeds", type=int, default=3)
    p.add_argument("--out", default="runs/sweep")
    a = p.parse_args(argv)

    base_cfg = RunConfig(
        docword=str(Path(a.docword).resolve()) if a.docword else "",
        vocab=str(Path(a.vocab).resolve()) if a.vocab else "",
        synth_topics=0 if a.docword else a.topics, synth_vocab=a.W, synth_docs=a.docs,
        synth_doc_len=a.doc_len, base=a.base, d=a.d, sggp_components=a.sggp_components,
        iterations=a.iterations, burn_in=a.iterations // 4, thin=5,
    )
    out = Path(a.out)
    rows = []
    for seed in range(a.seeds):
        for pt in [float(x) for x in a.grid.split(",")]:
            t0 = time.perf_counter()
            cfg = replace(base_cfg, seed=seed, synth_seed=seed, p_train=pt)
            run = fit(cfg, out / f"seed{seed}_p{pt:g}")
            res = evaluate([run])
            for _, model, ppl in res:
                rows.append((seed, pt, model, ppl))
            desc = "  ".join(f"{m}={v:.4f}" for _, m, v in res)
            print(f"seed={seed} p_train={pt:g}  {desc}  ({time.perf_counter() - t0:.1f}s)")
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "sweep.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["seed", "p_train", "model", "perplexity"])
        w.writerows([(s, f"{pt:g}", m, f"{v:.12g}") for s, pt, m, v in rows])
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
