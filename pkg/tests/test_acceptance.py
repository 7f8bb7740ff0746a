"""Acceptance criteria, one test each.

Run ``pytest tests/test_acceptance.py -v``; the terminal summary lists one
PASS/FAIL line per criterion with its measured statistics and runtime.
"""

import json
import math
from pathlib import Path

import numpy as np
import pytest

from hcrm import checks
from hcrm.cli import RunConfig, evaluate, fit, main
from hcrm.crm_core import LevySpec
from hcrm.franchise import HierarchyModel, dish_log_weights, table_log_weights

GAMMA = LevySpec.gamma()
LN2 = math.log(2.0)


def normalized(logw):
    w = np.exp(logw - np.max(logw))
    return w / w.sum()


def test_c01_gamma_gamma_closed_forms(criterion):
    criterion.label = "C1 gamma-gamma closed-form dish and table probabilities"
    rng = np.random.default_rng(0)
    worst = 0.0
    for _ in range(1000):
        theta = float(rng.uniform(0.1, 10.0))
        n = int(rng.integers(1, 20))
        model = HierarchyModel(LevySpec.gamma(theta), GAMMA, n)
        r = rng.integers(1, 30, size=int(rng.integers(0, 8)))
        got = normalized(dish_log_weights(model, r))
        expected = np.append(r, theta) / (r.sum() + theta)
        worst = max(worst, float(np.max(np.abs(got - expected) / expected)))
        m = rng.integers(1, 30, size=int(rng.integers(0, 8)))
        got = normalized(table_log_weights(model, m))
        new = (m.size + theta) / (1.0 + LN2)
        expected = np.append(m, new) / (m.sum() + new)
        worst = max(worst, float(np.max(np.abs(got - expected) / expected)))
    criterion.note(f"max rel err {worst:.2e}")
    assert worst <= 1e-12
    criterion.within(1.0)


def test_c02_ggp_object_closed_forms(criterion):
    criterion.label = "C2 GGP-object table numerators (m - d) and ln_d(2)"
    rng = np.random.default_rng(1)
    worst = 0.0
    for d in (0.1, 0.2, 0.3, 0.4):
        ln_d2 = (2.0**d - 1.0) / d
        theta = 1.0
        model = HierarchyModel(LevySpec.gamma(theta), LevySpec.ggp(d), 1)
        worst = max(worst, abs(model.u - ln_d2) / ln_d2)
        for _ in range(50):
            m = rng.integers(1, 20, size=int(rng.integers(1, 8)))
            lw = table_log_weights(model, m)
            got = np.exp(lw - lw[0])
            # relative to table 0: (m_j - d)/(m_0 - d) for tables, and for a new
            # table (r + theta)/(1 + ln_d 2) * psi_obj'(1) / ((m_0 - d)/2)
            expected = np.append((m - d) / (m[0] - d),
                                 (m.size + theta) / (1 + ln_d2) * 2.0**d / (m[0] - d))
            worst = max(worst, float(np.max(np.abs(got - expected) / expected)))
    criterion.note(f"max rel err {worst:.2e}")
    assert worst <= 1e-12
    criterion.within(1.0)


def test_c03_derivatives_and_bernstein(criterion):
    criterion.label = "C3 psi^(k) vs Richardson differences and Bernstein signs"
    d = checks.check_derivatives()
    b = checks.check_bernstein()
    criterion.note(d.line())
    criterion.note(b.line())
    assert d.passed and b.passed
    criterion.within(1.0)


def test_c04_ratio_identities(criterion):
    criterion.label = "C4 Gibbs weights vs single-increment PMF ratios"
    r = checks.check_ratio_identities(n_states=500)
    criterion.note(r.line())
    assert r.passed
    criterion.within(5.0)


def test_c05_laplace_functional(criterion):
    criterion.label = "C5 Laplace functional of the truncated oracle"
    r = checks.check_laplace(n_draws=100_000)
    criterion.note(r.line())
    assert r.passed
    criterion.within(30.0)


def test_c06_distinct_count_poisson(criterion):
    criterion.label = "C6 distinct-count Poisson law, chi-square"
    r = checks.check_distinct_count(LevySpec.gamma(1.0), n=3, n_draws=100_000)
    criterion.note(r.line())
    assert r.passed
    criterion.within(60.0)


def test_c07_conditional_oracle(criterion):
    criterion.label = "C7 collapsed vs rejection oracle, sizes (1,1)"
    r = checks.check_conditional_oracle(LevySpec.gamma(1.0), sizes=(1, 1), budget=50_000)
    criterion.note(r.line())
    assert r.detail["accepted"] == 50_000
    assert abs(r.detail["p_shared_oracle"] - r.detail["p_shared_exact"]) <= 3 * r.detail["se"]
    assert r.detail["tv"] <= 0.02
    criterion.within(300.0)


def test_c08_perplexity_beats_unigram(criterion, tmp_path):
    criterion.label = "C8 fitted perplexity <= unigram on synthetic corpora"
    wins = {}
    for p in (0.3, 0.5, 0.7):
        wins[p] = 0
        for seed in range(10):
            cfg = RunConfig(synth_topics=3, synth_vocab=10, synth_docs=50, synth_doc_len=40,
                            synth_seed=seed, seed=seed, p_train=p, iterations=2000,
                            burn_in=500, thin=5)
            run = fit(cfg, tmp_path / f"p{p}_s{seed}")
            rows = {model: ppl for _, model, ppl in evaluate([run])}
            wins[p] += rows["hcrm-gamma"] <= rows["unigram"]
    criterion.note(", ".join(f"p_train={p}: {w}/10" for p, w in wins.items()))
    assert all(w >= 9 for w in wins.values())
    criterion.within(600.0)


def test_c09_ggp_zero_is_gamma(criterion, tmp_path):
    criterion.label = "C9 GGP(d=0) chain bit-identical to gamma chain"
    common = dict(synth_topics=3, synth_vocab=10, synth_docs=50, synth_doc_len=40,
                  iterations=300, burn_in=100, thin=5, seed=7, theta=1.3)
    a = fit(RunConfig(base="gamma", **common), tmp_path / "gamma")
    b = fit(RunConfig(base="ggp", d=0.0, **common), tmp_path / "ggp0")
    same = []
    for name in ("progress.jsonl", "beta.csv", "tau.csv", "predictive.csv"):
        same.append((a / name).read_bytes() == (b / name).read_bytes())
    ca = json.loads((a / "checkpoint.json").read_text())
    cb = json.loads((b / "checkpoint.json").read_text())
    for key in ("tok_table", "tab_dish", "n_dishes", "rng", "iteration"):
        same.append(ca[key] == cb[key])
    same.append(ca["base"]["mass"] == cb["base"]["mass"])
    criterion.note(f"{sum(same)}/{len(same)} artifacts identical")
    assert all(same)
    criterion.within(60.0)


def test_c10_rerun_from_echoed_config(criterion, tmp_path):
    criterion.label = "C10 cmd_fit rerun from echoed config is byte-identical"
    first = tmp_path / "first"
    args = ["fit", "--synth-topics", "3", "--base", "sggp", "--sggp-components", "1:0,0.5:0.3",
            "--iterations", "60", "--burn-in", "10", "--thin", "5", "--seed", "12",
            "--out", str(first)]
    assert main(args) == 0
    second = tmp_path / "second"
    assert main(["fit", "--config", str(first / "config.toml"), "--out", str(second)]) == 0
    files = sorted(p.name for p in first.iterdir())
    diff = [f for f in files if (first / f).read_bytes() != (second / f).read_bytes()]
    criterion.note(f"{len(files) - len(diff)}/{len(files)} files identical")
    assert files == sorted(p.name for p in second.iterdir())
    assert not diff


if __name__ == "__main__":
    raise SystemExit(pytest.main([str(Path(__file__)), "-v"]))
