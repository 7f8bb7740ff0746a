import json
import math

import numpy as np
import pytest
from scipy import integrate, stats
from scipy.special import gamma as gamma_fn

from hcrm.crm_core import LevySpec, psi
from hcrm.distributions import crm_poisson_log_pmf
from hcrm.oracle import (
    BudgetExhaustedError,
    _sample_tail,
    compare_report,
    conditional_rejection_sample,
    empirical,
    laplace_functional_mc,
    missing_mass,
    sample_crm_weights,
    sample_crm_weights_batch,
    sample_hierarchy,
    tail_rate,
    total_mass_mc,
    total_variation,
    truncation_level,
)

LN2 = math.log(2.0)
GAMMA = LevySpec.gamma()


@pytest.mark.parametrize("spec", [LevySpec.gamma(1.0), LevySpec.ggp(0.3, 2.0),
                                  LevySpec.sggp([(1.0, 0.0), (0.5, 0.4)])])
@pytest.mark.parametrize("eps", [1e-2, 1e-4, 1e-6])
def test_truncation_level_hits_budget(spec, eps):
    z = truncation_level(spec, eps)
    assert missing_mass(spec, z) <= eps
    assert missing_mass(spec, z * 1.001) > eps * 0.999


def test_truncation_huge_eps_gives_no_atoms():
    spec = LevySpec.gamma(1.0)
    assert truncation_level(spec, 5.0) == math.inf
    atoms = sample_crm_weights(spec, 5.0, np.random.default_rng(0))
    assert atoms.weights.size == 0
    with pytest.raises(ValueError):
        truncation_level(spec, 0.0)


@pytest.mark.parametrize("d", [0.0, 0.3])
def test_tail_rate_against_quadrature(d):
    z = 0.01
    dens = lambda x: x ** (-1 - d) * math.exp(-x) / gamma_fn(1 - d)
    val = integrate.quad(dens, z, 1)[0] + integrate.quad(dens, 1, np.inf)[0]
    assert tail_rate(LevySpec.ggp(d), z)[0] == pytest.approx(val, rel=1e-8)


@pytest.mark.parametrize("d,z0", [(0.0, 1e-3), (0.4, 1e-3), (0.2, 2.0)])
def test_tail_sampler_matches_levy_density(d, z0):
    rng = np.random.default_rng(1)
    x = _sample_tail(d, z0, 20_000, rng)
    dens = lambda z: z ** (-1 - d) * math.exp(-z)
    norm = integrate.quad(dens, z0, np.inf, limit=200)[0]

    def cdf(v):
        return np.array([integrate.quad(dens, z0, vi, limit=200)[0] / norm
                         for vi in np.atleast_1d(v)])

    assert np.all(x >= z0)
    assert stats.kstest(x, cdf).pvalue > 0.001


def test_gamma_mean_total_mass():
    rng = np.random.default_rng(2)
    tot = total_mass_mc(LevySpec.gamma(1.0), 100_000, 1e-6, rng)
    se = tot.std(ddof=1) / math.sqrt(tot.size)
    assert abs(tot.mean() - 1.0) <= 3 * se + 1e-6


def test_ggp_mean_total_mass():
    rng = np.random.default_rng(3)
    tot = total_mass_mc(LevySpec.ggp(0.3, 2.0), 20_000, 1e-4, rng)
    se = tot.std(ddof=1) / math.sqrt(tot.size)
    assert abs(tot.mean() - 2.0) <= 3 * se + 1e-4


def test_gamma_laplace_at_one():
    m, se = laplace_functional_mc(LevySpec.gamma(1.0), 1.0, 100_000, 1e-6,
                                  np.random.default_rng(4))
    assert abs(m - 0.5) <= 3 * (se + 1e-6)


def test_laplace_vector_t():
    spec = LevySpec.ggp(0.3)
    m, se = laplace_functional_mc(spec, [0.5, 2.0], 20_000, 1e-6, np.random.default_rng(5))
    for mi, si, t in zip(m, se, [0.5, 2.0]):
        assert abs(mi - math.exp(-psi(spec, t))) <= 3 * (si + 1e-6 * t)


def test_sample_hierarchy_tiny_mass_is_empty():
    rng = np.random.default_rng(6)
    empty = sum(all(not d for d in sample_hierarchy(LevySpec.gamma(1e-6), GAMMA, 3, 1e-9, rng))
                for _ in range(2000))
    assert empty / 2000 >= 0.999


def test_single_document_empty_probability():
    rng = np.random.default_rng(7)
    n = 100_000
    w, o = sample_crm_weights_batch(LevySpec.gamma(1.0), 1e-6, n, rng)
    counts = rng.poisson(rng.gamma(w, 1.0))
    empty = np.bincount(o, weights=counts, minlength=n) == 0
    p = 1 / (1 + LN2)
    se = math.sqrt(p * (1 - p) / n)
    assert abs(empty.mean() - p) <= 3 * se


def test_object_must_be_unit_gamma():
    rng = np.random.default_rng(0)
    with pytest.raises(ValueError):
        sample_hierarchy(LevySpec.gamma(1.0), LevySpec.ggp(0.3), 1, 1e-4, rng)


def test_conditional_zero_sizes():
    rng = np.random.default_rng(8)
    s = conditional_rejection_sample(LevySpec.gamma(1.0), GAMMA, 2, [0, 0], 1e-4, rng, budget=50)
    assert s.accepted == 50
    assert set(s.matrices) == {()}
    assert s.acceptance_rate > 0


def test_conditional_budget_errors():
    rng = np.random.default_rng(9)
    with pytest.raises(BudgetExhaustedError):
        conditional_rejection_sample(LevySpec.gamma(1.0), GAMMA, 1, [1], 1e-4, rng, budget=0)
    with pytest.raises(BudgetExhaustedError) as info:
        conditional_rejection_sample(LevySpec.gamma(1.0), GAMMA, 1, [40], 1e-4, rng,
                                     budget=10, max_draws=200, batch=100)
    assert info.value.attempted == 200
    with pytest.raises(ValueError):
        conditional_rejection_sample(LevySpec.gamma(1.0), GAMMA, 2, [1], 1e-4, rng, budget=1)


@pytest.mark.parametrize("method", ["plain", "marginal"])
def test_conditional_shared_dish_two_tokens(method):
    g = LevySpec.gamma(1.0)
    # exact law from the two possible matrices
    shared_lp = crm_poisson_log_pmf(1.0, GAMMA, 2, [[1], [1]])
    split_lp = crm_poisson_log_pmf(1.0, GAMMA, 2, [[1, 0], [0, 1]])
    p = 1.0 / (1.0 + math.exp(split_lp - shared_lp))
    rng = np.random.default_rng(10)
    s = conditional_rejection_sample(g, GAMMA, 2, [1, 1], 1e-6, rng, budget=20_000, method=method)
    shared = sum(1 for m in s.matrices if len(m) == 1) / s.accepted
    se = math.sqrt(p * (1 - p) / s.accepted)
    assert abs(shared - p) <= 3 * se


def test_plain_and_marginal_agree():
    base = LevySpec.gamma(1.5)
    a = conditional_rejection_sample(base, GAMMA, 2, [2, 1], 1e-4, np.random.default_rng(11),
                                     budget=10_000, method="plain")
    b = conditional_rejection_sample(base, GAMMA, 2, [2, 1], 1e-4, np.random.default_rng(12),
                                     budget=10_000, method="marginal")
    rep = compare_report(a.matrices, b.matrices)
    assert rep.p_value > 0.01


def test_compare_report_trivial_cases():
    xs = [(1, (2,)), (2, (1, 1)), (1, (2,))]
    rep = compare_report(xs, list(xs))
    assert rep.tv_joint == 0.0 and rep.tv_distinct == 0.0 and rep.passed
    rep = compare_report([(1, (2,))] * 10, [(2, (1, 1))] * 10)
    assert rep.tv_joint == 1.0 and not rep.passed
    d = json.loads(rep.to_json())
    assert d["passed"] is False and "tv_distinct" in rep.to_text()
    with pytest.raises(ValueError):
        compare_report([], xs)


def test_total_variation_helpers():
    assert total_variation({"a": 1.0}, {"b": 1.0}) == 1.0
    assert total_variation(empirical("aab"), empirical("aba")) == 0.0
