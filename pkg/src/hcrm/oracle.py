"""Explicit truncated instantiation of CRMs and of the two-level hierarchy.

This is the ground truth for the collapsed machinery.  Weights of a
homogeneous CRM on a unit-mass space form a Poisson process with mean measure
``theta * rho(dz)``; we draw the part above a level ``z_eps`` exactly and drop
the rest, whose expected total mass is at most ``eps``.
"""

from __future__ import annotations

import json
import math
from collections import Counter
from dataclasses import asdict, dataclass, field
from typing import Hashable, Iterable, Sequence

import numpy as np
from scipy import optimize, stats
from scipy.special import exp1, gamma as gamma_fn, gammainc, gammaincc, gammaincinv, gammaln

from .crm_core import Gamma, LevySpec

DEFAULT_EPS = 1e-4


class TruncationError(RuntimeError):
    pass


class BudgetExhaustedError(RuntimeError):
    def __init__(self, accepted: int, attempted: int, wanted: int):
        self.accepted = accepted
        self.attempted = attempted
        self.wanted = wanted
        rate = accepted / attempted if attempted else 0.0
        super().__init__(
            f"accepted {accepted} of {wanted} wanted after {attempted} draws "
            f"(acceptance rate {rate:.3g})"
        )


@dataclass(frozen=True)
class WeightedAtoms:
    weights: np.ndarray
    eps: float
    z_min: float
    missing_mass_bound: float

    @property
    def total(self) -> float:
        return float(self.weights.sum())


def _weighted_components(spec: LevySpec) -> list[tuple[float, float]]:
    return [(spec.mass * c, d) for c, d in spec.components]


def missing_mass(spec: LevySpec, z: float) -> float:
    """Expected total weight of atoms below ``z``: ``sum_q theta_q * P(1-d_q, z)``."""
    return float(sum(th * gammainc(1.0 - d, z) for th, d in _weighted_components(spec)))


def truncation_level(spec: LevySpec, eps: float) -> float:
    """Largest ``z`` whose dropped expected mass is at most ``eps``."""
    if not eps > 0:
        raise ValueError("eps must be positive")
    comps = _weighted_components(spec)
    total = sum(th for th, _ in comps)
    if eps >= total:
        return math.inf
    if len(comps) == 1:
        th, d = comps[0]
        z = -math.log1p(-eps / th) if d == 0.0 else float(gammaincinv(1.0 - d, eps / th))
    else:
        hi = 1.0
        while missing_mass(spec, hi) < eps:
            hi *= 2.0
            if hi > 1e6:
                raise TruncationError("could not bracket the truncation level")
        try:
            z = optimize.brentq(lambda z: missing_mass(spec, z) - eps, 0.0, hi, xtol=1e-300,
                                rtol=1e-14)
        except (ValueError, RuntimeError) as exc:
            raise TruncationError(f"truncation root-find failed: {exc}") from exc
    # closed forms and brentq may land a hair above the target
    while missing_mass(spec, z) > eps:
        z = math.nextafter(z, 0.0)
    return z


def _tail_measure(d: float, z: float) -> float:
    """``rho([z, inf))`` for a unit-mass component with discount ``d``."""
    if d == 0.0:
        return float(exp1(z))
    # Gamma(-d, z) from the upper incomplete gamma recurrence
    upper = gammaincc(1.0 - d, z) * gamma_fn(1.0 - d)
    return float((z ** (-d) * math.exp(-z) - upper) / d / gamma_fn(1.0 - d))


def tail_rate(spec: LevySpec, z: float) -> np.ndarray:
    """Expected atom counts above ``z`` per component."""
    if math.isinf(z):
        return np.zeros(len(spec.components))
    return np.array([th * _tail_measure(d, z) for th, d in _weighted_components(spec)])


def _sample_tail(d: float, z0: float, size: int, rng: np.random.Generator) -> np.ndarray:
    # target density on [z0, inf) proportional to z^(-1-d) e^(-z); envelope is
    # z^(-1-d) on [z0, 1) and z0'^(-1-d) e^(-z) on [max(z0,1), inf)
    out = np.empty(size)
    filled = 0
    lo = min(z0, 1.0)
    hi_start = max(z0, 1.0)
    if z0 < 1.0:
        if d == 0.0:
            m1 = math.log(1.0 / z0)
        else:
            m1 = (z0 ** (-d) - 1.0) / d
    else:
        m1 = 0.0
    c2 = hi_start ** (-1.0 - d)
    m2 = c2 * math.exp(-hi_start)
    p1 = m1 / (m1 + m2)
    while filled < size:
        n = max(2 * (size - filled), 64)
        left = rng.random(n) < p1
        u = rng.random(n)
        z = np.empty(n)
        nl = int(left.sum())
        if nl:
            if d == 0.0:
                z[left] = lo * np.exp(u[left] * math.log(1.0 / lo))
            else:
                # inverse cdf of z^(-1-d) on [lo, 1]
                z[left] = (lo ** (-d) - u[left] * (lo ** (-d) - 1.0)) ** (-1.0 / d)
        z[~left] = hi_start + rng.exponential(1.0, n - nl)
        acc_p = np.where(left, np.exp(-z), (z ** (-1.0 - d)) / c2)
        keep = z[rng.random(n) < acc_p]
        take = min(keep.size, size - filled)
        out[filled:filled + take] = keep[:take]
        filled += take
    return out


def sample_crm_weights(spec: LevySpec, eps: float, rng: np.random.Generator) -> WeightedAtoms:
    """One draw of the CRM's weights above the truncation level, descending."""
    w, _ = sample_crm_weights_batch(spec, eps, 1, rng)
    z = truncation_level(spec, eps)
    return WeightedAtoms(np.sort(w)[::-1], eps, z, missing_mass(spec, z) if np.isfinite(z)
                         else float(spec.total_weight))


def sample_crm_weights_batch(spec: LevySpec, eps: float, n_draws: int,
                             rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
    """``n_draws`` independent truncated draws as flat weights plus owner indices."""
    z = truncation_level(spec, eps)
    rates = tail_rate(spec, z)
    weights, owners = [], []
    for (_, d), rate in zip(_weighted_components(spec), rates):
        counts = rng.poisson(rate, n_draws)
        total = int(counts.sum())
        weights.append(_sample_tail(d, z, total, rng) if total else np.empty(0))
        owners.append(np.repeat(np.arange(n_draws), counts))
    w = np.concatenate(weights)
    o = np.concatenate(owners)
    order = np.argsort(o, kind="stable")
    return w[order], o[order]


def _chunks(spec: LevySpec, eps: float, n_draws: int, max_atoms: float = 2e6):
    per_draw = float(tail_rate(spec, truncation_level(spec, eps)).sum()) + 1.0
    size = max(1, int(max_atoms / per_draw))
    done = 0
    while done < n_draws:
        nb = min(size, n_draws - done)
        yield nb
        done += nb


def laplace_functional_mc(spec: LevySpec, t, n_draws: int, eps: float,
                          rng: np.random.Generator):
    """Monte Carlo mean and standard error of ``exp(-t * Lambda(S))``.

    ``t`` may be a sequence, in which case one set of draws serves every
    entry and arrays are returned.
    """
    totals = total_mass_mc(spec, n_draws, eps, rng)
    ts = np.atleast_1d(np.asarray(t, dtype=float))
    v = np.exp(-ts[:, None] * totals[None, :])
    mean = v.mean(axis=1)
    se = v.std(axis=1, ddof=1) / math.sqrt(n_draws)
    if np.ndim(t) == 0:
        return float(mean[0]), float(se[0])
    return mean, se


def total_mass_mc(spec: LevySpec, n_draws: int, eps: float,
                  rng: np.random.Generator) -> np.ndarray:
    """Truncated total masses ``Lambda(S)`` of ``n_draws`` independent CRMs."""
    out = []
    for nb in _chunks(spec, eps, n_draws):
        w, o = sample_crm_weights_batch(spec, eps, nb, rng)
        out.append(np.bincount(o, weights=w, minlength=nb))
    return np.concatenate(out)


def distinct_count_mc(spec: LevySpec, n: float, n_draws: int, eps: float,
                      rng: np.random.Generator) -> np.ndarray:
    """Number of atoms hit by at least one of ``n`` Poisson processes, per draw.

    An atom of weight ``w`` is hit with probability ``1 - exp(-n w)``; atoms
    below the truncation level are hit ``n * eps`` times in expectation at most.
    """
    out = []
    for nb in _chunks(spec, eps, n_draws):
        w, o = sample_crm_weights_batch(spec, eps, nb, rng)
        hit = rng.random(w.size) < -np.expm1(-n * w)
        out.append(np.bincount(o[hit], minlength=nb))
    return np.concatenate(out)


# --------------------------------------------------------------------------
# hierarchy


def _require_gamma_object(obj: LevySpec) -> None:
    if not isinstance(obj.family, Gamma) or obj.mass != 1.0:
        raise ValueError("explicit object-level sampling needs a unit-mass gamma object")


def sample_hierarchy(base: LevySpec, obj: LevySpec, n: int, eps: float,
                     rng: np.random.Generator) -> list[dict[int, int]]:
    """Per-document sparse count maps keyed by base-atom index.

    Base atoms ``beta_j`` come from :func:`sample_crm_weights`; then
    ``L_ij ~ Gamma(beta_j, 1)`` and ``c_ij ~ Poisson(L_ij)``.
    """
    _require_gamma_object(obj)
    beta = sample_crm_weights(base, eps, rng).weights
    out = []
    for _ in range(n):
        c = rng.poisson(rng.gamma(beta, 1.0)) if beta.size else np.empty(0, dtype=np.int64)
        out.append({int(j): int(x) for j, x in enumerate(c) if x})
    return out


def _canonical(mat: np.ndarray) -> tuple:
    return tuple(sorted(tuple(int(x) for x in col) for col in mat.T))


@dataclass
class ConditionalSample:
    """Accepted count matrices (canonical column keys) plus acceptance bookkeeping."""

    matrices: list[tuple]
    attempted: int
    sizes: tuple[int, ...]

    @property
    def accepted(self) -> int:
        return len(self.matrices)

    @property
    def acceptance_rate(self) -> float:
        return self.accepted / self.attempted if self.attempted else 0.0

    def distinct_counts(self) -> np.ndarray:
        return np.array([len(m) for m in self.matrices], dtype=np.int64)

    def dish_statistics(self) -> list[tuple]:
        """(number of dishes, sorted column sums) for every draw."""
        return [dish_statistic(m) for m in self.matrices]

    def frequencies(self) -> dict[tuple, float]:
        c = Counter(self.matrices)
        return {k: v / self.accepted for k, v in c.items()}


def dish_statistic(cols: Iterable[Sequence[int]]) -> tuple:
    sums = sorted((int(sum(c)) for c in cols), reverse=True)
    return (len(sums), tuple(sums))


def _log_nb_sizes(B: np.ndarray, sizes: np.ndarray) -> np.ndarray:
    # log prod_i P(N_i = m_i | total base weight B) with N_i ~ NegBin(B, 1/2)
    s = np.zeros_like(B)
    for m in sizes:
        s += gammaln(m + B) - gammaln(B) - gammaln(m + 1.0) - (m + B) * math.log(2.0)
    return np.where(B > 0, s, np.where(np.all(sizes == 0), 0.0, -np.inf))


def conditional_rejection_sample(
    base: LevySpec,
    obj: LevySpec,
    n: int,
    sizes: Sequence[int],
    eps: float,
    rng: np.random.Generator,
    budget: int,
    max_draws: int | None = None,
    method: str = "plain",
    batch: int = 100_000,
) -> ConditionalSample:
    """Draw hierarchies until ``budget`` have per-document totals equal to ``sizes``.

    ``method="plain"`` simulates every count and keeps exact matches.
    ``method="marginal"`` integrates the gamma object measures out: given the
    base weights, each document total is negative binomial, so a draw is kept
    with probability ``prod_i P(N_i = m_i | beta) / sup``, after which counts
    are split by a Dirichlet-multinomial.  Both are exact up to truncation.
    """
    _require_gamma_object(obj)
    sizes_arr = np.asarray(sizes, dtype=np.int64)
    if sizes_arr.size != n:
        raise ValueError("need one target size per document")
    if budget < 1:
        raise BudgetExhaustedError(0, 0, budget)
    if method not in ("plain", "marginal"):
        raise ValueError(f"unknown method {method!r}")
    if max_draws is None:
        max_draws = 10_000 * budget
    log_sup = 0.0
    if method == "marginal":
        res = optimize.minimize_scalar(
            lambda lb: -float(_log_nb_sizes(np.array([math.exp(lb)]), sizes_arr)[0]),
            bounds=(-20.0, 10.0), method="bounded")
        log_sup = max(-float(res.fun), float(_log_nb_sizes(np.array([1e-300]), sizes_arr)[0]))
    # keep roughly a million atoms in flight per batch
    per_draw = float(tail_rate(base, truncation_level(base, eps)).sum()) + 1.0
    batch = max(100, min(batch, int(1e6 / per_draw)))
    accepted: list[tuple] = []
    attempted = 0
    while len(accepted) < budget:
        if attempted >= max_draws:
            raise BudgetExhaustedError(len(accepted), attempted, budget)
        nb = min(batch, max_draws - attempted)
        w, o = sample_crm_weights_batch(base, eps, nb, rng)
        attempted += nb
        starts = np.searchsorted(o, np.arange(nb + 1))
        if method == "plain":
            L = rng.gamma(np.tile(w, (n, 1)), 1.0)
            c = rng.poisson(L)
            totals = np.stack([np.bincount(o, weights=c[i], minlength=nb) for i in range(n)])
            ok = np.flatnonzero(np.all(totals == sizes_arr[:, None], axis=0))
            for b in ok:
                block = c[:, starts[b]:starts[b + 1]]
                block = block[:, block.sum(axis=0) > 0]
                accepted.append(_canonical(block))
                if len(accepted) >= budget:
                    break
        else:
            B = np.bincount(o, weights=w, minlength=nb)
            keep = np.log(rng.random(nb)) < _log_nb_sizes(B, sizes_arr) - log_sup
            for b in np.flatnonzero(keep):
                beta = w[starts[b]:starts[b + 1]]
                block = np.zeros((n, beta.size), dtype=np.int64)
                for i, m in enumerate(sizes_arr):
                    if m:
                        block[i] = rng.multinomial(m, rng.dirichlet(beta))
                block = block[:, block.sum(axis=0) > 0]
                accepted.append(_canonical(block))
                if len(accepted) >= budget:
                    break
    return ConditionalSample(accepted, attempted, tuple(int(s) for s in sizes_arr))


# --------------------------------------------------------------------------
# comparison


def total_variation(p: dict[Hashable, float], q: dict[Hashable, float]) -> float:
    keys = set(p) | set(q)
    return 0.5 * sum(abs(p.get(k, 0.0) - q.get(k, 0.0)) for k in keys)


def empirical(samples: Iterable[Hashable]) -> dict[Hashable, float]:
    c = Counter(samples)
    n = sum(c.values())
    return {k: v / n for k, v in c.items()}


@dataclass
class ComparisonReport:
    tv_distinct: float
    tv_joint: float
    chi2: float
    dof: int
    p_value: float
    n_collapsed: int
    n_oracle: int
    tv_threshold: float
    p_threshold: float
    passed: bool = field(init=False)

    def __post_init__(self):
        self.passed = self.tv_distinct <= self.tv_threshold and (
            self.dof == 0 or self.p_value > self.p_threshold
        )

    def to_json(self) -> str:
        return json.dumps(asdict(self), sort_keys=True)

    def to_text(self) -> str:
        lines = [f"{k:>14s}  {v}" for k, v in asdict(self).items()]
        return "\n".join(lines)


def compare_report(collapsed: Sequence[Hashable], oracle: Sequence[Hashable],
                   tv_threshold: float = 0.03, p_threshold: float = 0.01,
                   min_expected: float = 5.0) -> ComparisonReport:
    """Compare two samples of hashable statistics.

    Statistics of the form ``(distinct count, ...)`` also get a TV distance on
    their first entry.  The chi-square test is a two-sample homogeneity test
    on bins whose pooled expected count is at least ``min_expected``; sparse
    bins are merged into one.
    """
    if not collapsed or not oracle:
        raise ValueError("both sample sets must be nonempty")
    pc, po = empirical(collapsed), empirical(oracle)
    tv_joint = total_variation(pc, po)

    def first(x):
        return x[0] if isinstance(x, tuple) and x else x

    tv_distinct = total_variation(empirical(first(s) for s in collapsed),
                                  empirical(first(s) for s in oracle))
    n1, n2 = len(collapsed), len(oracle)
    cc, co = Counter(collapsed), Counter(oracle)
    keys = sorted(set(cc) | set(co), key=repr)
    rows, rest = [], [0, 0]
    for k in keys:
        a, b = cc.get(k, 0), co.get(k, 0)
        if min(a + b, n1 + n2) * min(n1, n2) / (n1 + n2) >= min_expected:
            rows.append([a, b])
        else:
            rest[0] += a
            rest[1] += b
    if rest[0] + rest[1]:
        rows.append(rest)
    table = np.array(rows, dtype=float)
    if table.shape[0] < 2:
        chi2, dof, pval = 0.0, 0, 1.0
    else:
        chi2, pval, dof, _ = stats.chi2_contingency(table.T, correction=False)
    return ComparisonReport(float(tv_distinct), float(tv_joint), float(chi2), int(dof),
                            float(pval), n1, n2, tv_threshold, p_threshold)
