"""Collapsed Chinese-restaurant-franchise Gibbs sampler for hierarchical CRMs.

Customers are tokens, restaurants are documents, tables are the points of the
per-document intermediate Poisson process and dishes are atoms of the shared
base measure.  The base CRM is arbitrary within :mod:`hcrm.crm_core`; the
object-level CRM is any unit-mass spec.
"""

from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Sequence

import numpy as np
from scipy.special import gammaln

from . import _kernels
from .crm_core import (
    ExpMixture,
    FitError,
    Gamma,
    LevySpec,
    SumGeneralizedGamma,
    fit_exp_mixture,
    logsumexp,
    log_abs_h_deriv_series,
    log_abs_psi_deriv,
    psi,
)

log = logging.getLogger(__name__)

CHECKPOINT_VERSION = 1
MIXTURE_TERMS = 80


class StateCorruptionError(RuntimeError):
    pass


@dataclass
class SamplerConfig:
    iterations: int = 2000
    burn_in: int = 500
    thinning: int = 5
    seed: int = 0
    prior_shape: float = 4.0
    prior_rate: float = 2.0
    theta_grid_size: int = 200
    theta_grid_min: float = 1e-3
    theta_grid_max: float = 20.0
    resample_hyper: bool = True
    use_likelihood: bool = True
    eta: float = 0.5
    # "paper": per-restaurant new-table weight; "joint": exact conditional given dishes
    table_prior: str = "joint"
    # "series": exact h derivatives; "mixture": exponential-mixture fit
    h_method: str = "series"
    # "dish": theta | dish-level counts; "dish+restaurants" also multiplies the
    # per-restaurant marginals
    theta_target: str = "dish"
    check_invariants: bool = False

    def __post_init__(self):
        if self.iterations < 0:
            raise ValueError("iterations must be nonnegative")
        if self.iterations and not 0 <= self.burn_in < self.iterations:
            raise ValueError("burn_in must satisfy 0 <= burn_in < iterations")
        if self.thinning < 1:
            raise ValueError("thinning must be >= 1")
        if self.table_prior not in ("paper", "joint"):
            raise ValueError(f"unknown table_prior {self.table_prior!r}")
        if self.h_method not in ("series", "mixture"):
            raise ValueError(f"unknown h_method {self.h_method!r}")
        if self.theta_target not in ("dish", "dish+restaurants"):
            raise ValueError(f"unknown theta_target {self.theta_target!r}")
        if self.eta <= 0:
            raise ValueError("eta must be positive")


# --------------------------------------------------------------------------
# weight formulas


@dataclass(frozen=True)
class HierarchyModel:
    """Base spec (with mass), unit-mass object spec and number of restaurants."""

    base: LevySpec
    obj: LevySpec
    n_docs: int
    mixture: ExpMixture | None = None

    def __post_init__(self):
        if self.obj.mass != 1.0:
            raise ValueError("object-level spec must have unit mass")

    @property
    def u(self) -> float:
        """``psi_obj(1)``: Laplace exponent of the object measure at 1."""
        return psi(self.obj, 1.0)

    @property
    def x(self) -> float:
        """Dish-level evaluation point ``psi_obj(1) * n``."""
        return self.u * self.n_docs

    def log_abs_h(self, kmax: int) -> np.ndarray:
        """``log|h^(k)(u)|`` for ``k = 0..kmax``."""
        if self.mixture is not None and not self.base.is_gamma_type:
            ks = np.arange(kmax + 1)
            return np.array([self.mixture.log_abs_deriv(int(k), self.u) for k in ks])
        return log_abs_h_deriv_series(self.base, kmax, self.u)


def table_log_weights(
    model: HierarchyModel,
    m_minus: Sequence[int],
    per_table_loglik: Sequence[float] | None = None,
    new_table_loglik: float = 0.0,
) -> np.ndarray:
    """Unnormalized log weights of the existing tables and a new table.

    ``m_minus`` are the occupancies of the restaurant's tables with the
    customer removed (every entry >= 1).  Entry ``j`` is
    ``log|psi_obj^(m_j + 1)(1) / psi_obj^(m_j)(1)|`` and the last entry is
    ``log|h^(r+1)(u) / h^(r)(u)| + log|psi_obj'(1)|``.
    """
    m = np.asarray(m_minus, dtype=np.int64)
    if np.any(m <= 0):
        raise StateCorruptionError("a table with no customers survived removal")
    r = m.size
    out = np.empty(r + 1)
    if r:
        out[:r] = log_abs_psi_deriv(model.obj, m + 1, 1.0) - log_abs_psi_deriv(model.obj, m, 1.0)
    lh = model.log_abs_h(r + 1)
    out[r] = lh[r + 1] - lh[r] + log_abs_psi_deriv(model.obj, 1, 1.0)
    if per_table_loglik is not None:
        out[:r] += np.asarray(per_table_loglik, dtype=float)
    out[r] += new_table_loglik
    return out


def dish_log_weights(
    model: HierarchyModel,
    r_minus: Sequence[int],
    per_dish_loglik: Sequence[float] | None = None,
    new_dish_loglik: float = 0.0,
) -> np.ndarray:
    """Unnormalized log weights of the existing dishes and a new dish.

    ``r_minus`` are the global table counts per dish with the table removed.
    Entry ``k`` is ``log|psi^(r_k + 1)(x) / psi^(r_k)(x)|`` and the last entry
    ``log(theta) + log|psi'(x)|`` with ``x = psi_obj(1) * n``.
    """
    r = np.asarray(r_minus, dtype=np.int64)
    if np.any(r <= 0):
        raise StateCorruptionError("a dish with no tables survived removal")
    x = model.x
    out = np.empty(r.size + 1)
    if r.size:
        out[:-1] = log_abs_psi_deriv(model.base, r + 1, x) - log_abs_psi_deriv(model.base, r, x)
    out[-1] = log_abs_psi_deriv(model.base, 1, x)
    if per_dish_loglik is not None:
        out[:-1] += np.asarray(per_dish_loglik, dtype=float)
    out[-1] += new_dish_loglik
    return out


@dataclass
class _Lookups:
    tab_old: np.ndarray
    tab_new: np.ndarray
    joint_const: float
    dish_old: np.ndarray
    dish_new: float


def _build_lookups(model: HierarchyModel, max_m: int, max_dish_r: int) -> _Lookups:
    obj = model.obj
    ms = np.arange(1, max_m + 1)
    tab_old = np.full(max_m + 1, np.nan)
    tab_old[1:] = log_abs_psi_deriv(obj, ms + 1, 1.0) - log_abs_psi_deriv(obj, ms, 1.0)
    lh = model.log_abs_h(max_m + 1)
    log_dpsi1 = log_abs_psi_deriv(obj, 1, 1.0)
    tab_new = lh[1:] - lh[:-1] + log_dpsi1
    joint_const = log_dpsi1
    x = model.x
    rs = np.arange(1, max_dish_r + 1)
    dish_old = np.full(max_dish_r + 1, np.nan)
    dish_old[1:] = log_abs_psi_deriv(model.base, rs + 1, x) - log_abs_psi_deriv(model.base, rs, x)
    dish_new = log_abs_psi_deriv(model.base, 1, x)
    return _Lookups(tab_old, tab_new, joint_const, dish_old, dish_new)


# --------------------------------------------------------------------------
# state


def _spec_to_dict(spec: LevySpec) -> dict:
    fam = spec.family
    if isinstance(fam, SumGeneralizedGamma):
        return {"family": "sggp", "components": [list(c) for c in fam.components]}
    if isinstance(fam, Gamma):
        return {"family": "gamma", "mass": spec.mass}
    return {"family": "ggp", "d": fam.d, "mass": spec.mass}


def spec_from_dict(d: dict) -> LevySpec:
    fam = d["family"]
    if fam == "gamma":
        return LevySpec.gamma(d.get("mass", 1.0))
    if fam == "ggp":
        return LevySpec.ggp(d["d"], d.get("mass", 1.0))
    if fam == "sggp":
        return LevySpec.sggp([tuple(c) for c in d["components"]])
    raise ValueError(f"unknown family {fam!r}")


class FranchiseState:
    """Seating arrangement plus the sufficient statistics it implies.

    Token ``t`` of document ``i`` sits at local table ``tok_table[t]``;
    table ``j`` of document ``i`` holds ``tab_count[i, j]`` customers and
    serves dish ``tab_dish[i, j]``.  Only training tokens are seated.
    """

    def __init__(
        self,
        docs: Sequence[Sequence[int]],
        W: int,
        model: HierarchyModel,
        config: SamplerConfig,
        train: Sequence[Sequence[bool]] | None = None,
    ):
        self.config = config
        self.W = int(W)
        self.model = model
        lengths = [len(d) for d in docs]
        self.doc_start = np.zeros(len(docs) + 1, dtype=np.int64)
        self.doc_start[1:] = np.cumsum(lengths)
        self.tok_word = np.asarray(
            np.concatenate([np.asarray(d, dtype=np.int64) for d in docs]) if docs else [],
            dtype=np.int64,
        )
        if self.tok_word.size and (self.tok_word.min() < 0 or self.tok_word.max() >= W):
            raise ValueError("token index outside vocabulary")
        if train is None:
            self.train = np.ones(self.tok_word.size, dtype=np.bool_)
        else:
            self.train = np.asarray(np.concatenate([np.asarray(f, dtype=bool) for f in train])
                                    if docs else [], dtype=np.bool_)
        if self.train.size != self.tok_word.size:
            raise ValueError("train flags do not match tokens")
        n_docs = len(docs)
        if model.n_docs != n_docs:
            raise ValueError("model.n_docs does not match the corpus")
        doc_of = np.repeat(np.arange(n_docs), lengths)
        per_doc_train = np.bincount(doc_of, weights=self.train, minlength=n_docs).astype(np.int64)
        self.max_tables = int(max(1, per_doc_train.max() if n_docs else 1))
        self.n_train = int(self.train.sum())
        self.tok_table = np.full(self.tok_word.size, -1, dtype=np.int64)
        self.tab_count = np.zeros((n_docs, self.max_tables), dtype=np.int64)
        self.tab_dish = np.full((n_docs, self.max_tables), -1, dtype=np.int64)
        self.n_tab = np.zeros(n_docs, dtype=np.int64)
        cap = 16
        self.dish_tables = np.zeros(cap, dtype=np.int64)
        self.nkw = np.zeros((cap, self.W), dtype=np.int64)
        self.nk = np.zeros(cap, dtype=np.int64)
        self.n_dish_arr = np.zeros(1, dtype=np.int64)
        self.rng = np.random.default_rng(config.seed)
        self.iteration = 0
        self._lookups: _Lookups | None = None

    # -- basic views ------------------------------------------------------

    @property
    def n_docs(self) -> int:
        return self.doc_start.size - 1

    @property
    def n_dishes(self) -> int:
        return int(self.n_dish_arr[0])

    @property
    def total_tables(self) -> int:
        return int(self.n_tab.sum())

    def doc_tokens(self, i: int) -> slice:
        return slice(int(self.doc_start[i]), int(self.doc_start[i + 1]))

    def table_counts(self, i: int) -> np.ndarray:
        return self.tab_count[i, : self.n_tab[i]].copy()

    def dish_table_counts(self) -> np.ndarray:
        """``r_.k`` for every live dish."""
        return self.dish_tables[: self.n_dishes].copy()

    def r_matrix(self) -> np.ndarray:
        """``r_ik``: tables in restaurant ``i`` serving dish ``k``."""
        r = np.zeros((self.n_docs, self.n_dishes), dtype=np.int64)
        for i in range(self.n_docs):
            np.add.at(r[i], self.tab_dish[i, : self.n_tab[i]], 1)
        return r

    def token_dishes(self) -> np.ndarray:
        """Dish of every token (-1 for unseated tokens)."""
        out = np.full(self.tok_word.size, -1, dtype=np.int64)
        doc_of = np.repeat(np.arange(self.n_docs), np.diff(self.doc_start))
        seated = self.tok_table >= 0
        out[seated] = self.tab_dish[doc_of[seated], self.tok_table[seated]]
        return out

    def doc_dish_counts(self) -> np.ndarray:
        """``c_dk``: seated tokens of document ``d`` on dish ``k``."""
        c = np.zeros((self.n_docs, self.n_dishes), dtype=np.int64)
        doc_of = np.repeat(np.arange(self.n_docs), np.diff(self.doc_start))
        dishes = self.token_dishes()
        seated = dishes >= 0
        np.add.at(c, (doc_of[seated], dishes[seated]), 1)
        return c

    def topic_word_counts(self) -> np.ndarray:
        return self.nkw[: self.n_dishes].copy()

    # -- invariants -------------------------------------------------------

    def check_invariants(self) -> None:
        p = self.n_dishes
        doc_of = np.repeat(np.arange(self.n_docs), np.diff(self.doc_start))
        seated = self.tok_table >= 0
        if np.any(seated != self.train) and self.iteration > 0:
            raise StateCorruptionError("seated tokens differ from training tokens")
        counts = np.zeros_like(self.tab_count)
        np.add.at(counts, (doc_of[seated], self.tok_table[seated]), 1)
        if not np.array_equal(counts, self.tab_count):
            raise StateCorruptionError("table occupancies do not match token seating")
        for i in range(self.n_docs):
            r = self.n_tab[i]
            if np.any(self.tab_count[i, :r] < 1):
                raise StateCorruptionError(f"empty live table in document {i}")
            if np.any(self.tab_count[i, r:] != 0) or np.any(self.tab_dish[i, r:] != -1):
                raise StateCorruptionError(f"stale table slots in document {i}")
            if np.any((self.tab_dish[i, :r] < 0) | (self.tab_dish[i, :r] >= p)):
                raise StateCorruptionError(f"table without a live dish in document {i}")
        r = self.r_matrix()
        if not np.array_equal(r.sum(axis=0), self.dish_tables[:p]):
            raise StateCorruptionError("dish table counts do not match tables")
        if np.any(self.dish_tables[:p] < 1) or np.any(self.dish_tables[p:] != 0):
            raise StateCorruptionError("dish registry is not compact")
        nkw = np.zeros((p, self.W), dtype=np.int64)
        d = self.token_dishes()
        np.add.at(nkw, (d[seated], self.tok_word[seated]), 1)
        if not np.array_equal(nkw, self.nkw[:p]) or np.any(self.nkw[p:] != 0):
            raise StateCorruptionError("topic-word counts do not reconcile with seating")
        if not np.array_equal(self.nk[:p], nkw.sum(axis=1)):
            raise StateCorruptionError("topic totals do not reconcile")

    # -- sampling ---------------------------------------------------------

    def _ensure_lookups(self) -> _Lookups:
        if self._lookups is None:
            model = self.model
            if (self.config.h_method == "mixture" and not model.base.is_gamma_type
                    and model.mixture is None):
                u_max = max(20.0, 2 * model.u)
                grid = np.concatenate([[0.0], np.logspace(-3, math.log10(u_max), 199)])
                try:
                    mix = fit_exp_mixture(model.base, num_terms=MIXTURE_TERMS, u_grid=grid)
                    self.model = model = replace(model, mixture=mix)
                except FitError as exc:
                    log.warning("exp-mixture fit failed (%s); using the exact series", exc)
            self._lookups = _build_lookups(model, self.max_tables, self.n_train + 1)
        return self._lookups

    def set_base(self, base: LevySpec) -> None:
        self.model = replace(self.model, base=base, mixture=None)
        self._lookups = None

    def _grow(self) -> None:
        cap = self.nk.size * 2
        self.dish_tables = np.concatenate([self.dish_tables, np.zeros_like(self.dish_tables)])
        self.nk = np.concatenate([self.nk, np.zeros_like(self.nk)])
        self.nkw = np.concatenate([self.nkw, np.zeros_like(self.nkw)])
        assert self.nk.size == cap

    def _run_kernel(self, do_dishes: bool) -> None:
        lk = self._ensure_lookups()
        uniforms = self.rng.random(3 * self.n_train + 1)
        u_pos, t_pos, phase = 0, 0, _kernels.PHASE_CUSTOMERS
        while True:
            status, t_pos, phase, u_pos = _kernels.sweep(
                self.doc_start, self.tok_word, self.tok_table, self.train,
                self.tab_count, self.tab_dish, self.n_tab,
                self.dish_tables, self.nkw, self.nk, self.n_dish_arr,
                lk.tab_old, lk.tab_new, lk.joint_const, self.config.table_prior == "joint",
                lk.dish_old, lk.dish_new,
                self.config.use_likelihood, self.config.eta,
                uniforms, u_pos, t_pos, phase, do_dishes,
            )
            if status == _kernels.OK:
                break
            self._grow()

    def initialize(self) -> "FranchiseState":
        """Seat every training customer sequentially with the same weights."""
        if np.any(self.tok_table >= 0):
            raise RuntimeError("state is already initialized")
        self._run_kernel(do_dishes=False)
        if self.config.check_invariants:
            self.check_invariants()
        return self

    def sweep(self) -> None:
        """One full iteration: tables of all customers, then dishes of all tables."""
        self._run_kernel(do_dishes=True)
        self.iteration += 1
        if self.config.check_invariants:
            self.check_invariants()

    # -- joint probabilities ----------------------------------------------

    def log_seating_prior(self) -> float:
        """Log probability of the full seating (tables and dishes) under the hierarchy."""
        model = self.model
        base = model.base
        x = model.x
        r_k = self.dish_table_counts()
        out = -psi(base, x)
        if r_k.size:
            out += float(np.sum(log_abs_psi_deriv(base, r_k, x)))
        for i in range(self.n_docs):
            m = self.table_counts(i)
            if m.size:
                out += float(np.sum(log_abs_psi_deriv(model.obj, m, 1.0)))
            out -= float(gammaln(m.sum() + 1.0))
        return out

    def log_likelihood(self) -> float:
        """Collapsed symmetric-Dirichlet categorical log likelihood of seated tokens."""
        eta, W = self.config.eta, self.W
        nkw = self.topic_word_counts()
        nk = nkw.sum(axis=1)
        return float(
            np.sum(gammaln(W * eta) - gammaln(nk + W * eta))
            + np.sum(gammaln(nkw + eta) - gammaln(eta))
        )

    # -- checkpointing ----------------------------------------------------

    def to_checkpoint(self) -> dict:
        docs_tables = [self.tab_dish[i, : self.n_tab[i]].tolist() for i in range(self.n_docs)]
        return {
            "version": CHECKPOINT_VERSION,
            "iteration": self.iteration,
            "base": _spec_to_dict(self.model.base),
            "obj": _spec_to_dict(self.model.obj),
            "W": self.W,
            "tok_table": self.tok_table.tolist(),
            "tab_dish": docs_tables,
            "n_dishes": self.n_dishes,
            "rng": self.rng.bit_generator.state,
        }

    def save(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_checkpoint()))

    def load_checkpoint(self, ckpt: dict) -> "FranchiseState":
        """Restore seating, hyperparameters and rng state into a freshly built state."""
        if ckpt.get("version") != CHECKPOINT_VERSION:
            raise ValueError(f"unsupported checkpoint version {ckpt.get('version')!r}")
        if ckpt["W"] != self.W or len(ckpt["tok_table"]) != self.tok_word.size:
            raise ValueError("checkpoint does not match this corpus")
        self.set_base(spec_from_dict(ckpt["base"]))
        self.model = replace(self.model, obj=spec_from_dict(ckpt["obj"]))
        self.tok_table = np.asarray(ckpt["tok_table"], dtype=np.int64)
        p = int(ckpt["n_dishes"])
        while self.nk.size <= p + 1:
            self._grow()
        self.tab_count[:] = 0
        self.tab_dish[:] = -1
        self.dish_tables[:] = 0
        self.nkw[:] = 0
        self.nk[:] = 0
        for i, dishes in enumerate(ckpt["tab_dish"]):
            self.n_tab[i] = len(dishes)
            self.tab_dish[i, : len(dishes)] = dishes
            for k in dishes:
                self.dish_tables[k] += 1
        self.n_dish_arr[0] = p
        doc_of = np.repeat(np.arange(self.n_docs), np.diff(self.doc_start))
        seated = self.tok_table >= 0
        np.add.at(self.tab_count, (doc_of[seated], self.tok_table[seated]), 1)
        d = self.token_dishes()
        np.add.at(self.nkw, (d[seated], self.tok_word[seated]), 1)
        self.nk[:] = self.nkw.sum(axis=1)
        self.rng.bit_generator.state = ckpt["rng"]
        self.iteration = int(ckpt["iteration"])
        self.check_invariants()
        return self


# --------------------------------------------------------------------------
# hyperparameters


def theta_grid(config: SamplerConfig) -> np.ndarray:
    return np.linspace(config.theta_grid_min, config.theta_grid_max, config.theta_grid_size)


def _dish_level_log_pmf_mass_grid(base: LevySpec, grid: np.ndarray, r_k: np.ndarray,
                                  r_rows: np.ndarray, x: float) -> np.ndarray:
    # Gamma/GGP: theta enters as theta^p * exp(-theta * psi_unit(x)) only
    unit = base.unit()
    p = r_k.size
    const = -float(np.sum(gammaln(r_rows + 1.0)))
    if p:
        const += float(np.sum(log_abs_psi_deriv(unit, r_k, x)))
    return p * np.log(grid) - grid * psi(unit, x) + const


def _dish_level_log_pmf_component_grid(base: LevySpec, q: int, grid: np.ndarray,
                                       r_k: np.ndarray, r_rows: np.ndarray,
                                       x: float) -> np.ndarray:
    comps = base.components
    lt = math.log1p(x)
    # per-component log|psi_q^(r)(x)| without the component mass
    a = np.array([gammaln(r_k - d) - gammaln(1.0 - d) + (d - r_k) * lt for _, d in comps])
    phi = np.array([lt if d == 0 else math.expm1(d * lt) / d for _, d in comps])
    log_th = np.log(np.array([c for c, _ in comps], dtype=float))
    out = np.empty(grid.size)
    const = -float(np.sum(gammaln(r_rows + 1.0)))
    for g_idx, g in enumerate(grid):
        lth = log_th.copy()
        lth[q] = math.log(g)
        total = -float(np.exp(lth) @ phi)
        if r_k.size:
            total += float(np.sum(logsumexp(lth[:, None] + a, axis=0)))
        out[g_idx] = total + const
    return out


def _restaurant_theta_terms(base_at: list[LevySpec], model: HierarchyModel,
                            r_rows: np.ndarray) -> np.ndarray:
    rmax = int(r_rows.max()) if r_rows.size else 0
    out = np.empty(len(base_at))
    for g_idx, b in enumerate(base_at):
        lh = log_abs_h_deriv_series(b, rmax, model.u)
        out[g_idx] = float(np.sum(lh[r_rows]))
    return out


def theta_log_conditional(state: FranchiseState, grid: np.ndarray, q: int | None = None
                          ) -> np.ndarray:
    """Unnormalized log conditional of a base mass parameter on ``grid``.

    ``q`` selects an SGGP component mass; ``None`` means the base mass of a
    gamma or GGP base.  Includes the gamma hyperprior.
    """
    cfg = state.config
    model = state.model
    base = model.base
    r_k = state.dish_table_counts()
    r_rows = state.n_tab.copy()
    x = model.x
    logprior = (cfg.prior_shape - 1) * np.log(grid) - cfg.prior_rate * grid
    if q is None:
        lp = _dish_level_log_pmf_mass_grid(base, grid, r_k, r_rows, x)
        bases = None
        if cfg.theta_target == "dish+restaurants":
            bases = [base.with_mass(float(g)) for g in grid]
    else:
        lp = _dish_level_log_pmf_component_grid(base, q, grid, r_k, r_rows, x)
        bases = None
        if cfg.theta_target == "dish+restaurants":
            bases = [base.with_component_mass(q, float(g)) for g in grid]
    if bases is not None:
        lp = lp + _restaurant_theta_terms(bases, model, r_rows)
    return logprior + lp


def sample_from_grid(logp: np.ndarray, grid: np.ndarray, rng: np.random.Generator,
                     prior_shape: float, prior_rate: float) -> float:
    ok = np.isfinite(logp)
    if not ok.any():
        log.warning("theta grid posterior degenerate; drawing from the prior")
        return float(rng.gamma(prior_shape, 1.0 / prior_rate))
    lp = np.where(ok, logp, -np.inf)
    w = np.exp(lp - lp.max())
    c = np.cumsum(w)
    idx = int(np.searchsorted(c, rng.random() * c[-1], side="right"))
    return float(grid[min(idx, grid.size - 1)])


def resample_hyperparams(state: FranchiseState, grid: np.ndarray | None = None) -> LevySpec:
    """Grid-based draw of each base mass parameter given the seating; discounts stay fixed."""
    cfg = state.config
    if grid is None:
        grid = theta_grid(cfg)
    base = state.model.base
    if isinstance(base.family, SumGeneralizedGamma):
        for q in range(len(base.components)):
            lp = theta_log_conditional(state, grid, q)
            th = sample_from_grid(lp, grid, state.rng, cfg.prior_shape, cfg.prior_rate)
            base = base.with_component_mass(q, th)
            state.set_base(base)
    else:
        lp = theta_log_conditional(state, grid, None)
        th = sample_from_grid(lp, grid, state.rng, cfg.prior_shape, cfg.prior_rate)
        base = base.with_mass(th)
        state.set_base(base)
    return base


def gibbs_sweep(state: FranchiseState) -> FranchiseState:
    """Tables, dishes, then (if configured) the base mass parameters."""
    state.sweep()
    if state.config.resample_hyper:
        resample_hyperparams(state)
    return state


def hyper_values(spec: LevySpec) -> dict:
    if isinstance(spec.family, SumGeneralizedGamma):
        return {f"theta_{q}": c for q, (c, _) in enumerate(spec.components)}
    return {"theta": spec.mass}


def progress_record(state: FranchiseState) -> dict:
    rec = {
        "iteration": state.iteration,
        "dishes": state.n_dishes,
        "tables": state.total_tables,
        "log_joint": state.log_seating_prior() + state.log_likelihood(),
    }
    rec.update(hyper_values(state.model.base))
    return rec


def run_chain(state: FranchiseState, on_sample=None, on_iteration=None) -> FranchiseState:
    """Advance ``state`` to ``config.iterations`` sweeps.

    ``on_sample(state)`` fires for every retained sample (after burn-in, at the
    thinning); ``on_iteration(state)`` after every sweep.  A state restored from
    a checkpoint resumes where it stopped.
    """
    cfg = state.config
    while state.iteration < cfg.iterations:
        gibbs_sweep(state)
        it = state.iteration
        if on_iteration is not None:
            on_iteration(state)
        if on_sample is not None and it > cfg.burn_in and (it - cfg.burn_in) % cfg.thinning == 0:
            on_sample(state)
    return state
