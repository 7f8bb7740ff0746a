"""Dish-to-word observation model, posterior summaries and perplexity."""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

NEW = -1
BETA_SMOOTHING = 1e-9


class UnknownDishError(KeyError):
    pass


class ZeroProbabilityError(ArithmeticError):
    pass


@dataclass
class TopicWordStats:
    """Word counts per dish under a symmetric Dirichlet(eta) topic-word prior."""

    n_kw: np.ndarray
    eta: float = 0.5

    def __post_init__(self):
        self.n_kw = np.asarray(self.n_kw, dtype=np.int64)
        if self.n_kw.ndim != 2:
            raise ValueError("n_kw must be 2-D (dishes x words)")
        if np.any(self.n_kw < 0):
            raise ValueError("counts must be nonnegative")
        if not self.eta > 0:
            raise ValueError("eta must be positive")

    @classmethod
    def empty(cls, n_dishes: int, W: int, eta: float = 0.5) -> "TopicWordStats":
        return cls(np.zeros((n_dishes, W), dtype=np.int64), eta)

    @classmethod
    def from_state(cls, state) -> "TopicWordStats":
        return cls(state.topic_word_counts(), state.config.eta)

    @property
    def W(self) -> int:
        return self.n_kw.shape[1]

    @property
    def n_k(self) -> np.ndarray:
        return self.n_kw.sum(axis=1)


def word_log_predictive(stats: TopicWordStats, k: int, w: int) -> float:
    """Log predictive of word ``w`` under dish ``k`` (or :data:`NEW`)."""
    if not 0 <= w < stats.W:
        raise IndexError(f"word {w} outside vocabulary of size {stats.W}")
    if k == NEW:
        return -math.log(stats.W)
    if not 0 <= k < stats.n_kw.shape[0]:
        raise UnknownDishError(k)
    return math.log((stats.n_kw[k, w] + stats.eta) / (stats.n_kw[k].sum() + stats.W * stats.eta))


@dataclass(frozen=True)
class PosteriorSummary:
    """Point summaries plus the sample-averaged predictive ``P(w | d)``.

    ``beta`` and ``tau`` come from the representative (last retained) sample;
    ``predictive`` averages ``beta @ tau`` over all retained samples, which
    avoids aligning topic labels across samples.
    """

    beta: np.ndarray
    tau: np.ndarray
    predictive: np.ndarray
    n_samples: int

    @property
    def K(self) -> int:
        return self.tau.shape[0]

    @classmethod
    def uniform(cls, n_docs: int, K: int, W: int) -> "PosteriorSummary":
        beta = np.full((n_docs, K), 1.0 / K)
        tau = np.full((K, W), 1.0 / W)
        return cls(beta, tau, beta @ tau, 1)


def sample_matrices(doc_dish: np.ndarray, n_kw: np.ndarray, eta: float
                    ) -> tuple[np.ndarray, np.ndarray]:
    c = np.asarray(doc_dish, dtype=float) + BETA_SMOOTHING
    beta = c / c.sum(axis=1, keepdims=True)
    t = np.asarray(n_kw, dtype=float) + eta
    tau = t / t.sum(axis=1, keepdims=True)
    return beta, tau


class SummaryAccumulator:
    """Running average of per-sample predictive matrices."""

    def __init__(self, n_docs: int, W: int, eta: float):
        self.eta = eta
        self._sum = np.zeros((n_docs, W))
        self._n = 0
        self._last: tuple[np.ndarray, np.ndarray] | None = None

    def add(self, doc_dish: np.ndarray, n_kw: np.ndarray) -> None:
        beta, tau = sample_matrices(doc_dish, n_kw, self.eta)
        self._sum += beta @ tau
        self._n += 1
        self._last = (beta, tau)

    def add_state(self, state) -> None:
        self.add(state.doc_dish_counts(), state.topic_word_counts())

    def summary(self) -> PosteriorSummary:
        if self._n == 0 or self._last is None:
            raise ValueError("no samples accumulated")
        beta, tau = self._last
        return PosteriorSummary(beta, tau, self._sum / self._n, self._n)


def accumulate_summary(samples: Sequence[tuple[np.ndarray, TopicWordStats]]) -> PosteriorSummary:
    """Summary from ``(c_dk, stats)`` pairs taken after burn-in at the thinning."""
    if not samples:
        raise ValueError("no samples to summarize")
    c0, s0 = samples[0]
    acc = SummaryAccumulator(np.asarray(c0).shape[0], s0.W, s0.eta)
    for c, s in samples:
        acc.add(c, s.n_kw)
    return acc.summary()


def token_probabilities(doc_ids: Sequence[int], words: Sequence[int],
                        summary: PosteriorSummary) -> np.ndarray:
    d = np.asarray(doc_ids, dtype=np.int64)
    w = np.asarray(words, dtype=np.int64)
    if d.size and (d.max() >= summary.predictive.shape[0] or d.min() < 0):
        raise IndexError("test token refers to a document without a beta row")
    return summary.predictive[d, w]


def perplexity_from_probs(p: np.ndarray) -> float:
    p = np.asarray(p, dtype=float)
    if p.size == 0:
        raise ValueError("no test tokens")
    if np.any(p <= 0):
        raise ZeroProbabilityError("a test token has zero predictive probability")
    return float(np.exp(-np.mean(np.log(p))))


def perplexity(doc_ids: Sequence[int], words: Sequence[int], summary: PosteriorSummary) -> float:
    """``exp(-mean log sum_k beta_dk tau_kw)`` over the test tokens."""
    return perplexity_from_probs(token_probabilities(doc_ids, words, summary))


def unigram_perplexity(train_words: Sequence[int], test_words: Sequence[int], W: int,
                       smoothing: float = 0.5) -> float:
    """Baseline: one smoothed word-frequency distribution shared by all documents."""
    counts = np.bincount(np.asarray(train_words, dtype=np.int64), minlength=W) + smoothing
    p = counts / counts.sum()
    return perplexity_from_probs(p[np.asarray(test_words, dtype=np.int64)])


def write_summary_csv(summary: PosteriorSummary, out_dir: str | Path) -> None:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    np.savetxt(out / "beta.csv", summary.beta, delimiter=",", fmt="%.10g")
    np.savetxt(out / "tau.csv", summary.tau, delimiter=",", fmt="%.10g")
    np.savetxt(out / "predictive.csv", summary.predictive, delimiter=",", fmt="%.10g")


def read_summary_csv(out_dir: str | Path) -> PosteriorSummary:
    out = Path(out_dir)
    for name in ("beta.csv", "tau.csv", "predictive.csv"):
        if not (out / name).exists():
            raise FileNotFoundError(f"missing summary file {out / name}")
    beta = np.loadtxt(out / "beta.csv", delimiter=",", ndmin=2)
    tau = np.loadtxt(out / "tau.csv", delimiter=",", ndmin=2)
    pred = np.loadtxt(out / "predictive.csv", delimiter=",", ndmin=2)
    return PosteriorSummary(beta, tau, pred, 1)


def top_words(summary: PosteriorSummary, vocab: Sequence[str], n: int = 10) -> list[list[str]]:
    order = np.argsort(-summary.tau, axis=1, kind="stable")[:, :n]
    return [[vocab[w] for w in row] for row in order]


def write_top_words(summary: PosteriorSummary, vocab: Sequence[str], path: str | Path,
                    n: int = 10) -> None:
    lines = [f"topic {k}: " + " ".join(ws) for k, ws in enumerate(top_words(summary, vocab, n))]
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")
